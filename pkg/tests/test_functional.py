import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from monomm import functional as F
from monomm.gradcheck import finite_diff_check

from conftest import t64


def test_conv2d_identity_kernel():
    out = F.conv2d(t64([[[5.0]]]), t64([[[[1.0]]]]))
    np.testing.assert_array_equal(out.data, [[[5.0]]])


def test_conv2d_ones_sum():
    out = F.conv2d(t64(np.ones((1, 3, 3))), t64(np.ones((1, 1, 3, 3))))
    np.testing.assert_array_equal(out.data, [[[9.0]]])


def test_conv2d_zero_kernel(rng):
    out = F.conv2d(t64(rng.normal(size=(2, 5, 5))), t64(np.zeros((3, 2, 3, 3))), padding=1)
    assert not out.data.any()


def test_conv2d_is_cross_correlation():
    x = t64(np.arange(9.0).reshape(1, 3, 3))
    w = t64(np.array([[[[0, 0, 0], [0, 0, 1], [0, 0, 0]]]], dtype=float))
    # picks the right neighbour, so no kernel flip
    np.testing.assert_array_equal(F.conv2d(x, w).data, [[[5.0]]])


def test_conv2d_shape_errors_name_the_dimension():
    with pytest.raises(ValueError, match="channel"):
        F.conv2d(t64(np.ones((3, 4, 4))), t64(np.ones((2, 2, 3, 3))))
    with pytest.raises(ValueError, match="groups"):
        F.conv2d(t64(np.ones((3, 4, 4))), t64(np.ones((2, 1, 3, 3))), groups=2)


def test_conv2d_grouped_matches_per_group_loop(rng):
    x = t64(rng.normal(size=(4, 6, 6)))
    w = t64(rng.normal(size=(6, 2, 3, 3)))
    out = F.conv2d(x, w, padding=1, groups=2).data
    for g in range(2):
        ref = F.conv2d(t64(x.data[2 * g:2 * g + 2]), t64(w.data[3 * g:3 * g + 3]), padding=1).data
        np.testing.assert_allclose(out[3 * g:3 * g + 3], ref, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(3, 7), st.integers(1, 2), st.integers(0, 1), st.integers(0, 10**6))
def test_conv_transpose_is_adjoint_of_conv(cin, cout, size, stride, pad, seed):
    rng = np.random.default_rng(seed)
    x = t64(rng.normal(size=(cin, size, size)))
    w = t64(rng.normal(size=(cout, cin, 3, 3)))
    y = F.conv2d(x, w, stride=stride, padding=pad)
    r = t64(rng.normal(size=y.shape))
    back = F.conv_transpose2d(r, w, stride=stride, padding=pad,
                              output_padding=tuple(s - b for s, b in zip(x.shape[1:], F.conv_transpose2d(r, w, stride=stride, padding=pad).shape[1:])))
    assert abs(float((y.data * r.data).sum()) - float((x.data * back.data).sum())) < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 10**6))
def test_conv2d_is_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(2, 2, 5, 5))
    w = t64(rng.normal(size=(3, 2, 3, 3)))
    lhs = F.conv2d(t64(a * x + b * y), w).data
    rhs = a * F.conv2d(t64(x), w).data + b * F.conv2d(t64(y), w).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_conv_transpose_expands_by_stride():
    out = F.conv_transpose2d(t64([[[2.0]]]), t64(np.ones((1, 1, 2, 2))), stride=2)
    np.testing.assert_array_equal(out.data, np.full((1, 2, 2), 2.0))
    zero = F.conv_transpose2d(t64(np.zeros((1, 3, 3))), t64(np.ones((1, 2, 2, 2))), stride=2)
    assert zero.shape == (2, 6, 6) and not zero.data.any()


def test_pooling_examples():
    x = t64([[[1.0, 2.0], [3.0, 4.0]]])
    np.testing.assert_array_equal(F.pool2d(x, "max", 2).data, [[[4.0]]])
    np.testing.assert_array_equal(F.pool2d(x, "avg", 2).data, [[[2.5]]])
    const = F.pool2d(t64(np.full((2, 4, 6), 3.25)), "avg", 2)
    np.testing.assert_array_equal(const.data, np.full((2, 2, 3), 3.25))
    with pytest.raises(ValueError):
        F.pool2d(t64(np.ones((1, 1, 1))), "max", 2)


def test_max_pool_ties_route_gradient_to_first_element():
    x = t64(np.ones((1, 2, 2)), grad=True)
    F.pool2d(x, "max", 2).sum().backward()
    np.testing.assert_array_equal(x.grad, [[[1.0, 0.0], [0.0, 0.0]]])


def test_linear_examples():
    out = F.linear(t64([1.0, 2.0]), t64(np.eye(2)), t64([1.0, 1.0]))
    np.testing.assert_array_equal(out.data, [2.0, 3.0])
    x = np.random.default_rng(0).normal(size=(4, 3))
    np.testing.assert_array_equal(F.linear(t64(x), t64(np.eye(3))).data, x)
    np.testing.assert_array_equal(F.linear(t64(x), t64(np.zeros((3, 2))), t64([7.0, 7.0])).data, np.full((4, 2), 7.0))
    with pytest.raises(ValueError):
        F.linear(t64(x), t64(np.eye(2)))


def test_silu_values():
    assert F.silu(t64([0.0])).data[0] == 0.0
    assert F.silu(t64([1.0])).data[0] == pytest.approx(0.731059, abs=1e-6)
    x = np.linspace(-6, 6, 41)
    np.testing.assert_allclose(F.silu(t64(-x)).data, -x + F.silu(t64(x)).data, atol=1e-12)


def test_normalize_examples():
    np.testing.assert_array_equal(F.normalize(t64(np.full((1, 4), 3.0))).data, np.zeros((1, 4)))
    np.testing.assert_allclose(F.normalize(t64([[1.0, -1.0]])).data, [[1.0, -1.0]], atol=1e-5)
    x = np.random.default_rng(0).normal(size=(5, 6))
    np.testing.assert_array_equal(F.normalize(t64(x), scale=t64(np.zeros(6))).data, np.zeros((5, 6)))


def test_normalize_rows_have_zero_mean_unit_variance(rng):
    out = F.normalize(t64(rng.normal(3.0, 4.0, size=(7, 16)))).data
    np.testing.assert_allclose(out.mean(axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=1), 1.0, atol=1e-5)


@pytest.mark.parametrize("name,fn,shape", [
    ("conv2d_strided", lambda x, r: F.conv2d(x, t64(r.normal(size=(2, 3, 3, 3))), stride=2, padding=1, dilation=1), (3, 6, 7)),
    ("conv2d_dilated", lambda x, r: F.conv2d(x, t64(r.normal(size=(2, 3, 3, 3))), padding=2, dilation=2), (3, 5, 5)),
    ("avg_pool", lambda x, r: F.pool2d(x, "avg", 2), (2, 4, 6)),
    ("upsample", lambda x, r: F.upsample_nearest(x, 2), (2, 3, 3)),
    ("log_softmax", lambda x, r: F.log_softmax(x, axis=0) * t64(r.normal(size=(4, 3))), (4, 3)),
    ("normalize", lambda x, r: F.normalize(x, t64(r.normal(size=5)), t64(r.normal(size=5))) ** 2, (3, 5)),
])
def test_op_gradients(name, fn, shape, f64):
    r = np.random.default_rng(7)
    x = t64(r.normal(size=shape))
    proj = np.random.default_rng(8).normal(size=fn(x, np.random.default_rng(7)).shape)
    assert finite_diff_check(lambda t: (fn(t, np.random.default_rng(7)) * t64(proj)).sum(), x) < 1e-4
