import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from monomm.dap import DepthBinMap
from monomm.data.kitti import GroundTruthObject
from monomm.data.synth import SynthConfig
from monomm.detect import (IGNORE, NEGATIVE, POSITIVE, AnchorConfig, AnchorStats, BoxGeometry, Detection,
                           DetectionHead, LossWeights, build_targets, decode_boxes, encode_targets,
                           generate_anchors, geometry_to_box3d, match_anchors, nms, nms_indices, total_loss)
from monomm.eval.iou import iou2d_matrix
from monomm.features import FeatureMap
from monomm.gradcheck import finite_diff_check
from monomm.losses import focal_loss, sigmoid_focal_loss, smooth_l1, softmax_focal_loss
from monomm.tensor import Tensor

from conftest import t64


# anchors

def test_anchor_count_at_full_resolution():
    anchors = generate_anchors(36, 160, 8)
    assert len(anchors) == 36 * 160 * 48 == 276_480


def test_template_heights_and_ratios():
    cfg = AnchorConfig()
    tmpl = cfg.templates()
    assert tmpl.shape == (48, 2)
    heights = tmpl[::3, 1]
    np.testing.assert_allclose(heights, 16 * 2 ** (np.arange(16) / 3))
    ones = tmpl[1::3]
    np.testing.assert_array_equal(ones[:, 0], ones[:, 1])


def test_adjacent_locations_differ_by_stride():
    a = generate_anchors(3, 4, 8)
    T = 48
    np.testing.assert_array_equal(a.centers[T:2 * T] - a.centers[:T], np.tile([8.0, 0.0], (T, 1)))
    np.testing.assert_array_equal(a.centers[4 * T:5 * T] - a.centers[:T], np.tile([0.0, 8.0], (T, 1)))
    np.testing.assert_array_equal(a.sizes[T:2 * T], a.sizes[:T])


def test_anchor_config_validation():
    with pytest.raises(ValueError):
        AnchorConfig(ratios=())
    with pytest.raises(ValueError):
        AnchorConfig(neg_iou=0.6)
    with pytest.raises(ValueError):
        generate_anchors(0, 4, 8)


def test_anchor_stats_variance_non_negative():
    with pytest.raises(ValueError):
        AnchorStats(np.ones((2, 4)), -np.ones((2, 4)))


def test_match_examples():
    gt = np.array([[10.0, 10.0, 30.0, 30.0]])
    anchors = np.array([
        [10.0, 10.0, 30.0, 30.0],      # identical
        [100.0, 100.0, 120.0, 120.0],  # disjoint
        [10.0, 10.0, 30.0, 30.0 + 20 / 0.45 - 20],  # IoU exactly 0.45
    ])
    m = match_anchors(anchors, gt)
    assert list(m.labels) == [POSITIVE, NEGATIVE, IGNORE]
    assert m.max_iou[0] == 1.0 and m.max_iou[2] == pytest.approx(0.45)


def test_match_ties_go_to_lowest_gt_index():
    box = [0.0, 0.0, 10.0, 10.0]
    m = match_anchors(np.array([box]), np.array([box, box]))
    assert m.gt_index[0] == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 5))
def test_match_agrees_with_brute_force(seed, n_gt):
    rng = np.random.default_rng(seed)

    def boxes(n):
        xy = rng.uniform(0, 50, size=(n, 2))
        return np.concatenate([xy, xy + rng.uniform(2, 30, size=(n, 2))], axis=1)

    anchors, gts = boxes(40), boxes(n_gt)
    m = match_anchors(anchors, gts)
    for i, a in enumerate(anchors):
        best, best_j = 0.0, -1
        for j, g in enumerate(gts):
            iw = max(0.0, min(a[2], g[2]) - max(a[0], g[0]))
            ih = max(0.0, min(a[3], g[3]) - max(a[1], g[1]))
            inter = iw * ih
            iou = inter / ((a[2] - a[0]) * (a[3] - a[1]) + (g[2] - g[0]) * (g[3] - g[1]) - inter)
            if iou > best + 1e-12:
                best, best_j = iou, j
        label = POSITIVE if best > 0.5 else NEGATIVE if best < 0.4 else IGNORE
        assert m.labels[i] == label
        if label == POSITIVE:
            assert m.gt_index[i] == best_j


# coder

def random_geometry(rng, n):
    xy = rng.uniform(0, 300, size=(n, 2))
    wh = rng.uniform(5, 120, size=(n, 2))
    return BoxGeometry(np.concatenate([xy, xy + wh], axis=1), rng.uniform(0, 300, size=(n, 2)),
                       rng.uniform(2, 60, size=n), rng.uniform(0.3, 5, size=(n, 3)), rng.uniform(-np.pi, np.pi, n))


def random_anchor_priors(rng, n):
    return (rng.uniform(0, 300, size=(n, 2)), rng.uniform(8, 200, size=(n, 2)),
            np.column_stack([rng.uniform(5, 40, n), rng.uniform(0.5, 4, size=(n, 3))]), rng.uniform(0.5, 10, size=(n, 4)))


def test_encode_decode_round_trip_1000_pairs():
    rng = np.random.default_rng(0)
    gt = random_geometry(rng, 1000)
    c, s, mu, sd = random_anchor_priors(rng, 1000)
    back = decode_boxes(c, s, mu, sd, encode_targets(c, s, mu, sd, gt))
    for a, b in [(back.box2d, gt.box2d), (back.center_proj, gt.center_proj), (back.z, gt.z),
                 (back.dims3d, gt.dims3d)]:
        assert np.max(np.abs(a - b)) < 1e-6
    assert np.max(np.abs(np.angle(np.exp(1j * (back.theta - gt.theta))))) < 1e-6


def test_fixed_point_targets_are_zero():
    c, s = np.array([[50.0, 40.0]]), np.array([[20.0, 10.0]])
    gt = BoxGeometry(np.array([[40.0, 35.0, 60.0, 45.0]]), c.copy(), np.array([12.0]), np.array([[1.6, 1.5, 3.9]]),
                     np.array([0.0]))
    mu = np.array([[12.0, 1.6, 1.5, 3.9]])
    np.testing.assert_allclose(encode_targets(c, s, mu, np.ones((1, 4)), gt), 0.0, atol=1e-15)


def test_log_ratio_width_target():
    c, s = np.array([[0.0, 0.0]]), np.array([[10.0, 10.0]])
    gt = BoxGeometry(np.array([[-5 * np.e, -5.0, 5 * np.e, 5.0]]), np.zeros((1, 2)), np.ones(1), np.ones((1, 3)),
                     np.zeros(1))
    t = encode_targets(c, s, np.ones((1, 4)), np.ones((1, 4)), gt)
    assert t[0, 2] == pytest.approx(1.0)


def test_encode_rejects_non_positive_sizes():
    rng = np.random.default_rng(0)
    c, s, mu, sd = random_anchor_priors(rng, 2)
    s[0, 0] = 0.0
    with pytest.raises(ValueError):
        encode_targets(c, s, mu, sd, random_geometry(rng, 2))


def test_decode_clamps_untrained_outputs():
    rng = np.random.default_rng(0)
    c, s, mu, sd = random_anchor_priors(rng, 3)
    geom = decode_boxes(c, s, mu, sd, np.full((3, 11), 1e4))
    assert np.all(np.isfinite(geom.box2d)) and np.all(np.isfinite(geom.dims3d))


def test_box3d_recovers_yaw_from_viewing_angle():
    P2 = SynthConfig().P2()
    obj = GroundTruthObject("Car", 0.0, 0, 0.0, (10, 10, 50, 50), (1.5, 1.6, 3.9), (4.0, 1.65, 15.0), 0.0)
    obj.alpha = float(np.angle(np.exp(1j * (0.7 - np.arctan2(4.0, 15.0)))))
    obj.rotation_y = 0.7
    geom = BoxGeometry.from_objects([obj], P2)
    box = geometry_to_box3d(geom, P2)[0]
    np.testing.assert_allclose(box, [4.0, 1.65, 15.0, 1.6, 1.5, 3.9, 0.7], atol=1e-9)


def test_detection_invariants():
    with pytest.raises(ValueError):
        Detection(0, 0.5, (10, 10, 5, 20), (0, 0, 10, 1, 1, 1, 0))
    with pytest.raises(ValueError):
        Detection(0, 1.5, (0, 0, 5, 5), (0, 0, 10, 1, 1, 1, 0))


# losses

def test_focal_degenerates_to_cross_entropy():
    rng = np.random.default_rng(0)
    p = rng.uniform(0.01, 0.99, size=50)
    y = rng.random(50) > 0.5
    ce = -np.where(y, np.log(p), np.log(1 - p)).mean()
    assert abs(focal_loss(t64(p), y, alpha=1.0, gamma=0.0).item() - ce) < 1e-10
    logits = rng.normal(size=(20, 4))
    labels = rng.integers(0, 4, 20)
    logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    mce = -logp[np.arange(20), labels].mean()
    assert abs(softmax_focal_loss(t64(logits), labels, axis=1, alpha=1.0, gamma=0.0).item() - mce) < 1e-10
    z = rng.normal(size=30)
    yz = rng.random(30) > 0.5
    bce = np.logaddexp(0, np.where(yz, -z, z)).mean()
    assert abs(sigmoid_focal_loss(t64(z), yz, alpha=1.0, gamma=0.0).item() - bce) < 1e-10


def test_focal_values():
    assert focal_loss(t64([1.0]), [True]).item() == 0.0
    assert focal_loss(t64([0.9]), [True]).item() == pytest.approx(2.6341e-4, rel=1e-4)


def test_smooth_l1_values():
    assert smooth_l1(t64([0.0]), [0.0]).item() == 0.0
    assert smooth_l1(t64([0.5]), [0.0]).item() == 0.125
    assert smooth_l1(t64([2.0]), [0.0]).item() == 1.5


@pytest.mark.parametrize("delta", [0.1, 1.0, 2.5])
def test_smooth_l1_is_c1_at_delta(delta):
    h = 1e-7

    def value(d):
        return smooth_l1(t64([d]), [0.0], delta).item()

    def slope(d):
        x = t64([d], grad=True)
        smooth_l1(x, [0.0], delta).backward()
        return x.grad[0]

    assert abs(value(delta - h) - value(delta + h)) < 3 * h
    assert abs(slope(delta - h) - slope(delta + h)) < 1e-5
    assert abs((value(delta + h) - value(delta - h)) / (2 * h) - 1.0) < 1e-5


def test_loss_gradchecks(f64):
    rng = np.random.default_rng(3)
    y = rng.random(12) > 0.5
    assert finite_diff_check(lambda t: sigmoid_focal_loss(t, y), t64(rng.normal(size=12))) < 1e-4
    assert finite_diff_check(lambda t: focal_loss(t, y), t64(rng.uniform(0.05, 0.95, 12))) < 1e-4
    tgt = rng.normal(size=12)
    x = tgt + rng.choice([-1, 1], 12) * rng.uniform(0.1, 3, 12)
    assert finite_diff_check(lambda t: smooth_l1(t, tgt), t64(x)) < 1e-4


# total loss

def _toy_targets(rng, A=30, C=3, P=4):
    labels = np.full(A, NEGATIVE)
    pos = rng.choice(A, P, replace=False)
    labels[pos] = POSITIVE
    labels[rng.choice(np.setdiff1d(np.arange(A), pos), 3, replace=False)] = IGNORE
    cls_target = np.full(A, -1)
    cls_target[pos] = rng.integers(0, C, P)
    from monomm.detect.losses import FrameTargets
    depth = DepthBinMap(rng.integers(-1, 5, size=(2, 3)), 5)
    return FrameTargets(labels, cls_target, np.sort(pos), rng.normal(size=(P, 11)), depth)


def test_total_loss_is_weighted_sum_of_components(f64):
    rng = np.random.default_rng(5)
    tg = _toy_targets(rng)
    cls, reg, dep = t64(rng.normal(size=(30, 3))), t64(rng.normal(size=(30, 11))), t64(rng.normal(size=(5, 2, 3)))
    w = LossWeights(cls=0.7, reg=1.3, dep=2.0)
    total, parts = total_loss(cls, reg, dep, tg, w)
    assert total.item() == pytest.approx(0.7 * parts["cls"] + 1.3 * parts["reg"] + 2.0 * parts["dep"], rel=1e-12)
    # hand computation of the classification term
    keep = tg.labels != IGNORE
    onehot = np.zeros((30, 3), bool)
    onehot[tg.pos_index, tg.cls_target[tg.pos_index]] = True
    z = np.where(onehot, cls.data, -cls.data)[keep]
    pt = 1 / (1 + np.exp(-z))
    assert parts["cls"] == pytest.approx((-0.25 * (1 - pt) ** 2 * np.log(pt)).sum() / 4, rel=1e-10)


def test_zero_depth_weight_decouples_depth_head(f64):
    rng = np.random.default_rng(6)
    dep = t64(rng.normal(size=(5, 2, 3)), grad=True)
    total, _ = total_loss(t64(rng.normal(size=(30, 3))), t64(rng.normal(size=(30, 11))), dep, _toy_targets(rng),
                          LossWeights(dep=0.0))
    total.backward()
    assert dep.grad is None or not dep.grad.any()


def test_total_loss_zero_components():
    labels = np.full(5, IGNORE)
    from monomm.detect.losses import FrameTargets
    tg = FrameTargets(labels, np.full(5, -1), np.zeros(0, dtype=int), np.zeros((0, 11)),
                      DepthBinMap(np.full((2, 2), -1), 3))
    total, parts = total_loss(t64(np.zeros((5, 2))), t64(np.zeros((5, 11))), t64(np.zeros((3, 2, 2))), tg)
    assert total.item() == 0.0 and parts == {"cls": 0.0, "reg": 0.0, "dep": 0.0, "total": 0.0}


def test_build_targets_ignores_unknown_classes():
    anchors = generate_anchors(4, 8, 8, AnchorConfig(scales=4))
    car = GroundTruthObject("Car", 0, 0, 0.0, (8.0, 4.0, 24.0, 20.0), (1.5, 1.6, 3.9), (0.0, 1.6, 10.0), 0.0)
    van = GroundTruthObject("Van", 0, 0, 0.0, (40.0, 4.0, 56.0, 20.0), (2.0, 1.9, 5.0), (2.0, 1.6, 10.0), 0.0)
    P2 = SynthConfig(height=32, width=64).P2()
    tg = build_targets(anchors, [car, van], P2, ("Car",), np.full((32, 64), 10.0), n_bins=8)
    iou_van = iou2d_matrix(anchors.boxes, np.array([van.bbox2d]))[:, 0]
    assert np.all(tg.labels[iou_van >= 0.4] == IGNORE) or np.all(tg.labels[iou_van >= 0.4] != NEGATIVE)
    assert tg.num_pos > 0 and np.all(tg.cls_target[tg.pos_index] == 0)
    assert tg.depth.bins.shape == (4, 8)


# head and nms

def test_head_output_layout(rng):
    head = DetectionHead(4, 3, n_templates=5, hidden=6, rng=rng)
    feat = FeatureMap(Tensor(rng.normal(size=(4, 2, 3))), 8)
    cls, reg = head(feat)
    assert cls.shape == (2 * 3 * 5, 3) and reg.shape == (30, 11)
    raw = head.cls(head.shared(feat.data).relu()).data  # (T*k, h, w)
    y, x, t = 1, 2, 4
    np.testing.assert_array_equal(cls.data[(y * 3 + x) * 5 + t], raw[t * 3:(t + 1) * 3, y, x])
    assert np.all(1 / (1 + np.exp(-cls.data)) < 0.05)  # background prior


def det(score, box, cls=0):
    return Detection(cls, score, box, (0, 0, 10, 1, 1, 1, 0))


def test_nms_examples():
    box = (0.0, 0.0, 10.0, 10.0)
    kept = nms([det(0.8, box), det(0.9, box)])
    assert [d.score for d in kept] == [0.9]
    assert len(nms([det(0.9, box), det(0.8, (20.0, 20.0, 30.0, 30.0))])) == 2
    a, b, c = (0.0, 0.0, 10.0, 10.0), (5.0, 0.0, 15.0, 10.0), (10.0, 0.0, 20.0, 10.0)
    # A suppresses B (IoU 1/3 > 0.3), A and C do not overlap, B would suppress C
    kept = nms([det(0.9, a), det(0.85, b), det(0.8, c)], iou_thr=0.3)
    assert [d.box2d for d in kept] == [a, c]


def test_nms_filters_scores_and_is_per_class():
    box = (0.0, 0.0, 10.0, 10.0)
    kept = nms([det(0.7, box), det(0.9, box, 0), det(0.8, box, 1)])
    assert sorted((d.cls_id, d.score) for d in kept) == [(0, 0.9), (1, 0.8)]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_nms_is_order_independent(seed):
    rng = np.random.default_rng(seed)
    n = 15
    xy = rng.uniform(0, 40, size=(n, 2))
    boxes = np.concatenate([xy, xy + rng.uniform(5, 20, size=(n, 2))], axis=1)
    scores = rng.permutation(n) / n * 0.2 + 0.78
    perm = rng.permutation(n)
    a = set(nms_indices(boxes, scores, 0.4).tolist())
    b = {int(perm[i]) for i in nms_indices(boxes[perm], scores[perm], 0.4)}
    assert a == b
