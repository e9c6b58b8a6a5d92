import numpy as np
import pytest

from monomm.config import ABLATIONS, ConfigError, RunConfig
from monomm.fmf import FMF, PlainFusion
from monomm.model import ModelConfig, MonoMM
from monomm.nn import Module
from monomm.tensor import no_grad
from monomm.train import build_model, make_scenes, predict_frame, train

TINY = dict(
    image_height=64, image_width=128, backbone_channels=(4, 8, 8, 8, 8), fmf_mid=8, fmf_out=8,
    dap_channels=8, n_bins=8, dmb_width=8, dmb_inner=16, dmb_state=4, head_hidden=8,
    steps=2, epochs=0, batch_size=1, scenes=2, synth_max_objects=2,
)


def modules_of(root, kind):
    found, stack = [], [root]
    while stack:
        m = stack.pop()
        if isinstance(m, kind):
            found.append(m)
        for v in vars(m).values():
            stack.extend(x for x in (v if isinstance(v, (list, tuple)) else [v]) if isinstance(x, Module))
    return found


@pytest.mark.parametrize("name", sorted(ABLATIONS))
def test_ablation_trains_and_infers(name):
    cfg = RunConfig(**TINY, **ABLATIONS[name])
    frames = make_scenes(cfg)
    result = train(cfg, frames)
    assert len(result.history) == 2
    assert all(np.isfinite(r["total"]) for r in result.history)
    for f in frames:
        for obj in predict_frame(result.model, f, cfg.replace(score_thr=0.01)):
            assert 0.01 <= obj.score <= 1.0


def test_ablation_parameter_sets():
    models = {k: build_model(RunConfig(**TINY, **v)) for k, v in ABLATIONS.items()}
    names = {k: [n for n, _ in m.named_parameters()] for k, m in models.items()}

    def count(model, kind):
        return sum(m.num_parameters() for m in modules_of(model, kind))

    assert models["b"].dmb is None and not any(n.startswith("dmb.") for n in names["b"])
    assert count(models["c"], FMF) == 0 and count(models["c"], PlainFusion) > 0
    assert count(models["e"], FMF) > 0 and models["e"].dmb.num_parameters() > 0
    # only (c) skips the depth-visual summation, so only it lacks the context conv
    assert [k for k in sorted(names) if not any(n.startswith("dap.context") for n in names[k])] == ["c"]
    full, plain = models["e"], models["b"]
    assert full.num_parameters() - plain.num_parameters() == full.dmb.num_parameters()


def test_mamba_mode_requires_dmb():
    with pytest.raises(ConfigError):
        RunConfig(**TINY, enable_dmb=False, fusion_mode="mamba")


def test_forward_shapes_small():
    cfg = RunConfig(**TINY)
    model = build_model(cfg)
    with no_grad():
        out = model(np.zeros((3, 64, 128), np.float32))
    n_anchors = 8 * 16 * cfg.model_config().anchors.n_templates
    assert out.fused.shape == (8, 8, 16)
    assert out.depth_logits.shape == (8, 8, 16)
    assert out.cls_logits.shape == (n_anchors, 3)
    assert out.reg.shape == (n_anchors, 11)
    assert out.cls_logits.dtype == np.float32


def test_wrong_input_size_rejected():
    model = build_model(RunConfig(**TINY))
    with pytest.raises(ValueError, match="expects images of size"):
        model(np.zeros((3, 64, 96), np.float32))


def test_model_config_validation():
    with pytest.raises(ValueError, match="multiples of 32"):
        ModelConfig(image_size=(100, 128))
    with pytest.raises(ValueError, match="fusion_mode"):
        ModelConfig(fusion_mode="sum")


def test_same_seed_same_weights():
    a = MonoMM(RunConfig(**TINY).model_config(), seed=5).state_dict()
    b = MonoMM(RunConfig(**TINY).model_config(), seed=5).state_dict()
    c = MonoMM(RunConfig(**TINY).model_config(), seed=6).state_dict()
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert any(not np.array_equal(a[k], c[k]) for k in a)
