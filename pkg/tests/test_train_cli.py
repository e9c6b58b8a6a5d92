import csv

import numpy as np
import pytest
from test_model import TINY

from monomm import functional as F
from monomm.cli import main
from monomm.config import ConfigError, RunConfig
from monomm.train import build_model, load_checkpoint, make_scenes, save_checkpoint, train, write_loss_curve


@pytest.fixture
def tiny_cfg_file(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text("# small model for fast runs\n" + "".join(
        f"{k} = {','.join(map(str, v)) if isinstance(v, tuple) else v}\n" for k, v in TINY.items()))
    return path


def test_zero_steps_leaves_initial_weights():
    cfg = RunConfig(**TINY)
    result = train(cfg, make_scenes(cfg), steps=0)
    init = build_model(cfg).state_dict()
    got = result.model.state_dict()
    assert result.history == []
    assert all(np.array_equal(init[k], got[k]) for k in init)


def test_training_changes_weights_and_reduces_nothing_to_nan():
    cfg = RunConfig(**TINY)
    result = train(cfg, make_scenes(cfg), steps=3)
    init = build_model(cfg).state_dict()
    assert any(not np.array_equal(init[k], v) for k, v in result.model.state_dict().items())
    assert [r["step"] for r in result.history] == [0, 1, 2]


def test_checkpoint_round_trip(tmp_path):
    cfg = RunConfig(**TINY)
    model = train(cfg, make_scenes(cfg), steps=1).model
    save_checkpoint(model, cfg, tmp_path / "a.zip")
    save_checkpoint(model, cfg, tmp_path / "b.zip")
    assert (tmp_path / "a.zip").read_bytes() == (tmp_path / "b.zip").read_bytes()
    loaded, cfg2 = load_checkpoint(tmp_path / "a.zip", expect=cfg)
    assert cfg2 == cfg
    ref = model.state_dict()
    assert all(np.array_equal(ref[k], v) for k, v in loaded.state_dict().items())
    assert np.array_equal(loaded.anchor_stats.mean, model.anchor_stats.mean)
    with pytest.raises(ConfigError, match="different model configuration"):
        load_checkpoint(tmp_path / "a.zip", expect=cfg.replace(enable_fmf=False))
    (tmp_path / "bad.zip").write_bytes(b"not a zip")
    with pytest.raises(ConfigError, match="cannot open checkpoint"):
        load_checkpoint(tmp_path / "bad.zip")


def test_loss_curve_csv(tmp_path):
    history = [{"step": 0, "lr": 0.1, "total": 1.5, "cls": 1.0, "reg": 0.25, "dep": 0.25}]
    write_loss_curve(history, tmp_path / "l.csv")
    rows = list(csv.reader(open(tmp_path / "l.csv")))
    assert rows[0] == ["step", "lr", "total", "cls", "reg", "dep"]
    assert [float(v) for v in rows[1]] == [0, 0.1, 1.5, 1.0, 0.25, 0.25]


def test_cli_train_infer_eval(tmp_path, tiny_cfg_file, capsys):
    run = tmp_path / "run"
    assert main(["train-toy", "--config", str(tiny_cfg_file), "--out", str(run), "--steps", "2", "--seed", "3"]) == 0
    for name in ("checkpoint.zip", "loss_curve.csv", "config.txt"):
        assert (run / name).is_file()
    assert len(list((run / "scenes" / "image_2").iterdir())) == 2
    pred = tmp_path / "pred"
    assert main(["infer", "--checkpoint", str(run / "checkpoint.zip"), "--input", str(run / "scenes"),
                 "--out", str(pred)]) == 0
    assert sorted(p.name for p in pred.iterdir()) == ["003000.txt", "003001.txt"]  # named after scene seeds
    assert main(["eval", "--results", str(pred), "--gt", str(run / "scenes" / "label_2"),
                 "--out", str(tmp_path / "ev")]) == 0
    assert "Car" in (tmp_path / "ev" / "metrics.txt").read_text()


def test_cli_usage_errors(tmp_path, tiny_cfg_file, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("warp_speed = 9\n")
    assert main(["train-toy", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "unknown config key" in capsys.readouterr().err
    assert main(["train-toy", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "o")]) == 2
    assert main(["eval", "--results", str(tmp_path / "x"), "--gt", str(tmp_path / "y")]) == 2
    assert main(["infer", "--checkpoint", str(tmp_path / "none.zip"), "--input", str(tmp_path),
                 "--out", str(tmp_path / "p")]) == 2
    for argv in (["frobnicate"], ["train-toy"], ["train-toy", "--out", "x", "--precision", "16"],
                 ["train-toy", "--out", "x", "--scenes", "0"], ["verify", "--suite", "bogus"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2


def test_cli_verify_detects_broken_gradient(monkeypatch, capsys):
    assert main(["verify", "--suite", "iou"]) == 0
    real = F.silu

    def bad_silu(x):
        out = real(x)
        backward = out._backward
        out._backward = lambda g: [None if pg is None else pg * 1.01 for pg in backward(g)]
        return out

    monkeypatch.setattr(F, "silu", bad_silu)
    assert main(["verify", "--suite", "gradcheck"]) == 1
    assert "[FAIL] gradcheck/silu" in capsys.readouterr().out


def test_cli_scan_bench(tmp_path, capsys):
    assert main(["scan-bench", "--lengths", "1,9", "--dim", "4", "--state", "3", "--repeats", "1",
                 "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "scan_bench.csv").read_text().splitlines()
    assert rows[0] == "T,E,N,max_rel_diff,equal" and len(rows) == 3
    assert all(r.endswith(",true") for r in rows[1:])
