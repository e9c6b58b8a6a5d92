import pytest

from monomm.config import ConfigError, RunConfig, load_config, parse_config, parse_value


def test_comments_and_blank_lines_are_ignored():
    cfg = parse_config("# header\n\nlr = 0.01  # trailing\n  seed=7\n")
    assert cfg.lr == 0.01 and cfg.seed == 7
    assert cfg.batch_size == RunConfig().batch_size


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError, match=r"run.cfg:2: unknown config key 'learning_rate'"):
        parse_config("seed = 1\nlearning_rate = 0.1\n", source="run.cfg")


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match=r":3: duplicate key 'seed'"):
        parse_config("seed = 1\n\nseed = 2\n")


def test_missing_equals_rejected():
    with pytest.raises(ConfigError, match=r":1: expected 'key = value'"):
        parse_config("seed 1\n")


@pytest.mark.parametrize("line", ["seed = abc", "lr = fast", "enable_dmb = maybe", "dmb_patch = ", "dmb_patch = 2,x"])
def test_bad_values_rejected(line):
    with pytest.raises(ConfigError, match=":1:"):
        parse_config(line)


def test_semantic_validation_is_reported():
    with pytest.raises(ConfigError, match="precision"):
        parse_config("precision = 16")
    with pytest.raises(ConfigError, match="fusion_mode"):
        parse_config("fusion_mode = mamba\nenable_dmb = false")
    with pytest.raises(ConfigError, match="multiples of 32"):
        parse_config("image_height = 100")


def test_value_parsing():
    assert parse_value("enable_fmf", "Off") is False
    assert parse_value("enable_fmf", "yes") is True
    assert parse_value("dmb_patch", " 4, 2 ") == (4, 2)
    assert parse_value("classes", "Car,Van") == ("Car", "Van")
    assert parse_value("d_max", "60") == 60.0


def test_text_round_trip():
    cfg = RunConfig(lr=1.0 / 3.0, enable_fmf=False, dmb_patch=(1, 2), classes=("Car",), seed=9)
    assert parse_config(cfg.to_text()) == cfg
    assert parse_config(RunConfig.full_size().to_text()) == RunConfig.full_size()


def test_large_preset():
    cfg = RunConfig.full_size()
    m = cfg.model_config()
    assert m.image_size == (288, 1280)
    assert m.feature_shape == (36, 160)
    assert cfg.lr == 1e-4 and cfg.batch_size == 12
    assert cfg.total_steps() == 100 * 310


def test_total_steps():
    assert RunConfig(steps=17, epochs=0).total_steps() == 17
    assert RunConfig(epochs=3, scenes=9, batch_size=4).total_steps() == 9


def test_params_interface():
    cfg = RunConfig()
    assert cfg.get_params()["seed"] == cfg.seed
    assert cfg.set_params(seed=3, lr=0.5) is cfg
    assert cfg.seed == 3 and cfg.lr == 0.5
    with pytest.raises(ConfigError, match="unknown config key"):
        cfg.set_params(bogus=1)
    with pytest.raises(ConfigError):
        cfg.set_params(batch_size=0)
    assert cfg.batch_size >= 1


def test_load_config(tmp_path):
    path = tmp_path / "a.cfg"
    path.write_text("steps = 3\n")
    assert load_config(path).steps == 3
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config(tmp_path / "missing.cfg")
    path.write_text("nope = 1\n")
    with pytest.raises(ConfigError, match=str(path)):
        load_config(path)
