import pytest

from soundexlm.config import (
    ConfigError,
    ExperimentConfig,
    config_as_text,
    load_config,
    parse_config_text,
)


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.flavor == "samlm"
    assert cfg.mask_rate == 0.15
    assert cfg.batch_size == 16


def test_parse_key_value_with_comments():
    text = "# experiment\nflavor=smlm\nseed=7\nmask_rate=0.2\n\n# end\n"
    values = parse_config_text(text)
    assert values == {"flavor": "smlm", "seed": 7, "mask_rate": 0.2}


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("no_such_key=1")


def test_malformed_line_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("flavor")


def test_bad_type_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("seed=abc")


def test_flavor_validated():
    with pytest.raises(ConfigError):
        ExperimentConfig(flavor="bert")


def test_mask_rate_validated():
    with pytest.raises(ConfigError):
        ExperimentConfig(mask_rate=1.5)


def test_positive_dims_validated():
    with pytest.raises(ConfigError):
        ExperimentConfig(hidden_dim=0)


def test_load_config_file_plus_overrides(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("flavor=smlm\nseed=3\nhidden_dim=32\n", encoding="utf-8")
    cfg = load_config(path, {"seed": "9", "task": "offense"})
    assert cfg.flavor == "smlm"
    assert cfg.seed == 9  # flag wins
    assert cfg.hidden_dim == 32
    assert cfg.task == "offense"


def test_load_config_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/exp.cfg")


def test_config_round_trips_through_text():
    cfg = ExperimentConfig(flavor="vc", seed=5, finetune_lr=0.01)
    values = parse_config_text(config_as_text(cfg))
    assert ExperimentConfig(**values) == cfg
