import pytest

from advrecon.config import PipelineConfig, from_mapping, load_config, read_config_file
from advrecon.errors import ConfigError


def test_paper_defaults():
    cfg = PipelineConfig()
    assert (cfg.window_size, cfg.latent_dim, cfg.batch_size) == (100, 20, 64)
    assert (cfg.alpha, cfg.theta, cfg.sigmas, cfg.product_scale) == (0.5, 0.1, 4.0, 1.0)
    assert cfg.fusion == "product" and cfg.error == "dtw"


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        from_mapping({"windowsize": 10})


@pytest.mark.parametrize("changes", [
    {"window_size": 0},
    {"alpha": 1.5},
    {"theta": 0},
    {"error": "euclid"},
    {"fusion": "sum"},
    {"half_window": 0},
    {"batch_size": -1},
    {"critic_smoothing": "mean"},
    {"train_fraction": 0},
])
def test_invalid_values_rejected(changes):
    with pytest.raises(ConfigError):
        from_mapping(changes)


def test_coercion_and_aliases():
    cfg = from_mapping({"window_size": "50", "detrend": "yes", "window_fraction": "1/4", "fusion": "critic"})
    assert cfg.window_size == 50 and cfg.detrend is True
    assert cfg.window_fraction == 0.25
    assert cfg.fusion == "critic_only"
    with pytest.raises(ConfigError):
        from_mapping({"window_size": "ten"})
    with pytest.raises(ConfigError):
        from_mapping({"window_size": 2.5})


def test_file_formats(tmp_path):
    kv = tmp_path / "a.cfg"
    kv.write_text("# comment\nwindow_size = 40\ntheta=0.2  # trailing\n\n")
    assert read_config_file(kv) == {"window_size": "40", "theta": "0.2"}
    js = tmp_path / "a.json"
    js.write_text('{"latent_dim": 8}')
    assert load_config(js).latent_dim == 8
    bad = tmp_path / "bad.cfg"
    bad.write_text("window_size 40\n")
    with pytest.raises(ConfigError, match="line 1"):
        read_config_file(bad)


def test_precedence(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("window_size = 40\nlatent_dim = 8\n")
    cfg = load_config(p, {"window_size": 30})
    assert cfg.window_size == 30 and cfg.latent_dim == 8
    assert load_config().window_size == 100


def test_sub_configs_consistent():
    cfg = PipelineConfig(window_size=30, latent_dim=5, prune=False)
    assert cfg.network_spec(3).n_channels == 3
    assert cfg.network_spec().window_size == 30
    assert cfg.prune_config() is None
    assert cfg.updated(seed=4).seed == 4
