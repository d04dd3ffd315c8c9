import pytest

from curvreg.config import (
    RunConfig,
    default_config_text,
    load_config,
    parse_config,
    thread_count,
)
from curvreg.errors import ConfigError

MINIMAL = "[curvreg]\nconfig_version = 1\n"


def test_default_text_round_trips_to_defaults():
    assert parse_config(default_config_text()) == RunConfig()
    assert parse_config(MINIMAL) == RunConfig()


def test_documented_defaults():
    c = parse_config(default_config_text())
    p = c.pipeline
    assert p.curvelet.n_scales == 4 and p.curvelet.n_angles_coarse == 16
    assert p.curvelet.finest_is_curvelets
    assert p.detector.contrast_threshold == 0.03 and p.detector.range_margin == 0.5
    assert p.ransac.inlier_threshold == 0.5 and p.ransac.max_iterations == 1000
    assert p.ransac.min_inliers == 5 and p.ransac.rng_seed == 0
    assert p.mutual and p.nn_method == "brute"
    assert (p.projection.width, p.projection.height) == (720, 360)
    assert c.evaluation.stride == 1 and c.evaluation.failure_threshold == 0.1
    assert c.evaluation.map_cell == 0.1


def test_values_are_applied():
    c = parse_config(
        MINIMAL
        + "[curvelet]\nn_scales = 5\n[ransac]\ninlier_threshold_m = 0.3\n"
        + "[projection]\naz_res_deg = 1.0\nel_res_deg = 1.0\n[evaluation]\nstride = 5\n"
    )
    assert c.pipeline.curvelet.n_scales == 5
    assert c.pipeline.ransac.inlier_threshold == 0.3
    assert c.pipeline.projection.width == 360
    assert c.evaluation.stride == 5


@pytest.mark.parametrize(
    "text",
    [
        MINIMAL + "[curvelet]\nn_scale = 4\n",
        MINIMAL + "[extras]\nx = 1\n",
        MINIMAL + "[ransac]\ninlier_threshold_m = 0\n",
        MINIMAL + "[ransac]\nmin_inliers = 2\n",
        MINIMAL + "[curvelet]\nn_angles_coarse = 10\n",
        MINIMAL + "[curvelet]\nn_scales = four\n",
        MINIMAL + "[detector]\norientation_normalize = maybe\n",
        MINIMAL + "[matching]\nnn_method = annoy\n",
        MINIMAL + "[range]\nmax_range_m = nan\n",
        "[curvreg]\nconfig_version = 2\n",
        "[curvelet]\nn_scales = 4\n",
        "not an ini file",
    ],
)
def test_invalid_configs_are_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_load_config_from_file(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text(MINIMAL + "[ransac]\nrng_seed = 9\n")
    assert load_config(p).pipeline.ransac.rng_seed == 9
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("CURVREG_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("CURVREG_THREADS", "0")
    assert thread_count() >= 1
    monkeypatch.delenv("CURVREG_THREADS")
    assert thread_count() >= 1
    monkeypatch.setenv("CURVREG_THREADS", "-1")
    with pytest.raises(ConfigError):
        thread_count()
