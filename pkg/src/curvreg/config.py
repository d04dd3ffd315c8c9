"""Versioned INI run configuration.

Every key is optional; missing keys take the library defaults.  Unknown
sections or keys and out-of-range values are rejected with
:class:`~curvreg.errors.ConfigError`.
"""

import configparser
from dataclasses import dataclass, field
import math
import os

from .curvelet import CurveletConfig
from .errors import ConfigError
from .features import DetectorConfig
from .matching import RansacConfig
from .pipeline import PipelineConfig
from .rangeimage import ProjectionModel

CONFIG_VERSION = 1


@dataclass(frozen=True)
class EvaluationConfig:
    stride: int = 1
    failure_threshold: float = 0.1
    decimate: bool = True
    map_cell: float = 0.1


@dataclass(frozen=True)
class RunConfig:
    pipeline: PipelineConfig = PipelineConfig()
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)


def _checked(cast, lo=None, hi=None, lo_open=False):
    def parse(key, raw):
        try:
            value = cast(raw)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {raw!r}") from None
        if isinstance(value, float) and not math.isfinite(value):
            raise ConfigError(f"{key}: must be finite")
        if lo is not None and (value <= lo if lo_open else value < lo):
            raise ConfigError(f"{key}: {value} below {'or at ' if lo_open else ''}minimum {lo}")
        if hi is not None and value > hi:
            raise ConfigError(f"{key}: {value} above maximum {hi}")
        return value

    return parse


def _bool(raw):
    text = raw.strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def _choice(*options):
    def parse(key, raw):
        if raw not in options:
            raise ConfigError(f"{key}: {raw!r} not one of {', '.join(options)}")
        return raw

    return parse


_SCHEMA = {
    "curvreg": {"config_version": _checked(int, 1, CONFIG_VERSION)},
    "projection": {
        "az_min_deg": _checked(float, -360.0, 360.0),
        "az_max_deg": _checked(float, -360.0, 360.0),
        "el_min_deg": _checked(float, -90.0, 90.0),
        "el_max_deg": _checked(float, -90.0, 90.0),
        "az_res_deg": _checked(float, 0.0, 10.0, lo_open=True),
        "el_res_deg": _checked(float, 0.0, 10.0, lo_open=True),
    },
    "range": {
        "min_range_m": _checked(float, 0.0),
        "max_range_m": _checked(float, 0.0, lo_open=True),
    },
    "curvelet": {
        "n_scales": _checked(int, 1, 12),
        "n_angles_coarse": _checked(int, 8, 256),
        "finest_is_curvelets": _checked(_bool),
    },
    "detector": {
        "contrast_threshold": _checked(float, 0.0, 1.0),
        "range_margin_m": _checked(float, 0.0),
        "orientation_normalize": _checked(_bool),
    },
    "matching": {
        "mutual": _checked(_bool),
        "nn_method": _choice("brute", "kdtree"),
    },
    "ransac": {
        "inlier_threshold_m": _checked(float, 0.0, lo_open=True),
        "max_iterations": _checked(int, 1, 10_000_000),
        "min_inliers": _checked(int, 3),
        "rng_seed": _checked(int, 0),
    },
    "evaluation": {
        "stride": _checked(int, 1),
        "failure_threshold_rad": _checked(float, 0.0, math.pi, lo_open=True),
        "decimate": _checked(_bool),
        "map_cell_m": _checked(float, 0.0, lo_open=True),
    },
}


def parse_config(text, source="<config>"):
    """Build a :class:`RunConfig` from INI text."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as err:
        raise ConfigError(f"{source}: {err}") from None
    values = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key {section}.{key}")
            values[f"{section}.{key}"] = _SCHEMA[section][key](f"{section}.{key}", raw.strip())
    if "curvreg.config_version" not in values:
        raise ConfigError(f"{source}: missing curvreg.config_version")
    return _build(values)


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from None
    return parse_config(text, str(path))


def _build(v):
    pm = ProjectionModel()
    deg = math.degrees
    proj = ProjectionModel.from_degrees(
        (v.get("projection.az_min_deg", deg(pm.azimuth_span[0])),
         v.get("projection.az_max_deg", deg(pm.azimuth_span[1]))),
        (v.get("projection.el_min_deg", deg(pm.elevation_span[0])),
         v.get("projection.el_max_deg", deg(pm.elevation_span[1]))),
        v.get("projection.az_res_deg", deg(pm.azimuth_resolution)),
        v.get("projection.el_res_deg", deg(pm.elevation_resolution)),
    ) if any(k.startswith("projection.") for k in v) else pm
    d = PipelineConfig()
    cc, dc, rc = d.curvelet, d.detector, d.ransac
    try:
        pipeline = PipelineConfig(
            projection=proj,
            min_range=v.get("range.min_range_m", d.min_range),
            max_range=v.get("range.max_range_m", d.max_range),
            curvelet=CurveletConfig(
                v.get("curvelet.n_scales", cc.n_scales),
                v.get("curvelet.n_angles_coarse", cc.n_angles_coarse),
                v.get("curvelet.finest_is_curvelets", cc.finest_is_curvelets),
            ),
            detector=DetectorConfig(
                v.get("detector.contrast_threshold", dc.contrast_threshold),
                v.get("detector.range_margin_m", dc.range_margin),
                v.get("detector.orientation_normalize", dc.orientation_normalize),
            ),
            mutual=v.get("matching.mutual", d.mutual),
            nn_method=v.get("matching.nn_method", d.nn_method),
            ransac=RansacConfig(
                v.get("ransac.inlier_threshold_m", rc.inlier_threshold),
                v.get("ransac.max_iterations", rc.max_iterations),
                v.get("ransac.min_inliers", rc.min_inliers),
                v.get("ransac.rng_seed", rc.rng_seed),
            ),
        )
    except ValueError as err:
        raise ConfigError(str(err)) from None
    e = EvaluationConfig()
    evaluation = EvaluationConfig(
        v.get("evaluation.stride", e.stride),
        v.get("evaluation.failure_threshold_rad", e.failure_threshold),
        v.get("evaluation.decimate", e.decimate),
        v.get("evaluation.map_cell_m", e.map_cell),
    )
    return RunConfig(pipeline, evaluation)


def default_config_text():
    """The default configuration as an INI document."""
    c = RunConfig()
    p = c.pipeline
    m = p.projection
    deg = math.degrees
    return f"""[curvreg]
config_version = {CONFIG_VERSION}

[projection]
az_min_deg = {deg(m.azimuth_span[0]):g}
az_max_deg = {deg(m.azimuth_span[1]):g}
el_min_deg = {deg(m.elevation_span[0]):g}
el_max_deg = {deg(m.elevation_span[1]):g}
az_res_deg = {deg(m.azimuth_resolution):g}
el_res_deg = {deg(m.elevation_resolution):g}

[range]
min_range_m = {p.min_range:g}
max_range_m = {p.max_range:g}

[curvelet]
n_scales = {p.curvelet.n_scales}
n_angles_coarse = {p.curvelet.n_angles_coarse}
finest_is_curvelets = {str(p.curvelet.finest_is_curvelets).lower()}

[detector]
contrast_threshold = {p.detector.contrast_threshold:g}
range_margin_m = {p.detector.range_margin:g}
orientation_normalize = {str(p.detector.orientation_normalize).lower()}

[matching]
mutual = {str(p.mutual).lower()}
nn_method = {p.nn_method}

[ransac]
inlier_threshold_m = {p.ransac.inlier_threshold:g}
max_iterations = {p.ransac.max_iterations}
min_inliers = {p.ransac.min_inliers}
rng_seed = {p.ransac.rng_seed}

[evaluation]
stride = {c.evaluation.stride}
failure_threshold_rad = {c.evaluation.failure_threshold:g}
decimate = {str(c.evaluation.decimate).lower()}
map_cell_m = {c.evaluation.map_cell:g}
"""


def thread_count():
    """Worker cap from ``CURVREG_THREADS`` (0 or unset means all cores)."""
    raw = os.environ.get("CURVREG_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"CURVREG_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError("CURVREG_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)
