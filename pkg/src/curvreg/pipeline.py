"""Pairwise scan registration: range image -> curvelets -> features -> RANSAC/SVD."""

from contextlib import contextmanager
from dataclasses import dataclass, field
import logging
import time

import numpy as np

from .curvelet import CurveletConfig, fdct_forward
from .errors import CurvRegError
from .features import DetectorConfig, extract_features
from .geometry import RigidTransform
from .matching import RansacConfig, match_nn, ransac_filter
from .rangeimage import ProjectionModel, make_range_image

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    projection: ProjectionModel = ProjectionModel()
    min_range: float = 0.5
    max_range: float = 200.0
    curvelet: CurveletConfig = CurveletConfig()
    detector: DetectorConfig = DetectorConfig()
    mutual: bool = True
    nn_method: str = "brute"
    ransac: RansacConfig = RansacConfig()
    # optional refine(model, data, transform) -> transform, e.g. an ICP step
    refine: object = None

    def __post_init__(self):
        if not 0 <= self.min_range < self.max_range:
            raise ValueError("need 0 <= min_range < max_range")
        if self.nn_method not in ("brute", "kdtree"):
            raise ValueError(f"unknown nn_method {self.nn_method!r}")


@dataclass
class RegistrationResult:
    """Transform mapping data-scan coordinates into the model-scan frame."""

    transform: RigidTransform
    inlier_count: int
    keypoint_counts: tuple
    match_count: int
    residual_rms: float
    timings: dict = field(default_factory=dict)
    matches: list = field(default_factory=list, repr=False)
    inlier_mask: np.ndarray = field(default=None, repr=False)


@contextmanager
def _stage(name, timings):
    t0 = time.perf_counter()
    try:
        yield
    except CurvRegError as err:
        err.stage = f"{name}/{err.stage}" if not err.stage.startswith(name) else err.stage
        raise
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


def scan_features(cloud, cfg, timings=None, tag="scan"):
    """Range image, curvelet pyramid and features of a single scan."""
    timings = {} if timings is None else timings
    with _stage(tag, timings):
        t0 = time.perf_counter()
        img = make_range_image(cloud, cfg.projection, cfg.min_range, cfg.max_range)
        t1 = time.perf_counter()
        pyr = fdct_forward(img.normalized, cfg.curvelet)
        t2 = time.perf_counter()
        feats = extract_features(img, pyr, cfg.detector)
        t3 = time.perf_counter()
    timings[f"{tag}_range_image"] = t1 - t0
    timings[f"{tag}_curvelet"] = t2 - t1
    timings[f"{tag}_features"] = t3 - t2
    return img, pyr, feats


def register_features(model_feats, data_feats, cfg, timings=None):
    timings = {} if timings is None else timings
    with _stage("matching", timings):
        matches = match_nn(
            model_feats.descriptors, data_feats.descriptors, cfg.mutual, cfg.nn_method
        )
    with _stage("ransac", timings):
        rr = ransac_filter(matches, model_feats.points, data_feats.points, cfg.ransac)
    return RegistrationResult(
        transform=rr.transform,
        inlier_count=len(rr.inlier_matches),
        keypoint_counts=(len(model_feats), len(data_feats)),
        match_count=len(matches),
        residual_rms=rr.residual_rms,
        timings=timings,
        matches=matches,
        inlier_mask=rr.inlier_mask,
    )


def register_pair(model, data, cfg=PipelineConfig()):
    """Estimate the rigid transform taking ``data`` points into ``model``'s frame."""
    timings = {}
    t0 = time.perf_counter()
    _, _, mf = scan_features(model, cfg, timings, "model")
    _, _, df = scan_features(data, cfg, timings, "data")
    log.debug("keypoints: model=%d data=%d", len(mf), len(df))
    result = register_features(mf, df, cfg, timings)
    if cfg.refine is not None:
        with _stage("refine", timings):
            result.transform = cfg.refine(model, data, result.transform)
    timings["total"] = time.perf_counter() - t0
    return result
