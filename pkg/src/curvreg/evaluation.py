"""Ground-truth comparison, error statistics, trajectories and map accumulation."""

from dataclasses import dataclass

import numpy as np

from .errors import EmptySamples, LengthMismatch
from .geometry import PointCloud, RigidTransform, compose, rotation_distance

FAILURE_THRESHOLD = 0.1  # rad


@dataclass(frozen=True)
class GroundTruthPose:
    scan_id: str
    pose: RigidTransform


@dataclass(frozen=True)
class ErrorSample:
    pair_id: object
    translation: float
    rotation: float

    def __post_init__(self):
        if not (self.translation >= 0 and self.rotation >= 0):
            raise ValueError("errors must be non-negative")


def pair_error(estimated, truth, pair_id=None):
    """Euclidean translation error and geodesic rotation error."""
    dt = float(np.linalg.norm(np.asarray(estimated.translation) - truth.translation))
    return ErrorSample(pair_id, dt, rotation_distance(estimated.rotation, truth.rotation))


def rmse(samples):
    """``(translation RMSE, rotation RMSE)`` over error samples."""
    samples = list(samples)
    if not samples:
        raise EmptySamples("RMSE of zero samples")
    t = np.array([s.translation for s in samples])
    r = np.array([s.rotation for s in samples])
    return float(np.sqrt(np.mean(t**2))), float(np.sqrt(np.mean(r**2)))


def ecdf(values):
    """Empirical CDF as ``[(threshold, proportion), ...]``, one step per distinct value."""
    x = np.sort(np.asarray(list(values), dtype=np.float64))
    if x.size == 0:
        raise EmptySamples("ECDF of zero samples")
    thresholds, counts = np.unique(x, return_counts=True)
    cum = np.cumsum(counts)
    props = cum / x.size
    props[-1] = 1.0
    return [(float(t), float(p)) for t, p in zip(thresholds, props)]


def ecdf_at(values, threshold):
    """Proportion of samples less than or equal to ``threshold``."""
    x = np.asarray(list(values), dtype=np.float64)
    if x.size == 0:
        raise EmptySamples("ECDF of zero samples")
    return float(np.mean(x <= threshold))


def failure_rate(samples, threshold=FAILURE_THRESHOLD):
    """Fraction of samples whose rotation error exceeds ``threshold``."""
    samples = list(samples)
    if not samples:
        raise EmptySamples("failure rate of zero samples")
    return float(np.mean([s.rotation > threshold for s in samples]))


def integrate_trajectory(pairwise):
    """Chain pairwise transforms into absolute poses.

    ``pose[0]`` is the identity and ``pose[i] = pose[i-1] @ pairwise[i-1]``,
    so ``n`` transforms give ``n + 1`` poses.  Each pairwise transform maps
    scan ``i`` coordinates into scan ``i - 1``.
    """
    pairwise = list(pairwise)
    if not pairwise:
        raise ValueError("need at least one transform")
    poses = [RigidTransform.identity()]
    for t in pairwise:
        poses.append(compose(poses[-1], t))
    return poses


def relative_transforms(poses, stride=1):
    """Ground-truth pairwise transforms ``pose[i]^-1 @ pose[i + stride]``."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    poses = list(poses)
    return [compose(poses[i].inverse(), poses[i + stride]) for i in range(0, len(poses) - stride, stride)]


def voxel_decimate(points, cell=0.1):
    """Replace the points in each ``cell``-sized voxel by their centroid.

    Output order follows the sorted voxel keys, so it is deterministic.
    """
    p = np.asarray(points, dtype=np.float64)
    if cell <= 0:
        raise ValueError("cell must be positive")
    keys = np.floor(p / cell).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    sums = np.zeros((len(counts), 3))
    np.add.at(sums, inverse, p)
    return sums / counts[:, None]


def accumulate_map(scans, poses, decimate=False, cell=0.1):
    """Union of all scans in the global frame, optionally voxel-decimated."""
    scans, poses = list(scans), list(poses)
    if len(scans) != len(poses):
        raise LengthMismatch(f"{len(scans)} scans but {len(poses)} poses")
    if not scans:
        raise LengthMismatch("no scans to accumulate")
    pts = np.concatenate([pose.apply(s.points) for s, pose in zip(scans, poses)])
    if decimate:
        pts = voxel_decimate(pts, cell)
    return PointCloud(pts)
