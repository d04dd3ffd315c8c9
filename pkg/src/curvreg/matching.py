"""Nearest-neighbor descriptor matching and RANSAC outlier rejection."""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .errors import ConsensusFailure, InsufficientMatches, NoFeatures
from .geometry import (
    CorrespondenceSet,
    RigidTransform,
    estimate_rigid_svd,
    estimate_rigid_svd_batch,
)


class Match(NamedTuple):
    model_index: int
    data_index: int
    distance: float


def _pair_distances(a, b):
    return np.sqrt(np.sum((a - b) ** 2, axis=1))


def _nn_brute(queries, refs, chunk=512):
    idx = np.empty(len(queries), dtype=np.int64)
    for s in range(0, len(queries), chunk):
        # argmin returns the first minimum, i.e. the lowest reference index
        idx[s : s + chunk] = np.argmin(cdist(queries[s : s + chunk], refs), axis=1)
    return idx


def _nn_kdtree(queries, refs):
    k = min(4, len(refs))
    dist, idx = cKDTree(refs).query(queries, k=k)
    dist = dist.reshape(len(queries), k)
    idx = idx.reshape(len(queries), k)
    # resolve exact ties among the returned candidates towards the lowest index
    exact = np.sqrt(((queries[:, None, :] - refs[idx]) ** 2).sum(axis=2))
    best = exact.min(axis=1, keepdims=True)
    cand = np.where(exact == best, idx, np.iinfo(np.int64).max)
    return cand.min(axis=1)


def match_nn(model_desc, data_desc, mutual=True, method="brute"):
    """For each data descriptor, the model descriptor nearest in L2.

    Ties go to the lowest model index.  With ``mutual`` only pairs that are
    nearest neighbors in both directions are kept.  ``method`` is
    ``"brute"`` (exact, default) or ``"kdtree"``.
    """
    model_desc = np.asarray(model_desc, dtype=np.float64)
    data_desc = np.asarray(data_desc, dtype=np.float64)
    if len(model_desc) == 0 or len(data_desc) == 0:
        raise NoFeatures(
            f"cannot match {len(model_desc)} model against {len(data_desc)} data descriptors"
        )
    nn = {"brute": _nn_brute, "kdtree": _nn_kdtree}[method]
    fwd = nn(data_desc, model_desc)
    keep = np.ones(len(data_desc), dtype=bool)
    if mutual:
        back = nn(model_desc, data_desc)
        keep = back[fwd] == np.arange(len(data_desc))
    d_idx = np.flatnonzero(keep)
    m_idx = fwd[keep]
    dist = _pair_distances(model_desc[m_idx], data_desc[d_idx])
    return [Match(int(m), int(d), float(x)) for m, d, x in zip(m_idx, d_idx, dist)]


@dataclass(frozen=True)
class RansacConfig:
    inlier_threshold: float = 0.5
    max_iterations: int = 1000
    min_inliers: int = 5
    rng_seed: int = 0

    def __post_init__(self):
        if not self.inlier_threshold > 0:
            raise ValueError("inlier_threshold must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.min_inliers < 3:
            raise ValueError("min_inliers must be >= 3")


@dataclass
class RansacResult:
    """Outcome of :func:`ransac_filter`.

    ``hypothesis`` is the winning minimal-sample transform and ``transform``
    its re-estimate over all of its inliers.  ``inlier_mask`` is aligned
    with the input match list.
    """

    inliers: CorrespondenceSet
    transform: RigidTransform
    hypothesis: RigidTransform
    inlier_mask: np.ndarray
    inlier_matches: list
    residual_rms: float
    hypothesis_residuals: np.ndarray


def _collinear(p, tol=1e-6):
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    area = np.linalg.norm(np.cross(e1, e2), axis=1)
    scale = np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
    return area <= tol * scale


def _sample_triples(rng, n, k):
    a = rng.integers(0, n, size=k)
    b = rng.integers(0, n - 1, size=k)
    b = b + (b >= a)
    c = rng.integers(0, n - 2, size=k)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    c = c + (c >= lo)
    c = c + (c >= hi)
    return np.stack([a, b, c], axis=1)


def ransac_filter(matches, model_points, data_points, config=RansacConfig()):
    """Reject outlier matches by 3-point RANSAC on 3D points.

    ``model_points[m.model_index]`` and ``data_points[m.data_index]`` give the
    3D position of each side of a match.  Matches are sorted by
    ``(model_index, data_index)`` before sampling so the result does not
    depend on input order.  The best hypothesis has the most inliers, then
    the lowest inlier RMS, then the earliest iteration.
    """
    n = len(matches)
    if n < 3:
        raise InsufficientMatches(f"RANSAC needs >= 3 matches, got {n}")
    order = sorted(range(n), key=lambda i: (matches[i].model_index, matches[i].data_index))
    mp = np.asarray(model_points, dtype=np.float64)[[matches[i].model_index for i in order]]
    dp = np.asarray(data_points, dtype=np.float64)[[matches[i].data_index for i in order]]

    rng = np.random.default_rng(config.rng_seed)
    samples = _sample_triples(rng, n, config.max_iterations)
    ms, ds = mp[samples], dp[samples]
    degenerate = _collinear(ms) | _collinear(ds)
    rot, trans = estimate_rigid_svd_batch(ms, ds)

    thr = config.inlier_threshold
    counts = np.full(len(samples), -1, dtype=np.int64)
    rms = np.full(len(samples), np.inf)
    chunk = max(1, 4_000_000 // max(n, 1))
    for s in range(0, len(samples), chunk):
        sl = slice(s, s + chunk)
        pred = np.einsum("kij,nj->kni", rot[sl], dp) + trans[sl, None, :]
        res2 = np.sum((pred - mp[None]) ** 2, axis=2)
        inl = res2 <= thr * thr
        c = inl.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.sqrt(np.where(inl, res2, 0.0).sum(axis=1) / c)
        counts[sl] = c
        rms[sl] = np.where(c > 0, r, np.inf)
    counts[degenerate] = -1
    rms[degenerate] = np.inf

    best = int(np.lexsort((np.arange(len(samples)), rms, -counts))[0])
    if counts[best] < config.min_inliers:
        raise ConsensusFailure(
            f"best hypothesis has {max(counts[best], 0)} inliers, need {config.min_inliers}"
        )
    hypothesis = RigidTransform(rot[best], trans[best])
    residuals = np.linalg.norm(hypothesis.apply(dp) - mp, axis=1)
    inl_sorted = residuals <= thr
    inliers = CorrespondenceSet(mp[inl_sorted], dp[inl_sorted])
    final = estimate_rigid_svd(inliers)
    final_res = np.linalg.norm(final.apply(inliers.data) - inliers.model, axis=1)

    mask = np.zeros(n, dtype=bool)
    mask[np.asarray(order)[inl_sorted]] = True
    inlier_matches = [matches[order[i]] for i in np.flatnonzero(inl_sorted)]
    return RansacResult(
        inliers=inliers,
        transform=final,
        hypothesis=hypothesis,
        inlier_mask=mask,
        inlier_matches=inlier_matches,
        residual_rms=float(np.sqrt(np.mean(final_res**2))),
        hypothesis_residuals=residuals[inl_sorted],
    )
