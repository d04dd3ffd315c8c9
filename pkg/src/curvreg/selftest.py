"""Quick built-in property checks, run by ``curvreg selftest``."""

import numpy as np

from .curvelet import CurveletConfig, fdct_forward, fdct_inverse, reconstruct_scale
from .geometry import estimate_rigid_svd, random_transform, rotation_distance
from .matching import Match, RansacConfig, ransac_filter


def _tight_frame(rng):
    for shape, J in (((64, 64), 3), ((128, 128), 4), ((96, 160), 3)):
        f = rng.normal(size=shape)
        pyr = fdct_forward(f, CurveletConfig(J))
        yield f"tight frame {shape} J={J}", abs(pyr.energy() / np.sum(f * f) - 1) < 1e-6
        rec = fdct_inverse(pyr)
        yield f"reconstruction {shape} J={J}", np.max(np.abs(rec - f)) < 1e-8 * np.max(np.abs(f))
        parts = sum(reconstruct_scale(pyr, j) for j in range(1, J + 1))
        yield f"scale partition {shape} J={J}", np.max(np.abs(parts - rec)) < 1e-8


def _svd(rng):
    worst_r = worst_t = 0.0
    for _ in range(200):
        t = random_transform(rng)
        p = rng.normal(scale=5.0, size=(int(rng.integers(3, 50)), 3))
        est = estimate_rigid_svd(t.apply(p), p)
        worst_r = max(worst_r, rotation_distance(est.rotation, t.rotation))
        worst_t = max(worst_t, float(np.linalg.norm(est.translation - t.translation)))
    yield "SVD recovery", worst_r < 1e-9 and worst_t < 1e-9


def _ransac(rng):
    ok = 0
    for seed in range(20):
        t = random_transform(rng, max_translation=5.0)
        d = rng.uniform(-20, 20, size=(20, 3))
        m = t.apply(d)
        m[10:] = rng.uniform(-20, 20, size=(10, 3))
        matches = [Match(i, i, 0.0) for i in range(20)]
        res = ransac_filter(matches, m, d, RansacConfig(rng_seed=seed))
        ok += bool(np.array_equal(np.flatnonzero(res.inlier_mask), np.arange(10)))
    yield "RANSAC with 50% outliers", ok >= 19


def run_selftest(seed=0, out=print):
    rng = np.random.default_rng(seed)
    passed = True
    for check in (_tight_frame, _svd, _ransac):
        for name, ok in check(rng):
            out(f"{'PASS' if ok else 'FAIL'}  {name}")
            passed &= bool(ok)
    return passed
