"""Look at how a range image splits into curvelet scales and where keypoints land.

Writes PGM images into a directory (default ./curvelet_demo):
range.pgm, band_<j>.pgm for each scale and keypoints.csv.
"""

import sys
from pathlib import Path

import numpy as np

from curvreg import CurveletConfig, DetectorConfig, extract_features, fdct_forward, make_range_image
from curvreg import io
from curvreg.features import build_doc_stack
from curvreg.terrain import TerrainSpec, sensor_pose_at, synth_scan

out = Path(sys.argv[1] if len(sys.argv) > 1 else "curvelet_demo")
out.mkdir(parents=True, exist_ok=True)

spec = TerrainSpec.random(7)
img = make_range_image(synth_scan(spec, sensor_pose_at(spec, 0.0, 0.0, 0.0)))
io.write_range_image(img, out / "range.pgm")

pyr = fdct_forward(img.normalized, CurveletConfig(4))
print(f"energy check: image {np.sum(img.normalized**2):.6f}, coefficients {pyr.energy():.6f}")

stack = build_doc_stack(pyr)
for j, band in enumerate(stack, start=2):
    lo, hi = band.min(), band.max()
    io.write_pgm16(out / f"band_{j}.pgm", (band - lo) / max(hi - lo, 1e-12))
    print(f"band {j}: range [{lo:+.4f}, {hi:+.4f}]")

feats = extract_features(img, pyr, DetectorConfig())
io.write_keypoints(feats, out / "keypoints.csv")
levels = np.bincount([k.level for k in feats.keypoints])
print(f"{len(feats)} keypoints, per level: {levels.tolist()}")
print(f"outputs in {out}/")
