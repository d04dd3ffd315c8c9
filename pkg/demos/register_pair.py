"""Register two simulated scans of the same terrain and compare with the true motion.

    python demos/register_pair.py [terrain_seed]
"""

import sys

import numpy as np

from curvreg import CurveletConfig, PipelineConfig, register_pair, rotation_distance
from curvreg.terrain import TerrainSpec, sample_pose_pair, synth_scan

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 4
spec = TerrainSpec.random(seed)
rng = np.random.default_rng(seed)

# two sensor poses about 2 m apart with a 0.3-0.43 rad heading change, both on open ground
pose_a, pose_b = sample_pose_pair(spec, rng)
truth = pose_a.inverse() @ pose_b

cfg = PipelineConfig(curvelet=CurveletConfig(5))
model = synth_scan(spec, pose_a, cfg.projection, seed=0)
data = synth_scan(spec, pose_b, cfg.projection, seed=1)
print(f"model scan: {len(model)} points, data scan: {len(data)} points")

result = register_pair(model, data, cfg)
print(f"keypoints {result.keypoint_counts}, matches {result.match_count}, inliers {result.inlier_count}")
print("estimated translation", np.round(result.transform.translation, 3))
print("true translation     ", np.round(truth.translation, 3))
print(f"translation error {np.linalg.norm(result.transform.translation - truth.translation):.3f} m")
print(f"rotation error    {rotation_distance(result.transform.rotation, truth.rotation):.4f} rad")
for stage, secs in result.timings.items():
    print(f"  {stage:28s} {secs:6.2f} s")
