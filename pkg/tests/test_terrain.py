import math

import numpy as np
import pytest

from curvreg.errors import SensorBelowTerrain
from curvreg.geometry import RigidTransform, rotation_angle
from curvreg.rangeimage import ProjectionModel
from curvreg.terrain import (
    Boulder,
    Crater,
    Rock,
    TerrainSpec,
    build_terrain,
    cast_rays,
    on_open_ground,
    sample_pose_pair,
    sensor_pose_at,
    synth_scan,
)

FLAT = TerrainSpec(extent=(60.0, 60.0), relief=0.0, noise_sigma=0.0)
SMALL = ProjectionModel.from_degrees((-180, 180), (-60, 30), 2.0, 2.0)


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def test_spec_validation_and_random_determinism():
    with pytest.raises(ValueError):
        TerrainSpec(extent=(0.0, 10.0))
    with pytest.raises(ValueError):
        TerrainSpec(resolution=0.0)
    a, b = TerrainSpec.random(3), TerrainSpec.random(3)
    assert a == b
    assert TerrainSpec.random(4) != a
    assert np.array_equal(build_terrain(a).dem, build_terrain(TerrainSpec.random(3)).dem)


def test_ray_plane_intersection_is_exact():
    terrain = build_terrain(FLAT)
    origin = np.array([1.0, -2.0, 1.5])
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(200, 3))
    dirs[:, 2] = -np.abs(dirs[:, 2]) - 0.1
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    t = cast_rays(terrain, origin, dirs)
    expected = origin[2] / -dirs[:, 2]
    inside = np.all(np.abs(origin[:2] + expected[:, None] * dirs[:, :2]) < 30, axis=1)
    assert inside.sum() > 100
    assert np.max(np.abs(t[inside] - expected[inside])) < 1e-9


def test_upward_rays_miss():
    t = cast_rays(build_terrain(FLAT), [0.0, 0.0, 1.5], [unit([1, 0, 0.2]), unit([0, 0, 1])])
    assert np.all(np.isnan(t))


def test_ray_sphere_intersection_is_exact():
    spec = TerrainSpec(extent=(60.0, 60.0), relief=0.0, noise_sigma=0.0, rocks=(Rock(10.0, 3.0, 1.0, 2.0),))
    origin = np.array([0.0, 0.0, 1.5])
    center = np.array([10.0, 3.0, 1.0])
    d = unit(center - origin)
    t = cast_rays(build_terrain(spec), origin, [d])[0]
    assert t == pytest.approx(np.linalg.norm(center - origin) - 2.0, abs=1e-9)
    # off-center ray, against the quadratic solved by hand
    d2 = unit(center + [0.0, 1.2, 0.5] - origin)
    b = d2 @ (center - origin)
    c = (center - origin) @ (center - origin) - 4.0
    t2 = cast_rays(build_terrain(spec), origin, [d2])[0]
    assert t2 == pytest.approx(b - math.sqrt(b * b - c), abs=1e-9)


def test_ray_box_intersection_is_exact():
    box = Boulder(8.0, 0.0, 0.5, (0.5, 1.0, 0.5), yaw=math.pi / 2)
    spec = TerrainSpec(extent=(60.0, 60.0), relief=0.0, noise_sigma=0.0, boulders=(box,))
    origin = np.array([0.0, 0.0, 0.6])
    # after a quarter-turn yaw the box spans 1.0 m along x
    t = cast_rays(build_terrain(spec), origin, [[1.0, 0.0, 0.0]])[0]
    assert t == pytest.approx(7.0, abs=1e-9)
    # a ray from above lands on the top face at z = 1.0
    t = cast_rays(build_terrain(spec), [8.2, 0.3, 3.0], [[0.0, 0.0, -1.0]])[0]
    assert t == pytest.approx(2.0, abs=1e-9)
    surf = build_terrain(spec).surface_height(np.array([8.2, 8.2]), np.array([0.3, 0.7]))
    assert surf[0] == pytest.approx(1.0) and surf[1] == pytest.approx(0.0)


def test_azimuth_binning_does_not_change_hits():
    spec = TerrainSpec.random(5, extent=(60.0, 60.0), n_boulders=200)
    terrain = build_terrain(spec)
    origin = sensor_pose_at(spec, 2.0, -3.0, 0.0).translation
    dirs = SMALL.ray_directions().reshape(-1, 3)
    binned = cast_rays(terrain, origin, dirs)
    single = cast_rays(terrain, origin, dirs, azimuth_bins=1)
    assert np.array_equal(binned, single, equal_nan=True)


def test_scan_points_lie_on_the_ground():
    spec = TerrainSpec.random(6, extent=(60.0, 60.0), n_rocks=0, n_boulders=0)
    pose = sensor_pose_at(spec, 0.0, 0.0, 0.3)
    cloud = synth_scan(spec, pose, SMALL, noise=False)
    world = pose.apply(cloud.points)
    h = build_terrain(spec).height(world[:, 0], world[:, 1])
    assert np.max(np.abs(world[:, 2] - h)) < 1e-9


def test_scan_points_lie_on_pixel_rays():
    spec = TerrainSpec.random(7, extent=(60.0, 60.0))
    cloud = synth_scan(spec, sensor_pose_at(spec, 1.0, 1.0, 0.0), SMALL, noise=False)
    rays = SMALL.ray_directions().reshape(-1, 3)
    assert len(cloud) <= len(rays)
    d = cloud.points / np.linalg.norm(cloud.points, axis=1, keepdims=True)
    # every point direction is one of the pixel rays
    best = np.max(d @ rays.T, axis=1)
    assert np.all(1 - best < 1e-12)


def test_scan_is_deterministic_and_noise_is_seeded():
    spec = TerrainSpec.random(8, extent=(60.0, 60.0))
    pose = sensor_pose_at(spec, 0.0, 0.0, 0.0)
    a = synth_scan(spec, pose, SMALL, seed=1)
    b = synth_scan(spec, pose, SMALL, seed=1)
    c = synth_scan(spec, pose, SMALL, seed=2)
    assert a.points.tobytes() == b.points.tobytes()
    assert a.points.shape == c.points.shape and not np.array_equal(a.points, c.points)
    clean = synth_scan(spec, pose, SMALL, noise=False)
    dr = np.linalg.norm(a.points, axis=1) - np.linalg.norm(clean.points, axis=1)
    assert np.std(dr) == pytest.approx(0.02, rel=0.1)


def test_sensor_below_terrain():
    pose = RigidTransform.from_euler(0, 0, 0, (0.0, 0.0, -0.5))
    with pytest.raises(SensorBelowTerrain):
        synth_scan(FLAT, pose, SMALL)


def test_open_ground_excludes_crater_bowls_and_borders():
    spec = TerrainSpec(extent=(60.0, 60.0), craters=(Crater(5.0, 5.0, 3.0, 1.0),))
    assert not on_open_ground(spec, 6.0, 5.0)
    assert on_open_ground(spec, 9.0, 5.0)
    assert not on_open_ground(spec, 25.0, 0.0)


def test_sampled_pose_pairs_follow_the_planted_distribution():
    spec = TerrainSpec.random(9)
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b = sample_pose_pair(spec, rng)
        rel = a.inverse() @ b
        d = np.linalg.norm(a.translation[:2] - b.translation[:2])
        assert 2.0 <= d <= 2.4
        assert rotation_angle(rel.rotation) <= 0.45
        assert rotation_angle(rel.rotation) >= 0.3 - 1e-9
        for p in (a, b):
            assert on_open_ground(spec, p.translation[0], p.translation[1])
