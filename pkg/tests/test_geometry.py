import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curvreg.errors import DegenerateCorrespondences, EmptyCloud
from curvreg.geometry import (
    CorrespondenceSet,
    PointCloud,
    RigidTransform,
    apply_transform,
    compose,
    estimate_rigid_svd,
    orthonormalize,
    random_transform,
    rotation_angle,
    rotation_distance,
)


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def rot_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0, s], [0, 1.0, 0], [-s, 0, c]])


# point clouds and transforms


def test_point_cloud_rejects_empty_and_nonfinite():
    with pytest.raises(EmptyCloud):
        PointCloud(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        PointCloud([[0.0, np.nan, 1.0]])
    with pytest.raises(ValueError):
        PointCloud(np.zeros((4, 2)))


def test_point_cloud_is_read_only():
    c = PointCloud(np.ones((3, 3)))
    assert c.size == len(c) == 3
    with pytest.raises(ValueError):
        c.points[0, 0] = 5.0


def test_transform_invariants_enforced():
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, 1.0 + 1e-6]), np.zeros(3))
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    RigidTransform(rot_z(0.3), [1, 2, 3])


def test_apply_identity():
    assert np.array_equal(apply_transform(RigidTransform.identity(), [1.0, 2.0, 3.0]), [1, 2, 3])


def test_apply_half_turn_about_z():
    t = RigidTransform(rot_z(np.pi), np.zeros(3))
    assert np.allclose(t.apply([1.0, 0, 0]), [-1, 0, 0], atol=1e-15)


def test_apply_quarter_turn_with_translation():
    t = RigidTransform(rot_z(np.pi / 2), [0, 0, 1.0])
    assert np.allclose(t.apply([1.0, 0, 0]), [0, 1, 1], atol=1e-15)


def test_compose_examples():
    rng = np.random.default_rng(1)
    x = random_transform(rng)
    i = RigidTransform.identity()
    c = compose(i, x)
    assert np.allclose(c.rotation, x.rotation, atol=1e-15)
    assert np.allclose(c.translation, x.translation, atol=1e-15)
    back = compose(x, x.inverse())
    assert np.allclose(back.as_matrix(), np.eye(4), atol=1e-9)
    q = RigidTransform(rot_z(np.pi / 4), np.zeros(3))
    assert np.allclose(compose(q, q).rotation, rot_z(np.pi / 2), atol=1e-15)


def test_compose_order_applies_right_operand_first():
    a = RigidTransform(rot_z(np.pi / 2), [0, 0, 0])
    b = RigidTransform(np.eye(3), [1.0, 0, 0])
    # b moves (0,0,0) to (1,0,0), then a rotates it to (0,1,0)
    assert np.allclose((a @ b).apply([0.0, 0, 0]), [0, 1, 0], atol=1e-15)


def test_compose_keeps_rotation_orthonormal_over_long_chains():
    rng = np.random.default_rng(2)
    pose = RigidTransform.identity()
    for _ in range(5000):
        pose = compose(pose, random_transform(rng, 0.3, 1.0))
    r = pose.rotation
    assert np.max(np.abs(r.T @ r - np.eye(3))) <= 1e-9
    assert abs(np.linalg.det(r) - 1) <= 1e-9


def test_quaternion_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(50):
        t = random_transform(rng)
        q = t.as_quaternion()
        assert q[0] >= 0
        back = RigidTransform.from_quaternion(q, t.translation)
        assert rotation_distance(back.rotation, t.rotation) < 1e-12


def test_euler_is_yaw_pitch_roll():
    t = RigidTransform.from_euler(0.4, 0.0, 0.0)
    assert np.allclose(t.rotation, rot_z(0.4), atol=1e-15)


def test_rotation_angle_precision_near_zero():
    # arccos of (trace - 1) / 2 loses about half the digits here
    assert rotation_angle(rot_z(1e-10)) == pytest.approx(1e-10, rel=1e-6)
    assert rotation_angle(rot_z(np.pi / 2)) == pytest.approx(np.pi / 2, abs=1e-15)
    assert rotation_angle(rot_z(np.pi)) == pytest.approx(np.pi, abs=1e-15)


def test_orthonormalize_projects_to_rotation():
    rng = np.random.default_rng(4)
    r = random_transform(rng).rotation + 1e-6 * rng.normal(size=(3, 3))
    q = orthonormalize(r)
    assert np.allclose(q.T @ q, np.eye(3), atol=1e-14)
    assert np.linalg.det(q) == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_apply_preserves_distances(seed):
    rng = np.random.default_rng(seed)
    t = random_transform(rng)
    p = rng.normal(scale=10, size=(20, 3))
    q = t.apply(p)
    dp = np.linalg.norm(p[:, None] - p[None], axis=2)
    dq = np.linalg.norm(q[:, None] - q[None], axis=2)
    assert np.all(np.abs(dp - dq) <= 1e-12 * np.maximum(dp, 1.0) * 10)


# SVD alignment


def test_svd_identity_on_three_points():
    p = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]])
    t = estimate_rigid_svd(p, p)
    assert np.allclose(t.as_matrix(), np.eye(4), atol=1e-12)


def test_svd_recovers_rotation_about_y():
    truth = RigidTransform(rot_y(np.radians(30)), [1, -2, 0.5])
    data = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    est = estimate_rigid_svd(CorrespondenceSet(truth.apply(data), data))
    assert rotation_distance(est.rotation, truth.rotation) < 1e-9
    assert np.linalg.norm(est.translation - truth.translation) < 1e-9


def test_svd_noise_monte_carlo():
    # oracle: 100 seeds of sigma = 1 cm noise on 100 points
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        truth = random_transform(rng)
        data = rng.uniform(-10, 10, size=(100, 3))
        model = truth.apply(data) + rng.normal(scale=0.01, size=data.shape)
        est = estimate_rigid_svd(model, data)
        worst = max(worst, rotation_distance(est.rotation, truth.rotation))
    assert worst < 0.005


def test_svd_degenerate_inputs():
    p = np.array([[0.0, 0, 0], [1, 0, 0]])
    with pytest.raises(DegenerateCorrespondences):
        estimate_rigid_svd(p, p)
    line = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]])
    with pytest.raises(DegenerateCorrespondences):
        estimate_rigid_svd(line, line)


def test_svd_reflection_branch_gives_proper_rotation():
    rng = np.random.default_rng(5)
    for _ in range(200):
        # three coplanar points mirrored through their plane
        data = rng.normal(size=(3, 3))
        mirror = np.diag([1.0, 1.0, -1.0])
        model = data @ mirror.T + rng.normal(scale=0.1, size=(3, 3))
        est = estimate_rigid_svd(model, data)
        assert np.linalg.det(est.rotation) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(3, 40))
def test_svd_is_permutation_invariant(seed, n):
    rng = np.random.default_rng(seed)
    truth = random_transform(rng)
    data = rng.normal(scale=5, size=(n, 3))
    model = truth.apply(data) + rng.normal(scale=0.05, size=data.shape)
    a = estimate_rigid_svd(model, data)
    perm = rng.permutation(n)
    b = estimate_rigid_svd(model[perm], data[perm])
    assert rotation_distance(a.rotation, b.rotation) < 1e-9
    assert np.linalg.norm(a.translation - b.translation) < 1e-9


def test_svd_is_least_squares_minimizer():
    rng = np.random.default_rng(6)
    truth = random_transform(rng)
    data = rng.normal(size=(30, 3))
    model = truth.apply(data) + rng.normal(scale=0.1, size=data.shape)
    est = estimate_rigid_svd(model, data)
    cost = np.sum((est.apply(data) - model) ** 2)
    for _ in range(200):
        delta = RigidTransform.from_rotvec(rng.normal(scale=1e-3, size=3), rng.normal(scale=1e-3, size=3))
        assert np.sum(((delta @ est).apply(data) - model) ** 2) >= cost - 1e-12
