"""Rigid-body transforms, point clouds and closed-form SVD alignment."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DegenerateCorrespondences, EmptyCloud

ORTHO_TOL = 1e-9
_DRIFT_TOL = 1e-12


def _as_points(points):
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(1, 3)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected an (N, 3) array, got shape {pts.shape}")
    return pts


@dataclass(frozen=True)
class PointCloud:
    """An unordered set of 3D points (meters) in a sensor-centric frame."""

    points: np.ndarray

    def __post_init__(self):
        pts = _as_points(self.points)
        if len(pts) == 0:
            raise EmptyCloud("point cloud has no points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def size(self):
        return len(self.points)

    def __len__(self):
        return len(self.points)


def orthonormalize(rotation):
    """Project a near-rotation matrix onto SO(3)."""
    u, _, vt = np.linalg.svd(rotation)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


@dataclass(frozen=True)
class RigidTransform:
    """Rotation plus translation; maps ``p`` to ``rotation @ p + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("transform has non-finite entries")
        if np.max(np.abs(r.T @ r - np.eye(3))) > ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ORTHO_TOL:
            raise ValueError("rotation determinant is not +1")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix):
        m = np.asarray(matrix, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_quaternion(cls, q_wxyz, translation):
        w, x, y, z = q_wxyz
        rot = Rotation.from_quat([x, y, z, w]).as_matrix()
        return cls(rot, translation)

    @classmethod
    def from_rotvec(cls, rotvec, translation=(0.0, 0.0, 0.0)):
        return cls(Rotation.from_rotvec(rotvec).as_matrix(), translation)

    @classmethod
    def from_euler(cls, yaw, pitch=0.0, roll=0.0, translation=(0.0, 0.0, 0.0)):
        """Z-Y-X (yaw, pitch, roll) angles in radians."""
        rot = Rotation.from_euler("ZYX", [yaw, pitch, roll]).as_matrix()
        return cls(rot, translation)

    def as_matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def as_quaternion(self):
        """Unit quaternion ``(w, x, y, z)`` with ``w >= 0``."""
        x, y, z, w = Rotation.from_matrix(self.rotation).as_quat()
        q = np.array([w, x, y, z])
        return -q if w < 0 else q

    def apply(self, points):
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def inverse(self):
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def __matmul__(self, other):
        return compose(self, other)


def apply_transform(t, p):
    """Apply ``t`` to a single point or an ``(N, 3)`` array of points."""
    return t.apply(p)


def compose(a, b):
    """Transform that applies ``b`` first, then ``a``."""
    rot = a.rotation @ b.rotation
    if np.max(np.abs(rot.T @ rot - np.eye(3))) > _DRIFT_TOL:
        rot = orthonormalize(rot)
    return RigidTransform(rot, a.rotation @ b.translation + a.translation)


def rotation_angle(rotation):
    """Geodesic angle (radians) of a rotation matrix.

    Uses ``atan2(|axis|, trace - 1)`` instead of ``arccos`` so that angles
    near zero keep full precision.
    """
    r = np.asarray(rotation, dtype=np.float64)
    axis = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    return float(np.arctan2(np.linalg.norm(axis), np.trace(r) - 1.0))


def rotation_distance(r_a, r_b):
    """Angle of ``r_a @ r_b.T``."""
    return rotation_angle(np.asarray(r_a) @ np.asarray(r_b).T)


@dataclass(frozen=True)
class CorrespondenceSet:
    """Paired model/data points, row ``i`` of each array forming a pair."""

    model: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        m = _as_points(self.model)
        d = _as_points(self.data)
        if m.shape != d.shape:
            raise ValueError("model and data arrays differ in shape")
        object.__setattr__(self, "model", m)
        object.__setattr__(self, "data", d)

    @property
    def count(self):
        return len(self.model)

    def __len__(self):
        return len(self.model)


def _rotation_from_cross_covariance(h):
    # h = sum(data_c[:, None] * model_c[None, :]) so that model ~ R @ data
    u, _, vt = np.linalg.svd(h)
    v = np.swapaxes(vt, -1, -2)
    ut = np.swapaxes(u, -1, -2)
    d = np.sign(np.linalg.det(v @ ut))
    d = np.where(d == 0, 1.0, d)
    # reflection branch: flip the last column of V
    v = v.copy()
    v[..., :, 2] *= d[..., None]
    return v @ ut


def estimate_rigid_svd(model, data=None):
    """Least-squares rigid transform mapping ``data`` onto ``model``.

    Minimizes ``sum ||model_i - (R @ data_i + t)||^2`` in closed form.
    Accepts either a :class:`CorrespondenceSet` or two ``(N, 3)`` arrays.
    """
    if data is None:
        model, data = model.model, model.data
    m = _as_points(model)
    d = _as_points(data)
    if m.shape != d.shape:
        raise ValueError("model and data arrays differ in shape")
    if len(m) < 3:
        raise DegenerateCorrespondences(f"need at least 3 pairs, got {len(m)}")
    mc = m.mean(axis=0)
    dc = d.mean(axis=0)
    m0 = m - mc
    d0 = d - dc
    s = np.linalg.svd(d0, compute_uv=False)
    if s[0] == 0.0 or s[1] <= 1e-9 * s[0]:
        raise DegenerateCorrespondences("data points are collinear or coincident")
    rot = _rotation_from_cross_covariance(d0.T @ m0)
    return RigidTransform(rot, mc - rot @ dc)


def estimate_rigid_svd_batch(model, data):
    """Vectorized SVD alignment over a batch of ``(B, K, 3)`` samples.

    No degeneracy checks; returns ``(rotations, translations)`` arrays.
    """
    mc = model.mean(axis=1, keepdims=True)
    dc = data.mean(axis=1, keepdims=True)
    h = np.swapaxes(data - dc, 1, 2) @ (model - mc)
    rot = _rotation_from_cross_covariance(h)
    trans = mc[:, 0, :] - np.einsum("bij,bj->bi", rot, dc[:, 0, :])
    return rot, trans


def random_transform(rng, max_angle=np.pi, max_translation=10.0):
    """Random rigid transform with a uniformly drawn axis."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle)
    trans = rng.uniform(-max_translation, max_translation, size=3)
    return RigidTransform.from_rotvec(axis * angle, trans)
