"""Synthetic planetary-analogue terrain and a ray-casting LIDAR simulator.

The ground is a DEM (bilinearly interpolated heightfield) built from
multi-octave value noise plus Gaussian hills and rimmed craters.  Rocks are
true 3D spheres and boulders are yawed boxes, both partly buried.  Scans are produced by casting one ray per
range-image pixel center from a sensor pose.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numba
import numpy as np
from scipy import ndimage

from .errors import EmptyCloud, SensorBelowTerrain
from .geometry import PointCloud, RigidTransform
from .rangeimage import ProjectionModel


@dataclass(frozen=True)
class Hill:
    x: float
    y: float
    height: float
    radius: float


@dataclass(frozen=True)
class Crater:
    x: float
    y: float
    radius: float
    depth: float
    rim: float = 0.3


@dataclass(frozen=True)
class Rock:
    x: float
    y: float
    z: float
    radius: float


@dataclass(frozen=True)
class Boulder:
    """Box-shaped rock: center, half extents along its own axes, yaw about z."""

    x: float
    y: float
    z: float
    half: tuple
    yaw: float = 0.0


@dataclass(frozen=True)
class TerrainSpec:
    """Terrain description.  ``extent`` is centered on the origin.

    ``relief`` scales the value-noise heightfield (meters); ``noise_sigma``
    is the range noise added by :func:`synth_scan`.
    """

    extent: tuple = (100.0, 100.0)
    resolution: float = 0.25
    relief: float = 1.0
    hills: tuple = ()
    craters: tuple = ()
    rocks: tuple = ()
    noise_sigma: float = 0.02
    rng_seed: int = 0
    boulders: tuple = ()

    def __post_init__(self):
        if min(self.extent) <= 0:
            raise ValueError("extent must be positive")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")

    @classmethod
    def random(
        cls,
        rng_seed=0,
        extent=(100.0, 100.0),
        n_hills=10,
        n_craters=4,
        n_rocks=10,
        n_boulders=600,
        relief=1.0,
        noise_sigma=0.02,
        resolution=0.25,
    ):
        """Randomly populated terrain; the ground itself is rebuilt from the seed."""
        rng = np.random.default_rng([rng_seed, 1])
        hx, hy = extent[0] / 2, extent[1] / 2

        def xy():
            return float(rng.uniform(-hx, hx)), float(rng.uniform(-hy, hy))

        hills = tuple(
            Hill(*xy(), float(rng.uniform(1.0, 4.0)), float(rng.uniform(4.0, 12.0)))
            for _ in range(n_hills)
        )
        craters = tuple(
            Crater(*xy(), float(rng.uniform(3.0, 8.0)), float(rng.uniform(0.5, 1.5)),
                   float(rng.uniform(0.2, 0.6)))
            for _ in range(n_craters)
        )
        partial = cls(extent, resolution, relief, hills, craters, (), noise_sigma, rng_seed)
        terrain = build_terrain(partial)
        rocks = []
        for _ in range(n_rocks):
            x, y = xy()
            r = float(rng.uniform(0.3, 1.2))
            ground = float(terrain.height(np.array([x]), np.array([y]))[0])
            rocks.append(Rock(x, y, ground + r * float(rng.uniform(-0.3, 0.4)), r))
        boulders = []
        for _ in range(n_boulders):
            x, y = xy()
            half = tuple(float(h) for h in rng.uniform(0.2, 0.8, 3))
            ground = float(terrain.height(np.array([x]), np.array([y]))[0])
            z = ground + half[2] * float(rng.uniform(0.0, 0.6))
            boulders.append(Boulder(x, y, z, half, float(rng.uniform(0, np.pi))))
        return cls(extent, resolution, relief, hills, craters, tuple(rocks), noise_sigma,
                   rng_seed, tuple(boulders))


@dataclass
class Terrain:
    dem: np.ndarray  # dem[i, j] is the height at (x0 + i*cell, y0 + j*cell)
    x0: float
    y0: float
    cell: float
    spheres: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 7)))

    def height(self, x, y):
        """Bilinear DEM height; NaN outside the grid."""
        return _bilinear_array(self.dem, self.x0, self.y0, self.cell,
                               np.asarray(x, dtype=np.float64).ravel(),
                               np.asarray(y, dtype=np.float64).ravel()).reshape(np.shape(x))

    def surface_height(self, x, y):
        """Top of ground or rock at each ``(x, y)``."""
        h = self.height(x, y)
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        for cx, cy, cz, r in self.spheres:
            d2 = (x - cx) ** 2 + (y - cy) ** 2
            top = cz + np.sqrt(np.clip(r * r - d2, 0.0, None))
            h = np.where(d2 < r * r, np.maximum(h, top), h)
        for cx, cy, cz, a, b, c, yaw in self.boxes:
            lx = np.cos(yaw) * (x - cx) + np.sin(yaw) * (y - cy)
            ly = -np.sin(yaw) * (x - cx) + np.cos(yaw) * (y - cy)
            inside = (np.abs(lx) <= a) & (np.abs(ly) <= b)
            h = np.where(inside, np.maximum(h, cz + c), h)
        return h


def _value_noise(shape, cell, rng, relief):
    out = np.zeros(shape)
    for spacing, amp in ((12.0, 1.0), (6.0, 0.45), (3.0, 0.2), (1.5, 0.08)):
        n0 = int(math.ceil(shape[0] * cell / spacing)) + 4
        n1 = int(math.ceil(shape[1] * cell / spacing)) + 4
        coarse = rng.normal(size=(n0, n1))
        # cubic spline upsampling onto the DEM grid
        i = np.arange(shape[0]) * cell / spacing + 1.5
        j = np.arange(shape[1]) * cell / spacing + 1.5
        ii, jj = np.meshgrid(i, j, indexing="ij")
        out += amp * ndimage.map_coordinates(coarse, [ii, jj], order=3, mode="nearest")
    return relief * out / 1.3


@lru_cache(maxsize=8)
def build_terrain(spec):
    nx = int(round(spec.extent[0] / spec.resolution)) + 1
    ny = int(round(spec.extent[1] / spec.resolution)) + 1
    x0, y0 = -spec.extent[0] / 2, -spec.extent[1] / 2
    x = x0 + np.arange(nx) * spec.resolution
    y = y0 + np.arange(ny) * spec.resolution
    X, Y = np.meshgrid(x, y, indexing="ij")
    dem = np.zeros((nx, ny))
    if spec.relief:
        dem += _value_noise((nx, ny), spec.resolution, np.random.default_rng([spec.rng_seed, 0]),
                            spec.relief)
    for h in spec.hills:
        dem += h.height * np.exp(-((X - h.x) ** 2 + (Y - h.y) ** 2) / (2 * (h.radius / 2) ** 2))
    for c in spec.craters:
        r = np.hypot(X - c.x, Y - c.y) / c.radius
        bowl = np.where(r < 1.0, -c.depth * (1.0 - r**2), 0.0)
        rim = c.rim * np.exp(-(((r - 1.0) / 0.25) ** 2))
        dem += bowl + rim
    dem.setflags(write=False)
    spheres = np.array([[k.x, k.y, k.z, k.radius] for k in spec.rocks], dtype=np.float64)
    boxes = np.array([[b.x, b.y, b.z, *b.half, b.yaw] for b in spec.boulders], dtype=np.float64)
    return Terrain(dem, x0, y0, spec.resolution, spheres.reshape(-1, 4), boxes.reshape(-1, 7))


@numba.njit(cache=True)
def _bilinear(dem, x0, y0, cell, x, y):
    fx = (x - x0) / cell
    fy = (y - y0) / cell
    i = int(math.floor(fx))
    j = int(math.floor(fy))
    nx, ny = dem.shape
    if i < 0 or j < 0 or i > nx - 1 or j > ny - 1:
        return np.nan
    if i == nx - 1:
        i -= 1
    if j == ny - 1:
        j -= 1
    ax = fx - i
    ay = fy - j
    return ((1 - ax) * (1 - ay) * dem[i, j] + ax * (1 - ay) * dem[i + 1, j]
            + (1 - ax) * ay * dem[i, j + 1] + ax * ay * dem[i + 1, j + 1])


@numba.njit(cache=True)
def _bilinear_array(dem, x0, y0, cell, xs, ys):
    out = np.empty(xs.shape[0])
    for k in range(xs.shape[0]):
        out[k] = _bilinear(dem, x0, y0, cell, xs[k], ys[k])
    return out


@numba.njit(cache=True)
def _box_hit(ox, oy, oz, dx, dy, dz, box):
    # slab test in the box frame
    c, s = math.cos(box[6]), math.sin(box[6])
    px, py, pz = ox - box[0], oy - box[1], oz - box[2]
    o = (c * px + s * py, -s * px + c * py, pz)
    d = (c * dx + s * dy, -s * dx + c * dy, dz)
    t0, t1 = -np.inf, np.inf
    for a in range(3):
        h = box[3 + a]
        if d[a] == 0.0:
            if abs(o[a]) > h:
                return np.inf
        else:
            ta = (-h - o[a]) / d[a]
            tb = (h - o[a]) / d[a]
            if ta > tb:
                ta, tb = tb, ta
            t0 = max(t0, ta)
            t1 = min(t1, tb)
    if t0 > t1 or t0 <= 0.0:
        return np.inf
    return t0


@numba.njit(cache=True)
def _object_hit(ox, oy, oz, dx, dy, dz, spheres, boxes, i):
    ns = spheres.shape[0]
    if i >= ns:
        return _box_hit(ox, oy, oz, dx, dy, dz, boxes[i - ns])
    px = ox - spheres[i, 0]
    py = oy - spheres[i, 1]
    pz = oz - spheres[i, 2]
    b = dx * px + dy * py + dz * pz
    c = px * px + py * py + pz * pz - spheres[i, 3] ** 2
    disc = b * b - c
    if disc < 0.0:
        return np.inf
    t = -b - math.sqrt(disc)
    return t if t > 0.0 else np.inf


@numba.njit(cache=True)
def _cast(origin, dirs, dem, x0, y0, cell, spheres, boxes, bin_start, bin_items,
          hmax, max_range, step):
    n = dirs.shape[0]
    n_obj = spheres.shape[0] + boxes.shape[0]
    n_bins = bin_start.shape[0] - 1
    out = np.full(n, np.nan)
    x1 = x0 + (dem.shape[0] - 1) * cell
    y1 = y0 + (dem.shape[1] - 1) * cell
    ox, oy, oz = origin[0], origin[1], origin[2]
    for k in range(n):
        dx, dy, dz = dirs[k, 0], dirs[k, 1], dirs[k, 2]
        # nearest object hit, testing only objects binned under this azimuth
        t_hit = np.inf
        if dx * dx + dy * dy < 1e-24:
            for i in range(n_obj):
                t_hit = min(t_hit, _object_hit(ox, oy, oz, dx, dy, dz, spheres, boxes, i))
        else:
            a = (math.atan2(dy, dx) + math.pi) / (2 * math.pi) * n_bins
            bn = min(int(a), n_bins - 1)
            for q in range(bin_start[bn], bin_start[bn + 1]):
                t_hit = min(t_hit, _object_hit(ox, oy, oz, dx, dy, dz, spheres, boxes, bin_items[q]))
        # leave the DEM footprint at t_exit
        t_exit = max_range
        if dx > 0:
            t_exit = min(t_exit, (x1 - ox) / dx)
        elif dx < 0:
            t_exit = min(t_exit, (x0 - ox) / dx)
        if dy > 0:
            t_exit = min(t_exit, (y1 - oy) / dy)
        elif dy < 0:
            t_exit = min(t_exit, (y0 - oy) / dy)
        t_end = min(t_exit, t_hit)
        # march the heightfield, then bisect the first sign change
        t_prev = 0.0
        t = 0.0
        ground = np.nan
        while t < t_end:
            t = min(t + step, t_end)
            z = oz + t * dz
            if dz >= 0.0 and z > hmax:
                break
            f = z - _bilinear(dem, x0, y0, cell, ox + t * dx, oy + t * dy)
            if f <= 0.0:
                lo = t_prev
                hi = t
                for _ in range(200):
                    if hi - lo <= 1e-13:
                        break
                    mid = 0.5 * (lo + hi)
                    fm = oz + mid * dz - _bilinear(dem, x0, y0, cell, ox + mid * dx, oy + mid * dy)
                    if fm <= 0.0:
                        hi = mid
                    else:
                        lo = mid
                ground = 0.5 * (lo + hi)
                break
            t_prev = t
        if not np.isnan(ground):
            out[k] = ground
        elif t_hit <= max_range:
            out[k] = t_hit
    return out


def cast_rays(terrain, origin, directions, max_range=200.0, step=None, azimuth_bins=720):
    """Distance along each unit ray to the first surface hit (NaN if none)."""
    dirs = np.ascontiguousarray(np.asarray(directions, dtype=np.float64).reshape(-1, 3))
    step = 0.5 * terrain.cell if step is None else step
    hmax = float(terrain.dem.max())
    if len(terrain.spheres):
        hmax = max(hmax, float((terrain.spheres[:, 2] + terrain.spheres[:, 3]).max()))
    if len(terrain.boxes):
        hmax = max(hmax, float((terrain.boxes[:, 2] + np.linalg.norm(terrain.boxes[:, 3:6], axis=1)).max()))
    origin = np.asarray(origin, dtype=np.float64)
    bin_start, bin_items = _azimuth_bins(terrain, origin, azimuth_bins)
    return _cast(origin, dirs, np.ascontiguousarray(terrain.dem),
                 terrain.x0, terrain.y0, terrain.cell,
                 np.ascontiguousarray(terrain.spheres), np.ascontiguousarray(terrain.boxes),
                 bin_start, bin_items, hmax, float(max_range), float(step))


def _azimuth_bins(terrain, origin, n_bins=720):
    """Objects whose bounding sphere may meet a ray in each azimuth bin, as CSR arrays."""
    centers = np.concatenate([terrain.spheres[:, :2], terrain.boxes[:, :2]])
    radii = np.concatenate([terrain.spheres[:, 3], np.linalg.norm(terrain.boxes[:, 3:6], axis=1)])
    rel = centers - origin[:2]
    dist = np.hypot(rel[:, 0], rel[:, 1])
    az = np.arctan2(rel[:, 1], rel[:, 0])
    with np.errstate(invalid="ignore", divide="ignore"):
        half = np.where(dist > radii, np.arcsin(np.minimum(radii / dist, 1.0)), np.pi)
    width = 2 * np.pi / n_bins
    items = [[] for _ in range(n_bins)]
    for i in range(len(radii)):
        if half[i] >= np.pi / 2:
            lo, hi = 0, n_bins - 1
        else:
            lo = int(np.floor((az[i] - half[i] + np.pi) / width)) - 1
            hi = int(np.floor((az[i] + half[i] + np.pi) / width)) + 1
        for b in range(lo, hi + 1):
            items[b % n_bins].append(i)
    items = [sorted(set(x)) for x in items]
    start = np.zeros(n_bins + 1, dtype=np.int64)
    start[1:] = np.cumsum([len(x) for x in items])
    flat = np.array([i for x in items for i in x], dtype=np.int64)
    return start, flat


def sensor_pose_at(spec, x, y, yaw, height=1.5, pitch=0.0, roll=0.0):
    """Sensor pose ``height`` meters above the ground at ``(x, y)``."""
    ground = float(build_terrain(spec).height(np.array([x]), np.array([y]))[0])
    return RigidTransform.from_euler(yaw, pitch, roll, (x, y, ground + height))


def on_open_ground(spec, x, y, margin=10.0):
    """True when ``(x, y)`` is outside every crater bowl and at least
    ``margin`` meters inside the terrain extent."""
    hx, hy = spec.extent[0] / 2 - margin, spec.extent[1] / 2 - margin
    if abs(x) > hx or abs(y) > hy:
        return False
    return all(math.hypot(x - c.x, y - c.y) > c.radius for c in spec.craters)


def sample_pose_pair(spec, rng, translation=(2.0, 2.4), yaw=(0.3, 0.43), tilt=0.02,
                     height=1.5, max_tries=1000):
    """Two sensor poses on open ground with a planted relative motion.

    The second pose sits ``U(translation)`` meters away in a random direction
    with a yaw change of ``U(yaw)`` radians in a random sense, and small pitch
    and roll of at most ``tilt`` radians.
    """
    for _ in range(max_tries):
        hx, hy = spec.extent[0] / 2, spec.extent[1] / 2
        x, y = float(rng.uniform(-hx, hx)), float(rng.uniform(-hy, hy))
        heading = float(rng.uniform(-math.pi, math.pi))
        d = float(rng.uniform(*translation))
        direction = float(rng.uniform(0, 2 * math.pi))
        dyaw = float(rng.choice([-1.0, 1.0]) * rng.uniform(*yaw))
        pitch, roll = (float(v) for v in rng.uniform(-tilt, tilt, 2))
        x2, y2 = x + d * math.cos(direction), y + d * math.sin(direction)
        if on_open_ground(spec, x, y) and on_open_ground(spec, x2, y2):
            a = sensor_pose_at(spec, x, y, heading, height)
            b = sensor_pose_at(spec, x2, y2, heading + dyaw, height, pitch, roll)
            return a, b
    raise ValueError("no open ground found for a pose pair")


def synth_scan(spec, sensor_pose, model=ProjectionModel(), noise=True, seed=0, max_range=200.0):
    """Simulated scan in the sensor frame, one ray per pixel center of ``model``.

    Range noise is Gaussian with ``spec.noise_sigma``, seeded from the terrain
    seed and ``seed``.
    """
    terrain = build_terrain(spec)
    origin = np.asarray(sensor_pose.translation)
    ground = terrain.surface_height(np.array([origin[0]]), np.array([origin[1]]))[0]
    if not np.isfinite(ground) or origin[2] <= ground:
        raise SensorBelowTerrain(f"sensor at z={origin[2]:.3f} is not above the terrain")
    local = model.ray_directions().reshape(-1, 3)
    world = local @ sensor_pose.rotation.T
    t = cast_rays(terrain, origin, world, max_range)
    hit = np.isfinite(t)
    if noise and spec.noise_sigma > 0:
        rng = np.random.default_rng([spec.rng_seed, seed, 7])
        t = t + rng.normal(scale=spec.noise_sigma, size=t.shape)
    if not hit.any():
        raise EmptyCloud("no ray hit the terrain")
    return PointCloud(local[hit] * t[hit, None])
