"""Spherical range images: projection, hole filling, smoothing, back-projection.

Images are stored as ``(height, width)`` arrays: row ``v`` runs from the top
of the elevation span downward, column ``u`` runs along azimuth from the
start of the azimuth span.
"""

from dataclasses import dataclass, replace
import math

import numpy as np
from scipy import ndimage

from .errors import ConstantImage, EmptyProjection, NoValidRange

GAUSS_SIGMA = 0.5


@dataclass(frozen=True)
class ProjectionModel:
    """Angular extent and resolution of a spherical range image (radians)."""

    azimuth_span: tuple = (-math.pi, math.pi)
    elevation_span: tuple = (-math.pi / 2, math.pi / 2)
    azimuth_resolution: float = math.radians(0.5)
    elevation_resolution: float = math.radians(0.5)

    def __post_init__(self):
        if self.azimuth_resolution <= 0 or self.elevation_resolution <= 0:
            raise ValueError("angular resolutions must be positive")
        if self.azimuth_span[1] <= self.azimuth_span[0]:
            raise ValueError("degenerate azimuth span")
        if self.elevation_span[1] <= self.elevation_span[0]:
            raise ValueError("degenerate elevation span")
        if self.azimuth_span[1] - self.azimuth_span[0] > 2 * math.pi + 1e-12:
            raise ValueError("azimuth span exceeds a full turn")

    @classmethod
    def from_degrees(cls, az=(-180.0, 180.0), el=(-90.0, 90.0), az_res=0.5, el_res=0.5):
        r = math.radians
        return cls((r(az[0]), r(az[1])), (r(el[0]), r(el[1])), r(az_res), r(el_res))

    @property
    def width(self):
        span = self.azimuth_span[1] - self.azimuth_span[0]
        return int(math.ceil(span / self.azimuth_resolution - 1e-9))

    @property
    def height(self):
        span = self.elevation_span[1] - self.elevation_span[0]
        return int(math.ceil(span / self.elevation_resolution - 1e-9))

    @property
    def full_turn(self):
        span = self.azimuth_span[1] - self.azimuth_span[0]
        return span >= 2 * math.pi - 1e-12

    def pixel_of(self, azimuth, elevation):
        """Pixel ``(u, v)`` of each direction and a mask of in-span directions."""
        az = np.asarray(azimuth, dtype=np.float64)
        el = np.asarray(elevation, dtype=np.float64)
        a0 = self.azimuth_span[0]
        rel = az - a0
        if self.full_turn:
            rel = np.mod(rel, 2 * math.pi)
        u = np.floor(rel / self.azimuth_resolution).astype(np.int64)
        v = np.floor((self.elevation_span[1] - el) / self.elevation_resolution).astype(np.int64)
        # the bottom edge of the elevation span belongs to the last row
        at_bottom = (el == self.elevation_span[0]) & (v == self.height)
        v = np.where(at_bottom, self.height - 1, v)
        inside = (u >= 0) & (u < self.width) & (v >= 0) & (v < self.height)
        return u, v, inside

    def pixel_center(self, u, v):
        """Central azimuth and elevation of pixel ``(u, v)``."""
        az = self.azimuth_span[0] + (np.asarray(u) + 0.5) * self.azimuth_resolution
        el = self.elevation_span[1] - (np.asarray(v) + 0.5) * self.elevation_resolution
        return az, el

    def ray_directions(self):
        """Unit vectors through every pixel center, shape ``(height, width, 3)``."""
        v, u = np.mgrid[0 : self.height, 0 : self.width]
        az, el = self.pixel_center(u, v)
        return spherical_to_cartesian(np.ones_like(az), az, el)


def spherical_to_cartesian(r, azimuth, elevation):
    ce = np.cos(elevation)
    return np.stack(
        [r * ce * np.cos(azimuth), r * ce * np.sin(azimuth), r * np.sin(elevation)], axis=-1
    )


def cartesian_to_spherical(points):
    p = np.asarray(points, dtype=np.float64)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    rho = np.hypot(x, y)
    return np.sqrt(rho**2 + z**2), np.arctan2(y, x), np.arctan2(z, rho)


@dataclass(frozen=True)
class RangeImage:
    """Range image and its processing products.

    ``raw_range`` holds the nearest return per pixel (NaN where none);
    ``filled_range`` adds interpolated values in enclosed holes (NaN on the
    border-connected background); ``smoothed_range`` and ``normalized`` are
    set by :func:`smooth_and_normalize`, with the background at 0 in
    ``normalized``.
    """

    raw_range: np.ndarray
    valid_mask: np.ndarray
    filled_range: np.ndarray
    model: ProjectionModel
    min_range: float
    max_range: float
    smoothed_range: np.ndarray = None
    normalized: np.ndarray = None

    @property
    def height(self):
        return self.raw_range.shape[0]

    @property
    def width(self):
        return self.raw_range.shape[1]

    @property
    def defined_mask(self):
        """Pixels that are valid or were filled as enclosed holes."""
        return np.isfinite(self.filled_range)


def project(cloud, model=ProjectionModel(), min_range=0.5, max_range=200.0):
    """Spherical projection keeping the nearest return in each pixel."""
    pts = cloud.points if hasattr(cloud, "points") else np.asarray(cloud, dtype=np.float64)
    r, az, el = cartesian_to_spherical(pts)
    u, v, inside = model.pixel_of(az, el)
    keep = inside & (r >= min_range) & (r <= max_range)
    if not np.any(inside):
        raise EmptyProjection("no point falls inside the angular spans")
    if not np.any(keep):
        raise EmptyProjection(f"no point within range limits [{min_range}, {max_range}] m")
    H, W = model.height, model.width
    flat = np.full(H * W, np.inf)
    np.minimum.at(flat, v[keep] * W + u[keep], r[keep])
    raw = flat.reshape(H, W)
    raw[np.isinf(raw)] = np.nan
    valid = np.isfinite(raw)
    return RangeImage(raw, valid, raw.copy(), model, float(min_range), float(max_range))


_CROSS = ndimage.generate_binary_structure(2, 1)
_NEIGHBORS8 = np.array([[1, 1, 1], [1, 0, 1], [1, 1, 1]], dtype=np.float64)


def enclosed_holes(valid_mask):
    """Invalid pixels not 4-connected to the image border through invalid pixels."""
    invalid = ~np.asarray(valid_mask, dtype=bool)
    labels, n = ndimage.label(invalid, structure=_CROSS)
    if n == 0:
        return np.zeros_like(invalid)
    border = np.unique(
        np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]])
    )
    return invalid & ~np.isin(labels, border)


def fill_holes(img):
    """Fill enclosed holes by repeated dilation from their valid rim.

    Each pass assigns every hole pixel touching known pixels (8-neighborhood)
    the mean of those neighbors, until the hole is covered.  Background
    regions connected to the border stay undefined.
    """
    holes = enclosed_holes(img.valid_mask)
    filled = np.where(img.valid_mask, img.raw_range, np.nan)
    if not holes.any():
        return replace(img, filled_range=filled)
    known = img.valid_mask.copy()
    values = np.where(known, img.raw_range, 0.0)
    pending = holes.copy()
    while pending.any():
        total = ndimage.convolve(values, _NEIGHBORS8, mode="constant")
        count = ndimage.convolve(known.astype(np.float64), _NEIGHBORS8, mode="constant")
        front = pending & (count > 0)
        values[front] = total[front] / count[front]
        known |= front
        pending &= ~front
    filled[holes] = values[holes]
    return replace(img, filled_range=filled)


def gaussian_kernel(size=3, sigma=GAUSS_SIGMA):
    half = size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x**2) / (2 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def masked_gaussian(values, mask, sigma=GAUSS_SIGMA):
    """3x3 Gaussian smoothing restricted to ``mask`` (normalized convolution).

    Image borders use edge replication.  Pixels outside the mask neither
    contribute nor receive values (they come back NaN).
    """
    kernel = gaussian_kernel(3, sigma)
    m = np.asarray(mask, dtype=np.float64)
    v = np.where(mask, values, 0.0)
    num = ndimage.convolve(v, kernel, mode="nearest")
    den = ndimage.convolve(m, kernel, mode="nearest")
    out = np.full(v.shape, np.nan)
    ok = mask & (den > 0)
    out[ok] = num[ok] / den[ok]
    return out


def smooth_and_normalize(img):
    defined = img.defined_mask
    smoothed = masked_gaussian(img.filled_range, defined)
    vals = smoothed[defined]
    lo, hi = vals.min(), vals.max()
    if not hi > lo:
        raise ConstantImage(f"range image is constant ({lo:g} m)")
    norm = np.zeros_like(smoothed)
    norm[defined] = np.clip((vals - lo) / (hi - lo), 0.0, 1.0)
    return replace(img, smoothed_range=smoothed, normalized=norm)


def make_range_image(cloud, model=ProjectionModel(), min_range=0.5, max_range=200.0):
    """Project, fill and normalize in one call."""
    return smooth_and_normalize(fill_holes(project(cloud, model, min_range, max_range)))


# neighbor search order: the pixel itself, edge neighbors, then corners
_OFFSETS = [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)]


def back_project_many(img, u, v):
    """Vectorized back-projection.

    Returns ``(points, ok)``; rows where ``ok`` is false have no raw
    measurement within one pixel and hold NaN.
    """
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    H, W = img.raw_range.shape
    rng = np.full(u.shape, np.nan)
    for dv, du in _OFFSETS:
        vv, uu = v + dv, u + du
        if img.model.full_turn:
            uu = np.mod(uu, W)
        inside = (vv >= 0) & (vv < H) & (uu >= 0) & (uu < W)
        cand = np.full(u.shape, np.nan)
        cand[inside] = img.raw_range[vv[inside], uu[inside]]
        take = np.isnan(rng) & np.isfinite(cand)
        rng[take] = cand[take]
    az, el = img.model.pixel_center(u, v)
    return spherical_to_cartesian(rng, az, el), np.isfinite(rng)


def back_project(img, u, v):
    """3D point of pixel ``(u, v)`` from its raw range and central ray."""
    pts, ok = back_project_many(img, [u], [v])
    if not ok[0]:
        raise NoValidRange(f"no raw range within one pixel of ({u}, {v})")
    return pts[0]
