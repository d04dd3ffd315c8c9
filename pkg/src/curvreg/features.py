"""Difference-of-curvelets keypoints and gradient-histogram descriptors."""

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .curvelet import reconstruct_scale
from .errors import TooFewScales, ZeroGradient
from .rangeimage import back_project_many

DESCRIPTOR_CLAMP = 0.2
WINDOW = 16
CELLS = 4
ORIENTATIONS = 8


@dataclass(frozen=True)
class Keypoint:
    u: int
    v: int
    level: int
    response: float
    world: np.ndarray = None


def build_doc_stack(pyr):
    """Differences of consecutive curvelet scale images, coarse to fine.

    The image at scale ``j`` is the reconstruction from scales ``1..j``
    (a low-pass image, like a Gaussian level in SIFT), so each difference
    is the band-pass content of one scale and a constant image gives zero.
    Returns an array of shape ``(J - 1, H, W)``.
    """
    J = pyr.n_scales
    if J < 3:
        raise TooFewScales(f"difference-of-curvelets needs >= 3 scales, got {J}")
    # I_c(j) - I_c(j-1) with cumulative I_c is the j-th band itself
    return np.stack([reconstruct_scale(pyr, j) for j in range(2, J + 1)])


_FOOTPRINT = np.ones((3, 3, 3), dtype=bool)
_FOOTPRINT[1, 1, 1] = False


def detect_extrema(stack):
    """Strict 26-neighbor extrema at interior levels and interior pixels.

    Output is sorted by ``(level, v, u)``.
    """
    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim != 3 or stack.shape[0] < 3:
        return []
    nb_max = ndimage.maximum_filter(stack, footprint=_FOOTPRINT, mode="nearest")
    nb_min = ndimage.minimum_filter(stack, footprint=_FOOTPRINT, mode="nearest")
    is_ext = (stack > nb_max) | (stack < nb_min)
    is_ext[0] = is_ext[-1] = False
    is_ext[:, 0, :] = is_ext[:, -1, :] = False
    is_ext[:, :, 0] = is_ext[:, :, -1] = False
    lv, vv, uu = np.nonzero(is_ext)  # C order is already (level, v, u)
    return [
        Keypoint(int(u), int(v), int(l), float(stack[l, v, u])) for l, v, u in zip(lv, vv, uu)
    ]


def filter_keypoints(kps, img, contrast_threshold=0.03, range_margin=0.5):
    """Drop low-contrast keypoints and ones without a usable 3D point.

    Surviving keypoints get their ``world`` point filled in.
    """
    strong = [k for k in kps if abs(k.response) >= contrast_threshold]
    if not strong:
        return []
    u = np.array([k.u for k in strong])
    v = np.array([k.v for k in strong])
    pts, ok = back_project_many(img, u, v)
    rng = np.linalg.norm(np.where(ok[:, None], pts, 0.0), axis=1)
    ok &= rng >= img.min_range + range_margin
    return [replace(k, world=pts[i]) for i, k in enumerate(strong) if ok[i]]


def _window_indices(u, v, shape, wrap_columns):
    H, W = shape
    offs = np.arange(-WINDOW // 2, WINDOW // 2)
    rows = np.clip(v[:, None] + offs[None, :], 0, H - 1)
    cols = u[:, None] + offs[None, :]
    cols = np.mod(cols, W) if wrap_columns else np.clip(cols, 0, W - 1)
    return rows, cols


def _gradients(image, wrap_columns):
    padded = np.pad(image, ((1, 1), (0, 0)), mode="edge")
    gy = 0.5 * (padded[2:] - padded[:-2])
    if wrap_columns:
        gx = 0.5 * (np.roll(image, -1, axis=1) - np.roll(image, 1, axis=1))
    else:
        padded = np.pad(image, ((0, 0), (1, 1)), mode="edge")
        gx = 0.5 * (padded[:, 2:] - padded[:, :-2])
    return gx, gy


def compute_descriptors(image, kps, wrap_columns=False, orientation_normalize=False):
    """Batch version of :func:`compute_descriptor`.

    Returns ``(descriptors, ok)`` with one 128-vector per keypoint; rows with
    ``ok`` false had an all-zero gradient window and are zero.
    """
    image = np.asarray(image, dtype=np.float64)
    n = len(kps)
    out = np.zeros((n, CELLS * CELLS * ORIENTATIONS))
    if n == 0:
        return out, np.zeros(0, dtype=bool)
    u = np.array([k.u for k in kps])
    v = np.array([k.v for k in kps])
    gx, gy = _gradients(image, wrap_columns)
    rows, cols = _window_indices(u, v, image.shape, wrap_columns)
    wgx = gx[rows[:, :, None], cols[:, None, :]]  # (n, 16, 16), [k, row, col]
    wgy = gy[rows[:, :, None], cols[:, None, :]]
    mag = np.hypot(wgx, wgy)
    theta = np.arctan2(wgy, wgx)

    # sample positions relative to the keypoint, symmetric about it
    rel = np.arange(WINDOW) - WINDOW / 2 + 0.5
    ry, rx = np.meshgrid(rel, rel, indexing="ij")
    sigma = WINDOW / 2
    weight = np.exp(-(rx**2 + ry**2) / (2 * sigma**2))
    rx = np.broadcast_to(rx, mag.shape)
    ry = np.broadcast_to(ry, mag.shape)

    if orientation_normalize:
        dominant = _dominant_orientation(mag * weight, theta)
        theta = theta - dominant[:, None, None]
        c, s = np.cos(dominant)[:, None, None], np.sin(dominant)[:, None, None]
        rx, ry = c * rx + s * ry, -s * rx + c * ry

    cell = WINDOW / CELLS
    cx = rx / cell + CELLS / 2 - 0.5
    cy = ry / cell + CELLS / 2 - 0.5
    co = np.mod(theta, 2 * np.pi) / (2 * np.pi) * ORIENTATIONS
    x0, y0, o0 = np.floor(cx), np.floor(cy), np.floor(co)
    fx, fy, fo = cx - x0, cy - y0, co - o0
    x0, y0, o0 = x0.astype(int), y0.astype(int), o0.astype(int)
    val = mag * weight
    kidx = np.broadcast_to(np.arange(n)[:, None, None], mag.shape)
    hist = np.zeros((n, CELLS, CELLS, ORIENTATIONS))
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            yy, xx = y0 + dy, x0 + dx
            inside = (yy >= 0) & (yy < CELLS) & (xx >= 0) & (xx < CELLS)
            for do, wo in ((0, 1 - fo), (1, fo)):
                oo = np.mod(o0 + do, ORIENTATIONS)
                w = (val * wy * wx * wo)[inside]
                np.add.at(hist, (kidx[inside], yy[inside], xx[inside], oo[inside]), w)

    desc = hist.reshape(n, -1)
    norm = np.linalg.norm(desc, axis=1)
    ok = norm > 0
    desc[ok] /= norm[ok, None]
    desc = np.minimum(desc, DESCRIPTOR_CLAMP)
    norm = np.linalg.norm(desc, axis=1)
    desc[ok] /= norm[ok, None]
    out[ok] = desc[ok]
    return out, ok


def _dominant_orientation(wmag, theta, bins=36):
    n = wmag.shape[0]
    b = (np.mod(theta, 2 * np.pi) / (2 * np.pi) * bins).astype(int) % bins
    hist = np.zeros((n, bins))
    np.add.at(hist, (np.broadcast_to(np.arange(n)[:, None, None], b.shape), b), wmag)
    return (np.argmax(hist, axis=1) + 0.5) * 2 * np.pi / bins


def compute_descriptor(image, kp, wrap_columns=False, orientation_normalize=False):
    """128-bin (4x4 cells x 8 orientations) gradient histogram around ``kp``.

    Gradients are central differences over a 16x16 window, Gaussian
    weighted (sigma = 8 px) and spread with trilinear interpolation.  Bins
    are clamped at 0.2 and the vector is renormalized to unit length.
    """
    desc, ok = compute_descriptors(image, [kp], wrap_columns, orientation_normalize)
    if not ok[0]:
        raise ZeroGradient(f"flat gradient window at ({kp.u}, {kp.v})")
    return desc[0]


@dataclass(frozen=True)
class DetectorConfig:
    contrast_threshold: float = 0.03
    range_margin: float = 0.5
    orientation_normalize: bool = False


@dataclass
class FeatureSet:
    keypoints: list
    descriptors: np.ndarray

    @property
    def points(self):
        if not self.keypoints:
            return np.zeros((0, 3))
        return np.array([k.world for k in self.keypoints])

    def __len__(self):
        return len(self.keypoints)


def extract_features(img, pyr, config=DetectorConfig()):
    """Keypoints with world points and descriptors for one range image."""
    stack = build_doc_stack(pyr)
    kps = filter_keypoints(
        detect_extrema(stack), img, config.contrast_threshold, config.range_margin
    )
    desc, ok = compute_descriptors(
        img.normalized, kps, img.model.full_turn, config.orientation_normalize
    )
    kps = [k for k, good in zip(kps, ok) if good]
    return FeatureSet(kps, desc[ok])
