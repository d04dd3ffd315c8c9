"""2D discrete curvelet transform via frequency wrapping.

The spectrum of an image is split into a coarse low-pass box, dyadic
Cartesian coronae, and angular wedges inside each corona.  Radial and
angular windows are Meyer-type, chosen so that the squared windows sum to
one at every frequency sample.  Each windowed wedge is periodized (wrapped)
onto a small rectangle around the origin and brought back to space with an
inverse FFT of that rectangle's size.  The rectangle is chosen so that the
wrap is injective on the wedge support, which makes the forward transform
an exact isometry and its adjoint an exact inverse.

Coefficients are indexed ``coeffs[j][l]`` with ``j = 0`` the coarsest scale
(a single, angle-less array) and ``l`` counting wedges counterclockwise
around the frequency plane.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import GeometryMismatch, ImageTooSmall, ScaleOutOfRange


@dataclass(frozen=True)
class CurveletConfig:
    n_scales: int = 4
    n_angles_coarse: int = 16
    finest_is_curvelets: bool = True

    def __post_init__(self):
        if self.n_scales < 2:
            raise ValueError("n_scales must be >= 2")
        if self.n_angles_coarse < 8 or self.n_angles_coarse % 4:
            raise ValueError("n_angles_coarse must be >= 8 and a multiple of 4")

    def angles_per_scale(self):
        """Number of wedges at each scale, coarsest first."""
        counts = [1]
        for j in range(2, self.n_scales + 1):
            counts.append(self.n_angles_coarse * 2 ** int(np.ceil((j - 2) / 2)))
        if not self.finest_is_curvelets:
            counts[-1] = 1
        return counts


def _meyer_ramp(x):
    x = np.clip(x, 0.0, 1.0)
    return x**4 * (35.0 - 84.0 * x + 70.0 * x**2 - 20.0 * x**3)


def _lowpass_1d(k, m):
    # 1 on |k| <= m, 0 on |k| >= 2m, squares of the taper pair to 1 with its
    # mirror image
    r = np.abs(k) / m
    return np.where(
        r <= 1.0, 1.0, np.where(r >= 2.0, 0.0, np.cos(0.5 * np.pi * _meyer_ramp(r - 1.0)))
    )


def _square_angle(a, b):
    """Position on the perimeter of the unit square, in ``[0, 8)``.

    ``a`` is the horizontal (column) frequency, ``b`` the vertical one, both
    normalized by the image size.  The east cone maps to ``[0, 2]``, north to
    ``[2, 4]``, west to ``[4, 6]``, south to ``[6, 8]``.  Equal steps in this
    parameter are equal steps in slope within a cone.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.select(
            [
                (a > 0) & (np.abs(b) <= a),
                (a < 0) & (np.abs(b) <= -a),
                b > 0,
                b < 0,
            ],
            [1.0 + b / a, 5.0 + b / a, 3.0 - a / b, 7.0 - a / b],
            default=0.0,
        )
    return np.mod(p, 8.0)


@dataclass(frozen=True)
class Wedge:
    """Frequency support of one coefficient array.

    ``src`` indexes the flattened (unshifted) image spectrum, ``dst`` the
    flattened wrapped rectangle of size ``shape``, and ``weight`` holds the
    window value at each support sample.
    """

    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    shape: tuple
    angle: float


class CurveletGeometry:
    """Window tables and wrapping maps for one image shape and config."""

    def __init__(self, shape, config):
        n0, n1 = (int(s) for s in shape)
        J = config.n_scales
        if min(n0, n1) < 2 ** (J + 2):
            raise ImageTooSmall(
                f"image {n0}x{n1} too small for {J} scales (need >= {2 ** (J + 2)} per side)"
            )
        self.shape = (n0, n1)
        self.config = config
        self.n_angles = config.angles_per_scale()

        k0 = np.rint(np.fft.fftfreq(n0) * n0)
        k1 = np.rint(np.fft.fftfreq(n1) * n1)
        K0, K1 = np.meshgrid(k0, k1, indexing="ij")

        # lowpass boxes; index s = 0 is the coarsest boundary
        lowpass = []
        for s in range(1, J):
            div = 3.0 * 2 ** (J - s)
            lowpass.append(np.outer(_lowpass_1d(k0, n0 / div), _lowpass_1d(k1, n1 / div)))
        lowpass.append(np.ones((n0, n1)))

        self.wedges = [[self._coarse_wedge(lowpass[0], K0, K1)]]
        p = _square_angle(K1 / n1, K0 / n0)
        for j in range(1, J):
            radial = np.sqrt(np.clip(lowpass[j] ** 2 - lowpass[j - 1] ** 2, 0.0, None))
            if j == J - 1 and not config.finest_is_curvelets:
                flat = np.arange(n0 * n1)
                self.wedges.append(
                    [Wedge(flat, flat, radial.ravel(), (n0, n1), float("nan"))]
                )
                continue
            self.wedges.append(self._angular_wedges(radial, p, self.n_angles[j], K0, K1))
        for scale in self.wedges:
            for w in scale:
                if len(w.src) == 0:
                    raise ImageTooSmall(f"empty wedge for image {n0}x{n1}")

    @staticmethod
    def _coarse_wedge(window, K0, K1):
        support = np.flatnonzero(window.ravel() > 0)
        kk0 = K0.ravel()[support].astype(np.int64)
        kk1 = K1.ravel()[support].astype(np.int64)
        L0 = int(kk0.max() - kk0.min() + 1)
        L1 = int(kk1.max() - kk1.min() + 1)
        dst = np.mod(kk0, L0) * L1 + np.mod(kk1, L1)
        return Wedge(support, dst, window.ravel()[support], (L0, L1), float("nan"))

    def _angular_wedges(self, radial, p, n_angles, K0, K1):
        step = 8.0 / n_angles
        pos = p / step
        nearest = np.floor(pos + 0.5)
        x = pos - nearest + 0.5
        upper = np.mod(nearest, n_angles).astype(np.int64)  # window rising at this boundary
        lower = np.mod(upper - 1, n_angles)  # window falling at this boundary
        rise = np.sin(0.5 * np.pi * _meyer_ramp(x))
        fall = np.cos(0.5 * np.pi * _meyer_ramp(x))

        r = radial.ravel()
        inband = np.flatnonzero(r > 0)
        up_w = (r * rise.ravel())[inband]
        lo_w = (r * fall.ravel())[inband]
        up_l = upper.ravel()[inband]
        lo_l = lower.ravel()[inband]

        # group support samples by wedge index
        src = np.concatenate([inband[up_w > 0], inband[lo_w > 0]])
        lab = np.concatenate([up_l[up_w > 0], lo_l[lo_w > 0]])
        wts = np.concatenate([up_w[up_w > 0], lo_w[lo_w > 0]])
        order = np.lexsort((src, lab))
        src, lab, wts = src[order], lab[order], wts[order]
        bounds = np.searchsorted(lab, np.arange(n_angles + 1))

        kk0_all = K0.ravel().astype(np.int64)
        kk1_all = K1.ravel().astype(np.int64)
        wedges = []
        for l in range(n_angles):
            s = src[bounds[l] : bounds[l + 1]]
            w = wts[bounds[l] : bounds[l + 1]]
            center = (l + 0.5) * step
            cone = int(center // 2.0) % 4
            kk0 = kk0_all[s]
            kk1 = kk1_all[s]
            if cone in (0, 2):
                radial_k, tangent_k = kk1, kk0
            else:
                radial_k, tangent_k = kk0, kk1
            if len(s) == 0:
                wedges.append(Wedge(s, s, w, (0, 0), 0.0))
                continue
            r_min = radial_k.min()
            L_rad = int(radial_k.max() - r_min + 1)
            lo = np.full(L_rad, np.iinfo(np.int64).max)
            hi = np.full(L_rad, np.iinfo(np.int64).min)
            np.minimum.at(lo, radial_k - r_min, tangent_k)
            np.maximum.at(hi, radial_k - r_min, tangent_k)
            filled = hi >= lo
            L_tan = int((hi[filled] - lo[filled]).max() + 1)
            if cone in (0, 2):
                L0, L1 = L_tan, L_rad
            else:
                L0, L1 = L_rad, L_tan
            dst = np.mod(kk0, L0) * L1 + np.mod(kk1, L1)
            wedges.append(Wedge(s, dst, w, (L0, L1), _perimeter_to_angle(center)))
        return wedges

    def coefficient_shapes(self):
        return [[w.shape for w in scale] for scale in self.wedges]


def _perimeter_to_angle(p):
    """Polar angle of the point at perimeter position ``p`` on the unit square."""
    side = int(p // 2.0) % 4
    u = p - 2.0 * side - 1.0  # in [-1, 1] along the side
    a, b = [(1.0, u), (-u, 1.0), (-1.0, -u), (u, -1.0)][side]
    return float(np.mod(np.arctan2(b, a), 2 * np.pi))


@lru_cache(maxsize=16)
def get_geometry(shape, config):
    return CurveletGeometry(shape, config)


@dataclass
class CurveletPyramid:
    """Complex curvelet coefficients ``coeffs[j][l]`` plus their geometry."""

    coeffs: list
    geometry: CurveletGeometry

    @property
    def shape(self):
        return self.geometry.shape

    @property
    def config(self):
        return self.geometry.config

    @property
    def n_scales(self):
        return len(self.coeffs)

    def energy(self):
        return float(sum(np.vdot(c, c).real for scale in self.coeffs for c in scale))

    def angles(self, j):
        """Wedge center orientations (radians) at scale ``j`` (0-based)."""
        return [w.angle for w in self.geometry.wedges[j]]

    def __add__(self, other):
        return CurveletPyramid(
            [[a + b for a, b in zip(sa, sb)] for sa, sb in zip(self.coeffs, other.coeffs)],
            self.geometry,
        )

    def __mul__(self, scalar):
        return CurveletPyramid([[scalar * c for c in s] for s in self.coeffs], self.geometry)

    __rmul__ = __mul__

    def zeros_like(self):
        return CurveletPyramid([[np.zeros_like(c) for c in s] for s in self.coeffs], self.geometry)


def fdct_forward(img, config=CurveletConfig()):
    """Forward transform of a real 2D array."""
    f = np.asarray(img, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError("expected a 2D image")
    geom = get_geometry(f.shape, config)
    spectrum = (np.fft.fft2(f) / np.sqrt(f.size)).ravel()
    coeffs = []
    for scale in geom.wedges:
        arrays = []
        for w in scale:
            buf = np.zeros(w.shape[0] * w.shape[1], dtype=np.complex128)
            buf[w.dst] = spectrum[w.src] * w.weight
            arrays.append(np.fft.ifft2(buf.reshape(w.shape)) * np.sqrt(buf.size))
        coeffs.append(arrays)
    return CurveletPyramid(coeffs, geom)


def _check_geometry(pyr):
    geom = pyr.geometry
    if len(pyr.coeffs) != len(geom.wedges):
        raise GeometryMismatch(
            f"pyramid has {len(pyr.coeffs)} scales, geometry expects {len(geom.wedges)}"
        )
    for j, (arrays, wedges) in enumerate(zip(pyr.coeffs, geom.wedges)):
        if len(arrays) != len(wedges):
            raise GeometryMismatch(f"scale {j}: {len(arrays)} angles, expected {len(wedges)}")
        for l, (c, w) in enumerate(zip(arrays, wedges)):
            if tuple(np.shape(c)) != tuple(w.shape):
                raise GeometryMismatch(
                    f"wedge ({j}, {l}) has shape {np.shape(c)}, expected {w.shape}"
                )


def _synthesize(pyr, scales):
    _check_geometry(pyr)
    geom = pyr.geometry
    n0, n1 = geom.shape
    spectrum = np.zeros(n0 * n1, dtype=np.complex128)
    # fixed accumulation order keeps the result bitwise reproducible
    for j in scales:
        for c, w in zip(pyr.coeffs[j], geom.wedges[j]):
            wrapped = (np.fft.fft2(c) / np.sqrt(c.size)).ravel()
            spectrum[w.src] += wrapped[w.dst] * w.weight
    return np.fft.ifft2(spectrum.reshape(n0, n1)).real * np.sqrt(n0 * n1)


def fdct_inverse(pyr):
    """Adjoint (= inverse) transform; returns a real image."""
    return _synthesize(pyr, range(len(pyr.coeffs)))


def reconstruct_scale(pyr, j):
    """Image synthesized from scale ``j`` alone (1 = coarsest, J = finest)."""
    if not 1 <= j <= len(pyr.coeffs):
        raise ScaleOutOfRange(f"scale {j} outside 1..{len(pyr.coeffs)}")
    return _synthesize(pyr, [j - 1])


def coefficient_mosaic(pyr):
    """Log-magnitude display of all coefficients laid out in the frequency plane.

    Each frequency sample shows ``log(1 + |c|)`` of the coefficient its wedge
    wraps it onto, taken from the wedge with the largest window weight there.
    The result is ``fftshift``-ed so the coarse scale sits in the center with
    the coronae around it.
    """
    geom = pyr.geometry
    n = geom.shape[0] * geom.shape[1]
    best = np.zeros(n)
    out = np.zeros(n)
    for arrays, wedges in zip(pyr.coeffs, geom.wedges):
        for c, w in zip(arrays, wedges):
            vals = np.log1p(np.abs(c)).ravel()[w.dst]
            win = w.weight > best[w.src]
            best[w.src[win]] = w.weight[win]
            out[w.src[win]] = vals[win]
    return np.fft.fftshift(out.reshape(geom.shape))
