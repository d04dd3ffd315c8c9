"""File formats: point clouds, range-image and coefficient dumps, feature dumps,
match and result files, pose files and evaluation CSVs.

Every writer goes through :func:`atomic_write`, so an output file is either
complete or absent.
"""

from contextlib import contextmanager
from dataclasses import dataclass
import json
import logging
import math
import os
from pathlib import Path
import struct
import tempfile

import numpy as np

from .curvelet import CurveletConfig, CurveletPyramid, coefficient_mosaic, get_geometry
from .errors import EmptyCloud, IoError, ParseError, UnknownFormat
from .geometry import PointCloud, RigidTransform

log = logging.getLogger(__name__)

CLOUD_FORMATS = ("xyz", "ply-binary", "ply-ascii")
TRANSFORM_NOTE = "transform maps data-scan coordinates into the model-scan frame"


@contextmanager
def atomic_write(path, mode="wb"):
    """Write to a temp file next to ``path`` and rename it into place on success."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    except OSError as err:
        raise IoError(f"cannot write {path}: {err}") from err
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


# point clouds


@dataclass
class CloudFile:
    format: str
    points: np.ndarray
    dropped: int = 0


def _sniff_format(path, head):
    if head.startswith(b"ply"):
        first = head.split(b"end_header", 1)[0]
        if b"format ascii" in first:
            return "ply-ascii"
        if b"format binary_little_endian" in first:
            return "ply-binary"
        raise UnknownFormat(f"{path}: unsupported PLY encoding")
    suffix = Path(path).suffix.lower()
    if suffix in (".xyz", ".txt", ".asc", ".csv"):
        return "xyz"
    if suffix == ".ply":
        raise UnknownFormat(f"{path}: .ply file without a PLY header")
    raise UnknownFormat(f"{path}: cannot tell the format from extension or contents")


def _parse_xyz(path, data):
    rows = []
    for lineno, line in enumerate(data.decode("utf-8", errors="replace").splitlines(), 1):
        text = line.split("#", 1)[0].replace(",", " ").strip()
        if not text:
            continue
        fields = text.split()
        if len(fields) < 3:
            raise ParseError(f"{path}:{lineno}: expected 3 coordinates, got {len(fields)}")
        try:
            rows.append([float(f) for f in fields[:3]])
        except ValueError as err:
            raise ParseError(f"{path}:{lineno}: {err}") from None
    return np.array(rows, dtype=np.float64).reshape(-1, 3)


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _parse_ply(path, data, binary):
    end = data.find(b"end_header")
    if end < 0:
        raise ParseError(f"{path}: PLY header has no end_header")
    body_start = data.index(b"\n", end) + 1
    header = data[:end].decode("ascii", errors="replace").splitlines()
    count, props, in_vertex, seen_vertex = None, [], False, False
    for lineno, line in enumerate(header, 1):
        parts = line.split()
        if not parts or parts[0] in ("ply", "format", "comment", "obj_info"):
            continue
        if parts[0] == "element":
            if seen_vertex and in_vertex:
                in_vertex = False
            if parts[1] == "vertex":
                if seen_vertex:
                    raise ParseError(f"{path}:{lineno}: duplicate vertex element")
                if len(parts) != 3 or not parts[2].isdigit():
                    raise ParseError(f"{path}:{lineno}: bad vertex element line")
                count, in_vertex, seen_vertex = int(parts[2]), True, True
            elif not seen_vertex:
                raise ParseError(f"{path}:{lineno}: vertex element must come first")
        elif parts[0] == "property" and in_vertex:
            if parts[1] == "list" or len(parts) != 3 or parts[1] not in _PLY_TYPES:
                raise ParseError(f"{path}:{lineno}: unsupported vertex property {line!r}")
            props.append((parts[2], _PLY_TYPES[parts[1]]))
    if count is None:
        raise ParseError(f"{path}: PLY file has no vertex element")
    names = [p[0] for p in props]
    if not all(a in names for a in "xyz"):
        raise ParseError(f"{path}: vertex element lacks x/y/z properties")
    if binary:
        dtype = np.dtype([(n, "<" + t) for n, t in props])
        need = count * dtype.itemsize
        if len(data) - body_start < need:
            raise ParseError(
                f"{path}: offset {body_start}: expected {need} bytes of vertex data, "
                f"found {len(data) - body_start}"
            )
        rec = np.frombuffer(data, dtype=dtype, count=count, offset=body_start)
        return np.stack([rec[a].astype(np.float64) for a in "xyz"], axis=1)
    lines = data[body_start:].decode("ascii", errors="replace").splitlines()
    first = len(header) + 2
    ix = [names.index(a) for a in "xyz"]
    out = np.empty((count, 3))
    k = 0
    for i, line in enumerate(lines):
        if k == count:
            break
        fields = line.split()
        if not fields:
            continue
        if len(fields) < len(names):
            raise ParseError(f"{path}:{first + i}: expected {len(names)} values")
        try:
            out[k] = [float(fields[j]) for j in ix]
        except ValueError as err:
            raise ParseError(f"{path}:{first + i}: {err}") from None
        k += 1
    if k != count:
        raise ParseError(f"{path}: header declares {count} vertices, found {k}")
    return out


def read_cloud(path):
    """Parse a cloud file; returns a :class:`CloudFile` with non-finite records removed."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as err:
        raise IoError(f"cannot read {path}: {err}") from err
    fmt = _sniff_format(path, data[:4096])
    if fmt == "xyz":
        pts = _parse_xyz(path, data)
    else:
        pts = _parse_ply(path, data, binary=fmt == "ply-binary")
    good = np.all(np.isfinite(pts), axis=1)
    return CloudFile(fmt, np.ascontiguousarray(pts[good]), int((~good).sum()))


def load_cloud(path):
    """Load a point cloud, dropping NaN/Inf records with a logged warning."""
    cf = read_cloud(path)
    if cf.dropped:
        log.warning("%s: dropped %d non-finite records", path, cf.dropped)
    if len(cf.points) == 0:
        raise EmptyCloud(f"{path}: no valid points")
    return PointCloud(cf.points)


def write_cloud(cloud, path, format=None):
    """Write ``cloud`` as ``xyz``, ``ply-binary`` (default for .ply) or ``ply-ascii``."""
    pts = cloud.points if hasattr(cloud, "points") else np.asarray(cloud, dtype=np.float64)
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise EmptyCloud("refusing to write an empty cloud")
    if format is None:
        format = "ply-binary" if Path(path).suffix.lower() == ".ply" else "xyz"
    if format not in CLOUD_FORMATS:
        raise UnknownFormat(f"unknown cloud format {format!r}")
    with atomic_write(path) as fh:
        if format == "xyz":
            np.savetxt(fh, pts, fmt="%.17g")
            return
        enc = "binary_little_endian" if format == "ply-binary" else "ascii"
        fh.write(
            (
                f"ply\nformat {enc} 1.0\nelement vertex {len(pts)}\n"
                "property double x\nproperty double y\nproperty double z\nend_header\n"
            ).encode("ascii")
        )
        if format == "ply-binary":
            fh.write(pts.astype("<f8").tobytes())
        else:
            np.savetxt(fh, pts, fmt="%.17g")


# range images and curvelet coefficients


def write_pgm16(path, values):
    """16-bit binary PGM of values in [0, 1] (big-endian samples, per the format)."""
    v = np.asarray(values, dtype=np.float64)
    q = np.round(np.clip(np.nan_to_num(v), 0.0, 1.0) * 65535).astype(">u2")
    with atomic_write(path) as fh:
        fh.write(f"P5\n{v.shape[1]} {v.shape[0]}\n65535\n".encode("ascii"))
        fh.write(q.tobytes())


def read_pgm16(path):
    """Read a P5 PGM written by :func:`write_pgm16`; returns values in [0, 1]."""
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos)
            continue
        start = pos
        while not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise ParseError(f"{path}: not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    dtype = ">u2" if maxval > 255 else "u1"
    arr = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return arr.astype(np.float64) / maxval


def sidecar_path(pgm_path):
    return Path(pgm_path).with_suffix(".txt")


def write_range_image(img, path):
    """PGM of the normalized channel plus a ``key=value`` sidecar.

    ``range_min_m``/``range_max_m`` are the smoothed ranges mapped to 0 and
    1, so ``range = min + value * (max - min)`` on defined pixels.
    """
    vals = img.smoothed_range[img.defined_mask]
    m = img.model
    write_pgm16(path, img.normalized)
    lines = [
        f"az_res_deg={math.degrees(m.azimuth_resolution)!r}",
        f"el_res_deg={math.degrees(m.elevation_resolution)!r}",
        f"range_min_m={float(vals.min())!r}",
        f"range_max_m={float(vals.max())!r}",
    ]
    with atomic_write(sidecar_path(path), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_sidecar(path):
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError(f"{path}:{lineno}: expected key=value")
        out[key.strip()] = float(value)
    return out


def write_coefficient_mosaic(pyr, path):
    mosaic = coefficient_mosaic(pyr)
    top = mosaic.max()
    write_pgm16(path, mosaic / top if top > 0 else mosaic)


_COEFF_MAGIC = b"CRVC"


def write_coefficients(pyr, path):
    """Binary little-endian dump of a curvelet pyramid.

    Layout: magic ``CRVC``, uint32 image rows and cols, uint32 ``J``, ``J``
    uint32 angle counts, then uint32 ``(rows, cols)`` for every wedge in
    scale/angle order, then each wedge's samples row-major as interleaved
    float64 real/imaginary pairs.
    """
    counts = [len(s) for s in pyr.coeffs]
    head = [_COEFF_MAGIC, struct.pack("<3I", *pyr.shape, len(counts))]
    head.append(struct.pack(f"<{len(counts)}I", *counts))
    for scale in pyr.coeffs:
        for c in scale:
            head.append(struct.pack("<2I", *c.shape))
    with atomic_write(path) as fh:
        fh.write(b"".join(head))
        for scale in pyr.coeffs:
            for c in scale:
                fh.write(np.ascontiguousarray(c, dtype="<c16").tobytes())


def read_coefficients(path):
    data = Path(path).read_bytes()
    if data[:4] != _COEFF_MAGIC:
        raise ParseError(f"{path}: bad coefficient file magic")
    rows, cols, J = struct.unpack_from("<3I", data, 4)
    pos = 16
    counts = struct.unpack_from(f"<{J}I", data, pos)
    pos += 4 * J
    shapes = []
    for n in counts:
        shapes.append([struct.unpack_from("<2I", data, pos + 8 * k) for k in range(n)])
        pos += 8 * n
    finest = counts[-1] > 1 or J == 1
    config = CurveletConfig(J, counts[1] if J > 1 else 16, finest)
    coeffs = []
    for scale in shapes:
        arrays = []
        for r, c in scale:
            n = r * c
            if pos + 16 * n > len(data):
                raise ParseError(f"{path}: offset {pos}: truncated coefficient data")
            arrays.append(np.frombuffer(data, dtype="<c16", count=n, offset=pos).reshape(r, c).copy())
            pos += 16 * n
        coeffs.append(arrays)
    return CurveletPyramid(coeffs, get_geometry((rows, cols), config))


# features and matches


def write_keypoints(feats, csv_path, desc_path=None):
    """Keypoint CSV ``u,v,level,response,x,y,z`` and float32 descriptor records."""
    with atomic_write(csv_path, "w") as fh:
        fh.write("u,v,level,response,x,y,z\n")
        for k in feats.keypoints:
            x, y, z = (float(c) for c in k.world)
            fh.write(f"{k.u},{k.v},{k.level},{k.response!r},{x!r},{y!r},{z!r}\n")
    if desc_path is not None:
        with atomic_write(desc_path) as fh:
            fh.write(np.asarray(feats.descriptors, dtype="<f4").reshape(-1, 128).tobytes())


def read_descriptors(path):
    return np.fromfile(path, dtype="<f4").reshape(-1, 128)


def write_matches(matches, inlier_mask, path):
    with atomic_write(path, "w") as fh:
        fh.write("model_idx,data_idx,desc_dist,inlier\n")
        for m, inl in zip(matches, inlier_mask):
            fh.write(f"{m.model_index},{m.data_index},{m.distance!r},{int(bool(inl))}\n")


def result_to_dict(result, timings=True):
    out = {
        "convention": TRANSFORM_NOTE,
        "rotation": [float(x) for x in np.asarray(result.transform.rotation).ravel()],
        "translation": [float(x) for x in result.transform.translation],
        "inliers": int(result.inlier_count),
        "matches": int(result.match_count),
        "keypoints": [int(k) for k in result.keypoint_counts],
        "residual_rms_m": float(result.residual_rms),
    }
    if timings:
        out["timings_s"] = {k: float(v) for k, v in sorted(result.timings.items())}
    return out


def write_json(obj, path):
    with atomic_write(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False)
        fh.write("\n")


def read_result_transform(path):
    d = json.loads(Path(path).read_text())
    return RigidTransform(np.array(d["rotation"]).reshape(3, 3), np.array(d["translation"]))


# poses and evaluation tables


def read_poses(path):
    """Pose file lines ``id tx ty tz qw qx qy qz``; returns ``[(id, RigidTransform)]``."""
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        f = text.split()
        if len(f) != 8:
            raise ParseError(f"{path}:{lineno}: expected 8 fields, got {len(f)}")
        try:
            t = [float(x) for x in f[1:4]]
            q = np.array([float(x) for x in f[4:8]])
        except ValueError as err:
            raise ParseError(f"{path}:{lineno}: {err}") from None
        norm = np.linalg.norm(q)
        if not abs(norm - 1.0) < 1e-6:
            raise ParseError(f"{path}:{lineno}: quaternion norm {norm:g} is not 1")
        out.append((f[0], RigidTransform.from_quaternion(q / norm, t)))
    return out


def write_poses(poses, path, ids=None):
    ids = range(len(poses)) if ids is None else ids
    with atomic_write(path, "w") as fh:
        fh.write("# id tx ty tz qw qx qy qz\n")
        for i, p in zip(ids, poses):
            vals = [*p.translation, *p.as_quaternion()]
            fh.write(f"{i} " + " ".join(repr(float(v)) for v in vals) + "\n")


def write_ecdf(points, path):
    with atomic_write(path, "w") as fh:
        fh.write("threshold,proportion\n")
        for t, p in points:
            fh.write(f"{t!r},{p!r}\n")


def write_rmse_summary(rows, path):
    """``rows`` is a list of ``(metric, value)`` pairs."""
    with atomic_write(path, "w") as fh:
        fh.write("metric,value\n")
        for name, value in rows:
            fh.write(f"{name},{float(value)!r}\n")
