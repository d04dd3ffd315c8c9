import json
import logging
import struct

import numpy as np
import pytest

from curvreg import io
from curvreg.curvelet import CurveletConfig, fdct_forward
from curvreg.errors import EmptyCloud, IoError, ParseError, UnknownFormat
from curvreg.evaluation import ecdf
from curvreg.features import FeatureSet, Keypoint
from curvreg.geometry import PointCloud, random_transform, rotation_distance
from curvreg.matching import Match
from curvreg.rangeimage import make_range_image


def test_xyz_three_points(tmp_path):
    p = tmp_path / "a.xyz"
    p.write_text("1 2 3\n4 5 6\n7 8 9\n")
    c = io.load_cloud(p)
    assert np.array_equal(c.points, [[1, 2, 3], [4, 5, 6], [7, 8, 9]])


def test_xyz_nan_record_dropped_with_warning(tmp_path, caplog):
    p = tmp_path / "a.xyz"
    p.write_text("# header comment\n1 2 3\n1 2 nan\n4,5,6\n")
    assert io.read_cloud(p).dropped == 1
    with caplog.at_level(logging.WARNING, logger="curvreg"):
        c = io.load_cloud(p)
    assert len(c) == 2
    assert "dropped 1" in caplog.text


def test_xyz_parse_error_names_the_line(tmp_path):
    p = tmp_path / "bad.xyz"
    p.write_text("1 2 3\n\n4 five 6\n")
    with pytest.raises(ParseError, match=r"bad\.xyz:3"):
        io.load_cloud(p)


def test_all_nonfinite_is_empty(tmp_path):
    p = tmp_path / "a.xyz"
    p.write_text("nan 1 2\ninf 0 0\n")
    with pytest.raises(EmptyCloud):
        io.load_cloud(p)


def test_unknown_format(tmp_path):
    p = tmp_path / "cloud.bin"
    p.write_bytes(b"\x00\x01\x02")
    with pytest.raises(UnknownFormat):
        io.load_cloud(p)
    q = tmp_path / "fake.ply"
    q.write_text("1 2 3\n")
    with pytest.raises(UnknownFormat):
        io.load_cloud(q)


def test_ply_binary_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    pts = rng.normal(scale=1e3, size=(1_000_000, 3))
    io.write_cloud(PointCloud(pts), tmp_path / "big.ply")
    cf = io.read_cloud(tmp_path / "big.ply")
    assert cf.format == "ply-binary"
    assert cf.points.tobytes() == pts.tobytes()


@pytest.mark.parametrize("fmt,name", [("ply-ascii", "c.ply"), ("xyz", "c.xyz")])
def test_text_formats_round_trip_exactly(tmp_path, fmt, name):
    pts = np.random.default_rng(1).normal(size=(500, 3)) * [1e-7, 1.0, 1e7]
    io.write_cloud(PointCloud(pts), tmp_path / name, fmt)
    cf = io.read_cloud(tmp_path / name)
    assert cf.format == fmt
    assert np.array_equal(cf.points, pts)


def test_ply_with_extra_properties_and_float32(tmp_path):
    dt = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("intensity", "u1")])
    rec = np.zeros(3, dtype=dt)
    rec["x"], rec["y"], rec["z"], rec["intensity"] = [1, 2, 3], [4, 5, 6], [7, 8, 9], [9, 9, 9]
    head = (
        "ply\nformat binary_little_endian 1.0\ncomment test\nelement vertex 3\n"
        "property float x\nproperty float y\nproperty float z\nproperty uchar intensity\n"
        "element face 0\nproperty list uchar int vertex_indices\nend_header\n"
    )
    (tmp_path / "e.ply").write_bytes(head.encode() + rec.tobytes())
    assert np.array_equal(io.load_cloud(tmp_path / "e.ply").points, [[1, 4, 7], [2, 5, 8], [3, 6, 9]])


def test_ply_truncated_binary_reports_offset(tmp_path):
    io.write_cloud(PointCloud(np.ones((10, 3))), tmp_path / "t.ply")
    data = (tmp_path / "t.ply").read_bytes()
    (tmp_path / "t.ply").write_bytes(data[:-8])
    with pytest.raises(ParseError, match="offset"):
        io.load_cloud(tmp_path / "t.ply")


def test_ply_ascii_parse_error_names_the_line(tmp_path):
    p = tmp_path / "a.ply"
    p.write_text(
        "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\n"
        "property double z\nend_header\n1 2 3\n4 oops 6\n"
    )
    with pytest.raises(ParseError, match=r"a\.ply:9"):
        io.load_cloud(p)


def test_ply_count_mismatch(tmp_path):
    p = tmp_path / "a.ply"
    p.write_text(
        "ply\nformat ascii 1.0\nelement vertex 3\nproperty double x\nproperty double y\n"
        "property double z\nend_header\n1 2 3\n"
    )
    with pytest.raises(ParseError, match="declares 3"):
        io.load_cloud(p)


def test_write_refuses_empty_and_creates_directories(tmp_path):
    with pytest.raises(EmptyCloud):
        io.write_cloud(np.zeros((0, 3)), tmp_path / "e.ply")
    target = tmp_path / "new" / "dir" / "c.ply"
    io.write_cloud(PointCloud(np.ones((2, 3))), target)
    assert target.exists()


def test_failed_write_leaves_nothing_behind(tmp_path):
    target = tmp_path / "out.txt"
    with pytest.raises(RuntimeError):
        with io.atomic_write(target, "w") as fh:
            fh.write("partial")
            raise RuntimeError("boom")
    assert list(tmp_path.iterdir()) == []


def test_unwritable_target_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IoError):
        io.write_cloud(PointCloud(np.ones((2, 3))), blocker / "sub" / "c.ply")


# range images and coefficients


def _scene():
    rng = np.random.default_rng(2)
    d = rng.normal(size=(20000, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return PointCloud(d * rng.uniform(2, 30, size=(20000, 1)))


def test_pgm_and_sidecar(tmp_path):
    img = make_range_image(_scene())
    io.write_range_image(img, tmp_path / "r.pgm")
    head = (tmp_path / "r.pgm").read_bytes()[:20]
    assert head.startswith(b"P5\n720 360\n65535\n")
    back = io.read_pgm16(tmp_path / "r.pgm")
    assert back.shape == (360, 720)
    assert np.max(np.abs(back - img.normalized)) <= 0.5 / 65535 + 1e-12
    lines = (tmp_path / "r.txt").read_text().splitlines()
    assert [ln.split("=")[0] for ln in lines] == ["az_res_deg", "el_res_deg", "range_min_m", "range_max_m"]
    side = io.read_sidecar(tmp_path / "r.txt")
    assert side["az_res_deg"] == pytest.approx(0.5) and side["el_res_deg"] == pytest.approx(0.5)
    d = img.defined_mask
    assert side["range_min_m"] == img.smoothed_range[d].min()
    assert side["range_max_m"] == img.smoothed_range[d].max()


def test_coefficient_binary_round_trip(tmp_path):
    f = np.random.default_rng(3).normal(size=(64, 96))
    pyr = fdct_forward(f, CurveletConfig(3, 8))
    io.write_coefficients(pyr, tmp_path / "c.bin")
    raw = (tmp_path / "c.bin").read_bytes()
    assert raw[:4] == b"CRVC"
    assert struct.unpack_from("<3I", raw, 4) == (64, 96, 3)
    assert struct.unpack_from("<3I", raw, 16) == (1, 8, 16)
    back = io.read_coefficients(tmp_path / "c.bin")
    for sa, sb in zip(pyr.coeffs, back.coeffs):
        assert len(sa) == len(sb)
        for a, b in zip(sa, sb):
            assert a.tobytes() == b.astype(np.complex128).tobytes()


def test_truncated_coefficients(tmp_path):
    pyr = fdct_forward(np.ones((64, 64)), CurveletConfig(3))
    io.write_coefficients(pyr, tmp_path / "c.bin")
    raw = (tmp_path / "c.bin").read_bytes()
    (tmp_path / "c.bin").write_bytes(raw[:-16])
    with pytest.raises(ParseError):
        io.read_coefficients(tmp_path / "c.bin")


# features, matches, results and poses


def test_keypoint_and_descriptor_dump(tmp_path):
    kps = [Keypoint(3, 4, 1, 0.25, np.array([1.0, 2.0, 3.0])), Keypoint(5, 6, 2, -0.5, np.array([0.1, 0.2, 0.3]))]
    desc = np.random.default_rng(4).random((2, 128))
    io.write_keypoints(FeatureSet(kps, desc), tmp_path / "k.csv", tmp_path / "k.bin")
    lines = (tmp_path / "k.csv").read_text().splitlines()
    assert lines[0] == "u,v,level,response,x,y,z"
    assert lines[1] == "3,4,1,0.25,1.0,2.0,3.0"
    assert (tmp_path / "k.bin").stat().st_size == 2 * 128 * 4
    assert np.array_equal(io.read_descriptors(tmp_path / "k.bin"), desc.astype("<f4"))


def test_match_dump(tmp_path):
    io.write_matches([Match(1, 2, 0.5), Match(3, 0, 0.25)], [True, False], tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text() == "model_idx,data_idx,desc_dist,inlier\n1,2,0.5,1\n3,0,0.25,0\n"


def test_pose_file_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    poses = [random_transform(rng) for _ in range(5)]
    io.write_poses(poses, tmp_path / "p.txt", [f"s{i}" for i in range(5)])
    back = io.read_poses(tmp_path / "p.txt")
    assert [b[0] for b in back] == [f"s{i}" for i in range(5)]
    for p, (_, q) in zip(poses, back):
        assert rotation_distance(p.rotation, q.rotation) < 1e-12
        assert np.allclose(p.translation, q.translation, atol=1e-12)


def test_pose_file_errors(tmp_path):
    p = tmp_path / "p.txt"
    p.write_text("a 0 0 0 1 0 0 0\nb 0 0 0 2 0 0 0\n")
    with pytest.raises(ParseError, match=":2"):
        io.read_poses(p)
    p.write_text("a 0 0 0 1 0 0\n")
    with pytest.raises(ParseError, match="8 fields"):
        io.read_poses(p)


def test_ecdf_and_rmse_tables(tmp_path):
    io.write_ecdf(ecdf([1.0, 2.0, 3.0]), tmp_path / "e.csv")
    rows = (tmp_path / "e.csv").read_text().splitlines()
    assert rows[0] == "threshold,proportion" and rows[-1] == "3.0,1.0"
    io.write_rmse_summary([("rmse_translation_m", 0.5), ("rmse_rotation_rad", 0.01)], tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text() == "metric,value\nrmse_translation_m,0.5\nrmse_rotation_rad,0.01\n"


def test_json_writer(tmp_path):
    io.write_json({"rotation": [1.0], "n": 2}, tmp_path / "x.json")
    assert json.loads((tmp_path / "x.json").read_text()) == {"rotation": [1.0], "n": 2}
