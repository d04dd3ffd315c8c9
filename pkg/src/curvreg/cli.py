"""Command-line interface: ``curvreg <subcommand> ...``."""

import argparse
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
import logging
import math
from pathlib import Path
import sys
import time

import numpy as np

from . import io
from .config import RunConfig, default_config_text, load_config, thread_count
from .curvelet import fdct_forward
from .errors import CurvRegError, IoError
from .evaluation import (
    accumulate_map,
    ecdf,
    failure_rate,
    integrate_trajectory,
    pair_error,
    relative_transforms,
    rmse,
)
from .geometry import RigidTransform
from .pipeline import register_features, register_pair, scan_features
from .rangeimage import make_range_image

log = logging.getLogger("curvreg")

CLOUD_SUFFIXES = (".ply", ".xyz", ".txt", ".asc")


def _config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, pipeline=replace(cfg.pipeline, ransac=replace(cfg.pipeline.ransac, rng_seed=args.seed)))
    return cfg


def cmd_project(args):
    cfg = _config(args).pipeline
    img = make_range_image(io.load_cloud(args.cloud), cfg.projection, cfg.min_range, cfg.max_range)
    io.write_range_image(img, args.output)
    print(f"wrote {args.output} ({img.width}x{img.height}) and {io.sidecar_path(args.output)}")


def cmd_coeffs(args):
    cfg = _config(args).pipeline
    src = Path(args.input)
    if src.suffix.lower() == ".pgm":
        image = io.read_pgm16(src)
    else:
        img = make_range_image(io.load_cloud(src), cfg.projection, cfg.min_range, cfg.max_range)
        image = img.normalized
    pyr = fdct_forward(image, cfg.curvelet)
    io.write_coefficient_mosaic(pyr, args.output)
    if args.binary:
        io.write_coefficients(pyr, args.binary)
    print(f"wrote {args.output}")


def cmd_features(args):
    cfg = _config(args).pipeline
    _, _, feats = scan_features(io.load_cloud(args.cloud), cfg)
    prefix = Path(args.prefix)
    io.write_keypoints(feats, prefix.with_suffix(".csv"), prefix.with_suffix(".desc"))
    print(f"{len(feats)} keypoints -> {prefix.with_suffix('.csv')}, {prefix.with_suffix('.desc')}")


def cmd_register(args):
    cfg = _config(args).pipeline
    result = register_pair(io.load_cloud(args.model), io.load_cloud(args.data), cfg)
    doc = io.result_to_dict(result, timings=not args.no_timings)
    if args.matches:
        io.write_matches(result.matches, result.inlier_mask, args.matches)
    if args.output:
        io.write_json(doc, args.output)
    else:
        import json

        print(json.dumps(doc, indent=2))


def _scan_files(directory, exclude=()):
    skip = {Path(e).resolve() for e in exclude if e}
    files = sorted(
        p for p in Path(directory).iterdir()
        if p.suffix.lower() in CLOUD_SUFFIXES and p.resolve() not in skip
    )
    if not files:
        raise IoError(f"no point-cloud files in {directory}")
    return files


def cmd_batch(args):
    run = _config(args)
    cfg, ev = run.pipeline, run.evaluation
    stride = args.stride or ev.stride
    out = Path(args.output)
    files = _scan_files(args.scans, [args.truth])
    truth = dict(io.read_poses(args.truth)) if args.truth else None
    if truth is not None:
        missing = [f.stem for f in files if f.stem not in truth]
        if missing:
            raise IoError(f"no ground-truth pose for scans: {', '.join(missing)}")
    used = list(range(0, len(files), stride))
    if len(used) < 2:
        raise IoError(f"need at least two scans at stride {stride}, have {len(files)}")

    clouds = {i: io.load_cloud(files[i]) for i in used}

    def features(i):
        t = {}
        return scan_features(clouds[i], cfg, t, files[i].stem)[2], t

    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        feats = dict(zip(used, pool.map(features, used)))

    estimates, samples, rows = [], [], []
    for a, b in zip(used[:-1], used[1:]):
        pair_id = f"{files[a].stem}-{files[b].stem}"
        timings = dict(feats[a][1])
        timings.update({k: v for k, v in feats[b][1].items()})
        try:
            res = register_features(feats[a][0], feats[b][0], cfg, timings)
            est = res.transform
            doc = io.result_to_dict(res, timings=not args.no_timings)
        except CurvRegError as err:
            log.warning("pair %s failed: %s", pair_id, err)
            est = RigidTransform.identity()
            doc = {"error": str(err), "rotation": list(np.eye(3).ravel()), "translation": [0.0] * 3}
        doc = {"model": files[a].name, "data": files[b].name, **doc}
        io.write_json(doc, out / "pairs" / f"{pair_id}.json")
        estimates.append(est)
        if truth is not None:
            gt = relative_transforms([truth[files[a].stem], truth[files[b].stem]])[0]
            s = pair_error(est, gt, pair_id)
            samples.append(s)
            rows.append((pair_id, s.translation, s.rotation, "error" in doc))

    poses = integrate_trajectory(estimates)
    io.write_poses(poses, out / "trajectory.txt", [files[i].stem for i in used])
    cloud = accumulate_map([clouds[i] for i in used], poses, ev.decimate, ev.map_cell)
    io.write_cloud(cloud, out / "map.ply", "ply-binary")

    if truth is not None:
        with io.atomic_write(out / "pair_errors.csv", "w") as fh:
            fh.write("pair,translation_m,rotation_rad,failed_stage\n")
            for pid, t, r, failed in rows:
                fh.write(f"{pid},{t!r},{r!r},{int(failed)}\n")
        io.write_ecdf(ecdf([s.translation for s in samples]), out / "ecdf_translation.csv")
        io.write_ecdf(ecdf([s.rotation for s in samples]), out / "ecdf_rotation.csv")
        t_rmse, r_rmse = rmse(samples)
        io.write_rmse_summary(
            [
                ("rmse_translation_m", t_rmse),
                ("rmse_rotation_rad", r_rmse),
                ("failure_rate", failure_rate(samples, ev.failure_threshold)),
            ],
            out / "rmse_summary.csv",
        )
        print(f"{len(samples)} pairs: RMSE translation {t_rmse:.4f} m, rotation {r_rmse:.4f} rad")
    else:
        print(f"{len(estimates)} pairs registered")


def cmd_synth(args):
    from .terrain import TerrainSpec, on_open_ground, sensor_pose_at, synth_scan

    cfg = _config(args).pipeline
    spec = TerrainSpec.random(args.terrain_seed if args.terrain_seed is not None else args.seed or 0)
    rng = np.random.default_rng([args.seed or 0, 11])
    out = Path(args.output)
    hx, hy = spec.extent[0] / 4, spec.extent[1] / 4
    x, y = 0.0, 0.0
    while not on_open_ground(spec, x, y):
        x, y = float(rng.uniform(-hx, hx)), float(rng.uniform(-hy, hy))
    yaw = float(rng.uniform(-math.pi, math.pi))
    poses = []
    for i in range(args.scans):
        if i:
            # the rover steers around crater bowls and the terrain border
            for _ in range(100):
                new_yaw = yaw + float(rng.uniform(-args.turn, args.turn))
                heading = new_yaw + float(rng.uniform(-0.3, 0.3))
                nx, ny = x + args.step * math.cos(heading), y + args.step * math.sin(heading)
                if on_open_ground(spec, nx, ny):
                    break
            else:
                raise IoError("synthetic rover is boxed in; try another terrain seed")
            x, y, yaw = nx, ny, new_yaw
        pose = sensor_pose_at(spec, x, y, yaw, args.height)
        cloud = synth_scan(spec, pose, cfg.projection, noise=not args.no_noise, seed=i)
        io.write_cloud(cloud, out / f"scan_{i:03d}.ply", "ply-binary")
        poses.append(pose)
    io.write_poses(poses, out / "truth.txt", [f"scan_{i:03d}" for i in range(args.scans)])
    print(f"wrote {args.scans} scans and truth.txt to {out}")


def cmd_config(args):
    sys.stdout.write(default_config_text())


def cmd_selftest(args):
    from .selftest import run_selftest

    return 0 if run_selftest(seed=args.seed or 0) else 1


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(
        prog="curvreg", description="Curvelet-feature scan registration for 3D LIDAR point clouds."
    )
    sub = p.add_subparsers(dest="command", metavar="<command>")

    s = sub.add_parser("project", parents=[common], help="cloud -> range-image PGM + sidecar")
    s.add_argument("cloud")
    s.add_argument("output")
    s.set_defaults(func=cmd_project)

    s = sub.add_parser("coeffs", parents=[common], help="range image or cloud -> coefficient mosaic")
    s.add_argument("input", help="range-image PGM or point cloud")
    s.add_argument("output")
    s.add_argument("--binary", help="also write the raw coefficients here")
    s.set_defaults(func=cmd_coeffs)

    s = sub.add_parser("features", parents=[common], help="cloud -> keypoint CSV + descriptors")
    s.add_argument("cloud")
    s.add_argument("prefix", help="writes PREFIX.csv and PREFIX.desc")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("register", parents=[common], help="register two clouds -> result JSON")
    s.add_argument("model")
    s.add_argument("data")
    s.add_argument("-o", "--output", help="result JSON (default: stdout)")
    s.add_argument("--matches", help="write the match CSV here")
    s.add_argument("--no-timings", action="store_true", help="omit wall-clock timings")
    s.set_defaults(func=cmd_register)

    s = sub.add_parser("batch", parents=[common], help="register a scan sequence and evaluate it")
    s.add_argument("scans", help="directory of scans, processed in file-name order")
    s.add_argument("output", help="output directory")
    s.add_argument("--truth", help="ground-truth pose file keyed by scan file stem")
    s.add_argument("--stride", type=int, default=None, help="use every STRIDE-th scan")
    s.add_argument("--no-timings", action="store_true", help="omit wall-clock timings")
    s.set_defaults(func=cmd_batch)

    s = sub.add_parser("synth", parents=[common], help="simulate scans over synthetic terrain")
    s.add_argument("output", help="output directory")
    s.add_argument("--scans", type=int, default=5)
    s.add_argument("--step", type=float, default=2.0, help="distance between scans (m)")
    s.add_argument("--turn", type=float, default=0.3, help="max yaw change per scan (rad)")
    s.add_argument("--height", type=float, default=1.5, help="sensor height (m)")
    s.add_argument("--terrain-seed", type=int, default=None)
    s.add_argument("--no-noise", action="store_true")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("config", parents=[common], help="print the default configuration")
    s.set_defaults(func=cmd_config)

    s = sub.add_parser("selftest", parents=[common], help="run the built-in property checks")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        print("curvreg: error: missing subcommand", file=sys.stderr)
        return 2
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    t0 = time.perf_counter()
    try:
        rc = args.func(args)
    except CurvRegError as err:
        print(f"curvreg {args.command}: {err}", file=sys.stderr)
        return 1
    log.debug("%s finished in %.2f s", args.command, time.perf_counter() - t0)
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
