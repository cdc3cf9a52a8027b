"""Command-line interface.

Commands: synth, fit, render, trajectory, eval. Every command accepts
--seed and --threads; exit codes are 0 on success, 1 on domain errors and
2 on format errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .camera import PanoramaCamera, SatelliteCamera
from .errors import DomainError, FormatError
from .formats import (read_map, read_png, read_volume, write_histogram, write_map,
                      write_png, write_volume)
from .metrics import metric_report
from .optimize import evaluate_fit, fit_density
from .pipeline import build_observation, scene_assets
from .render import render_panorama, render_trajectory
from .runconfig import load_run_config
from .supervise import sky_histogram
from .synth import ground_view_image, load_scene, oracle_ground_truth
from .volume import DensityVolume

POSE_COLUMNS = ["frame", "e", "n", "u", "heading_rad"]


def _set_threads(n: int | None):
    if n is None:
        return
    if n < 1:
        raise DomainError(f"--threads must be >= 1, got {n}")
    import numba

    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def _parse_ints(text: str, n: int, flag: str) -> tuple:
    parts = text.split(",")
    if len(parts) != n:
        raise DomainError(f"{flag} expects {n} comma-separated values, got {text!r}")
    try:
        return tuple(int(p) for p in parts)
    except ValueError as e:
        raise DomainError(f"{flag}: {e}") from e


def _sat_cam_for(vol: DensityVolume, sat_image: np.ndarray) -> SatelliteCamera:
    h, w = sat_image.shape[:2]
    f = vol.frame
    return SatelliteCamera(image_size=(h, w), scale=(f.extent_n / h, f.extent_e / w))


def _write_buffers(out: Path, buf) -> None:
    write_map(out / "depth.s2dm", buf.depth)
    write_map(out / "opacity.s2dm", buf.opacity)
    write_map(out / "color.s2dm", buf.color)
    write_png(out / "color.png", buf.color)


def _cmd_synth(args) -> int:
    scene = load_scene(args.scene)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resolution = _parse_ints(args.volume_size, 3, "--volume-size")
    pano_h, pano_w = _parse_ints(args.pano_size, 2, "--pano-size")
    vol, sat_image, sat_cam = scene_assets(scene, resolution)
    cam = PanoramaCamera(position=(0.0, 0.0, args.camera_height),
                         image_size=(pano_h, pano_w), heading=0.0)
    oracle = oracle_ground_truth(scene, cam)
    pano = ground_view_image(scene, oracle)
    copypaste = render_panorama(vol, sat_image, sat_cam, cam, args.samples)

    write_png(out / "satellite.png", sat_image)
    write_volume(out / "volume.s2dv", vol)
    write_map(out / "depth.s2dm", oracle["depth"])
    write_map(out / "opacity.s2dm", oracle["opacity"])
    write_map(out / "color_hit.s2dm", oracle["color"])
    write_map(out / "color.s2dm", copypaste.color)
    write_map(out / "sky_mask.s2dm", oracle["sky_mask"].astype(np.float64))
    write_png(out / "panorama.png", pano)
    write_histogram(out / "sky_histogram.s2dh", sky_histogram(pano, oracle["sky_mask"]))
    return 0


def _cmd_fit(args) -> int:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg.fit.seed = args.seed
    out = Path(args.out) if args.out else cfg.output
    if out is None:
        raise DomainError("no output directory: pass --out or set 'output' in the config")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    scene = load_scene(cfg.scene_path)
    gt_vol, sat_image, _ = scene_assets(scene, cfg.resolution, cfg.sat_cam.image_size)
    observations = [
        build_observation(scene, gt_vol, sat_image, cfg.sat_cam, cam, cfg.targets,
                          cfg.fit.samples_per_ray)
        for cam in cfg.train_views
    ]
    result = fit_density(sat_image, cfg.sat_cam, cfg.frame, cfg.resolution, observations,
                         cfg.fit, cfg.ground_density)
    write_volume(out / "volume.s2dv", result.volume)
    with open(out / "loss_trace.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", *result.columns])
        for i, row in enumerate(result.trace):
            writer.writerow([i, *(f"{v:.17g}" for v in row)])
    for k, cam in enumerate(cfg.train_views):
        view_dir = out / f"train_view_{k}"
        view_dir.mkdir(exist_ok=True)
        _write_buffers(view_dir, render_panorama(result.volume, sat_image, cfg.sat_cam, cam,
                                                 cfg.fit.samples_per_ray))
    if cfg.heldout_views:
        heldout = [
            build_observation(scene, gt_vol, sat_image, cfg.sat_cam, cam, cfg.targets,
                              cfg.fit.samples_per_ray)
            for cam in cfg.heldout_views
        ]
        report = evaluate_fit(result.volume, sat_image, cfg.sat_cam, heldout,
                              cfg.fit.samples_per_ray)
        (out / "report.json").write_text(json.dumps(report, indent=2))
    return 0


def _parse_pose(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 4:
        raise DomainError(f"--pose expects e,n,u,heading, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as e:
        raise DomainError(f"--pose: {e}") from e


def _cmd_render(args) -> int:
    vol = read_volume(args.volume)
    sat_image = read_png(args.sat)
    sat_cam = _sat_cam_for(vol, sat_image)
    e, n, u, heading = _parse_pose(args.pose)
    h, w = _parse_ints(args.size, 2, "--size")
    cam = PanoramaCamera(position=(e, n, u), image_size=(h, w), heading=heading)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_buffers(out, render_panorama(vol, sat_image, sat_cam, cam, args.samples))
    return 0


def read_pose_csv(path) -> list[tuple]:
    """Parse a trajectory CSV with header frame,e,n,u,heading_rad."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError as e:
        raise DomainError(f"pose file not found: {path}") from e
    if not rows or rows[0] != POSE_COLUMNS:
        raise FormatError(f"{path}: first line must be '{','.join(POSE_COLUMNS)}'")
    poses = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 5:
            raise FormatError(f"{path}:{lineno}: expected 5 columns, got {len(row)}")
        try:
            poses.append((int(row[0]), float(row[1]), float(row[2]), float(row[3]),
                          float(row[4])))
        except ValueError as e:
            raise FormatError(f"{path}:{lineno}: {e}") from e
    if not poses:
        raise DomainError(f"{path}: pose file contains no poses")
    return poses


def _cmd_trajectory(args) -> int:
    vol = read_volume(args.volume)
    sat_image = read_png(args.sat)
    sat_cam = _sat_cam_for(vol, sat_image)
    h, w = _parse_ints(args.size, 2, "--size")
    poses = read_pose_csv(args.path)
    cams = [PanoramaCamera(position=(e, n, u), image_size=(h, w), heading=hd)
            for _, e, n, u, hd in poses]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frames = render_trajectory(vol, sat_image, sat_cam, cams, args.samples)
    for k, buf in enumerate(frames):
        write_png(out / f"frame_{k:04d}.png", buf.color)
        write_map(out / f"depth_{k:04d}.s2dm", buf.depth)
    return 0


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _cmd_eval(args) -> int:
    pred_dir = Path(args.pred)
    truth_dir = Path(args.truth)
    if not pred_dir.is_dir():
        raise DomainError(f"--pred directory does not exist: {pred_dir}")
    if not truth_dir.is_dir():
        raise DomainError(f"--truth directory does not exist: {truth_dir}")
    names = sorted(p.name for p in pred_dir.glob("*.s2dm") if (truth_dir / p.name).is_file())
    if not names:
        raise DomainError(f"no matching .s2dm files between {pred_dir} and {truth_dir}")
    files = {}
    for name in names:
        a = read_map(pred_dir / name)
        b = read_map(truth_dir / name)
        if a.shape != b.shape:
            raise DomainError(f"{name}: shape mismatch {a.shape} vs {b.shape}")
        rep = metric_report(a * 255.0, b * 255.0).to_dict()
        files[name] = {k: _json_safe(v) for k, v in rep.items() if not k.endswith("per_channel")}
    agg = {}
    for key in ("rmse", "psnr", "ssim", "sd"):
        vals = [v[key] for v in files.values() if v[key] is not None]
        agg[key] = float(np.mean(vals)) if vals else None
    report = {"files": files, "aggregate": agg}
    Path(args.report).write_text(json.dumps(report, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="satvox",
                                     description="Density-volume rendering and fitting tools")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        p.add_argument("--threads", type=int, default=None, help="worker pool size")

    p = sub.add_parser("synth", help="bake a scene and write its ground-truth assets")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--volume-size", default="256,256,65")
    p.add_argument("--pano-size", default="128,512")
    p.add_argument("--camera-height", type=float, default=2.0)
    p.add_argument("--samples", type=int, default=100)
    common(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("fit", help="fit a density volume per a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    common(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("render", help="render one panorama from a volume file")
    p.add_argument("--volume", required=True)
    p.add_argument("--sat", required=True)
    p.add_argument("--pose", required=True, help="e,n,u,heading")
    p.add_argument("--out", required=True)
    p.add_argument("--size", default="128,512")
    p.add_argument("--samples", type=int, default=100)
    common(p)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("trajectory", help="render numbered frames along a pose path")
    p.add_argument("--volume", required=True)
    p.add_argument("--sat", required=True)
    p.add_argument("--path", required=True, help="CSV with frame,e,n,u,heading_rad")
    p.add_argument("--out", required=True)
    p.add_argument("--size", default="128,512")
    p.add_argument("--samples", type=int, default=100)
    common(p)
    p.set_defaults(func=_cmd_trajectory)

    p = sub.add_parser("eval", help="metric report over matching map files")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--report", required=True)
    common(p)
    p.set_defaults(func=_cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _set_threads(args.threads)
        return args.func(args)
    except DomainError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FormatError as e:
        print(f"format error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
