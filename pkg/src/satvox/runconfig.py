"""Strictly parsed JSON run configuration for the fit pipeline.

Unknown keys anywhere in the document are hard errors so configs cannot
silently drift. Referenced paths (the scene file) must resolve at load time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .camera import PanoramaCamera, SatelliteCamera, WorldFrame
from .errors import DomainError, FormatError
from .optimize import FitConfig, softplus_inverse
from .supervise import LossWeights


@dataclass
class RunConfig:
    frame: WorldFrame
    sat_cam: SatelliteCamera
    pano_size: tuple[int, int]
    camera_height: float
    resolution: tuple[int, int, int]
    ground_density: float
    fit: FitConfig
    scene_path: Path
    train_views: list[PanoramaCamera]
    heldout_views: list[PanoramaCamera] = field(default_factory=list)
    targets: tuple = ("depth", "color")
    output: Path | None = None
    seed: int = 0


def _section(data: dict, name: str, allowed: dict, where: str) -> dict:
    """Pop section ``name`` and reject unknown keys; ``allowed`` maps key -> default."""
    sec = data.pop(name, {})
    if not isinstance(sec, dict):
        raise FormatError(f"{where}: section '{name}' must be an object")
    unknown = set(sec) - set(allowed)
    if unknown:
        raise FormatError(f"{where}: unknown keys {sorted(unknown)} in section '{name}'")
    return {k: sec.get(k, v) for k, v in allowed.items()}


def _views(entries, where: str, pano_size, default_height: float) -> list[PanoramaCamera]:
    cams = []
    for i, v in enumerate(entries):
        unknown = set(v) - {"e", "n", "u", "heading"}
        if unknown:
            raise FormatError(f"{where}: unknown keys {sorted(unknown)} in view {i}")
        cams.append(PanoramaCamera(
            position=(float(v.get("e", 0.0)), float(v.get("n", 0.0)),
                      float(v.get("u", default_height))),
            image_size=pano_size, heading=float(v.get("heading", 0.0))))
    return cams


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as e:
        raise DomainError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(data, dict):
        raise FormatError(f"{path}: config root must be an object")
    where = str(path)

    world = _section(data, "world", {"extent_e": 51.2, "extent_n": 51.2, "max_height": 8.0}, where)
    sat = _section(data, "satellite",
                   {"height": 256, "width": 256, "scale_north": None, "scale_east": None}, where)
    pano = _section(data, "panorama", {"height": 128, "width": 512, "camera_height": 2.0}, where)
    volume = _section(data, "volume", {"nx": 256, "ny": 256, "nz": 65, "ground_density": 1e3}, where)
    loss = _section(data, "loss", {"l1": 1.0, "l2": 10.0, "snop": 1.0, "smooth": 1e-2}, where)
    fit = _section(data, "fit", {"steps": 2000, "step_size": 5e-2, "beta1": 0.0, "beta2": 0.999,
                                 "epsilon": 1e-8, "samples_per_ray": 100, "rays_per_step": 32768,
                                 "init_density": 1e-2}, where)

    seed = data.pop("seed", 0)
    scene = data.pop("scene", None)
    output = data.pop("output", None)
    train_views = data.pop("train_views", None)
    heldout_views = data.pop("heldout_views", [])
    targets = data.pop("targets", ["depth", "color"])
    if data:
        raise FormatError(f"{where}: unknown top-level keys {sorted(data)}")
    if scene is None:
        raise FormatError(f"{where}: missing required key 'scene'")
    if not train_views:
        raise FormatError(f"{where}: missing or empty 'train_views'")
    bad_targets = set(targets) - {"depth", "opacity", "color"}
    if bad_targets:
        raise FormatError(f"{where}: unknown targets {sorted(bad_targets)}")

    frame = WorldFrame(float(world["extent_e"]), float(world["extent_n"]),
                       float(world["max_height"]))
    sat_h, sat_w = int(sat["height"]), int(sat["width"])
    sx = float(sat["scale_north"]) if sat["scale_north"] is not None else frame.extent_n / sat_h
    sy = float(sat["scale_east"]) if sat["scale_east"] is not None else frame.extent_e / sat_w
    sat_cam = SatelliteCamera(image_size=(sat_h, sat_w), scale=(sx, sy))
    pano_size = (int(pano["height"]), int(pano["width"]))
    cam_height = float(pano["camera_height"])

    fit_cfg = FitConfig(steps=int(fit["steps"]), step_size=float(fit["step_size"]),
                        beta1=float(fit["beta1"]), beta2=float(fit["beta2"]),
                        epsilon=float(fit["epsilon"]),
                        weights=LossWeights(l1=float(loss["l1"]), l2=float(loss["l2"]),
                                            snop=float(loss["snop"]), smooth=float(loss["smooth"])),
                        samples_per_ray=int(fit["samples_per_ray"]),
                        rays_per_step=int(fit["rays_per_step"]), seed=int(seed),
                        init_raw=softplus_inverse(float(fit["init_density"])))

    scene_path = Path(scene)
    if not scene_path.is_absolute():
        scene_path = path.parent / scene_path
    if not scene_path.is_file():
        raise DomainError(f"{where}: scene file does not exist: {scene_path}")

    return RunConfig(
        frame=frame, sat_cam=sat_cam, pano_size=pano_size, camera_height=cam_height,
        resolution=(int(volume["nx"]), int(volume["ny"]), int(volume["nz"])),
        ground_density=float(volume["ground_density"]), fit=fit_cfg, scene_path=scene_path,
        train_views=_views(train_views, where, pano_size, cam_height),
        heldout_views=_views(heldout_views, where, pano_size, cam_height),
        targets=tuple(targets), output=Path(output) if output else None, seed=int(seed),
    )
