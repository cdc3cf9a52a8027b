"""Glue between the synthetic scenes and the fitting pipeline.

Supervision targets for the direct fit are the analytic oracle's depth and
opacity plus the copy-paste color of the ground-truth volume (the albedo hit
color cannot be represented by copy-paste rendering, so it is emitted as a
separately labeled map instead of being used as the fit target).
"""

from __future__ import annotations

import numpy as np

from .camera import PanoramaCamera, SatelliteCamera
from .errors import DomainError
from .optimize import Observation
from .render import render_panorama
from .synth import SceneSpec, bake_scene, oracle_ground_truth, render_satellite
from .volume import DensityVolume


def scene_assets(scene: SceneSpec, resolution=(256, 256, 65),
                 sat_size: tuple[int, int] | None = None):
    """Bake a scene and render its satellite image.

    Returns (gt_volume, sat_image, sat_cam). The satellite scale is derived
    from the footprint so the volume and image stay aligned.
    """
    h, w = sat_size or (256, 256)
    sat_cam = SatelliteCamera(image_size=(h, w),
                              scale=(scene.extent_n / h, scene.extent_e / w))
    vol, _ = bake_scene(scene, resolution)
    sat_image = render_satellite(scene, sat_cam)
    return vol, sat_image, sat_cam


def build_observation(scene: SceneSpec, gt_vol: DensityVolume, sat_image: np.ndarray,
                      sat_cam: SatelliteCamera, cam: PanoramaCamera,
                      targets=("depth", "color"), samples_per_ray: int = 100) -> Observation:
    """Oracle-supervised observation for one ground camera.

    depth/opacity targets come from the analytic oracle (depth 0 on sky);
    the color target is the copy-paste render of the ground-truth volume.
    """
    oracle = oracle_ground_truth(scene, cam)
    mask = oracle["sky_mask"]
    if not (mask.any() and (~mask).any()):
        raise DomainError(
            f"training view at {cam.position} lacks a sky or non-sky region")
    maps: dict[str, np.ndarray] = {}
    if "depth" in targets:
        maps["depth"] = oracle["depth"]
    if "opacity" in targets:
        maps["opacity"] = oracle["opacity"]
    if "color" in targets:
        buf = render_panorama(gt_vol, sat_image, sat_cam, cam, samples_per_ray)
        maps["color"] = buf.color
    return Observation(pano_cam=cam, sky_mask=mask, targets=maps)
