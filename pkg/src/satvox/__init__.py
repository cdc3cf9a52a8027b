"""satvox: explicit-density volume rendering and per-scene density fitting
from paired overhead and ground-level views.

The package fits a non-negative density grid over a satellite footprint so
that volumetric renderings reproduce ground-view depth, opacity and
copy-paste color, and renders consistent panorama sequences along camera
trajectories.
"""

from .camera import (PanoramaCamera, Ray, SatelliteCamera, WorldFrame,
                     panorama_pixel_to_ray, panorama_ray_grid, world_to_satellite_pixel)
from .errors import DomainError, FormatError
from .metrics import MetricReport, metric_report, rmse_psnr, sharpness_difference, ssim
from .optimize import FitConfig, FitResult, Observation, evaluate_fit, fit_density
from .render import (RayMarchSamples, RenderBuffers, composite, copy_paste_color,
                     march_ray, render_gradients, render_panorama, render_trajectory)
from .supervise import (LossWeights, recon_loss, sky_histogram, smoothness_loss,
                        snop_loss)
from .synth import (Box, CheckerGround, Cylinder, SceneSpec, SolidGround, bake_scene,
                    list_bundled_scenes, load_bundled_scene, load_scene,
                    oracle_ground_truth, render_satellite)
from .volume import DensityVolume, sample_density, sample_density_gradient

__version__ = "0.1.0"

__all__ = [
    "Box", "CheckerGround", "Cylinder", "DensityVolume", "DomainError", "FitConfig",
    "FitResult", "FormatError", "LossWeights", "MetricReport", "Observation",
    "PanoramaCamera", "Ray", "RayMarchSamples", "RenderBuffers", "SatelliteCamera",
    "SceneSpec", "SolidGround", "WorldFrame", "bake_scene", "composite",
    "copy_paste_color", "evaluate_fit", "fit_density", "list_bundled_scenes",
    "load_bundled_scene", "load_scene", "march_ray", "metric_report",
    "oracle_ground_truth", "panorama_pixel_to_ray", "panorama_ray_grid",
    "recon_loss", "render_gradients", "render_panorama", "render_satellite",
    "render_trajectory", "rmse_psnr", "sample_density", "sample_density_gradient",
    "sharpness_difference", "sky_histogram", "smoothness_loss", "snop_loss", "ssim",
    "world_to_satellite_pixel",
]
