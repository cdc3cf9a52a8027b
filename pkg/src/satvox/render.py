"""Forward volumetric rendering and its analytic adjoint.

Per ray, S uniform midpoint samples t_i = t_near + (i - 0.5) * delta with
delta = (t_far - t_near) / S are composited as

    alpha_i = 1 - exp(-sigma_i * delta_i)
    T_i     = prod_{j<i} (1 - alpha_j)        (accumulated in log space)
    depth   = sum_i T_i alpha_i t_i           (raw, not normalized)
    opacity = 1 - prod_i (1 - alpha_i)
    color   = sum_i T_i alpha_i c_i           (c_i bilinear from the satellite)

Depth is reported raw; ``RenderBuffers.expected_depth`` exposes the
opacity-normalized variant for visualization only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import _kernels
from .camera import (PanoramaCamera, Ray, SatelliteCamera, panorama_ray_arrays,
                     world_to_satellite_pixel)
from .errors import DomainError
from .volume import DensityVolume, sample_density

DEFAULT_SAMPLES_PER_RAY = 100


@dataclass
class RayMarchSamples:
    """Per-ray sampled densities and segment geometry. ``t`` doubles as the
    camera distance (directions are unit length)."""

    t: np.ndarray
    delta: np.ndarray
    sigma: np.ndarray
    points: np.ndarray

    @property
    def count(self) -> int:
        return self.t.shape[0]

    @property
    def distance(self) -> np.ndarray:
        return self.t


@dataclass
class RenderBuffers:
    depth: np.ndarray
    opacity: np.ndarray
    color: np.ndarray
    weights: np.ndarray | None = None

    def expected_depth(self, floor: float = 1e-3) -> np.ndarray:
        """depth / opacity where opacity exceeds ``floor`` (visualization only)."""
        safe = np.where(self.opacity > floor, self.opacity, 1.0)
        return np.where(self.opacity > floor, self.depth / safe, 0.0)


def march_ray(vol: DensityVolume, ray: Ray, count: int = DEFAULT_SAMPLES_PER_RAY) -> RayMarchSamples:
    """Sample the volume at S uniform midpoints of [t_near, t_far].

    Degenerate rays (t_near == t_far) return S samples with delta = 0 and
    sigma = 0.
    """
    if count < 1:
        raise DomainError(f"sample count must be >= 1, got {count}")
    span = ray.t_far - ray.t_near
    if span <= 0.0:
        t = np.full(count, ray.t_near)
        points = np.broadcast_to(ray.origin, (count, 3)).copy()
        return RayMarchSamples(t=t, delta=np.zeros(count), sigma=np.zeros(count), points=points)
    delta = span / count
    t = ray.t_near + (np.arange(count) + 0.5) * delta
    points = ray.origin[None, :] + t[:, None] * ray.direction[None, :]
    sigma = sample_density(vol, points)
    return RayMarchSamples(t=t, delta=np.full(count, delta), sigma=sigma, points=points)


def composite(samples: RayMarchSamples):
    """Alpha-composite one ray; returns (depth, opacity, weights)."""
    sigma = np.asarray(samples.sigma, dtype=np.float64)
    delta = np.asarray(samples.delta, dtype=np.float64)
    if sigma.shape != delta.shape:
        raise DomainError("sigma/delta length mismatch")
    if np.any(sigma < 0) or np.any(delta < 0):
        raise DomainError("sigma and delta must be non-negative")
    x = sigma * delta
    alpha = -np.expm1(-x)
    tau = np.concatenate([[0.0], np.cumsum(x)])
    transmittance = np.exp(-tau[:-1])
    weights = transmittance * alpha
    opacity = float(-np.expm1(-tau[-1]))
    depth = float(np.dot(weights, samples.t))
    return depth, opacity, weights


def bilinear_sample(image: np.ndarray, rows, cols) -> np.ndarray:
    """Edge-clamped bilinear lookup in an (H, W, C) image at fractional
    (row, col) pixel coordinates (+0.5 centers)."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[:2]
    u = np.clip(np.asarray(rows, dtype=np.float64) - 0.5, 0.0, h - 1.0)
    v = np.clip(np.asarray(cols, dtype=np.float64) - 0.5, 0.0, w - 1.0)
    i0 = np.minimum(u.astype(np.int64), h - 2)
    j0 = np.minimum(v.astype(np.int64), w - 2)
    du = (u - i0)[..., None]
    dv = (v - j0)[..., None]
    c00 = img[i0, j0]
    c01 = img[i0, j0 + 1]
    c10 = img[i0 + 1, j0]
    c11 = img[i0 + 1, j0 + 1]
    return (1 - du) * (1 - dv) * c00 + (1 - du) * dv * c01 + du * (1 - dv) * c10 + du * dv * c11


def copy_paste_color(samples: RayMarchSamples, weights: np.ndarray,
                     sat_image: np.ndarray, sat_cam: SatelliteCamera) -> np.ndarray:
    """Copy-paste color of one ray: weights dotted with satellite colors
    bilinearly sampled at each sample's horizontal position."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape[0] != samples.count:
        raise DomainError(
            f"sample/weight length mismatch: {samples.count} vs {weights.shape[0]}")
    rows, cols = world_to_satellite_pixel(sat_cam, samples.points)
    colors = bilinear_sample(sat_image, rows, cols)
    return weights @ colors


def _check_render_inputs(sat_image: np.ndarray, sat_cam: SatelliteCamera,
                         samples_per_ray: int) -> np.ndarray:
    if samples_per_ray < 1:
        raise DomainError(f"samples_per_ray must be >= 1, got {samples_per_ray}")
    sat = np.ascontiguousarray(np.asarray(sat_image, dtype=np.float64))
    if sat.ndim != 3 or sat.shape[2] != 3 or sat.shape[0] < 2 or sat.shape[1] < 2:
        raise DomainError(f"satellite image must be (H>=2, W>=2, 3), got {sat.shape}")
    if sat.shape[:2] != tuple(sat_cam.image_size):
        raise DomainError(
            f"satellite image shape {sat.shape[:2]} does not match camera {sat_cam.image_size}")
    if not np.all(np.isfinite(sat)):
        raise DomainError("satellite image must be finite")
    return sat


def render_rays(vol: DensityVolume, sat_image: np.ndarray, sat_cam: SatelliteCamera,
                origins, dirs, t_near, t_far, samples_per_ray: int,
                return_weights: bool = False):
    """Render an arbitrary ray bundle; returns flat (depth, opacity, color[, weights])."""
    sat = _check_render_inputs(sat_image, sat_cam, samples_per_ray)
    o = np.ascontiguousarray(origins, dtype=np.float64)
    d = np.ascontiguousarray(dirs, dtype=np.float64)
    tn = np.ascontiguousarray(t_near, dtype=np.float64)
    tf = np.ascontiguousarray(t_far, dtype=np.float64)
    n = o.shape[0]
    depth = np.empty(n)
    opac = np.empty(n)
    color = np.empty((n, 3))
    if return_weights:
        wout = np.empty((n, samples_per_ray))
    else:
        wout = np.empty((1, 1))
    f = vol.frame
    _kernels.k_render(vol.grid, vol.ground_density, f.extent_e, f.extent_n, f.max_height,
                      o, d, tn, tf, samples_per_ray, sat, sat_cam.scale[0], sat_cam.scale[1],
                      depth, opac, color, wout, return_weights)
    if return_weights:
        return depth, opac, color, wout
    return depth, opac, color


def render_panorama(vol: DensityVolume, sat_image: np.ndarray, sat_cam: SatelliteCamera,
                    pano_cam: PanoramaCamera, samples_per_ray: int = DEFAULT_SAMPLES_PER_RAY,
                    return_weights: bool = False) -> RenderBuffers:
    """Render depth, opacity and copy-paste color for every panorama pixel.

    Deterministic: identical inputs give bitwise-identical buffers regardless
    of the worker count (each ray writes only its own outputs).
    """
    h, w = pano_cam.image_size
    o, d, tn, tf = panorama_ray_arrays(pano_cam, vol.frame)
    out = render_rays(vol, sat_image, sat_cam, o, d, tn, tf, samples_per_ray,
                      return_weights=return_weights)
    depth, opac, color = out[:3]
    weights = out[3].reshape(h, w, samples_per_ray) if return_weights else None
    return RenderBuffers(depth=depth.reshape(h, w), opacity=opac.reshape(h, w),
                         color=color.reshape(h, w, 3), weights=weights)


def render_gradients(vol: DensityVolume, sat_image: np.ndarray, sat_cam: SatelliteCamera,
                     pano_cam: PanoramaCamera, samples_per_ray: int,
                     adjoint: Mapping[str, np.ndarray]) -> np.ndarray:
    """Reverse-mode dLoss/dgrid for per-pixel output adjoints.

    ``adjoint`` maps any subset of {"depth", "opacity", "color"} to buffers of
    the render's shape. Returns a grid-shaped gradient; pinned layer-0 nodes
    are identically zero. Per-sample staging costs O(rays * S) memory.
    """
    h, w = pano_cam.image_size
    n = h * w
    g_depth = np.zeros(n)
    g_opac = np.zeros(n)
    g_color = np.zeros((n, 3))
    known = {"depth", "opacity", "color"}
    unknown = set(adjoint) - known
    if unknown:
        raise DomainError(f"unknown adjoint buffers: {sorted(unknown)}")
    if not adjoint:
        raise DomainError("at least one adjoint buffer is required")
    if "depth" in adjoint:
        a = np.asarray(adjoint["depth"], dtype=np.float64)
        if a.shape != (h, w):
            raise DomainError(f"depth adjoint shape {a.shape} != {(h, w)}")
        g_depth = a.reshape(n).copy()
    if "opacity" in adjoint:
        a = np.asarray(adjoint["opacity"], dtype=np.float64)
        if a.shape != (h, w):
            raise DomainError(f"opacity adjoint shape {a.shape} != {(h, w)}")
        g_opac = a.reshape(n).copy()
    if "color" in adjoint:
        a = np.asarray(adjoint["color"], dtype=np.float64)
        if a.shape != (h, w, 3):
            raise DomainError(f"color adjoint shape {a.shape} != {(h, w, 3)}")
        g_color = a.reshape(n, 3).copy()
    o, d, tn, tf = panorama_ray_arrays(pano_cam, vol.frame)
    return adjoint_rays(vol, sat_image, sat_cam, o, d, tn, tf, samples_per_ray,
                        g_opac, g_depth, g_color)[0]


def ensure_staging(staging: dict, n: int, s: int) -> dict:
    """(Re)allocate the per-sample adjoint staging arrays for an (n, s) bundle."""
    if staging.get("shape") != (n, s):
        staging.clear()
        staging["shape"] = (n, s)
        staging["w"] = np.empty((n, s))
        staging["tnext"] = np.empty((n, s))
        staging["csamp"] = np.empty((n, s, 3))
        staging["dsig"] = np.empty((n, s))
    return staging


def forward_store(vol: DensityVolume, sat: np.ndarray, sat_cam: SatelliteCamera,
                  o, d, tn, tf, samples_per_ray: int, staging: dict):
    """Forward render of a ray bundle that also stages the per-sample state
    (weights, transmittance, satellite colors) needed by backward_scatter.
    Inputs must already be contiguous float64; returns (depth, opacity, color)."""
    n = o.shape[0]
    ensure_staging(staging, n, samples_per_ray)
    depth = np.empty(n)
    opac = np.empty(n)
    color = np.empty((n, 3))
    f = vol.frame
    _kernels.k_render_store(vol.grid, vol.ground_density, f.extent_e, f.extent_n, f.max_height,
                            o, d, tn, tf, samples_per_ray, sat,
                            sat_cam.scale[0], sat_cam.scale[1],
                            depth, opac, color, staging["w"], staging["tnext"], staging["csamp"])
    return depth, opac, color


def backward_scatter(vol: DensityVolume, o, d, tn, tf, samples_per_ray: int,
                     g_opac, g_depth, g_color, staging: dict) -> np.ndarray:
    """Adjoint scan plus node scatter for a bundle previously run through
    ``forward_store`` with the same staging. The scatter runs serially in ray
    order, so the gradient is bitwise independent of the worker count."""
    _kernels.k_adjoint(tn, tf, samples_per_ray, staging["w"], staging["tnext"],
                       staging["csamp"],
                       np.ascontiguousarray(g_opac, dtype=np.float64),
                       np.ascontiguousarray(g_depth, dtype=np.float64),
                       np.ascontiguousarray(g_color, dtype=np.float64),
                       staging["dsig"])
    grad = np.zeros(vol.grid.shape)
    f = vol.frame
    _kernels.k_scatter(o, d, tn, tf, samples_per_ray, staging["dsig"],
                       f.extent_e, f.extent_n, f.max_height, grad)
    return grad


def adjoint_rays(vol: DensityVolume, sat_image: np.ndarray, sat_cam: SatelliteCamera,
                 origins, dirs, t_near, t_far, samples_per_ray: int,
                 g_opac, g_depth, g_color, staging: dict | None = None):
    """Gradient of an arbitrary ray bundle given per-ray output adjoints.

    Returns (grid_gradient, forward buffers (depth, opacity, color)).
    ``staging`` may carry reusable per-sample arrays between calls.
    """
    sat = _check_render_inputs(sat_image, sat_cam, samples_per_ray)
    o = np.ascontiguousarray(origins, dtype=np.float64)
    d = np.ascontiguousarray(dirs, dtype=np.float64)
    tn = np.ascontiguousarray(t_near, dtype=np.float64)
    tf = np.ascontiguousarray(t_far, dtype=np.float64)
    staging = {} if staging is None else staging
    buffers = forward_store(vol, sat, sat_cam, o, d, tn, tf, samples_per_ray, staging)
    grad = backward_scatter(vol, o, d, tn, tf, samples_per_ray,
                            g_opac, g_depth, g_color, staging)
    return grad, buffers


def render_trajectory(vol: DensityVolume, sat_image: np.ndarray, sat_cam: SatelliteCamera,
                      path: Sequence[PanoramaCamera],
                      samples_per_ray: int = DEFAULT_SAMPLES_PER_RAY) -> list[RenderBuffers]:
    """Render one panorama per pose; frames are independent."""
    if len(path) == 0:
        raise DomainError("trajectory path must contain at least one pose")
    return [render_panorama(vol, sat_image, sat_cam, cam, samples_per_ray) for cam in path]
