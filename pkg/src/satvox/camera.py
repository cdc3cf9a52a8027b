"""World frame and camera models.

Coordinates are metric (east, north, up) with the origin at ground level
directly beneath the satellite image center. Vectors are stored as
``[e, n, u]`` arrays; the basis is right-handed (e x n = u).

Two cameras are modeled:

* ``SatelliteCamera`` -- an overhead parallel projection that maps world
  (e, n) linearly to fractional pixels and ignores height. Image top is
  north, pixel centers sit at +0.5.
* ``PanoramaCamera`` -- a 360x180 equirectangular camera. Pixel columns map
  linearly to azimuth and rows to zenith angle; the central column faces the
  compass ``heading`` (0 = north, increasing clockwise toward east).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class WorldFrame:
    """Axis-aligned world cube: the satellite footprint up to ``max_height``.

    The cube is ``[-extent_e/2, extent_e/2) x [-extent_n/2, extent_n/2) x
    [0, max_height)`` (half-open per axis). Density is zero outside it.
    """

    extent_e: float = 51.2
    extent_n: float = 51.2
    max_height: float = 8.0

    def __post_init__(self):
        for name in ("extent_e", "extent_n", "max_height"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"WorldFrame.{name} must be positive and finite, got {v!r}")

    @property
    def lo(self) -> np.ndarray:
        return np.array([-self.extent_e / 2, -self.extent_n / 2, 0.0])

    @property
    def hi(self) -> np.ndarray:
        return np.array([self.extent_e / 2, self.extent_n / 2, self.max_height])

    def contains(self, p) -> np.ndarray:
        """Half-open membership test for points of shape (..., 3)."""
        p = np.asarray(p, dtype=np.float64)
        return np.all((p >= self.lo) & (p < self.hi), axis=-1)


@dataclass(frozen=True)
class SatelliteCamera:
    """Parallel-projection overhead camera.

    ``image_size`` is (H, W) pixels; ``scale`` is (S_x, S_y) in meters per
    pixel along north resp. east. The world origin projects to (H/2, W/2).
    """

    image_size: tuple[int, int] = (256, 256)
    scale: tuple[float, float] = (0.2, 0.2)

    def __post_init__(self):
        h, w = self.image_size
        if h < 1 or w < 1:
            raise DomainError(f"satellite image_size must be positive, got {self.image_size}")
        sx, sy = self.scale
        if not (sx > 0 and sy > 0 and math.isfinite(sx) and math.isfinite(sy)):
            raise DomainError(f"satellite scale must be positive and finite, got {self.scale}")


@dataclass(frozen=True)
class PanoramaCamera:
    """Equirectangular ground camera at ``position`` = (e, n, u) meters.

    ``heading`` (radians) is the compass azimuth faced by the central pixel
    column; it is normalized into [0, 2*pi).
    """

    position: tuple[float, float, float] = (0.0, 0.0, 2.0)
    image_size: tuple[int, int] = (128, 512)
    heading: float = 0.0

    def __post_init__(self):
        if len(self.position) != 3 or not all(math.isfinite(c) for c in self.position):
            raise DomainError(f"camera position must be 3 finite floats, got {self.position!r}")
        h, w = self.image_size
        if h < 1 or w < 1:
            raise DomainError(f"panorama image_size must be positive, got {self.image_size}")
        if not math.isfinite(self.heading):
            raise DomainError("camera heading must be finite")
        object.__setattr__(self, "heading", float(self.heading) % TWO_PI)


@dataclass(frozen=True, eq=False)
class Ray:
    """A world ray with unit direction and cube-clipped march bounds."""

    origin: np.ndarray
    direction: np.ndarray
    t_near: float
    t_far: float

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64)
        d = np.asarray(self.direction, dtype=np.float64)
        if o.shape != (3,) or d.shape != (3,):
            raise DomainError("ray origin/direction must be 3-vectors")
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise DomainError(f"ray direction must be unit length, |d| = {np.linalg.norm(d)}")
        if not (0.0 <= self.t_near <= self.t_far):
            raise DomainError(f"require 0 <= t_near <= t_far, got ({self.t_near}, {self.t_far})")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)


def world_to_satellite_pixel(cam: SatelliteCamera, p):
    """Project world points (..., 3) to fractional (row, col) satellite pixels.

    row = H/2 - n/S_x, col = W/2 + e/S_y; height is ignored. Pure linear map,
    points outside the footprint are allowed.
    """
    p = np.asarray(p, dtype=np.float64)
    h, w = cam.image_size
    sx, sy = cam.scale
    row = h / 2.0 - p[..., 1] / sx
    col = w / 2.0 + p[..., 0] / sy
    return row, col


def _panorama_directions(cam: PanoramaCamera, x, y):
    """Unit view directions for fractional pixel coords (evaluated at +0.5 centers).

    Zenith phi = pi*(y+0.5)/h (0 = straight up); compass azimuth
    a = theta - pi + heading with theta = 2*pi*(x+0.5)/w, so the central
    column faces ``heading``. x wraps modulo w (azimuth is periodic); y must
    lie in [0, h).
    """
    h, w = cam.image_size
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("pixel coordinates must be finite")
    if np.any(y < 0) or np.any(y >= h):
        raise DomainError(f"pixel row out of bounds [0, {h})")
    x = np.mod(x, w)
    phi = np.pi * (y + 0.5) / h
    azim = TWO_PI * (x + 0.5) / w - np.pi + cam.heading
    sin_phi = np.sin(phi)
    d = np.stack(
        [sin_phi * np.sin(azim), sin_phi * np.cos(azim), np.cos(phi) * np.ones_like(azim)],
        axis=-1,
    )
    return d


def clip_to_frame(frame: WorldFrame, origins, directions):
    """Slab-clip rays against the world cube.

    Returns (t_near, t_far) per ray. Rays that never enter the cube get
    (0, 0); t_near is clamped to 0 (marching starts at the camera).
    """
    o = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    d = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    lo, hi = frame.lo, frame.hi
    t0 = np.full(o.shape[0], -np.inf)
    t1 = np.full(o.shape[0], np.inf)
    for ax in range(3):
        da, oa = d[:, ax], o[:, ax]
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (lo[ax] - oa) / da
            tb = (hi[ax] - oa) / da
        near = np.minimum(ta, tb)
        far = np.maximum(ta, tb)
        parallel = da == 0.0
        if np.any(parallel):
            inside = (oa >= lo[ax]) & (oa < hi[ax])
            near = np.where(parallel, np.where(inside, -np.inf, np.inf), near)
            far = np.where(parallel, np.where(inside, np.inf, -np.inf), far)
        t0 = np.maximum(t0, near)
        t1 = np.minimum(t1, far)
    t0 = np.maximum(t0, 0.0)
    miss = ~(t1 > t0)
    t0 = np.where(miss, 0.0, t0)
    t1 = np.where(miss, 0.0, t1)
    return t0, t1


def panorama_pixel_to_ray(cam: PanoramaCamera, frame: WorldFrame, x: float, y: float) -> Ray:
    """Build the world ray through panorama pixel (x, y).

    Fractional coordinates are allowed and refer to pixel centers at +0.5.
    """
    d = _panorama_directions(cam, np.array([x]), np.array([y]))[0]
    o = np.array(cam.position, dtype=np.float64)
    tn, tf = clip_to_frame(frame, o[None, :], d[None, :])
    return Ray(origin=o, direction=d, t_near=float(tn[0]), t_far=float(tf[0]))


def panorama_ray_arrays(cam: PanoramaCamera, frame: WorldFrame):
    """Vectorized ray bundle for the full pixel grid, row-major.

    Returns (origins (N,3), directions (N,3), t_near (N,), t_far (N,)) with
    N = h*w; entry y*w + x matches ``panorama_pixel_to_ray(cam, frame, x, y)``.
    """
    h, w = cam.image_size
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    d = _panorama_directions(cam, xs.ravel(), ys.ravel())
    o = np.broadcast_to(np.array(cam.position, dtype=np.float64), d.shape).copy()
    tn, tf = clip_to_frame(frame, o, d)
    return o, d, tn, tf


def panorama_ray_grid(cam: PanoramaCamera, frame: WorldFrame) -> list[Ray]:
    """All h*w pixel rays in row-major order (y*w + x)."""
    o, d, tn, tf = panorama_ray_arrays(cam, frame)
    return [
        Ray(origin=o[i], direction=d[i], t_near=float(tn[i]), t_far=float(tf[i]))
        for i in range(o.shape[0])
    ]
