"""Explicit density grid with trilinear point queries.

The grid has shape (N_x, N_y, N_z): axis 0 follows satellite rows (north
decreasing), axis 1 satellite columns (east increasing), axis 2 height.
Node (i, j, k) sits at

    n = (N_x/2 - i - 0.5) * extent_n / N_x
    e = (j + 0.5 - N_y/2) * extent_e / N_y
    u = k * max_height / (N_z - 1)

i.e. horizontally on the satellite pixel-center lattice and vertically on
N_z evenly spaced layers from the ground plane to ``max_height``.

Two corner rules apply at read time: points outside the world cube have
density exactly 0, and layer k = 0 always reads back ``ground_density``
(solid ground) regardless of the stored values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import WorldFrame
from .errors import DomainError

DEFAULT_RESOLUTION = (256, 256, 65)
DEFAULT_GROUND_DENSITY = 1e3


@dataclass
class DensityVolume:
    grid: np.ndarray
    frame: WorldFrame = field(default_factory=WorldFrame)
    ground_density: float = DEFAULT_GROUND_DENSITY

    def __post_init__(self):
        g = np.ascontiguousarray(np.asarray(self.grid, dtype=np.float64))
        if g.ndim != 3 or min(g.shape) < 2:
            raise DomainError(f"grid must be 3-D with at least 2 nodes per axis, got {g.shape}")
        if not np.all(np.isfinite(g)) or np.any(g < 0):
            raise DomainError("grid values must be finite and non-negative")
        if not (np.isfinite(self.ground_density) and self.ground_density >= 0):
            raise DomainError(f"ground_density must be finite and >= 0, got {self.ground_density}")
        self.grid = g

    @classmethod
    def zeros(cls, frame: WorldFrame | None = None, resolution=DEFAULT_RESOLUTION,
              ground_density: float = DEFAULT_GROUND_DENSITY) -> "DensityVolume":
        return cls(np.zeros(resolution), frame or WorldFrame(), ground_density)

    @property
    def resolution(self) -> tuple[int, int, int]:
        return self.grid.shape

    def node_coordinates(self):
        """Per-axis node positions: (n of axis 0, e of axis 1, u of axis 2)."""
        nx, ny, nz = self.grid.shape
        f = self.frame
        n = (nx / 2 - np.arange(nx) - 0.5) * (f.extent_n / nx)
        e = (np.arange(ny) + 0.5 - ny / 2) * (f.extent_e / ny)
        u = np.arange(nz) * (f.max_height / (nz - 1))
        return n, e, u

    def continuous_index(self, p):
        """Fractional grid indices (fi, fj, fk) of world points (..., 3)."""
        nx, ny, nz = self.grid.shape
        f = self.frame
        p = np.asarray(p, dtype=np.float64)
        fi = nx / 2 - p[..., 1] / (f.extent_n / nx) - 0.5
        fj = p[..., 0] / (f.extent_e / ny) + ny / 2 - 0.5
        fk = p[..., 2] * (nz - 1) / f.max_height
        return fi, fj, fk


def _corner_setup(vol: DensityVolume, p):
    """Clamped base indices and fractions for trilinear interpolation."""
    nx, ny, nz = vol.grid.shape
    fi, fj, fk = vol.continuous_index(p)

    def split(fc, n):
        i0 = np.floor(fc).astype(np.int64)
        t = fc - i0
        below = i0 < 0
        above = i0 > n - 2
        i0 = np.clip(i0, 0, n - 2)
        t = np.where(below, 0.0, np.where(above, 1.0, t))
        return i0, t

    i0, ti = split(fi, nx)
    j0, tj = split(fj, ny)
    k0, tk = split(fk, nz)
    return i0, j0, k0, ti, tj, tk


def sample_density(vol: DensityVolume, p):
    """Density at world points; exactly 0 outside the cube, trilinear inside.

    Accepts a single (3,) point (returns float) or (..., 3) (returns array).
    Layer-0 nodes contribute ``ground_density`` to the blend.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] != 3:
        raise DomainError(f"points must have shape (..., 3), got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise DomainError("points must be finite")
    single = p.ndim == 1
    q = np.atleast_2d(p)
    inside = vol.frame.contains(q)
    out = np.zeros(q.shape[0])
    if np.any(inside):
        qi = q[inside]
        i0, j0, k0, ti, tj, tk = _corner_setup(vol, qi)
        acc = np.zeros(qi.shape[0])
        for a in (0, 1):
            wi = ti if a else 1.0 - ti
            for b in (0, 1):
                wj = tj if b else 1.0 - tj
                for c in (0, 1):
                    wk = tk if c else 1.0 - tk
                    kk = k0 + c
                    val = vol.grid[i0 + a, j0 + b, kk]
                    val = np.where(kk == 0, vol.ground_density, val)
                    acc += wi * wj * wk * val
        out[inside] = acc
    return float(out[0]) if single else out.reshape(p.shape[:-1])


def sample_density_gradient(vol: DensityVolume, p):
    """Partial derivatives of ``sample_density`` w.r.t. the touched nodes.

    Returns (indices (m, 3) int64, weights (m,)) for the up-to-8 corner nodes
    of a single interior point. Pinned layer-0 nodes are reported with weight
    0 (their value never changes the read). Points outside the cube return
    empty arrays.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (3,):
        raise DomainError(f"expected a single (3,) point, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise DomainError("point must be finite")
    if not vol.frame.contains(p):
        return np.empty((0, 3), dtype=np.int64), np.empty(0)
    i0, j0, k0, ti, tj, tk = _corner_setup(vol, p[None, :])
    idx = []
    wts = []
    for a in (0, 1):
        wi = ti[0] if a else 1.0 - ti[0]
        for b in (0, 1):
            wj = tj[0] if b else 1.0 - tj[0]
            for c in (0, 1):
                wk = tk[0] if c else 1.0 - tk[0]
                node = (int(i0[0]) + a, int(j0[0]) + b, int(k0[0]) + c)
                w = wi * wj * wk
                idx.append(node)
                wts.append(0.0 if node[2] == 0 else w)
    return np.array(idx, dtype=np.int64), np.array(wts)
