"""Procedural ground-truth scenes and a brute-force analytic oracle.

Scenes are a textured ground plane plus axis-aligned boxes and vertical
cylinders sitting on it. ``bake_scene`` rasterizes occupancy into a density
grid (1e3 inside solids); ``oracle_ground_truth`` renders exact ray-primitive
intersections with no marching, giving independent depth/opacity/color/sky
targets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .camera import (PanoramaCamera, SatelliteCamera, WorldFrame,
                     panorama_ray_arrays)
from .errors import DomainError, FormatError
from .volume import DensityVolume

SOLID_DENSITY = 1e3
_EPS = 1e-9


@dataclass(frozen=True)
class SolidGround:
    color: tuple = (0.5, 0.5, 0.5)


@dataclass(frozen=True)
class CheckerGround:
    size: float = 3.2
    color_a: tuple = (0.35, 0.35, 0.35)
    color_b: tuple = (0.65, 0.65, 0.65)


@dataclass(frozen=True)
class Box:
    center_e: float
    center_n: float
    size_e: float
    size_n: float
    height: float
    albedo: tuple


@dataclass(frozen=True)
class Cylinder:
    center_e: float
    center_n: float
    radius: float
    height: float
    albedo: tuple


@dataclass
class SceneSpec:
    extent_e: float = 51.2
    extent_n: float = 51.2
    max_height: float = 8.0
    ground: SolidGround | CheckerGround = field(default_factory=SolidGround)
    primitives: list = field(default_factory=list)
    sky_color: tuple = (0.55, 0.75, 0.95)
    seed: int = 0

    def __post_init__(self):
        self.frame  # validates extents
        for p in self.primitives:
            if p.height <= 0 or p.height > self.max_height:
                raise DomainError(f"primitive height {p.height} outside (0, {self.max_height}]")
            if isinstance(p, Box):
                if p.size_e <= 0 or p.size_n <= 0:
                    raise DomainError("box sizes must be positive")
                if (abs(p.center_e) + p.size_e / 2 > self.extent_e / 2
                        or abs(p.center_n) + p.size_n / 2 > self.extent_n / 2):
                    raise DomainError(f"box at ({p.center_e}, {p.center_n}) exceeds the footprint")
            elif isinstance(p, Cylinder):
                if p.radius <= 0:
                    raise DomainError("cylinder radius must be positive")
                if (abs(p.center_e) + p.radius > self.extent_e / 2
                        or abs(p.center_n) + p.radius > self.extent_n / 2):
                    raise DomainError(f"cylinder at ({p.center_e}, {p.center_n}) exceeds the footprint")
            else:
                raise DomainError(f"unknown primitive type {type(p).__name__}")

    @property
    def frame(self) -> WorldFrame:
        return WorldFrame(self.extent_e, self.extent_n, self.max_height)


def ground_albedo(spec: SceneSpec, e, n) -> np.ndarray:
    """Ground texture color at world (e, n); shapes broadcast."""
    e = np.asarray(e, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if isinstance(spec.ground, SolidGround):
        out = np.empty(np.broadcast(e, n).shape + (3,))
        out[:] = spec.ground.color
        return out
    g = spec.ground
    parity = (np.floor(e / g.size) + np.floor(n / g.size)).astype(np.int64) % 2
    out = np.where(parity[..., None] == 0, np.asarray(g.color_a), np.asarray(g.color_b))
    return out.astype(np.float64)


def _occupancy(prim, e, n):
    if isinstance(prim, Box):
        return (np.abs(e - prim.center_e) <= prim.size_e / 2) & (
            np.abs(n - prim.center_n) <= prim.size_n / 2)
    return (e - prim.center_e) ** 2 + (n - prim.center_n) ** 2 <= prim.radius**2


def top_albedo(spec: SceneSpec, e, n) -> np.ndarray:
    """Overhead surface color: the tallest occupier's albedo, else ground."""
    e = np.asarray(e, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    color = ground_albedo(spec, e, n)
    best = np.zeros(np.broadcast(e, n).shape)
    for prim in spec.primitives:
        inside = _occupancy(prim, e, n) & (prim.height > best)
        best = np.where(inside, prim.height, best)
        color = np.where(inside[..., None], np.asarray(prim.albedo, dtype=np.float64), color)
    return color


def bake_scene(spec: SceneSpec, resolution=(256, 256, 65)):
    """Rasterize occupancy at grid nodes into a ground-truth DensityVolume.

    Nodes inside any primitive (union semantics) or on the ground layer store
    1e3; everything else is 0. Returns (volume, albedo field callable).
    """
    frame = spec.frame
    nx, ny, nz = resolution
    vol = DensityVolume.zeros(frame, resolution)
    n_ax, e_ax, u_ax = vol.node_coordinates()
    nn, ee = np.meshgrid(n_ax, e_ax, indexing="ij")  # (nx, ny): axis 0 north, axis 1 east
    occupied_height = np.zeros((nx, ny))
    for prim in spec.primitives:
        inside = _occupancy(prim, ee, nn)
        occupied_height = np.where(inside, np.maximum(occupied_height, prim.height), occupied_height)
    grid = np.where(u_ax[None, None, :] <= occupied_height[:, :, None], SOLID_DENSITY, 0.0)
    grid[:, :, 0] = SOLID_DENSITY  # ground slab
    vol.grid = np.ascontiguousarray(grid)

    def albedo_field(e, n):
        return top_albedo(spec, e, n)

    return vol, albedo_field


def render_satellite(spec: SceneSpec, sat_cam: SatelliteCamera) -> np.ndarray:
    """Orthographic overhead image: per-pixel top-surface albedo, no shading."""
    h, w = sat_cam.image_size
    sx, sy = sat_cam.scale
    rows = np.arange(h) + 0.5
    cols = np.arange(w) + 0.5
    n = (h / 2.0 - rows) * sx
    e = (cols - w / 2.0) * sy
    ee, nn = np.meshgrid(e, n)
    return top_albedo(spec, ee, nn)


def _ray_ground(spec, o, d):
    """Distance to the ground plane inside the footprint, inf on miss."""
    down = d[:, 2] < -_EPS
    t = np.where(down, -o[:, 2] / np.where(down, d[:, 2], -1.0), np.inf)
    t_eval = np.where(down, t, 0.0)
    he = o[:, 0] + t_eval * d[:, 0]
    hn = o[:, 1] + t_eval * d[:, 1]
    ok = down & (t > _EPS) & (np.abs(he) < spec.extent_e / 2) & (np.abs(hn) < spec.extent_n / 2)
    return np.where(ok, t, np.inf)


def _ray_box(prim: Box, o, d):
    lo = np.array([prim.center_e - prim.size_e / 2, prim.center_n - prim.size_n / 2, 0.0])
    hi = np.array([prim.center_e + prim.size_e / 2, prim.center_n + prim.size_n / 2, prim.height])
    t0 = np.full(o.shape[0], -np.inf)
    t1 = np.full(o.shape[0], np.inf)
    for ax in range(3):
        da, oa = d[:, ax], o[:, ax]
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (lo[ax] - oa) / da
            tb = (hi[ax] - oa) / da
        near = np.minimum(ta, tb)
        far = np.maximum(ta, tb)
        parallel = np.abs(da) <= _EPS
        if np.any(parallel):
            inside = (oa >= lo[ax]) & (oa <= hi[ax])
            near = np.where(parallel, np.where(inside, -np.inf, np.inf), near)
            far = np.where(parallel, np.where(inside, np.inf, -np.inf), far)
        t0 = np.maximum(t0, near)
        t1 = np.minimum(t1, far)
    hit = (t1 >= t0) & (t0 > _EPS)
    return np.where(hit, t0, np.inf)


def _ray_cylinder(prim: Cylinder, o, d):
    oe = o[:, 0] - prim.center_e
    on = o[:, 1] - prim.center_n
    de, dn = d[:, 0], d[:, 1]
    a = de * de + dn * dn
    b = 2.0 * (oe * de + on * dn)
    c = oe * oe + on * on - prim.radius**2
    disc = b * b - 4.0 * a * c
    t_side = np.full(o.shape[0], np.inf)
    ok = (disc >= 0) & (a > _EPS)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    for sign in (-1.0, 1.0):
        t = np.where(ok, (-b + sign * sq) / (2.0 * np.where(ok, a, 1.0)), np.inf)
        z = o[:, 2] + t * d[:, 2]
        good = ok & (t > _EPS) & (z >= 0.0) & (z <= prim.height)
        t_side = np.where(good & (t < t_side), t, t_side)
    # top cap
    moving = np.abs(d[:, 2]) > _EPS
    t_cap = np.where(moving, (prim.height - o[:, 2]) / np.where(moving, d[:, 2], 1.0), np.inf)
    t_eval = np.where(np.isfinite(t_cap), t_cap, 0.0)
    he = o[:, 0] + t_eval * d[:, 0]
    hn = o[:, 1] + t_eval * d[:, 1]
    good = moving & (t_cap > _EPS) & np.isfinite(t_cap) & (
        (he - prim.center_e) ** 2 + (hn - prim.center_n) ** 2 <= prim.radius**2)
    t_cap = np.where(good, t_cap, np.inf)
    return np.minimum(t_side, t_cap)


def oracle_ground_truth(spec: SceneSpec, pano_cam: PanoramaCamera) -> dict:
    """Exact nearest-hit render: {depth, opacity, color, sky_mask} maps.

    Depth is the Euclidean hit distance (0 on sky), opacity is binary, color
    is the hit surface's albedo (a primitive's single albedo on any of its
    faces), and sky_mask marks no-hit pixels. Assumes the camera is outside
    all primitives.
    """
    h, w = pano_cam.image_size
    o, d, _, _ = panorama_ray_arrays(pano_cam, spec.frame)
    best_t = _ray_ground(spec, o, d)
    ground_hit = np.isfinite(best_t)
    color = np.zeros((h * w, 3))
    if np.any(ground_hit):
        he = o[ground_hit, 0] + best_t[ground_hit] * d[ground_hit, 0]
        hn = o[ground_hit, 1] + best_t[ground_hit] * d[ground_hit, 1]
        color[ground_hit] = ground_albedo(spec, he, hn)
    for prim in spec.primitives:
        t = _ray_box(prim, o, d) if isinstance(prim, Box) else _ray_cylinder(prim, o, d)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        color[closer] = np.asarray(prim.albedo, dtype=np.float64)
    hit = np.isfinite(best_t)
    depth = np.where(hit, best_t, 0.0).reshape(h, w)
    opacity = hit.astype(np.float64).reshape(h, w)
    sky_mask = (~hit).reshape(h, w)
    return {
        "depth": depth,
        "opacity": opacity,
        "color": color.reshape(h, w, 3),
        "sky_mask": sky_mask,
    }


def ground_view_image(spec: SceneSpec, oracle: dict) -> np.ndarray:
    """Oracle hit colors with the scene's sky color filled on sky pixels."""
    img = oracle["color"].copy()
    img[oracle["sky_mask"]] = np.asarray(spec.sky_color, dtype=np.float64)
    return img


# ---------------------------------------------------------------------------
# JSON serialization and the bundled benchmark gallery

def scene_to_dict(spec: SceneSpec) -> dict:
    if isinstance(spec.ground, SolidGround):
        ground = {"type": "solid", "color": list(spec.ground.color)}
    else:
        ground = {"type": "checker", "size": spec.ground.size,
                  "color_a": list(spec.ground.color_a), "color_b": list(spec.ground.color_b)}
    prims = []
    for p in spec.primitives:
        if isinstance(p, Box):
            prims.append({"type": "box", "center_e": p.center_e, "center_n": p.center_n,
                          "size_e": p.size_e, "size_n": p.size_n, "height": p.height,
                          "albedo": list(p.albedo)})
        else:
            prims.append({"type": "cylinder", "center_e": p.center_e, "center_n": p.center_n,
                          "radius": p.radius, "height": p.height, "albedo": list(p.albedo)})
    return {"extent_e": spec.extent_e, "extent_n": spec.extent_n, "max_height": spec.max_height,
            "ground": ground, "primitives": prims, "sky_color": list(spec.sky_color),
            "seed": spec.seed}


def _require_keys(d: dict, allowed: set, required: set, where: str):
    unknown = set(d) - allowed
    if unknown:
        raise FormatError(f"unknown keys {sorted(unknown)} in {where}")
    missing = required - set(d)
    if missing:
        raise FormatError(f"missing keys {sorted(missing)} in {where}")


def scene_from_dict(data: dict, where: str = "scene") -> SceneSpec:
    _require_keys(data, {"extent_e", "extent_n", "max_height", "ground", "primitives",
                         "sky_color", "seed"}, {"ground", "primitives"}, where)
    g = data["ground"]
    if g.get("type") == "solid":
        _require_keys(g, {"type", "color"}, {"type", "color"}, f"{where}.ground")
        ground = SolidGround(color=tuple(g["color"]))
    elif g.get("type") == "checker":
        _require_keys(g, {"type", "size", "color_a", "color_b"}, {"type", "size"}, f"{where}.ground")
        ground = CheckerGround(size=float(g["size"]),
                               color_a=tuple(g.get("color_a", (0.35, 0.35, 0.35))),
                               color_b=tuple(g.get("color_b", (0.65, 0.65, 0.65))))
    else:
        raise FormatError(f"{where}.ground.type must be 'solid' or 'checker'")
    prims = []
    for i, p in enumerate(data["primitives"]):
        kind = p.get("type")
        ctx = f"{where}.primitives[{i}]"
        if kind == "box":
            _require_keys(p, {"type", "center_e", "center_n", "size_e", "size_n", "height",
                              "albedo"}, {"type", "center_e", "center_n", "size_e", "size_n",
                                          "height", "albedo"}, ctx)
            prims.append(Box(p["center_e"], p["center_n"], p["size_e"], p["size_n"],
                             p["height"], tuple(p["albedo"])))
        elif kind == "cylinder":
            _require_keys(p, {"type", "center_e", "center_n", "radius", "height", "albedo"},
                          {"type", "center_e", "center_n", "radius", "height", "albedo"}, ctx)
            prims.append(Cylinder(p["center_e"], p["center_n"], p["radius"], p["height"],
                                  tuple(p["albedo"])))
        else:
            raise FormatError(f"{ctx}.type must be 'box' or 'cylinder'")
    return SceneSpec(extent_e=float(data.get("extent_e", 51.2)),
                     extent_n=float(data.get("extent_n", 51.2)),
                     max_height=float(data.get("max_height", 8.0)),
                     ground=ground, primitives=prims,
                     sky_color=tuple(data.get("sky_color", (0.55, 0.75, 0.95))),
                     seed=int(data.get("seed", 0)))


def load_scene(path) -> SceneSpec:
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid JSON in scene file {path}: {e}") from e
    return scene_from_dict(data, where=str(path))


def list_bundled_scenes() -> list[str]:
    names = []
    for entry in resources.files("satvox.scenes").iterdir():
        if entry.name.endswith(".json"):
            names.append(entry.name[:-5])
    return sorted(names)


def load_bundled_scene(name: str) -> SceneSpec:
    ref = resources.files("satvox.scenes").joinpath(f"{name}.json")
    if not ref.is_file():
        raise DomainError(f"no bundled scene named {name!r}; have {list_bundled_scenes()}")
    return scene_from_dict(json.loads(ref.read_text()), where=f"bundled scene {name}")
