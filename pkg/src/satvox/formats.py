"""Bit-exact persistence formats.

S2DV (volume): magic "S2DV", u32 version=1, u32 Nx, Ny, Nz, f32 extent_e,
extent_n, max_height, ground_density, then Nx*Ny*Nz little-endian f32 values
x-major with z fastest (C order of the (Nx, Ny, Nz) grid). 36-byte header.

S2DM (map): magic "S2DM", u32 version=1, u32 h, w, channels, little-endian
f32 row-major. 20-byte header.

S2DH (histogram): 8-byte magic "S2DH\\0\\0\\0\\0", then 270 little-endian f32
(90 R bins, 90 G, 90 B).

PNG is used only for human-viewable color exports ([0,1] clamped, 8-bit).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .camera import WorldFrame
from .errors import FormatError
from .volume import DensityVolume

VOLUME_MAGIC = b"S2DV"
MAP_MAGIC = b"S2DM"
HIST_MAGIC = b"S2DH\x00\x00\x00\x00"
VERSION = 1

_VOL_HEADER = struct.Struct("<4sIIIIffff")
_MAP_HEADER = struct.Struct("<4sIIII")


def _read_exact(f, n: int, path, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise FormatError(f"{path}: truncated {what}: expected {n} bytes, missing {n - len(data)}")
    return data


def write_volume(path, vol: DensityVolume) -> None:
    nx, ny, nz = vol.grid.shape
    f = vol.frame
    header = _VOL_HEADER.pack(VOLUME_MAGIC, VERSION, nx, ny, nz,
                              f.extent_e, f.extent_n, f.max_height, vol.ground_density)
    payload = np.ascontiguousarray(vol.grid, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_volume(path) -> DensityVolume:
    with open(path, "rb") as fh:
        raw = _read_exact(fh, _VOL_HEADER.size, path, "volume header")
        magic, version, nx, ny, nz, ee, en, mh, gd = _VOL_HEADER.unpack(raw)
        if magic != VOLUME_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r} at offset 0, expected {VOLUME_MAGIC!r}")
        if version != VERSION:
            raise FormatError(f"{path}: unsupported volume version {version} at offset 4")
        count = nx * ny * nz
        payload = _read_exact(fh, 4 * count, path, "volume payload")
        extra = fh.read(1)
        if extra:
            raise FormatError(f"{path}: trailing bytes after volume payload")
    grid = np.frombuffer(payload, dtype="<f4").reshape(nx, ny, nz).astype(np.float64)
    return DensityVolume(grid, WorldFrame(float(ee), float(en), float(mh)), float(gd))


def write_map(path, arr: np.ndarray) -> None:
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 2:
        a = a[..., None]
    if a.ndim != 3:
        raise FormatError(f"map must be (h, w) or (h, w, c), got shape {a.shape}")
    h, w, c = a.shape
    header = _MAP_HEADER.pack(MAP_MAGIC, VERSION, h, w, c)
    Path(path).write_bytes(header + np.ascontiguousarray(a, dtype="<f4").tobytes())


def read_map(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = _read_exact(fh, _MAP_HEADER.size, path, "map header")
        magic, version, h, w, c = _MAP_HEADER.unpack(raw)
        if magic != MAP_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r} at offset 0, expected {MAP_MAGIC!r}")
        if version != VERSION:
            raise FormatError(f"{path}: unsupported map version {version} at offset 4")
        payload = _read_exact(fh, 4 * h * w * c, path, "map payload")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after map payload")
    arr = np.frombuffer(payload, dtype="<f4").reshape(h, w, c).astype(np.float64)
    return arr[..., 0] if c == 1 else arr


def write_histogram(path, hist: np.ndarray) -> None:
    h = np.asarray(hist, dtype=np.float64)
    if h.shape != (3, 90):
        raise FormatError(f"histogram must be (3, 90), got {h.shape}")
    Path(path).write_bytes(HIST_MAGIC + np.ascontiguousarray(h, dtype="<f4").tobytes())


def read_histogram(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 8, path, "histogram magic")
        if magic != HIST_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r} at offset 0")
        payload = _read_exact(fh, 4 * 270, path, "histogram payload")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after histogram payload")
    return np.frombuffer(payload, dtype="<f4").reshape(3, 90).astype(np.float64)


def write_png(path, image: np.ndarray) -> None:
    """Export a [0,1] color or gray image as 8-bit PNG (clamped, scaled)."""
    a = np.asarray(image, dtype=np.float64)
    q = (np.clip(a, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(q).save(Path(path))


def read_png(path) -> np.ndarray:
    """Load a PNG as float64 in [0, 1] (RGB kept as (h, w, 3))."""
    try:
        img = Image.open(Path(path))
    except (FileNotFoundError, OSError) as e:
        raise FormatError(f"{path}: cannot read PNG: {e}") from e
    arr = np.asarray(img.convert("RGB") if img.mode not in ("L", "RGB") else img)
    return arr.astype(np.float64) / 255.0
