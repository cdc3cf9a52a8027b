"""Loss terms and illumination descriptors.

The non-sky opacity loss pushes rendered opacity to 1 on non-sky pixels and
0 on sky pixels. Each region's absolute-error sum is normalized by its pixel
count so the published weight stays meaningful across image sizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DomainError
from .volume import DensityVolume

HISTOGRAM_BINS = 90


@dataclass(frozen=True)
class LossWeights:
    """Non-negative term weights; l1/l2/snop follow the training recipe's
    1 / 10 / 1, smoothness is an artifact knob."""

    l1: float = 1.0
    l2: float = 10.0
    snop: float = 1.0
    smooth: float = 1e-2

    def __post_init__(self):
        for name in ("l1", "l2", "snop", "smooth"):
            if getattr(self, name) < 0:
                raise DomainError(f"loss weight {name} must be >= 0")


def _check_mask(mask: np.ndarray, shape) -> np.ndarray:
    m = np.asarray(mask)
    if m.dtype != bool:
        raise DomainError("sky mask must be boolean")
    if m.shape != tuple(shape):
        raise DomainError(f"sky mask shape {m.shape} does not match {tuple(shape)}")
    return m


def snop_loss(opacity: np.ndarray, sky_mask: np.ndarray):
    """Non-sky opacity supervision: mean |O - 1| over non-sky plus mean |O|
    over sky. Returns (loss, per-pixel subgradient), 0 at the kinks. Empty
    regions contribute 0."""
    opacity = np.asarray(opacity, dtype=np.float64)
    mask = _check_mask(sky_mask, opacity.shape)
    grad = np.zeros_like(opacity)
    loss = 0.0
    nonsky = ~mask
    n_nonsky = int(nonsky.sum())
    n_sky = int(mask.sum())
    if n_nonsky:
        r = opacity[nonsky] - 1.0
        loss += float(np.abs(r).mean())
        grad[nonsky] = np.sign(r) / n_nonsky
    if n_sky:
        r = opacity[mask]
        loss += float(np.abs(r).mean())
        grad[mask] = np.sign(r) / n_sky
    return loss, grad


def recon_loss(pred, targets: Mapping[str, np.ndarray], weights: LossWeights,
               mask: np.ndarray | None = None):
    """L1 + L2 reconstruction over the provided target channels.

    ``pred`` is a RenderBuffers-like object with depth/opacity/color
    attributes. ``mask`` (True = supervised pixel) restricts every channel,
    e.g. to non-sky pixels. Returns (total, adjoint buffers, per-term dict);
    adjoints are exact derivatives of the total w.r.t. each prediction.
    """
    if not targets:
        raise DomainError("recon_loss requires at least one target channel")
    unknown = set(targets) - {"depth", "opacity", "color"}
    if unknown:
        raise DomainError(f"unknown recon target channels: {sorted(unknown)}")
    total = 0.0
    adjoints: dict[str, np.ndarray] = {}
    terms: dict[str, float] = {}
    for name, tgt in targets.items():
        p = np.asarray(getattr(pred, name), dtype=np.float64)
        t = np.asarray(tgt, dtype=np.float64)
        if p.shape != t.shape:
            raise DomainError(f"{name} target shape {t.shape} does not match prediction {p.shape}")
        diff = p - t
        if mask is not None:
            m = _check_mask(mask, p.shape[:2])
            sel = m if p.ndim == 2 else m[..., None] & np.ones(p.shape, dtype=bool)
        else:
            sel = np.ones(p.shape, dtype=bool)
        count = int(sel.sum())
        adj = np.zeros_like(p)
        if count:
            d = diff[sel]
            l1 = weights.l1 * float(np.abs(d).mean())
            l2 = weights.l2 * float((d * d).mean())
            adj[sel] = (weights.l1 * np.sign(d) + 2.0 * weights.l2 * d) / count
        else:
            l1 = l2 = 0.0
        terms[f"{name}_l1"] = l1
        terms[f"{name}_l2"] = l2
        total += l1 + l2
        adjoints[name] = adj
    return total, adjoints, terms


def smoothness_loss(vol: DensityVolume, w_smooth: float):
    """Mean squared forward difference along each grid axis, excluding every
    difference that touches the pinned z = 0 layer. Returns (loss, per-node
    gradient with a zero layer 0)."""
    g = vol.grid[:, :, 1:]
    grad = np.zeros_like(vol.grid)
    if w_smooth == 0.0:
        return 0.0, grad
    loss = 0.0
    inner = grad[:, :, 1:]
    d0 = g[1:, :, :] - g[:-1, :, :]
    if d0.size:
        loss += float((d0 * d0).mean())
        scale = 2.0 * w_smooth / d0.size
        inner[1:, :, :] += scale * d0
        inner[:-1, :, :] -= scale * d0
    d1 = g[:, 1:, :] - g[:, :-1, :]
    if d1.size:
        loss += float((d1 * d1).mean())
        scale = 2.0 * w_smooth / d1.size
        inner[:, 1:, :] += scale * d1
        inner[:, :-1, :] -= scale * d1
    d2 = g[:, :, 1:] - g[:, :, :-1]
    if d2.size:
        loss += float((d2 * d2).mean())
        scale = 2.0 * w_smooth / d2.size
        inner[:, :, 1:] += scale * d2
        inner[:, :, :-1] -= scale * d2
    return w_smooth * loss, grad


def sky_histogram(image: np.ndarray, sky_mask: np.ndarray, bins: int = HISTOGRAM_BINS) -> np.ndarray:
    """Per-channel histogram of sky-region colors, normalized to sum 1.

    ``image`` is (h, w, 3) in [0, 1]; bin index = min(floor(v * bins),
    bins - 1), so v = 1.0 lands in the last bin. Raises on an empty sky
    region (all-ground panoramas must be handled by the caller).
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DomainError(f"image must be (h, w, 3), got {img.shape}")
    mask = _check_mask(sky_mask, img.shape[:2])
    n_sky = int(mask.sum())
    if n_sky == 0:
        raise DomainError("sky region is empty; cannot build a sky histogram")
    vals = img[mask]
    idx = np.clip(np.floor(vals * bins).astype(np.int64), 0, bins - 1)
    hist = np.empty((3, bins))
    for c in range(3):
        hist[c] = np.bincount(idx[:, c], minlength=bins) / n_sky
    return hist
