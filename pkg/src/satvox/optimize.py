"""Per-scene density fitting by adaptive-moment gradient descent.

The density grid is parameterized as sigma = softplus(raw) so non-negativity
needs no projection; pinned ground-layer nodes receive zero gradient and are
never updated. Each step renders a (possibly subsampled) ray batch forward,
forms loss adjoints, runs the analytic adjoint back to the raw parameters and
applies a bias-corrected moment update (beta1 = 0, beta2 = 0.999 by default).

Ray subsampling draws from a counter-based Philox stream keyed on
(seed, step), so runs are reproducible regardless of worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import SimpleNamespace
from typing import Mapping, Sequence

import numpy as np

from .camera import PanoramaCamera, SatelliteCamera, WorldFrame, panorama_ray_arrays
from .errors import DomainError
from .metrics import metric_report
from .render import (_check_render_inputs, backward_scatter, forward_store,
                     render_panorama)
from .supervise import LossWeights, recon_loss, smoothness_loss, snop_loss
from .volume import DensityVolume

TRACE_COLUMNS = ("total", "snop", "depth_l1", "depth_l2", "opacity_l1", "opacity_l2",
                 "color_l1", "color_l2", "smooth")

DEFAULT_INIT_DENSITY = 1e-2


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def softplus_inverse(y: float) -> float:
    if y <= 0:
        raise DomainError("softplus inverse requires y > 0")
    return float(np.log(np.expm1(y)))


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class FitConfig:
    steps: int = 2000
    step_size: float = 5e-2
    beta1: float = 0.0
    beta2: float = 0.999
    epsilon: float = 1e-8
    weights: LossWeights = field(default_factory=LossWeights)
    samples_per_ray: int = 100
    rays_per_step: int = 32768
    seed: int = 0
    init_raw: float = field(default_factory=lambda: softplus_inverse(DEFAULT_INIT_DENSITY))

    def __post_init__(self):
        if self.steps < 0:
            raise DomainError("steps must be >= 0")
        if self.step_size <= 0:
            raise DomainError("step_size must be positive")
        for b in (self.beta1, self.beta2):
            if not 0.0 <= b < 1.0:
                raise DomainError("moment decays must lie in [0, 1)")
        if self.samples_per_ray < 1 or self.rays_per_step < 1:
            raise DomainError("samples_per_ray and rays_per_step must be >= 1")


@dataclass
class Observation:
    """One ground view: camera, optional sky mask, optional target maps."""

    pano_cam: PanoramaCamera
    sky_mask: np.ndarray | None = None
    targets: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        h, w = self.pano_cam.image_size
        if self.sky_mask is not None:
            m = np.asarray(self.sky_mask)
            if m.dtype != bool or m.shape != (h, w):
                raise DomainError(f"sky mask must be boolean of shape {(h, w)}")
            # single-class masks are legal here; training-pair loaders enforce
            # that both regions are present (see pipeline.build_observation)
            self.sky_mask = m
        unknown = set(self.targets) - {"depth", "opacity", "color"}
        if unknown:
            raise DomainError(f"unknown observation targets: {sorted(unknown)}")
        checked = {}
        for name, tgt in self.targets.items():
            want = (h, w, 3) if name == "color" else (h, w)
            t = np.asarray(tgt, dtype=np.float64)
            if t.shape != want:
                raise DomainError(f"{name} target shape {t.shape} != {want}")
            checked[name] = t
        self.targets = checked
        if not self.targets and self.sky_mask is None:
            raise DomainError("observation needs targets or a sky mask")


@dataclass
class FitResult:
    volume: DensityVolume
    trace: np.ndarray  # (steps, len(TRACE_COLUMNS))
    columns: tuple = TRACE_COLUMNS


class _RayBank:
    """Flattened rays, masks and targets pooled over all observations."""

    def __init__(self, frame: WorldFrame, observations: Sequence[Observation]):
        origins, dirs, tns, tfs = [], [], [], []
        sky, has_sky = [], []
        tgt = {k: [] for k in ("depth", "opacity", "color")}
        has = {k: [] for k in ("depth", "opacity", "color")}
        for obs in observations:
            o, d, tn, tf = panorama_ray_arrays(obs.pano_cam, frame)
            n = o.shape[0]
            origins.append(o)
            dirs.append(d)
            tns.append(tn)
            tfs.append(tf)
            masked = obs.sky_mask is not None
            sky.append(obs.sky_mask.reshape(n) if masked else np.zeros(n, dtype=bool))
            has_sky.append(np.full(n, masked))
            for k in tgt:
                present = k in obs.targets
                shape = (n, 3) if k == "color" else (n,)
                tgt[k].append(obs.targets[k].reshape(shape) if present else np.zeros(shape))
                has[k].append(np.full(n, present))
        self.origins = np.ascontiguousarray(np.concatenate(origins))
        self.dirs = np.ascontiguousarray(np.concatenate(dirs))
        self.t_near = np.concatenate(tns)
        self.t_far = np.concatenate(tfs)
        self.sky = np.concatenate(sky)
        self.has_sky = np.concatenate(has_sky)
        self.targets = {k: np.concatenate(v) for k, v in tgt.items()}
        self.has = {k: np.concatenate(v) for k, v in has.items()}
        self.size = self.origins.shape[0]


def _step_rays(bank: _RayBank, cfg: FitConfig, step: int) -> np.ndarray:
    if bank.size <= cfg.rays_per_step:
        return np.arange(bank.size)
    key = np.array([np.uint64(cfg.seed & 0xFFFFFFFFFFFFFFFF), np.uint64(step)], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return np.sort(gen.choice(bank.size, size=cfg.rays_per_step, replace=False))


def _batch_losses(depth, opac, color, sel, bank: _RayBank, weights: LossWeights):
    """Loss terms and per-ray adjoints for one sampled batch."""
    terms = dict.fromkeys(TRACE_COLUMNS, 0.0)
    g_opac = np.zeros_like(opac)
    g_depth = np.zeros_like(depth)
    g_color = np.zeros_like(color)

    sky = bank.sky[sel]
    has_sky = bank.has_sky[sel]
    if weights.snop > 0 and has_sky.any():
        loss, grad = snop_loss(opac[has_sky], sky[has_sky])
        terms["snop"] = weights.snop * loss
        g_opac[has_sky] += weights.snop * grad

    # recon channels, masked to non-sky wherever a sky mask exists
    supervised = ~(sky & has_sky)
    grads = {"depth": g_depth, "opacity": g_opac, "color": g_color}
    preds = {"depth": depth, "opacity": opac, "color": color}
    if weights.l1 > 0 or weights.l2 > 0:
        for name in ("depth", "opacity", "color"):
            use = bank.has[name][sel] & supervised
            if not use.any():
                continue
            p = preds[name][use]
            t = bank.targets[name][sel][use]
            _, adj, sub = recon_loss(SimpleNamespace(**{name: p}), {name: t}, weights)
            terms[f"{name}_l1"] = sub[f"{name}_l1"]
            terms[f"{name}_l2"] = sub[f"{name}_l2"]
            grads[name][use] += adj[name]
    return terms, g_opac, g_depth, g_color


def fit_density(sat_image: np.ndarray, sat_cam: SatelliteCamera, frame: WorldFrame,
                resolution: tuple, observations: Sequence[Observation],
                cfg: FitConfig | None = None,
                ground_density: float = 1e3) -> FitResult:
    """Fit a density volume to posed ground observations of one satellite tile.

    Fully deterministic given the config seed. Raises DomainError with the
    step index if the loss turns non-finite.
    """
    cfg = cfg or FitConfig()
    if not observations:
        raise DomainError("fit_density requires at least one observation")
    sat = _check_render_inputs(sat_image, sat_cam, cfg.samples_per_ray)
    raw = np.full(resolution, cfg.init_raw)
    m = np.zeros(resolution)
    v = np.zeros(resolution)
    bank = _RayBank(frame, observations)
    trace = np.zeros((cfg.steps, len(TRACE_COLUMNS)))
    staging: dict = {}
    s = cfg.samples_per_ray
    for step in range(cfg.steps):
        grid = softplus(raw)
        vol = DensityVolume(grid, frame, ground_density)
        sel = _step_rays(bank, cfg, step)
        o = np.ascontiguousarray(bank.origins[sel])
        d = np.ascontiguousarray(bank.dirs[sel])
        tn = bank.t_near[sel]
        tf = bank.t_far[sel]
        depth, opac, color = forward_store(vol, sat, sat_cam, o, d, tn, tf, s, staging)
        terms, g_opac, g_depth, g_color = _batch_losses(depth, opac, color, sel, bank, cfg.weights)
        grad_grid = backward_scatter(vol, o, d, tn, tf, s, g_opac, g_depth, g_color, staging)

        smooth_val, smooth_grad = smoothness_loss(vol, cfg.weights.smooth)
        grad_grid += smooth_grad
        terms["smooth"] = smooth_val
        for idx, name in enumerate(TRACE_COLUMNS):
            trace[step, idx] = terms[name]
        total = float(trace[step, 1:].sum())
        trace[step, 0] = total
        if not math.isfinite(total):
            raise DomainError(f"loss diverged (non-finite) at step {step}")

        g = grad_grid * _sigmoid(raw)
        g[:, :, 0] = 0.0
        t = step + 1
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        m_hat = m / (1.0 - cfg.beta1**t)
        v_hat = v / (1.0 - cfg.beta2**t)
        raw -= cfg.step_size * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return FitResult(volume=DensityVolume(softplus(raw), frame, ground_density), trace=trace)


def _channel_metrics(name: str, pred255: np.ndarray, tgt255: np.ndarray) -> dict:
    """rmse/psnr/ssim/sd for one channel on the 0-255 scale."""
    rep = metric_report(pred255, tgt255)
    out = {f"{name}_rmse": rep.rmse, f"{name}_psnr": rep.psnr, f"{name}_sd": rep.sd}
    if math.isfinite(rep.ssim):
        out[f"{name}_ssim"] = rep.ssim
    return out


def evaluate_fit(vol: DensityVolume, sat_image: np.ndarray, sat_cam: SatelliteCamera,
                 heldout: Sequence[Observation], samples_per_ray: int = 100) -> dict:
    """Per-view and aggregate metrics on held-out observations.

    Every target channel gets rmse/psnr/ssim/sd on the 0-255 scale, with
    depth first normalized by the footprint diagonal. ``depth_rmse`` is in
    meters over non-sky pixels when the view has a mask (``depth_rmse_all``
    is the unmasked variant). Sky / non-sky mean opacities are included
    whenever a view carries a mask; SSIM is omitted for views smaller than
    its window.
    """
    if not heldout:
        raise DomainError("evaluate_fit requires at least one held-out observation")
    diag = math.hypot(vol.frame.extent_e, vol.frame.extent_n)
    views = []
    for i, obs in enumerate(heldout):
        if not obs.targets:
            raise DomainError(f"held-out observation {i} has no targets")
        buf = render_panorama(vol, sat_image, sat_cam, obs.pano_cam, samples_per_ray)
        view: dict = {}
        mask = obs.sky_mask
        if "depth" in obs.targets:
            tgt = obs.targets["depth"]
            view.update(_channel_metrics("depth", buf.depth * (255.0 / diag),
                                         tgt * (255.0 / diag)))
            diff = buf.depth - tgt
            view["depth_rmse_all"] = float(np.sqrt((diff**2).mean()))
            view["depth_rmse"] = (float(np.sqrt((diff[~mask] ** 2).mean()))
                                  if mask is not None else view["depth_rmse_all"])
        if "color" in obs.targets:
            view.update(_channel_metrics("color", buf.color * 255.0,
                                         obs.targets["color"] * 255.0))
        if "opacity" in obs.targets:
            view.update(_channel_metrics("opacity", buf.opacity * 255.0,
                                         obs.targets["opacity"] * 255.0))
        if mask is not None:
            view["mean_sky_opacity"] = float(buf.opacity[mask].mean())
            view["mean_nonsky_opacity"] = float(buf.opacity[~mask].mean())
        views.append(view)
    keys = sorted({k for v in views for k in v})
    aggregate = {k: float(np.mean([v[k] for v in views if k in v])) for k in keys}
    return {"views": views, "aggregate": aggregate}
