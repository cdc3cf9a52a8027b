"""Image similarity metrics on the 0-255 scale: RMSE, PSNR, SSIM, and
sharpness difference (gradient-difference PSNR)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError

PSNR_CAP = 99.0
# rmse below this renders as >= 99 dB
_RMSE_FLOOR = 255.0 * 10.0 ** (-PSNR_CAP / 20.0)


@dataclass
class MetricReport:
    rmse: float
    psnr: float
    ssim: float
    sd: float
    rmse_per_channel: tuple = ()
    ssim_per_channel: tuple = ()

    def to_dict(self) -> dict:
        return asdict(self)


def _check_pair(a, b, min_dim: int = 1):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DomainError(f"image shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    if a.ndim != 3:
        raise DomainError(f"images must be (h, w) or (h, w, c), got {a.shape}")
    if min(a.shape[0], a.shape[1]) < min_dim:
        raise DomainError(f"images smaller than required minimum dimension {min_dim}")
    return a, b


def rmse_psnr(a, b):
    """Root-mean-square error and 255-peak PSNR, capped at 99 dB."""
    a, b = _check_pair(a, b)
    rmse = float(np.sqrt(np.mean((a - b) ** 2)))
    if rmse < _RMSE_FLOOR:
        psnr = PSNR_CAP
    else:
        psnr = min(PSNR_CAP, 20.0 * math.log10(255.0 / rmse))
    return rmse, psnr


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    k = np.outer(g, g)
    return k / k.sum()


def _windowed_mean(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # valid-mode weighted local mean via explicit sliding windows
    win = np.lib.stride_tricks.sliding_window_view(x, kernel.shape)
    return np.tensordot(win, kernel, axes=([2, 3], [0, 1]))


def ssim(a, b, window: int = 11, k1: float = 0.01, k2: float = 0.03, L: float = 255.0,
         sigma: float = 1.5):
    """Gaussian-windowed SSIM, mean over valid positions, averaged over
    channels. Images smaller than the window raise a domain error."""
    a, b = _check_pair(a, b, min_dim=window)
    kernel = _gaussian_window(window, sigma)
    c1 = (k1 * L) ** 2
    c2 = (k2 * L) ** 2
    per_channel = []
    for c in range(a.shape[2]):
        x, y = a[..., c], b[..., c]
        mu_x = _windowed_mean(x, kernel)
        mu_y = _windowed_mean(y, kernel)
        xx = _windowed_mean(x * x, kernel) - mu_x * mu_x
        yy = _windowed_mean(y * y, kernel) - mu_y * mu_y
        xy = _windowed_mean(x * y, kernel) - mu_x * mu_y
        s = ((2 * mu_x * mu_y + c1) * (2 * xy + c2)) / ((mu_x**2 + mu_y**2 + c1) * (xx + yy + c2))
        per_channel.append(float(s.mean()))
    return float(np.mean(per_channel)), per_channel


def _gradient_magnitude(x: np.ndarray) -> np.ndarray:
    # forward differences summed over axes, on the common (h-1, w-1) grid
    gy = np.abs(x[1:, :, :] - x[:-1, :, :])[:, :-1, :]
    gx = np.abs(x[:, 1:, :] - x[:, :-1, :])[:-1, :, :]
    return gx + gy


def sharpness_difference(a, b):
    """Gradient-difference PSNR: 20*log10(255 / rmse(|grad a|, |grad b|)).

    Invariant to constant brightness shifts; identical images hit the 99 dB
    cap. Higher means more similar sharpness.
    """
    a, b = _check_pair(a, b, min_dim=2)
    ga = _gradient_magnitude(a)
    gb = _gradient_magnitude(b)
    rmse = float(np.sqrt(np.mean((ga - gb) ** 2)))
    if rmse < _RMSE_FLOOR:
        return PSNR_CAP
    return min(PSNR_CAP, 20.0 * math.log10(255.0 / rmse))


def metric_report(a, b, with_ssim: bool = True) -> MetricReport:
    """All metrics for one image pair on the 0-255 scale."""
    a_arr, b_arr = _check_pair(a, b)
    rmse, psnr = rmse_psnr(a_arr, b_arr)
    rmse_pc = tuple(
        float(np.sqrt(np.mean((a_arr[..., c] - b_arr[..., c]) ** 2))) for c in range(a_arr.shape[2])
    )
    if with_ssim and min(a_arr.shape[0], a_arr.shape[1]) >= 11:
        s, s_pc = ssim(a_arr, b_arr)
    else:
        s, s_pc = float("nan"), []
    sd = sharpness_difference(a_arr, b_arr)
    return MetricReport(rmse=rmse, psnr=psnr, ssim=s, sd=sd,
                        rmse_per_channel=rmse_pc, ssim_per_channel=tuple(s_pc))
