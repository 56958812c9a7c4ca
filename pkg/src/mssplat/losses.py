"""Image losses (L1, SSIM with analytic gradient), the joint objective, PSNR."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, InvalidInputError

WINDOW = 11
WINDOW_SIGMA = 1.5
C1 = 0.01**2
C2 = 0.03**2
PSNR_CAP = 100.0


@dataclass(frozen=True)
class LossBreakdown:
    l1: float
    dssim: float
    base: float
    mss: float
    size: float
    total: float


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def l1_image_loss(a, b):
    a, b = _check_pair(a, b)
    diff = a - b
    return float(np.abs(diff).mean()), np.sign(diff) / diff.size


def _window_1d() -> np.ndarray:
    x = np.arange(WINDOW, dtype=np.float64) - (WINDOW - 1) / 2
    w = np.exp(-(x**2) / (2 * WINDOW_SIGMA**2))
    return w / w.sum()


_W1 = _window_1d()


def _filter_valid(x: np.ndarray) -> np.ndarray:
    # separable valid-mode correlation over the two spatial axes of (H, W, C)
    x = sliding_window_view(x, WINDOW, axis=0) @ _W1
    return sliding_window_view(x, WINDOW, axis=1) @ _W1


def _filter_transpose(x: np.ndarray) -> np.ndarray:
    # adjoint of _filter_valid: zero-pad by the window radius and correlate the
    # flipped (here symmetric) window
    pad = WINDOW - 1
    x = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    return _filter_valid(x)


def ssim(a, b):
    """Mean SSIM over valid windows and channels, and its gradient w.r.t. a."""
    a, b = _check_pair(a, b)
    gray = a.ndim == 2
    if gray:
        a, b = a[..., None], b[..., None]
    if min(a.shape[:2]) < WINDOW:
        raise InvalidInputError(f"SSIM needs images of at least {WINDOW}x{WINDOW}")
    mu_a = _filter_valid(a)
    mu_b = _filter_valid(b)
    e_aa = _filter_valid(a * a)
    e_bb = _filter_valid(b * b)
    e_ab = _filter_valid(a * b)
    var_a = e_aa - mu_a**2
    var_b = e_bb - mu_b**2
    cov = e_ab - mu_a * mu_b

    A1 = 2 * mu_a * mu_b + C1
    A2 = 2 * cov + C2
    B1 = mu_a**2 + mu_b**2 + C1
    B2 = var_a + var_b + C2
    D = B1 * B2
    smap = A1 * A2 / D
    value = float(smap.mean())

    scale = 1.0 / smap.size
    d_mu_a = (2 * mu_b * A2 / D - 2 * mu_a * smap / B1 + 2 * mu_a * smap / B2 - 2 * mu_b * A1 / D) * scale
    d_e_aa = -smap / B2 * scale
    d_e_ab = 2 * A1 / D * scale
    grad = _filter_transpose(d_mu_a) + 2 * a * _filter_transpose(d_e_aa) + b * _filter_transpose(d_e_ab)
    return value, grad[..., 0] if gray else grad


def base_loss(render0, gt0, lambda_dssim: float = 0.2):
    """(1 - lambda) * L1 + lambda * (1 - SSIM) at full resolution.

    Returns (loss, grad, l1, dssim).
    """
    if not 0.0 <= lambda_dssim <= 1.0:
        raise InvalidInputError("lambda_dssim must lie in [0, 1]")
    l1, g_l1 = l1_image_loss(render0, gt0)
    if lambda_dssim == 0.0:
        return l1, g_l1, l1, 0.0
    s, g_s = ssim(render0, gt0)
    dssim = 1.0 - s
    loss = (1.0 - lambda_dssim) * l1 + lambda_dssim * dssim
    return loss, (1.0 - lambda_dssim) * g_l1 - lambda_dssim * g_s, l1, dssim


def total_loss(base: float, mss: float, size: float, lambda_mss: float, lambda_size: float,
               l1: float = 0.0, dssim: float = 0.0) -> LossBreakdown:
    if lambda_mss < 0 or lambda_size < 0:
        raise InvalidInputError("loss weights must be non-negative")
    return LossBreakdown(
        l1=l1, dssim=dssim, base=base, mss=mss, size=size,
        total=base + lambda_mss * mss + lambda_size * size,
    )


def psnr(a, b) -> float:
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))
