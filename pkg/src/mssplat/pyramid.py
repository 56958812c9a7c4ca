"""Anti-aliased ground-truth pyramids, rendered pyramids, and the multi-scale L1 loss."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ContractError, InvalidInputError
from .rasterizer import DEFAULT_SETTINGS, RasterSettings, RenderOutput, render_at_level

log = logging.getLogger(__name__)

MIN_LEVEL_SIZE = 8


@dataclass
class ImagePyramid:
    levels: list[np.ndarray]  # each (H_l, W_l, 3)
    sigma: float
    kind: str  # "ground-truth" | "rendered"
    renders: list[RenderOutput] | None = None  # forward state, rendered pyramids only

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [lvl.shape[:2] for lvl in self.levels]


def blur_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, radius ceil(3 sigma), edge-replicated borders."""
    if not sigma > 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    k = blur_kernel(sigma)
    out = correlate1d(np.asarray(img, dtype=np.float64), k, axis=0, mode="nearest")
    return correlate1d(out, k, axis=1, mode="nearest")


def downsample2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    if h < 2 or w < 2:
        raise InvalidInputError(f"cannot downsample a {w}x{h} image")
    return img[: 2 * (h // 2) : 2, : 2 * (w // 2) : 2].copy()


def clamp_levels(height: int, width: int, levels: int) -> int:
    """Largest L' <= levels whose coarsest level is still >= 8x8 (at least 1)."""
    if levels < 1:
        raise InvalidInputError("pyramid needs at least one level")
    n = 1
    h, w = height, width
    while n < levels and h // 2 >= MIN_LEVEL_SIZE and w // 2 >= MIN_LEVEL_SIZE:
        h, w = h // 2, w // 2
        n += 1
    return n


def build_gt_pyramid(img: np.ndarray, levels: int, sigma: float = 1.0) -> ImagePyramid:
    img = np.asarray(img)
    n = clamp_levels(img.shape[0], img.shape[1], levels)
    if n < levels:
        log.info("pyramid clamped from %d to %d levels for a %dx%d image", levels, n, img.shape[1], img.shape[0])
    out = [img]
    for _ in range(n - 1):
        out.append(downsample2(gaussian_blur(out[-1], sigma)).astype(img.dtype, copy=False))
    return ImagePyramid(out, sigma, "ground-truth")


def build_rendered_pyramid(
    gaussians, cam, levels: int, settings: RasterSettings = DEFAULT_SETTINGS
) -> ImagePyramid:
    """Render every level directly at its own resolution; no blur is applied."""
    n = clamp_levels(cam.height, cam.width, levels)
    renders = [render_at_level(gaussians, cam, lvl, settings) for lvl in range(n)]
    return ImagePyramid([r.image for r in renders], 0.0, "rendered", renders)


def mss_loss(rendered: ImagePyramid, gt: ImagePyramid, weights=None):
    """Sum over levels 1..L-1 of w_l * mean|rendered_l - gt_l|.

    Returns (loss, grads) with grads[l] the gradient w.r.t. rendered level l;
    grads[0] is always zero since level 0 belongs to the base loss.
    """
    if len(rendered) != len(gt):
        raise ContractError(f"pyramids have {len(rendered)} and {len(gt)} levels")
    if rendered.shapes != gt.shapes:
        raise ContractError(f"pyramid level shapes differ: {rendered.shapes} vs {gt.shapes}")
    n = len(rendered)
    if weights is None:
        weights = [1.0] * n
    elif len(weights) < n:
        raise ContractError("need one weight per pyramid level")
    loss = 0.0
    grads = [np.zeros(rendered.levels[0].shape)]
    for lvl in range(1, n):
        diff = np.asarray(rendered.levels[lvl], np.float64) - np.asarray(gt.levels[lvl], np.float64)
        w = float(weights[lvl])
        loss += w * float(np.abs(diff).mean())
        grads.append(w * np.sign(diff) / diff.size)
    return loss, grads
