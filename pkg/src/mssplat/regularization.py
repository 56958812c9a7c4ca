"""Physical lower bound on Gaussian size from the finest pixel footprint.

A pixel at depth d seen with focal length f spans d / f world units. The
smallest such footprint over all training views, times a Nyquist factor,
becomes the threshold under which a Gaussian's thinnest axis is penalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InvalidInputError


@dataclass(frozen=True)
class SamplingBound:
    per_camera_T: list[tuple[str, float]]
    T_min: float
    tau_size: float

    def __post_init__(self):
        if not (self.T_min > 0 and self.tau_size > 0):
            raise InvalidInputError("sampling bound must be positive")


def pixel_sampling_interval(depth: float, focal: float) -> float:
    if not (depth > 0 and focal > 0):
        raise InvalidInputError(f"depth and focal must be positive, got d={depth}, f={focal}")
    return depth / focal


def visible_mask(cam, points: np.ndarray) -> np.ndarray:
    """Points in front of `cam` whose projection lands inside the image."""
    uv, z = cam.project(points)
    return (
        (z > 0)
        & (uv[:, 0] >= -0.5) & (uv[:, 0] < cam.width - 0.5)
        & (uv[:, 1] >= -0.5) & (uv[:, 1] < cam.height - 0.5)
    )


def visible_depths(cam, points: np.ndarray) -> np.ndarray:
    """Camera-frame depths of the points `visible_mask` keeps."""
    if len(points) == 0:
        return np.zeros(0)
    _, z = cam.project(points)
    return z[visible_mask(cam, points)]


def compute_sampling_bound(
    cameras, points, near_clamp: float = 0.01, nyquist_factor: float = 2.0
) -> SamplingBound:
    pts = np.asarray(getattr(points, "positions", points), dtype=np.float64).reshape(-1, 3)
    train = [c for c in cameras if c.split == "train"]
    if not train:
        raise ConfigurationError("need at least one training camera to derive the size bound")
    per_camera = []
    for cam in train:
        d = visible_depths(cam, pts)
        if d.size == 0:
            continue
        d_min = max(near_clamp, float(d.min()))
        per_camera.append((cam.id, pixel_sampling_interval(d_min, cam.focal_min)))
    if not per_camera:
        raise ConfigurationError(
            "no training camera sees any initialization point; set tau_size explicitly"
        )
    t_min = min(T for _, T in per_camera)
    return SamplingBound(per_camera, t_min, nyquist_factor * t_min)


def size_loss(log_scale: np.ndarray, tau_size: float, normalize: bool = False):
    """Hinge sum_i max(0, tau - min_axis exp(log_scale_i)) and its log-scale gradient."""
    if not tau_size > 0:
        raise InvalidInputError("tau_size must be positive")
    log_scale = np.asarray(log_scale)
    grad = np.zeros_like(log_scale)
    n = log_scale.shape[0]
    if n == 0:
        return 0.0, grad
    axis = np.argmin(log_scale, axis=1)  # first index wins ties
    rows = np.arange(n)
    s_min = np.exp(log_scale[rows, axis].astype(np.float64))
    gap = tau_size - s_min
    active = gap > 0
    loss = float(gap[active].sum())
    grad[rows[active], axis[active]] = -s_min[active]
    if normalize:
        loss /= n
        grad /= n
    return loss, grad


def count_undersized(log_scale: np.ndarray, tau_size: float, slack: float = 1e-6) -> int:
    return int(np.count_nonzero(np.exp(np.asarray(log_scale).min(axis=1)) < tau_size - slack))
