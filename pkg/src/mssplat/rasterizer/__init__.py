"""Differentiable tile-based Gaussian rasterizer (CPU, numba).

Forward: EWA projection, 16x16 tile binning by the support-ellipse AABB,
(depth, index) ordering, front-to-back alpha compositing over a black
background. Backward: analytic gradients for every Gaussian parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..camera import Camera
from ..errors import ContractError, InvalidInputError
from ..gaussians import GaussianModel, GaussianPrimitive, zeros_like_params
from . import _kernels as K


@dataclass(frozen=True)
class RasterSettings:
    tile_size: int = 16
    near_plane: float = 0.01
    alpha_min: float = 1.0 / 255.0
    transmittance_min: float = 1e-4
    support_sigma: float = 3.0  # a splat only touches pixels inside this Mahalanobis radius
    dilation: float = 0.3

    def oracle(self) -> RasterSettings:
        """Thresholds zeroed, as used by the equivalence and gradient suites."""
        return replace(self, near_plane=0.0, alpha_min=0.0, transmittance_min=0.0)

    def smooth(self) -> RasterSettings:
        """Oracle mode plus an effectively unbounded support, so the image is C1
        in every parameter (needed by finite-difference checks)."""
        return replace(self.oracle(), support_sigma=12.0)


DEFAULT_SETTINGS = RasterSettings()


@dataclass
class ProjectedGaussians:
    """Screen-space quantities for all Gaussians under one camera."""

    mean2d: np.ndarray  # (N, 2) pixels
    cov2d: np.ndarray  # (N, 3) xx, xy, yy, dilated
    conic: np.ndarray  # (N, 3) inverse of cov2d
    depth: np.ndarray  # (N,)
    color: np.ndarray  # (N, 3)
    opacity: np.ndarray  # (N,)
    rect: np.ndarray  # (N, 4) x0, x1, y0, y1 inclusive pixel bounds
    status: np.ndarray  # (N,) CULLED / VISIBLE / DEGENERATE

    @property
    def visible(self) -> np.ndarray:
        return self.status == K.VISIBLE

    @property
    def n_degenerate(self) -> int:
        return int(np.count_nonzero(self.status == K.DEGENERATE))


@dataclass(frozen=True)
class ProjectedGaussian:
    mean2d: np.ndarray
    cov2d: np.ndarray  # 2x2
    depth: float
    color: np.ndarray
    opacity: float
    source_index: int


@dataclass
class RenderOutput:
    image: np.ndarray  # (H, W, 3)
    alpha: np.ndarray  # (H, W)
    n_contrib: np.ndarray  # (H, W) contributors per pixel
    n_degenerate: int
    camera: Camera
    settings: RasterSettings
    # retained forward state for render_backward
    projected: ProjectedGaussians = field(repr=False)
    offsets: np.ndarray = field(repr=False)
    entries: np.ndarray = field(repr=False)
    last: np.ndarray = field(repr=False)
    n_gaussians: int = 0

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]


def _as_model(gaussians) -> GaussianModel:
    if isinstance(gaussians, GaussianModel):
        return gaussians
    return GaussianModel.from_primitives(gaussians)


def _camera_arrays(cam: Camera):
    return (
        np.ascontiguousarray(cam.rotation, dtype=np.float64),
        np.ascontiguousarray(cam.translation, dtype=np.float64),
        np.ascontiguousarray(cam.center, dtype=np.float64),
    )


def project(gaussians, cam: Camera, settings: RasterSettings = DEFAULT_SETTINGS) -> ProjectedGaussians:
    g = _as_model(gaussians)
    n = len(g)
    out = ProjectedGaussians(
        mean2d=np.zeros((n, 2)),
        cov2d=np.zeros((n, 3)),
        conic=np.zeros((n, 3)),
        depth=np.zeros(n),
        color=np.zeros((n, 3)),
        opacity=np.zeros(n),
        rect=np.zeros((n, 4), dtype=np.int64),
        status=np.zeros(n, dtype=np.int8),
    )
    if n == 0:
        return out
    Rw, tw, campos = _camera_arrays(cam)
    K.project_kernel(
        g.position, g.log_scale, g.rotation, g.opacity_logit, g.sh_coeffs, g.sh_degree,
        Rw, tw, campos, float(cam.fx), float(cam.fy), float(cam.cx), float(cam.cy),
        float(cam.width), float(cam.height),
        float(settings.near_plane), float(settings.support_sigma), float(settings.dilation),
        out.mean2d, out.cov2d, out.conic, out.depth, out.color, out.opacity, out.rect, out.status,
    )
    return out


def project_gaussian(
    g: GaussianPrimitive, cam: Camera, settings: RasterSettings = DEFAULT_SETTINGS
) -> ProjectedGaussian | None:
    """Project one Gaussian; None when it is culled."""
    p = project([g], cam, settings)
    if p.status[0] != K.VISIBLE:
        return None
    c = p.cov2d[0]
    return ProjectedGaussian(
        mean2d=p.mean2d[0].copy(),
        cov2d=np.array([[c[0], c[1]], [c[1], c[2]]]),
        depth=float(p.depth[0]),
        color=p.color[0].copy(),
        opacity=float(p.opacity[0]),
        source_index=0,
    )


def depth_order(projected: ProjectedGaussians) -> np.ndarray:
    """Visible indices sorted by (depth, source index)."""
    idx = np.flatnonzero(projected.visible)
    return idx[np.argsort(projected.depth[idx], kind="stable")]


def render(
    gaussians, cam: Camera, width: int | None = None, height: int | None = None,
    settings: RasterSettings = DEFAULT_SETTINGS,
) -> RenderOutput:
    width = cam.width if width is None else int(width)
    height = cam.height if height is None else int(height)
    if width <= 0 or height <= 0:
        raise InvalidInputError("width and height must be positive")
    if (width, height) != (cam.width, cam.height):
        cam = replace(cam, width=width, height=height)
    g = _as_model(gaussians)
    proj = project(g, cam, settings)
    order = depth_order(proj)
    tile = settings.tile_size
    tiles_x = -(-width // tile)
    tiles_y = -(-height // tile)
    offsets, entries = K.bin_kernel(order, proj.rect, tile, tiles_x, tiles_y)
    image = np.zeros((height, width, 3))
    final_T = np.ones((height, width))
    last = np.zeros((height, width), dtype=np.int64)
    n_contrib = np.zeros((height, width), dtype=np.int64)
    K.raster_forward(
        offsets, entries, proj.mean2d, proj.conic, proj.color, proj.opacity,
        width, height, tile, tiles_x, float(settings.support_sigma) ** 2,
        float(settings.alpha_min), float(settings.transmittance_min),
        image, final_T, last, n_contrib,
    )
    return RenderOutput(
        image=image.astype(g.dtype, copy=False),
        alpha=(1.0 - final_T).astype(g.dtype, copy=False),
        n_contrib=n_contrib,
        n_degenerate=proj.n_degenerate,
        camera=cam,
        settings=settings,
        projected=proj,
        offsets=offsets,
        entries=entries,
        last=last,
        n_gaussians=len(g),
    )


def render_at_level(
    gaussians, cam: Camera, level: int, settings: RasterSettings = DEFAULT_SETTINGS
) -> RenderOutput:
    return render(gaussians, cam.at_level(level), settings=settings)


def render_backward(gaussians, cam: Camera, upstream_grad: np.ndarray, forward: RenderOutput):
    """Gradients of sum(upstream_grad * image) w.r.t. every Gaussian parameter.

    Returns (grads, screen_grad): a dict keyed like GaussianModel.params()
    and the (N, 2) gradient w.r.t. the projected means, which density
    control uses.
    """
    g = _as_model(gaussians)
    upstream = np.ascontiguousarray(upstream_grad, dtype=np.float64)
    if upstream.shape != forward.image.shape:
        raise ContractError(f"upstream gradient {upstream.shape} vs image {forward.image.shape}")
    if len(g) != forward.n_gaussians or cam != forward.camera:
        raise ContractError("render_backward called with a scene/camera that differs from the forward pass")
    grads = {k: v.astype(np.float64) for k, v in zeros_like_params(g).items()}
    screen = np.zeros((len(g), 2))
    if len(g) == 0:
        return _cast(grads, g.dtype), screen
    proj = forward.projected
    s = forward.settings
    n_e = forward.entries.shape[0]
    gm_e = np.empty((n_e, 2))
    gc_e = np.empty((n_e, 3))
    go_e = np.empty(n_e)
    gcol_e = np.empty((n_e, 3))
    tile = s.tile_size
    tiles_x = -(-cam.width // tile)
    K.raster_backward(
        forward.offsets, forward.entries, proj.mean2d, proj.conic, proj.color, proj.opacity,
        cam.width, cam.height, tile, tiles_x, float(s.support_sigma) ** 2, float(s.alpha_min),
        forward.last, upstream, gm_e, gc_e, go_e, gcol_e,
    )
    g_mean, g_conic, g_op, g_col = K.reduce_entries(forward.entries, len(g), gm_e, gc_e, go_e, gcol_e)
    Rw, tw, campos = _camera_arrays(cam)
    K.gaussian_backward(
        g.position, g.log_scale, g.rotation, g.opacity_logit, g.sh_coeffs, g.sh_degree,
        Rw, tw, campos, float(cam.fx), float(cam.fy), float(s.dilation), proj.status,
        g_mean, g_conic, g_op, g_col,
        grads["position"], grads["log_scale"], grads["rotation"], grads["opacity_logit"], grads["sh_coeffs"],
    )
    return _cast(grads, g.dtype), g_mean


def _cast(grads, dtype):
    return {k: v.astype(dtype, copy=False) for k, v in grads.items()}


__all__ = [
    "RasterSettings",
    "DEFAULT_SETTINGS",
    "ProjectedGaussian",
    "ProjectedGaussians",
    "RenderOutput",
    "project",
    "project_gaussian",
    "depth_order",
    "render",
    "render_at_level",
    "render_backward",
]
