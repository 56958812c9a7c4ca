"""Block-partitioned training of a Gaussian scene under the joint objective.

Each iteration renders one training view at every pyramid level, scores
level 0 with L1 + D-SSIM, levels 1..L-1 against the pre-filtered
ground-truth pyramid, adds the size hinge, and takes one Adam step on the
accumulated gradient.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.spatial import cKDTree

from .camera import Camera
from .errors import ConfigurationError, InvalidInputError, NonFiniteLossError
from .gaussians import PARAM_NAMES, GaussianModel, logit, num_sh_coeffs, rgb_to_sh_dc
from .losses import LossBreakdown, base_loss, l1_image_loss, psnr, ssim, total_loss
from .optim import Adam
from .pyramid import ImagePyramid, build_gt_pyramid, clamp_levels, downsample2, gaussian_blur, mss_loss
from .rasterizer import DEFAULT_SETTINGS, RasterSettings, render, render_at_level, render_backward
from .regularization import SamplingBound, compute_sampling_bound, size_loss, visible_mask
from .scene_io import SceneDataset, SparsePointCloud

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lambda_dssim: float = 0.2
    lambda_mss: float = 0.1
    lambda_size: float = 0.01
    pyramid_levels: int = 4
    pyramid_sigma: float = 1.0
    mss_weights: tuple[float, ...] | None = None
    tau_size: float | None = None
    nyquist_factor: float = 2.0
    near_clamp: float = 0.01
    normalize_size_loss: bool = False
    iterations: int = 5000
    lr_position: float = 1.6e-4
    lr_position_final: float = 1.6e-6
    lr_log_scale: float = 5e-3
    lr_rotation: float = 1e-3
    lr_opacity_logit: float = 5e-2
    lr_sh_coeffs: float = 2.5e-3
    sh_rest_lr_factor: float = 1.0 / 20.0
    sh_degree: int = 3
    sh_increase_interval: int = 1000
    # NDC gradients scale like 1/width; 2e-4 suits megapixel views, 64 px views need ~10x
    densify_grad_threshold: float = 2e-3
    densify_interval: int = 100
    densify_from_iter: int = 500
    densify_until_iter: int = 2500
    prune_opacity_threshold: float = 0.005
    max_gaussians: int = 500_000
    grid: tuple[int, int] = (1, 1)
    camera_margin: float = 0.2
    seed: int = 0
    deterministic: bool = True
    dtype: str = "float32"
    substrate_only: bool = False  # skip the regularizers entirely (reference trajectory)
    profile: str = "desk"

    def __post_init__(self):
        for name in ("lambda_dssim", "lambda_mss", "lambda_size"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be non-negative")
        if self.lambda_dssim > 1:
            raise InvalidInputError("lambda_dssim must lie in [0, 1]")
        if self.pyramid_levels < 1:
            raise InvalidInputError("pyramid_levels must be >= 1")
        if self.iterations < 0:
            raise InvalidInputError("iterations must be non-negative")
        if not 0 <= self.sh_degree <= 3:
            raise InvalidInputError("sh_degree must lie in 0..3")

    @classmethod
    def profile_defaults(cls, name: str) -> dict:
        if name == "desk":
            return {"profile": "desk"}
        if name == "paper":
            return {
                "profile": "paper", "iterations": 60_000, "densify_until_iter": 30_000, "densify_grad_threshold": 2e-4,
                "densify_interval": 100, "densify_from_iter": 500,
            }
        raise InvalidInputError(f"unknown profile {name!r}")

    @classmethod
    def from_profile(cls, name: str = "desk", **overrides) -> TrainConfig:
        return cls(**{**cls.profile_defaults(name), **overrides})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        kw = {k: v for k, v in data.items() if k in known}
        for key in ("grid", "mss_weights"):
            if kw.get(key) is not None:
                kw[key] = tuple(kw[key])
        return cls(**kw)

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    @property
    def regularized(self) -> bool:
        return not self.substrate_only


@dataclass
class SceneBlock:
    id: int
    bbox_min: np.ndarray  # (3,)
    bbox_max: np.ndarray  # (3,)
    grid_index: tuple[int, int]
    camera_ids: list[str]
    point_indices: np.ndarray


@dataclass
class TrainReport:
    history: list[LossBreakdown] = field(default_factory=list)
    gaussian_counts: list[int] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    final_metrics: dict[str, dict[str, float]] = field(default_factory=dict)
    tau_size: float | None = None

    def to_json(self) -> dict:
        keys = ("l1", "dssim", "base", "mss", "size", "total")
        return {
            "schema": "mssplat-report v1",
            "iterations": len(self.history),
            **{k: [getattr(h, k) for h in self.history] for k in keys},
            "n_gaussians": list(self.gaussian_counts),
            "events": self.events,
            "final_metrics": self.final_metrics,
            "tau_size": self.tau_size,
        }

    @classmethod
    def from_json(cls, data: dict) -> TrainReport:
        keys = ("l1", "dssim", "base", "mss", "size", "total")
        n = data.get("iterations", 0)
        history = [LossBreakdown(**{k: data[k][i] for k in keys}) for i in range(n)]
        return cls(history, list(data.get("n_gaussians", [])), list(data.get("events", [])),
                   dict(data.get("final_metrics", {})), data.get("tau_size"))


# ---------------------------------------------------------------------------
# partitioning
# ---------------------------------------------------------------------------


def _grid_geometry(points: np.ndarray, grid):
    nx, ny = grid
    if nx < 1 or ny < 1:
        raise InvalidInputError("grid dimensions must be >= 1")
    if len(points) == 0:
        raise ConfigurationError("cannot partition an empty point cloud")
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    size = np.maximum(hi[:2] - lo[:2], 1e-9) / np.array([nx, ny])
    return lo, hi, size


def _cell_of(xy: np.ndarray, lo, size, grid) -> np.ndarray:
    nx, ny = grid
    ix = np.clip(np.floor((xy[:, 0] - lo[0]) / size[0]).astype(np.int64), 0, nx - 1)
    iy = np.clip(np.floor((xy[:, 1] - lo[1]) / size[1]).astype(np.int64), 0, ny - 1)
    return iy * nx + ix


def partition_scene(dataset: SceneDataset, grid=(1, 1), margin: float = 0.2) -> list[SceneBlock]:
    """Uniform x/y grid over the point cloud; z is never split.

    Points outside the grid (only possible for later-moved Gaussians) belong to
    the nearest edge cell, so the outer blocks are open-ended.
    """
    pts = dataset.points.positions
    lo, hi, size = _grid_geometry(pts, grid)
    nx, ny = grid
    owner = _cell_of(pts, lo, size, grid)
    train = dataset.train_cameras
    seen = {c.id: visible_mask(c, pts) for c in train}
    blocks = []
    for iy in range(ny):
        for ix in range(nx):
            bid = iy * nx + ix
            bmin = np.array([lo[0] + ix * size[0], lo[1] + iy * size[1], lo[2]])
            bmax = np.array([lo[0] + (ix + 1) * size[0], lo[1] + (iy + 1) * size[1], hi[2]])
            members = np.flatnonzero(owner == bid)
            emin = bmin[:2] - margin * size
            emax = bmax[:2] + margin * size
            cam_ids = []
            for c in train:
                centre = c.center[:2]
                inside = bool(np.all(centre >= emin) and np.all(centre <= emax))
                if inside or bool(seen[c.id][members].any()):
                    cam_ids.append(c.id)
            blocks.append(SceneBlock(bid, bmin, bmax, (ix, iy), cam_ids, members))
    # a camera that sees nothing and sits outside every expanded box goes to its nearest block
    for c in train:
        if not any(c.id in b.camera_ids for b in blocks):
            centre = c.center[None, :2]
            blocks[int(_cell_of(centre, lo, size, grid)[0])].camera_ids.append(c.id)
    return blocks


# ---------------------------------------------------------------------------
# initialization and density control
# ---------------------------------------------------------------------------


def init_gaussians(points: SparsePointCloud, bound: SamplingBound | None = None,
                   sh_degree: int = 3, dtype=np.float32) -> GaussianModel:
    """One isotropic Gaussian per point, sized by its 3 nearest neighbours."""
    pos = points.positions
    n = len(pos)
    if n == 0:
        raise InvalidInputError("cannot initialize from an empty point cloud")
    if n < 4:
        extent = float(np.max(np.ptp(pos, axis=0))) if n > 1 else 0.0
        fallback = extent / 100.0 if extent > 0 else 0.01
        log.warning("only %d points; using fallback scale %.4g", n, fallback)
        scale = np.full(n, fallback)
    else:
        dist, _ = cKDTree(pos).query(pos, k=4)
        scale = dist[:, 1:].mean(axis=1)
        scale = np.where(scale > 0, scale, max(float(scale[scale > 0].min(initial=1e-3)), 1e-7))
    if bound is not None:
        scale = np.maximum(scale, bound.tau_size)
    k = num_sh_coeffs(sh_degree)
    sh = np.zeros((n, k, 3))
    sh[:, 0, :] = rgb_to_sh_dc(points.colors / 255.0)
    rot = np.zeros((n, 4))
    rot[:, 0] = 1.0
    return GaussianModel(
        pos.astype(dtype),
        np.repeat(np.log(scale)[:, None], 3, axis=1).astype(dtype),
        rot.astype(dtype),
        np.full(n, logit(0.1), dtype=dtype),
        sh.astype(dtype),
        sh_degree,
    )


@dataclass
class DensifyStats:
    grad_accum: np.ndarray
    denom: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> DensifyStats:
        return cls(np.zeros(n), np.zeros(n))

    def add(self, screen_grad: np.ndarray, visible: np.ndarray, width: int, height: int):
        # pixel-space gradient expressed per NDC unit, as the classic threshold expects
        g = screen_grad * np.array([0.5 * width, 0.5 * height])
        self.grad_accum[visible] += np.linalg.norm(g[visible], axis=1)
        self.denom[visible] += 1

    def mean(self) -> np.ndarray:
        return np.where(self.denom > 0, self.grad_accum / np.maximum(self.denom, 1), 0.0)


def densify_and_prune(gaussians: GaussianModel, mean_grad: np.ndarray, config: TrainConfig,
                      tau_size: float, rng: np.random.Generator, optimizer: Adam | None = None,
                      iteration: int = 0) -> tuple[GaussianModel, dict]:
    """Clone small / split large high-gradient Gaussians, then drop transparent ones."""
    g = gaussians
    n = len(g)
    hot = mean_grad > config.densify_grad_threshold
    small = np.exp(g.log_scale.max(axis=1)) < 2.0 * tau_size
    clone_idx = np.flatnonzero(hot & small)
    split_idx = np.flatnonzero(hot & ~small)
    room = config.max_gaussians - n
    if room < len(clone_idx) + len(split_idx):
        clone_idx = split_idx = np.zeros(0, dtype=np.int64)

    parts = [g]
    if len(clone_idx):
        parts.append(g.select(clone_idx))
    if len(split_idx):
        src = g.select(split_idx)
        children = []
        R = src.rotation_matrices()
        for _ in range(2):
            local = rng.normal(size=(len(split_idx), 3)) * np.exp(src.log_scale)
            child = src.copy()
            child.position = (src.position + np.einsum("nij,nj->ni", R, local)).astype(src.dtype)
            child.log_scale = (src.log_scale - np.log(1.6)).astype(src.dtype)
            children.append(child)
        parts.extend(children)
    added = len(clone_idx) + 2 * len(split_idx)
    out = GaussianModel.concatenate(parts) if added else g
    if optimizer is not None and added:
        optimizer.append_zeros(added)

    keep = np.ones(len(out), dtype=bool)
    keep[split_idx] = False  # split parents are replaced by their children
    keep &= out.opacity >= config.prune_opacity_threshold
    pruned = int(np.count_nonzero(~keep)) - len(split_idx)
    if not keep.all():
        out = out.select(keep)
        if optimizer is not None:
            optimizer.select(keep)
    event = {
        "iteration": iteration, "cloned": int(len(clone_idx)), "split": int(len(split_idx)),
        "pruned": pruned, "count": len(out),
    }
    return out, event


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def scene_extent(cameras) -> float:
    centres = np.array([c.center for c in cameras])
    return 1.1 * float(np.linalg.norm(centres - centres.mean(axis=0), axis=1).max(initial=0.0)) or 1.0


def resolve_bound(dataset: SceneDataset, config: TrainConfig) -> SamplingBound:
    if config.tau_size is not None:
        try:
            b = compute_sampling_bound(dataset.cameras, dataset.points, config.near_clamp, config.nyquist_factor)
            return SamplingBound(b.per_camera_T, b.T_min, float(config.tau_size))
        except ConfigurationError:
            t = float(config.tau_size) / config.nyquist_factor
            return SamplingBound([], t, float(config.tau_size))
    return compute_sampling_bound(dataset.cameras, dataset.points, config.near_clamp, config.nyquist_factor)


def position_lr(config: TrainConfig, step: int, spatial_scale: float) -> float:
    """Log-linear decay from lr_position to lr_position_final over the run."""
    total = max(config.iterations, 1)
    t = min(max(step / total, 0.0), 1.0)
    lr = math.exp((1 - t) * math.log(config.lr_position) + t * math.log(config.lr_position_final))
    return lr * spatial_scale


class Trainer:
    """Optimization state for one block; `step()` runs one iteration."""

    def __init__(self, gaussians: GaussianModel, cameras: list[Camera], images: dict[str, np.ndarray],
                 config: TrainConfig, bound: SamplingBound, settings: RasterSettings = DEFAULT_SETTINGS,
                 spatial_scale: float | None = None):
        if not cameras:
            raise InvalidInputError("training needs at least one camera")
        self.config = config
        self.gaussians = gaussians.astype(config.np_dtype)
        self.cameras = list(cameras)
        self.images = images
        self.bound = bound
        self.settings = settings
        self.spatial_scale = scene_extent(cameras) if spatial_scale is None else spatial_scale
        self.optimizer = Adam(
            {
                "position": position_lr(config, 0, self.spatial_scale),
                "log_scale": config.lr_log_scale,
                "rotation": config.lr_rotation,
                "opacity_logit": config.lr_opacity_logit,
                "sh_coeffs": config.lr_sh_coeffs,
            }
        )
        self.rng = np.random.default_rng(config.seed)
        self.iteration = 0
        self.report = TrainReport(tau_size=bound.tau_size)
        self.stats = DensifyStats.zeros(len(self.gaussians))
        self._order: list[int] = []
        self._gt_cache: dict[str, list[np.ndarray]] = {}
        self._sh_lr = self._sh_lr_mask()

    # -- helpers -------------------------------------------------------------------

    def _sh_lr_mask(self):
        k = num_sh_coeffs(self.gaussians.sh_degree)
        scale = np.full((1, k, 1), self.config.sh_rest_lr_factor, dtype=self.config.np_dtype)
        scale[0, 0, 0] = 1.0
        return scale

    def _active_sh_degree(self) -> int:
        if self.config.sh_increase_interval <= 0:
            return self.gaussians.sh_degree
        return min(self.gaussians.sh_degree, self.iteration // self.config.sh_increase_interval)

    def _next_camera(self) -> Camera:
        if not self._order:
            self._order = list(self.rng.permutation(len(self.cameras)))
        return self.cameras[self._order.pop(0)]

    def _levels(self, cam: Camera) -> int:
        return clamp_levels(cam.height, cam.width, self.config.pyramid_levels)

    def gt_pyramid(self, cam: Camera):
        if cam.id not in self._gt_cache:
            n = self._levels(cam) if self.config.regularized else 1
            img = np.asarray(self.images[cam.id], dtype=np.float64)
            self._gt_cache[cam.id] = build_gt_pyramid(img, n, self.config.pyramid_sigma)
        return self._gt_cache[cam.id]

    # -- one iteration -------------------------------------------------------------

    def step(self) -> LossBreakdown:
        cfg = self.config
        g = self.gaussians
        cam = self._next_camera()
        gt = self.gt_pyramid(cam)

        out0 = render(g, cam, settings=self.settings)
        img0 = np.clip(out0.image.astype(np.float64), 0.0, 1.0)
        # straight-through clamp: gradients reach out-of-range pixels unchanged
        base, g_img0, l1, dssim = base_loss(img0, gt.levels[0], cfg.lambda_dssim)
        grads, screen = render_backward(g, cam, g_img0, out0)

        mss = 0.0
        size = 0.0
        if cfg.regularized:
            if len(gt) > 1:
                outs = [out0] + [render_at_level(g, cam, lvl, self.settings) for lvl in range(1, len(gt))]
                levels = [img0] + [np.clip(o.image.astype(np.float64), 0.0, 1.0) for o in outs[1:]]
                mss, level_grads = mss_loss(ImagePyramid(levels, 0.0, "rendered", outs), gt, cfg.mss_weights)
                if cfg.lambda_mss > 0:
                    for lvl in range(1, len(gt)):
                        o = outs[lvl]
                        lg, _ = render_backward(g, o.camera, cfg.lambda_mss * level_grads[lvl], o)
                        for name in PARAM_NAMES:
                            grads[name] += lg[name]
            size, g_size = size_loss(g.log_scale, self.bound.tau_size, cfg.normalize_size_loss)
            if cfg.lambda_size > 0:
                grads["log_scale"] += (cfg.lambda_size * g_size).astype(g.dtype)

        breakdown = total_loss(base, mss, size, cfg.lambda_mss, cfg.lambda_size, l1=l1, dssim=dssim)
        for term in ("base", "mss", "size", "total"):
            value = getattr(breakdown, term)
            if not math.isfinite(value):
                raise NonFiniteLossError(self.iteration, term, value)

        active = self._active_sh_degree()
        if active < g.sh_degree:
            grads["sh_coeffs"][:, num_sh_coeffs(active):, :] = 0
        self.stats.add(screen, out0.projected.visible, cam.width, cam.height)

        self.optimizer.set_lr("position", position_lr(cfg, self.iteration, self.spatial_scale))
        self._apply(g, grads)

        self.iteration += 1
        self.report.history.append(breakdown)
        self.report.gaussian_counts.append(len(g))
        self._maybe_densify()
        return breakdown

    def _apply(self, g: GaussianModel, grads):
        # Adam normalizes gradient magnitude away, so the slower rate of the
        # higher SH bands is applied to the update rather than the gradient
        params = g.params()
        sh = params.pop("sh_coeffs")
        self.optimizer.step(params, grads)
        before = sh.copy()
        self.optimizer.step({"sh_coeffs": sh}, {"sh_coeffs": grads["sh_coeffs"]})
        sh[...] = before + (sh - before) * self._sh_lr

    def _maybe_densify(self):
        cfg = self.config
        it = self.iteration
        if not (cfg.densify_from_iter < it <= cfg.densify_until_iter and it % cfg.densify_interval == 0):
            return
        new, event = densify_and_prune(
            self.gaussians, self.stats.mean(), cfg, self.bound.tau_size, self.rng, self.optimizer, it
        )
        self.gaussians = new
        self.stats = DensifyStats.zeros(len(new))
        self.report.events.append(event)

    # -- persistence ---------------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Everything besides the Gaussians needed to continue bit-identically."""
        out = {f"adam/{k}": v for k, v in self.optimizer.state_arrays().items()}
        rng = json.dumps(self.rng.bit_generator.state)
        out["loop/rng"] = np.frombuffer(rng.encode(), dtype=np.uint8)
        out["loop/iteration"] = np.array(self.iteration, dtype=np.int64)
        out["loop/order"] = np.array(self._order, dtype=np.int64)
        out["loop/grad_accum"] = self.stats.grad_accum
        out["loop/denom"] = self.stats.denom
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        self.optimizer.load_state_arrays({k[5:]: v for k, v in arrays.items() if k.startswith("adam/")})
        if "loop/rng" in arrays:
            self.rng.bit_generator.state = json.loads(arrays["loop/rng"].tobytes().decode())
            self.iteration = int(arrays["loop/iteration"])
            self._order = [int(i) for i in arrays["loop/order"]]
            self.stats = DensifyStats(np.array(arrays["loop/grad_accum"]), np.array(arrays["loop/denom"]))

    def run(self, iterations: int | None = None, callback=None) -> GaussianModel:
        n = self.config.iterations if iterations is None else iterations
        for _ in range(n):
            b = self.step()
            if callback is not None:
                callback(self, b)
        return self.gaussians


def block_trainer(block: SceneBlock | None, dataset: SceneDataset, config: TrainConfig,
                  bound: SamplingBound, settings: RasterSettings = DEFAULT_SETTINGS) -> Trainer | None:
    """Trainer initialized from the block's points (the whole scene when block is None).

    Returns None for a block that owns no points.
    """
    if block is None:
        cams = dataset.train_cameras
        pts = dataset.points
    else:
        ids = set(block.camera_ids)
        cams = [c for c in dataset.train_cameras if c.id in ids]
        pts = SparsePointCloud(dataset.points.positions[block.point_indices],
                               dataset.points.colors[block.point_indices])
    if not cams:
        raise InvalidInputError(f"block {getattr(block, 'id', '?')} has no training camera")
    if len(pts) == 0:
        return None
    init = init_gaussians(pts, bound, config.sh_degree, config.np_dtype)
    images = {c.id: dataset.image(c) for c in cams}
    return Trainer(init, cams, images, config, bound, settings, spatial_scale=scene_extent(dataset.train_cameras))


def train_block(block: SceneBlock | None, dataset: SceneDataset, config: TrainConfig,
                bound: SamplingBound | None = None, settings: RasterSettings = DEFAULT_SETTINGS,
                callback=None) -> tuple[GaussianModel, TrainReport]:
    """Initialize from the block's points and optimize against its training views."""
    if bound is None:
        bound = resolve_bound(dataset, config)
    trainer = block_trainer(block, dataset, config, bound, settings)
    if trainer is None:
        return GaussianModel.empty(config.sh_degree, config.np_dtype), TrainReport(tau_size=bound.tau_size)
    trainer.run(callback=callback)
    return trainer.gaussians, trainer.report


def merge_blocks(blocks: list[SceneBlock], trained: list[GaussianModel], dataset: SceneDataset,
                 grid) -> GaussianModel:
    """Concatenate block results, keeping each Gaussian only inside its own block's cell."""
    lo, _, size = _grid_geometry(dataset.points.positions, grid)
    kept = []
    for block, g in zip(blocks, trained):
        if len(g) == 0:
            continue
        owner = _cell_of(np.asarray(g.position, dtype=np.float64), lo, size, grid)
        kept.append(g.select(owner == block.id))
    degree = trained[0].sh_degree if trained else 3
    return GaussianModel.concatenate(kept, degree, trained[0].dtype if trained else np.float64)


def train_scene(dataset: SceneDataset, config: TrainConfig, settings: RasterSettings = DEFAULT_SETTINGS,
                callback=None) -> tuple[GaussianModel, TrainReport, dict[str, np.ndarray]]:
    """Partition, train every block in turn, merge.

    The third return value holds each block's optimizer and loop state, keyed
    ``block<id>/...``, for the checkpoint sidecar.
    """
    bound = resolve_bound(dataset, config)
    blocks = partition_scene(dataset, config.grid, config.camera_margin)
    trained, reports, state = [], [], {}
    for block in blocks:
        trainer = block_trainer(block, dataset, config, bound, settings) if block.camera_ids else None
        if trainer is None:
            trained.append(GaussianModel.empty(config.sh_degree, config.np_dtype))
            continue
        trainer.run(callback=callback)
        trained.append(trainer.gaussians)
        reports.append(trainer.report)
        state.update({f"block{block.id}/{k}": v for k, v in trainer.state_arrays().items()})
    merged = merge_blocks(blocks, trained, dataset, config.grid) if len(blocks) > 1 else trained[0]
    if len(reports) == 1:
        report = reports[0]
    else:
        report = _combine_reports(reports, bound)
    return merged, report, state


def _combine_reports(reports: list[TrainReport], bound: SamplingBound) -> TrainReport:
    out = TrainReport(tau_size=bound.tau_size)
    for i, r in enumerate(reports):
        out.history.extend(r.history)
        out.gaussian_counts.extend(r.gaussian_counts)
        out.events.extend({**e, "block": i} for e in r.events)
    return out


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def cross_scale_error(gaussians, cam: Camera, sigma: float = 1.0,
                      settings: RasterSettings = DEFAULT_SETTINGS) -> float:
    """Mean L1 between the pre-filtered downsample of a full render and a direct half-resolution render."""
    fine = np.clip(render(gaussians, cam, settings=settings).image.astype(np.float64), 0, 1)
    coarse = np.clip(render_at_level(gaussians, cam, 1, settings).image.astype(np.float64), 0, 1)
    return l1_image_loss(downsample2(gaussian_blur(fine, sigma)), coarse)[0]


def evaluate(gaussians, dataset: SceneDataset, cameras=None, sigma: float = 1.0,
             settings: RasterSettings = DEFAULT_SETTINGS) -> dict[str, dict[str, float]]:
    cameras = dataset.test_cameras if cameras is None else cameras
    out = {}
    for cam in cameras:
        img = np.clip(render(gaussians, cam, settings=settings).image.astype(np.float64), 0, 1)
        gt = dataset.image(cam)
        out[cam.id] = {
            "psnr": psnr(img, gt),
            "ssim": ssim(img, gt)[0],
            "E": cross_scale_error(gaussians, cam, sigma, settings),
        }
    return out


def mean_metrics(metrics: dict[str, dict[str, float]]) -> dict[str, float]:
    if not metrics:
        return {}
    keys = next(iter(metrics.values())).keys()
    return {k: float(np.mean([m[k] for m in metrics.values()])) for k in keys}


__all__ = [
    "TrainConfig", "SceneBlock", "TrainReport", "Trainer", "partition_scene", "init_gaussians",
    "densify_and_prune", "block_trainer", "train_block", "merge_blocks", "train_scene", "evaluate", "cross_scale_error",
    "mean_metrics", "resolve_bound", "scene_extent",
]
