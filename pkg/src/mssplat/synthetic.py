"""Procedural test scenes with supersampled, box-filtered ground truth.

Three families:

* ``checkerboard-plane``: a textured plane z = 0 seen from three orbit rings
  (near / mid / far), ray cast analytically.
* ``two-walls``: two fronto-parallel textured walls at depths d1 < d2; every
  camera sits in the plane z = 0 looking down +z, so the nearest visible
  point of each camera is exactly d1 away.
* ``gaussian-field``: a random cloud of Gaussians rendered by the
  rasterizer itself (the first one sits at the orbit target).

Each ground-truth pixel is the mean of an S x S block of point samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import Camera, look_at
from .errors import InvalidInputError
from .gaussians import GaussianModel, num_sh_coeffs, rgb_to_sh_dc
from .rasterizer import RasterSettings, render
from .scene_io import SceneDataset, SparsePointCloud, to_uint8

FAMILIES = ("checkerboard-plane", "gaussian-field", "two-walls")
ALIASES = {
    "synth_checker": "checkerboard-plane",
    "synth_field": "gaussian-field",
    "synth_walls": "two-walls",
}


@dataclass(frozen=True)
class SyntheticSpec:
    family: str = "checkerboard-plane"
    n_cameras: int = 12
    width: int = 64
    height: int = 64
    focal: float = 64.0
    supersample: int = 4
    seed: int = 0
    ring_radii: tuple[float, ...] = (2.0, 3.0, 4.5)
    elevation_deg: float = 55.0
    test_every: int = 4  # every k-th camera (offset k-1) is held out; 0 disables
    n_points: int = 1500
    # checkerboard
    plane_half_extent: float = 2.0
    square_size: float = 0.25
    colors: tuple[tuple[float, float, float], ...] = ((0.85, 0.78, 0.62), (0.22, 0.3, 0.45))
    # two-walls
    wall_depths: tuple[float, float] = (2.0, 5.0)
    lateral_extent: float = 0.3
    # gaussian-field
    n_field_gaussians: int = 40
    field_radius: float = 1.0
    field_scale_range: tuple[float, float] = (0.05, 0.25)
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    extras: dict = field(default_factory=dict, compare=False)

    def resolved_family(self) -> str:
        fam = ALIASES.get(self.family, self.family)
        if fam not in FAMILIES:
            raise InvalidInputError(f"unknown synthetic family {self.family!r}; choose from {FAMILIES}")
        return fam


# ---------------------------------------------------------------------------
# cameras
# ---------------------------------------------------------------------------


def _split(i: int, spec: SyntheticSpec) -> str:
    if spec.test_every and i % spec.test_every == spec.test_every - 1:
        return "test"
    return "train"


def orbit_cameras(spec: SyntheticSpec, target=(0.0, 0.0, 0.0)) -> list[Camera]:
    """Cameras cycling through the rings, azimuths evenly spread (golden-angle offset per ring)."""
    cams = []
    elev = np.deg2rad(spec.elevation_deg)
    n_rings = len(spec.ring_radii)
    for i in range(spec.n_cameras):
        ring = i % n_rings
        r = spec.ring_radii[ring]
        az = 2 * np.pi * i / spec.n_cameras + ring * 2.399963
        eye = np.asarray(target) + r * np.array(
            [np.cos(elev) * np.cos(az), np.cos(elev) * np.sin(az), np.sin(elev)]
        )
        R, t = look_at(eye, target)
        cams.append(_camera(spec, R, t, i))
    return cams


def wall_cameras(spec: SyntheticSpec) -> list[Camera]:
    rng = np.random.default_rng(spec.seed)
    cams = []
    for i in range(spec.n_cameras):
        ex, ey = rng.uniform(-spec.lateral_extent, spec.lateral_extent, 2)
        # identity orientation: camera axes are world axes, looking down +z
        cams.append(_camera(spec, np.eye(3), -np.array([ex, ey, 0.0]), i))
    return cams


def _camera(spec: SyntheticSpec, R, t, i) -> Camera:
    return Camera(
        spec.focal, spec.focal, (spec.width - 1) / 2, (spec.height - 1) / 2,
        spec.width, spec.height, R, t, id=f"{i:03d}", split=_split(i, spec),
    )


# ---------------------------------------------------------------------------
# analytic ray casting
# ---------------------------------------------------------------------------


def _rays(cam: Camera):
    u, v = np.meshgrid(np.arange(cam.width, dtype=np.float64), np.arange(cam.height, dtype=np.float64))
    d_cam = np.stack([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, np.ones_like(u)], axis=-1)
    return cam.center, d_cam @ cam.rotation  # rows of R^T applied


def checker_color(xy: np.ndarray, spec: SyntheticSpec) -> np.ndarray:
    idx = np.floor(xy[..., 0] / spec.square_size).astype(np.int64) + np.floor(
        xy[..., 1] / spec.square_size
    ).astype(np.int64)
    c0, c1 = (np.asarray(c) for c in spec.colors[:2])
    return np.where((idx % 2 == 0)[..., None], c0, c1)


def _wall_color(xy: np.ndarray, wall: int, spec: SyntheticSpec) -> np.ndarray:
    if wall == 0:
        stripes = (np.floor(xy[..., 0] / 0.1).astype(np.int64) % 2 == 0)[..., None]
        return np.where(stripes, np.array([0.9, 0.3, 0.2]), np.array([0.3, 0.1, 0.1]))
    checks = (np.floor(xy[..., 0] / 0.3) + np.floor(xy[..., 1] / 0.3)).astype(np.int64) % 2 == 0
    return np.where(checks[..., None], np.array([0.2, 0.6, 0.9]), np.array([0.1, 0.2, 0.3]))


def _raycast(cam: Camera, spec: SyntheticSpec, family: str) -> np.ndarray:
    origin, dirs = _rays(cam)
    img = np.broadcast_to(np.asarray(spec.background, dtype=np.float64), dirs.shape).copy()
    if family == "checkerboard-plane":
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -origin[2] / dirs[..., 2]
        hit = origin[:2] + t[..., None] * dirs[..., :2]
        ok = (t > 0) & np.all(np.abs(hit) <= spec.plane_half_extent, axis=-1)
        img[ok] = checker_color(hit[ok], spec)
        return img
    # two-walls: wall 0 covers x <= 0 at depth d1; wall 1 fills depth d2
    d1, d2 = spec.wall_depths
    for wall, depth in ((1, d2), (0, d1)):
        t = (depth - origin[2]) / dirs[..., 2]
        hit = origin[:2] + t[..., None] * dirs[..., :2]
        ok = t > 0
        if wall == 0:
            ok &= hit[..., 0] <= 0.0
        img[ok] = _wall_color(hit[ok], wall, spec)
    return img


def box_downsample(img: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return img
    h, w = img.shape[0] // factor, img.shape[1] // factor
    return img[: h * factor, : w * factor].reshape(h, factor, w, factor, -1).mean(axis=(1, 3))


# ---------------------------------------------------------------------------
# scene content
# ---------------------------------------------------------------------------


def field_gaussians(spec: SyntheticSpec) -> GaussianModel:
    rng = np.random.default_rng(spec.seed + 1)
    n = spec.n_field_gaussians
    pos = rng.uniform(-1, 1, (n, 3))
    pos *= spec.field_radius * rng.uniform(0, 1, (n, 1)) ** (1 / 3) / np.maximum(
        np.linalg.norm(pos, axis=1, keepdims=True), 1e-9
    )
    pos[0] = 0.0
    lo, hi = spec.field_scale_range
    log_scale = np.log(rng.uniform(lo, hi, (n, 3)))
    log_scale[0] = np.log(hi)
    rot = rng.normal(size=(n, 4))
    rot[0] = (1, 0, 0, 0)
    sh = np.zeros((n, num_sh_coeffs(0), 3))
    sh[:, 0, :] = rgb_to_sh_dc(rng.uniform(0.2, 1.0, (n, 3)))
    opacity_logit = np.full(n, 2.0)
    return GaussianModel(pos, log_scale, rot, opacity_logit, sh, sh_degree=0)


def _points(spec: SyntheticSpec, family: str, gaussians: GaussianModel | None) -> SparsePointCloud:
    rng = np.random.default_rng(spec.seed + 2)
    n = spec.n_points
    if family == "checkerboard-plane":
        xy = rng.uniform(-spec.plane_half_extent, spec.plane_half_extent, (n, 2))
        pos = np.concatenate([xy, np.zeros((n, 1))], axis=1)
        col = checker_color(xy, spec)
    elif family == "two-walls":
        d1, d2 = spec.wall_depths
        n0 = n // 2
        half_w1 = d1 * (spec.width / 2) / spec.focal + spec.lateral_extent
        half_w2 = d2 * (spec.width / 2) / spec.focal + spec.lateral_extent
        half_h1 = d1 * (spec.height / 2) / spec.focal + spec.lateral_extent
        half_h2 = d2 * (spec.height / 2) / spec.focal + spec.lateral_extent
        p0 = np.stack([rng.uniform(-half_w1, 0, n0), rng.uniform(-half_h1, half_h1, n0), np.full(n0, d1)], 1)
        p1 = np.stack(
            [rng.uniform(0, half_w2, n - n0), rng.uniform(-half_h2, half_h2, n - n0), np.full(n - n0, d2)], 1
        )
        pos = np.concatenate([p0, p1])
        col = np.concatenate([_wall_color(p0[:, :2], 0, spec), _wall_color(p1[:, :2], 1, spec)])
    else:
        pos = gaussians.position.copy()
        col = np.clip(gaussians.sh_coeffs[:, 0, :] * 0.28209479177387814 + 0.5, 0, 1)
    return SparsePointCloud(pos, to_uint8(col))


def render_ground_truth(cam: Camera, spec: SyntheticSpec, supersample: int | None = None,
                        gaussians: GaussianModel | None = None) -> np.ndarray:
    """Anti-aliased reference image of the scene seen by `cam`."""
    s = spec.supersample if supersample is None else supersample
    family = spec.resolved_family()
    hi = cam.supersampled(s)
    if family == "gaussian-field":
        if gaussians is None:
            gaussians = field_gaussians(spec)
        img = render(gaussians, hi, settings=RasterSettings()).image
    else:
        img = _raycast(hi, spec, family)
    return np.clip(box_downsample(img, s), 0.0, 1.0)


def generate_synthetic_scene(spec: SyntheticSpec) -> tuple[SceneDataset, dict[str, np.ndarray]]:
    family = spec.resolved_family()
    cams = wall_cameras(spec) if family == "two-walls" else orbit_cameras(spec)
    gaussians = field_gaussians(spec) if family == "gaussian-field" else None
    images = {c.id: render_ground_truth(c, spec, gaussians=gaussians) for c in cams}
    dataset = SceneDataset(cams, _points(spec, family, gaussians), dict(images))
    return dataset, images
