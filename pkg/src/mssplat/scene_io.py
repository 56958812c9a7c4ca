"""Cameras, sparse points, Gaussian PLY files and dataset directories.

Camera file (UTF-8), header ``prismgs-cameras v1`` then one camera per line::

    id fx fy cx cy width height r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz split image_path

`split` is ``train`` or ``test``; `image_path` is ``-`` when absent. Blank
lines and lines starting with ``#`` are ignored.

A dataset directory holds ``cameras.txt``, ``points.ply`` and the images the
camera lines point at (paths relative to the directory).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image
from plyfile import PlyData, PlyElement

from .camera import Camera, check_rotation
from .errors import FormatError, ValidationError
from .gaussians import GaussianModel, num_sh_coeffs, sh_degree_from_count

CAMERA_HEADER = "prismgs-cameras v1"
DEFAULT_POINT_COLOR = 128


@dataclass
class SparsePointCloud:
    positions: np.ndarray  # (N, 3) float64
    colors: np.ndarray  # (N, 3) uint8

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
        if len(self.positions) != len(self.colors):
            raise ValidationError("positions and colors differ in length")
        if not np.all(np.isfinite(self.positions)):
            raise ValidationError("point positions must be finite")

    def __len__(self) -> int:
        return len(self.positions)


@dataclass
class SceneDataset:
    cameras: list[Camera]
    points: SparsePointCloud
    images: dict[str, np.ndarray] = field(default_factory=dict)  # camera id -> (H, W, 3) in [0, 1]
    root: Path | None = None

    @property
    def train_cameras(self) -> list[Camera]:
        return [c for c in self.cameras if c.split == "train"]

    @property
    def test_cameras(self) -> list[Camera]:
        return [c for c in self.cameras if c.split == "test"]

    def image(self, cam: Camera) -> np.ndarray:
        if cam.id not in self.images:
            if self.root is None or cam.image_path is None:
                raise FileNotFoundError(f"no ground-truth image for camera {cam.id}")
            self.images[cam.id] = load_image(self.root / cam.image_path)
        return self.images[cam.id]


# ---------------------------------------------------------------------------
# cameras
# ---------------------------------------------------------------------------


def _orthonormalize(R: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(R)
    return u @ vt


def load_cameras(path) -> list[Camera]:
    text = Path(path).read_text(encoding="utf-8")
    cameras = []
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not header_seen:
            if line != CAMERA_HEADER:
                raise FormatError(f"expected header {CAMERA_HEADER!r}, got {line!r}", lineno)
            header_seen = True
            continue
        parts = line.split()
        if len(parts) != 21:
            raise FormatError(f"expected 21 fields, got {len(parts)}", lineno)
        try:
            fx, fy, cx, cy = (float(v) for v in parts[1:5])
            width, height = int(parts[5]), int(parts[6])
            R = np.array([float(v) for v in parts[7:16]]).reshape(3, 3)
            t = np.array([float(v) for v in parts[16:19]])
        except ValueError as exc:
            raise FormatError(str(exc), lineno) from None
        split = parts[19]
        if split not in ("train", "test"):
            raise FormatError(f"split must be train or test, got {split!r}", lineno)
        if not check_rotation(R, 1e-3):
            raise ValidationError(f"line {lineno}: rotation of camera {parts[0]} is not orthonormal")
        if not check_rotation(R, 1e-6):
            R = _orthonormalize(R)
        image_path = None if parts[20] == "-" else parts[20]
        try:
            cameras.append(Camera(fx, fy, cx, cy, width, height, R, t, parts[0], split, image_path))
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
    return cameras


def write_cameras(cameras, path) -> None:
    lines = [CAMERA_HEADER]
    for c in cameras:
        if any(ch.isspace() for ch in c.id) or (c.image_path and any(ch.isspace() for ch in c.image_path)):
            raise ValidationError(f"camera id and image path must not contain whitespace: {c.id!r}")
        fields = [c.id, *(repr(float(v)) for v in (c.fx, c.fy, c.cx, c.cy))]
        fields += [str(c.width), str(c.height)]
        fields += [repr(float(v)) for v in c.rotation.ravel()]
        fields += [repr(float(v)) for v in c.translation]
        fields += [c.split, c.image_path or "-"]
        lines.append(" ".join(fields))
    _atomic_write_text(Path(path), "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# PLY
# ---------------------------------------------------------------------------


def load_ply_points(path) -> SparsePointCloud:
    ply = PlyData.read(str(path))
    try:
        vertex = ply["vertex"]
    except KeyError:
        raise FormatError("PLY has no vertex element") from None
    names = vertex.data.dtype.names
    missing = [p for p in "xyz" if p not in names]
    if missing:
        raise FormatError(f"PLY vertex element lacks properties {missing}")
    pos = np.stack([np.asarray(vertex[p], dtype=np.float64) for p in "xyz"], axis=1)
    if all(c in names for c in ("red", "green", "blue")):
        col = np.stack([np.asarray(vertex[c]) for c in ("red", "green", "blue")], axis=1)
        if np.issubdtype(col.dtype, np.floating) and col.size and col.max() <= 1.0:
            col = col * 255.0
        col = np.clip(np.round(col), 0, 255).astype(np.uint8)
    else:
        col = np.full((len(pos), 3), DEFAULT_POINT_COLOR, dtype=np.uint8)
    return SparsePointCloud(pos, col)


def save_ply_points(points: SparsePointCloud, path, ascii: bool = False) -> None:
    dtype = [("x", "f4"), ("y", "f4"), ("z", "f4"), ("red", "u1"), ("green", "u1"), ("blue", "u1")]
    arr = np.empty(len(points), dtype=dtype)
    for i, p in enumerate("xyz"):
        arr[p] = points.positions[:, i]
    for i, c in enumerate(("red", "green", "blue")):
        arr[c] = points.colors[:, i]
    _atomic_write_ply(PlyData([PlyElement.describe(arr, "vertex")], text=ascii, byte_order="<"), Path(path))


def _gaussian_property_names(sh_degree: int) -> list[str]:
    n_rest = 3 * (num_sh_coeffs(sh_degree) - 1)
    return (
        ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
        + [f"f_rest_{i}" for i in range(n_rest)]
        + ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    )


def save_gaussians_ply(gaussians: GaussianModel, path) -> None:
    """Write the community 3DGS layout (float32, f_rest channel-major)."""
    g = gaussians
    n = len(g)
    k = num_sh_coeffs(g.sh_degree)
    names = _gaussian_property_names(g.sh_degree)
    rest = np.transpose(g.sh_coeffs[:, 1:, :], (0, 2, 1)).reshape(n, 3 * (k - 1))
    cols = np.concatenate(
        [
            g.position,
            np.zeros((n, 3)),
            g.sh_coeffs[:, 0, :],
            rest,
            g.opacity_logit[:, None],
            g.log_scale,
            g.rotation,
        ],
        axis=1,
    ).astype(np.float32)
    arr = np.empty(n, dtype=[(name, "f4") for name in names])
    for i, name in enumerate(names):
        arr[name] = cols[:, i]
    _atomic_write_ply(PlyData([PlyElement.describe(arr, "vertex")], byte_order="<"), Path(path))


def load_gaussians_ply(path, sh_degree: int | None = None, dtype=np.float32) -> GaussianModel:
    ply = PlyData.read(str(path))
    try:
        v = ply["vertex"]
    except KeyError:
        raise FormatError("PLY has no vertex element") from None
    names = set(v.data.dtype.names)
    required = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
                "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    missing = [p for p in required if p not in names]
    if missing:
        raise FormatError(f"not a Gaussian PLY, missing {missing}")
    n_rest = sum(1 for p in names if p.startswith("f_rest_"))
    try:
        degree = sh_degree_from_count(1 + n_rest // 3) if n_rest % 3 == 0 else -1
    except ValueError:
        degree = -1
    if degree < 0:
        raise FormatError(f"{n_rest} f_rest properties do not match any SH degree")
    if sh_degree is not None and degree != sh_degree:
        raise FormatError(f"file holds SH degree {degree}, expected {sh_degree}")

    def col(name):
        return np.asarray(v[name], dtype=dtype)

    n = len(v.data)
    k = num_sh_coeffs(degree)
    sh = np.zeros((n, k, 3), dtype=dtype)
    sh[:, 0, :] = np.stack([col(f"f_dc_{i}") for i in range(3)], axis=1)
    if k > 1:
        rest = np.stack([col(f"f_rest_{i}") for i in range(n_rest)], axis=1)
        sh[:, 1:, :] = np.transpose(rest.reshape(n, 3, k - 1), (0, 2, 1))
    return GaussianModel(
        np.stack([col(p) for p in "xyz"], axis=1),
        np.stack([col(f"scale_{i}") for i in range(3)], axis=1),
        np.stack([col(f"rot_{i}") for i in range(4)], axis=1),
        col("opacity"),
        sh,
        degree,
    )


# ---------------------------------------------------------------------------
# images and datasets
# ---------------------------------------------------------------------------


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def save_image(img: np.ndarray, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    Image.fromarray(to_uint8(img)).save(tmp, format="PNG")
    os.replace(tmp, path)


def load_dataset(root) -> SceneDataset:
    root = Path(root)
    cams_path = root / "cameras.txt"
    pts_path = root / "points.ply"
    for p in (cams_path, pts_path):
        if not p.exists():
            raise FileNotFoundError(f"dataset {root} is missing {p.name}")
    return SceneDataset(load_cameras(cams_path), load_ply_points(pts_path), {}, root)


def save_dataset(dataset: SceneDataset, root) -> Path:
    """Write cameras.txt, points.ply and images/<id>.png (8-bit) under root."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    cams = []
    for cam in dataset.cameras:
        rel = cam.image_path
        if cam.id in dataset.images:
            rel = f"images/{cam.id}.png"
            save_image(dataset.images[cam.id], root / rel)
        cams.append(replace(cam, image_path=rel))
    write_cameras(cams, root / "cameras.txt")
    save_ply_points(dataset.points, root / "points.ply")
    return root


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _atomic_write_ply(ply: PlyData, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    ply.write(str(tmp))
    os.replace(tmp, path)
