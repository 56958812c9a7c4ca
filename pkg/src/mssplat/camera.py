"""Pinhole camera with world-to-camera extrinsics (x right, y down, z forward)."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError, ValidationError


@dataclass(frozen=True, eq=False)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray  # world -> camera
    translation: np.ndarray
    id: str = "0"
    split: str = "train"
    image_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError(f"camera {self.id}: focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"camera {self.id}: image size must be positive")
        if self.split not in ("train", "test"):
            raise ValidationError(f"camera {self.id}: split must be train or test, got {self.split!r}")

    def __eq__(self, other):
        if not isinstance(other, Camera):
            return NotImplemented
        return (
            (self.fx, self.fy, self.cx, self.cy, self.width, self.height, self.id, self.split, self.image_path)
            == (other.fx, other.fy, other.cx, other.cy, other.width, other.height, other.id, other.split, other.image_path)
            and np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    __hash__ = None

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def focal_min(self) -> float:
        return min(self.fx, self.fy)

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Pixel coordinates (N, 2) and camera depth (N,) of world points."""
        pc = self.world_to_camera(points)
        z = pc[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            uv = np.stack([self.fx * pc[:, 0] / z + self.cx, self.fy * pc[:, 1] / z + self.cy], axis=1)
        return uv, z

    def at_level(self, level: int) -> Camera:
        """Camera for pyramid level `level`: dims floor-halved per level.

        Coarse pixel x is centred on fine pixel 2x, the same sampling grid the
        stride-2 image downsample uses, so rendered and ground-truth levels
        line up.
        """
        if level < 0:
            raise InvalidInputError("level must be non-negative")
        if level == 0:
            return self
        factor = 2**level
        w, h = self.width // factor, self.height // factor
        if w < 1 or h < 1:
            raise InvalidInputError(f"level {level} of a {self.width}x{self.height} camera is empty")
        return replace(
            self,
            fx=self.fx / factor,
            fy=self.fy / factor,
            cx=self.cx / factor,
            cy=self.cy / factor,
            width=w,
            height=h,
        )

    def supersampled(self, factor: int) -> Camera:
        """Camera whose factor x factor pixel blocks average to this camera's pixels."""
        if factor == 1:
            return self
        return replace(
            self,
            fx=self.fx * factor,
            fy=self.fy * factor,
            cx=(self.cx + 0.5) * factor - 0.5,
            cy=(self.cy + 0.5) * factor - 0.5,
            width=self.width * factor,
            height=self.height * factor,
        )


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """World-to-camera (R, t) for a camera at `eye` looking at `target`."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.stack([right, down, forward])
    return R, -R @ eye


def check_rotation(R: np.ndarray, tol: float) -> bool:
    R = np.asarray(R, dtype=np.float64)
    return bool(np.abs(R @ R.T - np.eye(3)).max() <= tol and np.linalg.det(R) > 0)
