"""Gaussian primitive parameterization and the per-primitive math.

Scales are stored as logs and opacities as logits so an optimizer step can
never leave the valid range. Quaternions are (w, x, y, z) everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import InvalidInputError

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

PARAM_NAMES = ("position", "log_scale", "rotation", "opacity_logit", "sh_coeffs")


def num_sh_coeffs(degree: int) -> int:
    return (degree + 1) ** 2


def sh_degree_from_count(count: int) -> int:
    degree = int(round(np.sqrt(count))) - 1
    if degree < 0 or degree > 3 or num_sh_coeffs(degree) != count:
        raise InvalidInputError(f"{count} SH coefficients does not match any degree in 0..3")
    return degree


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p / (1.0 - p))


# ---------------------------------------------------------------------------
# numba primitives (shared with the rasterizer kernels)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _quat_to_rot(w, x, y, z, out):
    out[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    out[0, 1] = 2.0 * (x * y - w * z)
    out[0, 2] = 2.0 * (x * z + w * y)
    out[1, 0] = 2.0 * (x * y + w * z)
    out[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    out[1, 2] = 2.0 * (y * z - w * x)
    out[2, 0] = 2.0 * (x * z - w * y)
    out[2, 1] = 2.0 * (y * z + w * x)
    out[2, 2] = 1.0 - 2.0 * (x * x + y * y)


@njit(cache=True)
def _rot_vjp(w, x, y, z, g, out):
    """Pull a gradient on R back to the (normalized) quaternion components."""
    out[0] = 2.0 * (
        -z * g[0, 1] + y * g[0, 2] + z * g[1, 0] - x * g[1, 2] - y * g[2, 0] + x * g[2, 1]
    )
    out[1] = 2.0 * (
        y * g[0, 1] + z * g[0, 2] + y * g[1, 0] - 2.0 * x * g[1, 1] - w * g[1, 2]
        + z * g[2, 0] + w * g[2, 1] - 2.0 * x * g[2, 2]
    )
    out[2] = 2.0 * (
        -2.0 * y * g[0, 0] + x * g[0, 1] + w * g[0, 2] + x * g[1, 0] + z * g[1, 2]
        - w * g[2, 0] + z * g[2, 1] - 2.0 * y * g[2, 2]
    )
    out[3] = 2.0 * (
        -2.0 * z * g[0, 0] - w * g[0, 1] + x * g[0, 2] + w * g[1, 0] - 2.0 * z * g[1, 1]
        + y * g[1, 2] + x * g[2, 0] + y * g[2, 1]
    )


@njit(cache=True)
def sh_basis(degree, x, y, z, out):
    """Real SH basis values (3DGS sign convention) for a unit direction."""
    out[0] = SH_C0
    if degree < 1:
        return
    out[1] = -SH_C1 * y
    out[2] = SH_C1 * z
    out[3] = -SH_C1 * x
    if degree < 2:
        return
    xx = x * x
    yy = y * y
    zz = z * z
    out[4] = SH_C2[0] * x * y
    out[5] = SH_C2[1] * y * z
    out[6] = SH_C2[2] * (2.0 * zz - xx - yy)
    out[7] = SH_C2[3] * x * z
    out[8] = SH_C2[4] * (xx - yy)
    if degree < 3:
        return
    out[9] = SH_C3[0] * y * (3.0 * xx - yy)
    out[10] = SH_C3[1] * x * y * z
    out[11] = SH_C3[2] * y * (4.0 * zz - xx - yy)
    out[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
    out[13] = SH_C3[4] * x * (4.0 * zz - xx - yy)
    out[14] = SH_C3[5] * z * (xx - yy)
    out[15] = SH_C3[6] * x * (xx - 3.0 * yy)


@njit(cache=True)
def sh_basis_jacobian(degree, x, y, z, out):
    """d(basis_k)/d(x, y, z) written into out[k, :]; out must be zeroed."""
    if degree < 1:
        return
    out[1, 1] = -SH_C1
    out[2, 2] = SH_C1
    out[3, 0] = -SH_C1
    if degree < 2:
        return
    xx = x * x
    yy = y * y
    zz = z * z
    out[4, 0] = SH_C2[0] * y
    out[4, 1] = SH_C2[0] * x
    out[5, 1] = SH_C2[1] * z
    out[5, 2] = SH_C2[1] * y
    out[6, 0] = -2.0 * SH_C2[2] * x
    out[6, 1] = -2.0 * SH_C2[2] * y
    out[6, 2] = 4.0 * SH_C2[2] * z
    out[7, 0] = SH_C2[3] * z
    out[7, 2] = SH_C2[3] * x
    out[8, 0] = 2.0 * SH_C2[4] * x
    out[8, 1] = -2.0 * SH_C2[4] * y
    if degree < 3:
        return
    out[9, 0] = SH_C3[0] * 6.0 * x * y
    out[9, 1] = SH_C3[0] * (3.0 * xx - 3.0 * yy)
    out[10, 0] = SH_C3[1] * y * z
    out[10, 1] = SH_C3[1] * x * z
    out[10, 2] = SH_C3[1] * x * y
    out[11, 0] = -2.0 * SH_C3[2] * x * y
    out[11, 1] = SH_C3[2] * (4.0 * zz - xx - 3.0 * yy)
    out[11, 2] = 8.0 * SH_C3[2] * y * z
    out[12, 0] = -6.0 * SH_C3[3] * x * z
    out[12, 1] = -6.0 * SH_C3[3] * y * z
    out[12, 2] = SH_C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy)
    out[13, 0] = SH_C3[4] * (4.0 * zz - 3.0 * xx - yy)
    out[13, 1] = -2.0 * SH_C3[4] * x * y
    out[13, 2] = 8.0 * SH_C3[4] * x * z
    out[14, 0] = 2.0 * SH_C3[5] * x * z
    out[14, 1] = -2.0 * SH_C3[5] * y * z
    out[14, 2] = SH_C3[5] * (xx - yy)
    out[15, 0] = SH_C3[6] * (3.0 * xx - 3.0 * yy)
    out[15, 1] = -6.0 * SH_C3[6] * x * y


# ---------------------------------------------------------------------------
# public per-primitive math
# ---------------------------------------------------------------------------


def quat_to_rotation(q) -> np.ndarray:
    """Rotation matrix of a (w, x, y, z) quaternion, normalized first."""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q)
    if not np.isfinite(norm) or norm == 0.0:
        raise InvalidInputError("quaternion must have non-zero finite norm")
    w, x, y, z = q / norm
    out = np.empty((3, 3))
    _quat_to_rot(w, x, y, z, out)
    return out


def build_covariance(scale, rotation) -> np.ndarray:
    """World-space covariance R diag(s)^2 R^T."""
    scale = np.asarray(scale, dtype=np.float64)
    if scale.shape != (3,) or not np.all(scale > 0):
        raise InvalidInputError(f"scale must be three positive values, got {scale}")
    R = quat_to_rotation(rotation)
    M = R * scale
    return M @ M.T


def eval_sh_color(sh_coeffs, view_dir, degree: int | None = None) -> np.ndarray:
    """View-dependent RGB: 0.5 + sum_k c_k Y_k(dir), clamped at zero."""
    sh = np.asarray(sh_coeffs, dtype=np.float64)
    if sh.ndim != 2 or sh.shape[1] != 3:
        raise InvalidInputError("sh_coeffs must have shape (K, 3)")
    if degree is None:
        degree = sh_degree_from_count(sh.shape[0])
    elif sh.shape[0] != num_sh_coeffs(degree):
        raise InvalidInputError(
            f"degree {degree} needs {num_sh_coeffs(degree)} coefficients, got {sh.shape[0]}"
        )
    d = np.asarray(view_dir, dtype=np.float64)
    d = d / np.linalg.norm(d)
    basis = np.zeros(16)
    sh_basis(degree, d[0], d[1], d[2], basis)
    rgb = basis[: sh.shape[0]] @ sh + 0.5
    return np.maximum(rgb, 0.0)


def rgb_to_sh_dc(rgb):
    return (np.asarray(rgb, dtype=np.float64) - 0.5) / SH_C0


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianPrimitive:
    position: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray
    opacity_logit: float
    sh_coeffs: np.ndarray

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    @property
    def opacity(self) -> float:
        return float(sigmoid(self.opacity_logit))

    def covariance(self) -> np.ndarray:
        return build_covariance(self.scale, self.rotation)


@dataclass
class GaussianModel:
    """Struct-of-arrays storage for N Gaussians; this is what gets optimized."""

    position: np.ndarray  # (N, 3)
    log_scale: np.ndarray  # (N, 3)
    rotation: np.ndarray  # (N, 4) w, x, y, z
    opacity_logit: np.ndarray  # (N,)
    sh_coeffs: np.ndarray  # (N, K, 3)
    sh_degree: int = field(default=3)

    def __post_init__(self):
        n = self.position.shape[0]
        k = num_sh_coeffs(self.sh_degree)
        shapes = {
            "position": (n, 3),
            "log_scale": (n, 3),
            "rotation": (n, 4),
            "opacity_logit": (n,),
            "sh_coeffs": (n, k, 3),
        }
        for name, shape in shapes.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise InvalidInputError(f"{name} has shape {arr.shape}, expected {shape}")

    def __len__(self) -> int:
        return self.position.shape[0]

    @property
    def dtype(self):
        return self.position.dtype

    @classmethod
    def empty(cls, sh_degree: int = 3, dtype=np.float64) -> GaussianModel:
        k = num_sh_coeffs(sh_degree)
        return cls(
            np.zeros((0, 3), dtype),
            np.zeros((0, 3), dtype),
            np.zeros((0, 4), dtype),
            np.zeros((0,), dtype),
            np.zeros((0, k, 3), dtype),
            sh_degree,
        )

    @classmethod
    def from_primitives(cls, prims, sh_degree: int | None = None, dtype=np.float64):
        prims = list(prims)
        if not prims:
            return cls.empty(3 if sh_degree is None else sh_degree, dtype)
        if sh_degree is None:
            sh_degree = sh_degree_from_count(np.asarray(prims[0].sh_coeffs).shape[0])
        return cls(
            np.array([p.position for p in prims], dtype=dtype).reshape(-1, 3),
            np.array([p.log_scale for p in prims], dtype=dtype).reshape(-1, 3),
            np.array([p.rotation for p in prims], dtype=dtype).reshape(-1, 4),
            np.array([p.opacity_logit for p in prims], dtype=dtype),
            np.array([p.sh_coeffs for p in prims], dtype=dtype),
            sh_degree,
        )

    def to_primitives(self) -> list[GaussianPrimitive]:
        return [self[i] for i in range(len(self))]

    def __getitem__(self, i: int) -> GaussianPrimitive:
        return GaussianPrimitive(
            self.position[i].copy(),
            self.log_scale[i].copy(),
            self.rotation[i].copy(),
            float(self.opacity_logit[i]),
            self.sh_coeffs[i].copy(),
        )

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> GaussianModel:
        return GaussianModel(
            *(getattr(self, name).copy() for name in PARAM_NAMES), sh_degree=self.sh_degree
        )

    def astype(self, dtype) -> GaussianModel:
        return GaussianModel(
            *(getattr(self, name).astype(dtype) for name in PARAM_NAMES),
            sh_degree=self.sh_degree,
        )

    def select(self, index) -> GaussianModel:
        """Subset by boolean mask or integer index array."""
        return GaussianModel(
            *(getattr(self, name)[index] for name in PARAM_NAMES), sh_degree=self.sh_degree
        )

    @staticmethod
    def concatenate(models, sh_degree: int = 3, dtype=np.float64) -> GaussianModel:
        models = [m for m in models if len(m)]
        if not models:
            return GaussianModel.empty(sh_degree, dtype)
        return GaussianModel(
            *(np.concatenate([getattr(m, name) for m in models]) for name in PARAM_NAMES),
            sh_degree=models[0].sh_degree,
        )

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    @property
    def opacity(self) -> np.ndarray:
        return sigmoid(self.opacity_logit)

    def rotation_matrices(self) -> np.ndarray:
        q = self.rotation / np.linalg.norm(self.rotation, axis=1, keepdims=True)
        w, x, y, z = q.T
        return np.stack(
            [
                1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
                2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
                2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
            ],
            axis=-1,
        ).reshape(-1, 3, 3)

    def covariances(self) -> np.ndarray:
        M = self.rotation_matrices() * self.scale[:, None, :]
        return M @ np.transpose(M, (0, 2, 1))


def zeros_like_params(model: GaussianModel) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in model.params().items()}
