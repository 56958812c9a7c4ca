"""Adam over named parameter groups, with state that follows densification."""

from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, lrs: dict[str, float], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-15):
        self.lrs = dict(lrs)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.steps: dict[str, np.ndarray] = {}  # per-row step counts, so new rows bias-correct from scratch

    def _ensure(self, name: str, param: np.ndarray):
        if name not in self.m:
            self.m[name] = np.zeros_like(param)
            self.v[name] = np.zeros_like(param)
            self.steps[name] = np.zeros(param.shape[0], dtype=np.int64)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr_scale: dict[str, float] | None = None):
        """In-place update of every array in `params`."""
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                continue
            self._ensure(name, p)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            self.steps[name] += 1
            t = self.steps[name].reshape((-1,) + (1,) * (p.ndim - 1))
            bc1 = 1.0 - self.beta1**t
            bc2 = 1.0 - self.beta2**t
            lr = self.lrs[name] * (1.0 if lr_scale is None else lr_scale.get(name, 1.0))
            update = (lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)).astype(p.dtype, copy=False)
            p -= update

    def set_lr(self, name: str, lr: float):
        self.lrs[name] = lr

    # -- densification bookkeeping -------------------------------------------------

    def select(self, index):
        """Keep only the rows picked by `index` (mask or integer array)."""
        for d in (self.m, self.v, self.steps):
            for name in d:
                d[name] = d[name][index]

    def append_zeros(self, count: int):
        for d in (self.m, self.v, self.steps):
            for name, arr in d.items():
                d[name] = np.concatenate([arr, np.zeros((count,) + arr.shape[1:], dtype=arr.dtype)])

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name in self.m:
            out[f"m/{name}"] = self.m[name]
            out[f"v/{name}"] = self.v[name]
            out[f"steps/{name}"] = self.steps[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        self.m, self.v, self.steps = {}, {}, {}
        for key, arr in arrays.items():
            kind, name = key.split("/", 1)
            getattr(self, kind)[name] = np.array(arr)
