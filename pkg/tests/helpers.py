"""Shared builders and independent reference implementations for the tests."""

from __future__ import annotations

import numpy as np

from mssplat.camera import Camera, look_at
from mssplat.gaussians import GaussianModel, eval_sh_color, num_sh_coeffs, sigmoid


def random_model(rng, n=5, degree=3, dtype=np.float64, spread=0.6, scale=(0.08, 0.3)) -> GaussianModel:
    q = rng.normal(size=(n, 4))
    sh = rng.normal(scale=0.3, size=(n, num_sh_coeffs(degree), 3))
    sh[:, 0, :] = rng.normal(scale=0.8, size=(n, 3))
    return GaussianModel(
        rng.uniform(-spread, spread, (n, 3)),
        np.log(rng.uniform(*scale, (n, 3))),
        q,
        rng.normal(0.5, 1.0, n),
        sh,
        degree,
    ).astype(dtype)


def orbit_camera(rng=None, size=16, dist=3.0, focal=None, eye=None) -> Camera:
    if eye is None:
        rng = np.random.default_rng(0) if rng is None else rng
        d = rng.normal(size=3)
        d[2] = abs(d[2]) + 0.3
        eye = dist * d / np.linalg.norm(d)
    R, t = look_at(eye, (0.0, 0.0, 0.0))
    f = float(size) if focal is None else focal
    return Camera(f, f, (size - 1) / 2, (size - 1) / 2, size, size, R, t)


def axis_camera(size=32, focal=32.0, depth=4.0) -> Camera:
    """Identity orientation at (0, 0, -depth), looking down +z at the origin."""
    return Camera(focal, focal, (size - 1) / 2, (size - 1) / 2, size, size, np.eye(3), np.array([0.0, 0.0, depth]))


def naive_render(model: GaussianModel, cam: Camera, dilation=0.3, support_sigma=3.0):
    """Per-pixel global sort, no tiles, no thresholds; plain numpy loops.

    Written from the compositing formula directly so it shares no code with
    the tiled kernels.
    """
    h, w = cam.height, cam.width
    img = np.zeros((h, w, 3))
    n = len(model)
    if n == 0:
        return img
    pos = np.asarray(model.position, np.float64)
    pc = pos @ cam.rotation.T + cam.translation
    covs = model.astype(np.float64).covariances()
    means, conics, colors, alphas, depths, keep = [], [], [], [], [], []
    for i in range(n):
        x, y, z = pc[i]
        if z <= 0:
            continue
        J = np.array([[cam.fx / z, 0, -cam.fx * x / z**2], [0, cam.fy / z, -cam.fy * y / z**2]])
        T = J @ cam.rotation
        c2 = T @ covs[i] @ T.T
        if np.linalg.det(c2) <= 0:
            continue
        c2 = c2 + dilation * np.eye(2)
        means.append([cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy])
        conics.append(np.linalg.inv(c2))
        d = pos[i] - cam.center
        colors.append(eval_sh_color(np.asarray(model.sh_coeffs[i], np.float64), d / np.linalg.norm(d), model.sh_degree))
        alphas.append(float(sigmoid(float(model.opacity_logit[i]))))
        depths.append(z)
        keep.append(i)
    order = sorted(range(len(keep)), key=lambda k: (depths[k], keep[k]))
    for py in range(h):
        for px in range(w):
            T = 1.0
            for k in order:
                dx = np.array([px, py]) - means[k]
                m = dx @ conics[k] @ dx
                if m > support_sigma**2:
                    continue
                a = alphas[k] * np.exp(-0.5 * m)
                img[py, px] += colors[k] * a * T
                T *= 1 - a
    return img


def grad_close(analytic, numeric, rtol=1e-4, atol=1e-6) -> bool:
    err = abs(analytic - numeric)
    return err <= atol or err <= rtol * max(abs(analytic), abs(numeric))


def raster_fd_probes(rng, model, cam, settings, n_probes, eps=1e-3):
    """(name, index, analytic, numeric) for random parameter entries of
    L = sum(w * image) with a random weight image w."""
    from mssplat.gaussians import PARAM_NAMES
    from mssplat.rasterizer import render, render_backward

    w = rng.normal(size=(cam.height, cam.width, 3))
    fwd = render(model, cam, settings=settings)
    grads, _ = render_backward(model, cam, w, fwd)
    out = []
    for _ in range(n_probes):
        name = PARAM_NAMES[rng.integers(len(PARAM_NAMES))]
        arr = getattr(model, name)
        idx = tuple(int(rng.integers(s)) for s in arr.shape)
        old = arr[idx]
        arr[idx] = old + eps
        hi = float(np.sum(w * render(model, cam, settings=settings).image))
        arr[idx] = old - eps
        lo = float(np.sum(w * render(model, cam, settings=settings).image))
        arr[idx] = old
        out.append((name, idx, float(grads[name][idx]), (hi - lo) / (2 * eps)))
    return out
