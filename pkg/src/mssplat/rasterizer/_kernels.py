"""numba kernels behind the rasterizer.

All arithmetic is float64 internally whatever the storage dtype. Gradient
accumulation never races: tile kernels write to per-entry slots of the tile
lists, and a sequential pass reduces them per Gaussian in list order.
"""

import math

import numpy as np
from numba import njit, prange

from ..gaussians import _quat_to_rot, _rot_vjp, sh_basis, sh_basis_jacobian

CULLED = 0
VISIBLE = 1
DEGENERATE = 2


@njit(cache=True, parallel=True)
def project_kernel(
    position, log_scale, rotation, opacity_logit, sh, degree,
    Rw, tw, campos, fx, fy, cx, cy, width, height,
    near, support, dilation,
    mean2d, cov2d, conic, depth, color, opacity, rect, status,
):
    n = position.shape[0]
    k = (degree + 1) * (degree + 1)
    for i in prange(n):
        status[i] = CULLED
        px = position[i, 0]
        py = position[i, 1]
        pz = position[i, 2]
        x = Rw[0, 0] * px + Rw[0, 1] * py + Rw[0, 2] * pz + tw[0]
        y = Rw[1, 0] * px + Rw[1, 1] * py + Rw[1, 2] * pz + tw[1]
        z = Rw[2, 0] * px + Rw[2, 1] * py + Rw[2, 2] * pz + tw[2]
        depth[i] = z
        if not (z > near) or z <= 0.0:
            continue
        iz = 1.0 / z
        u = fx * x * iz + cx
        v = fy * y * iz + cy
        mean2d[i, 0] = u
        mean2d[i, 1] = v

        q0 = rotation[i, 0]
        q1 = rotation[i, 1]
        q2 = rotation[i, 2]
        q3 = rotation[i, 3]
        qn = math.sqrt(q0 * q0 + q1 * q1 + q2 * q2 + q3 * q3)
        Rq = np.empty((3, 3))
        _quat_to_rot(q0 / qn, q1 / qn, q2 / qn, q3 / qn, Rq)
        # T = J W, J the projection Jacobian at the camera-space mean
        j00 = fx * iz
        j02 = -fx * x * iz * iz
        j11 = fy * iz
        j12 = -fy * y * iz * iz
        T = np.empty((2, 3))
        for c in range(3):
            T[0, c] = j00 * Rw[0, c] + j02 * Rw[2, c]
            T[1, c] = j11 * Rw[1, c] + j12 * Rw[2, c]
        # cov2d = (T Rq S)(T Rq S)^T
        A = np.empty((2, 3))
        for r in range(2):
            for c in range(3):
                A[r, c] = (T[r, 0] * Rq[0, c] + T[r, 1] * Rq[1, c] + T[r, 2] * Rq[2, c]) * math.exp(log_scale[i, c])
        c00 = A[0, 0] * A[0, 0] + A[0, 1] * A[0, 1] + A[0, 2] * A[0, 2]
        c01 = A[0, 0] * A[1, 0] + A[0, 1] * A[1, 1] + A[0, 2] * A[1, 2]
        c11 = A[1, 0] * A[1, 0] + A[1, 1] * A[1, 1] + A[1, 2] * A[1, 2]
        det_pre = c00 * c11 - c01 * c01
        if not (det_pre > 0.0) or not math.isfinite(det_pre):
            status[i] = DEGENERATE
            continue
        c00 += dilation
        c11 += dilation
        det = c00 * c11 - c01 * c01
        cov2d[i, 0] = c00
        cov2d[i, 1] = c01
        cov2d[i, 2] = c11
        conic[i, 0] = c11 / det
        conic[i, 1] = -c01 / det
        conic[i, 2] = c00 / det

        ex = support * math.sqrt(c00)
        ey = support * math.sqrt(c11)
        x0 = max(0.0, math.ceil(u - ex))
        x1 = min(width - 1.0, math.floor(u + ex))
        y0 = max(0.0, math.ceil(v - ey))
        y1 = min(height - 1.0, math.floor(v + ey))
        if x0 > x1 or y0 > y1:
            continue
        rect[i, 0] = int(x0)
        rect[i, 1] = int(x1)
        rect[i, 2] = int(y0)
        rect[i, 3] = int(y1)

        dxw = px - campos[0]
        dyw = py - campos[1]
        dzw = pz - campos[2]
        dn = math.sqrt(dxw * dxw + dyw * dyw + dzw * dzw)
        basis = np.zeros(16)
        sh_basis(degree, dxw / dn, dyw / dn, dzw / dn, basis)
        for ch in range(3):
            s = 0.5
            for b in range(k):
                s += basis[b] * sh[i, b, ch]
            color[i, ch] = max(s, 0.0)
        opacity[i] = 1.0 / (1.0 + math.exp(-opacity_logit[i]))
        status[i] = VISIBLE


@njit(cache=True)
def bin_kernel(order, rect, tile, tiles_x, tiles_y):
    """CSR tile lists; `order` is the depth-sorted visible set."""
    n_tiles = tiles_x * tiles_y
    counts = np.zeros(n_tiles + 1, dtype=np.int64)
    for g in order:
        for ty in range(rect[g, 2] // tile, rect[g, 3] // tile + 1):
            for tx in range(rect[g, 0] // tile, rect[g, 1] // tile + 1):
                counts[ty * tiles_x + tx + 1] += 1
    offsets = np.cumsum(counts)
    fill = offsets[:-1].copy()
    entries = np.empty(offsets[-1], dtype=np.int64)
    for g in order:
        for ty in range(rect[g, 2] // tile, rect[g, 3] // tile + 1):
            for tx in range(rect[g, 0] // tile, rect[g, 1] // tile + 1):
                t = ty * tiles_x + tx
                entries[fill[t]] = g
                fill[t] += 1
    return offsets, entries


@njit(cache=True, parallel=True)
def raster_forward(
    offsets, entries, mean2d, conic, color, opacity,
    width, height, tile, tiles_x, support2, alpha_min, t_min,
    image, final_T, last, n_contrib,
):
    n_tiles = offsets.shape[0] - 1
    for t in prange(n_tiles):
        tx0 = (t % tiles_x) * tile
        ty0 = (t // tiles_x) * tile
        start = offsets[t]
        stop = offsets[t + 1]
        for py in range(ty0, min(ty0 + tile, height)):
            for px in range(tx0, min(tx0 + tile, width)):
                T = 1.0
                r = 0.0
                gc = 0.0
                b = 0.0
                end = start
                cnt = 0
                for e in range(start, stop):
                    g = entries[e]
                    dx = px - mean2d[g, 0]
                    dy = py - mean2d[g, 1]
                    m2 = conic[g, 0] * dx * dx + 2.0 * conic[g, 1] * dx * dy + conic[g, 2] * dy * dy
                    if m2 > support2:
                        continue
                    alpha = opacity[g] * math.exp(-0.5 * m2)
                    if alpha < alpha_min:
                        continue
                    test_T = T * (1.0 - alpha)
                    if test_T < t_min:
                        break
                    w = alpha * T
                    r += color[g, 0] * w
                    gc += color[g, 1] * w
                    b += color[g, 2] * w
                    T = test_T
                    end = e + 1
                    cnt += 1
                image[py, px, 0] = r
                image[py, px, 1] = gc
                image[py, px, 2] = b
                final_T[py, px] = T
                last[py, px] = end
                n_contrib[py, px] = cnt


@njit(cache=True, parallel=True)
def raster_backward(
    offsets, entries, mean2d, conic, color, opacity,
    width, height, tile, tiles_x, support2, alpha_min, last, upstream,
    g_mean, g_conic, g_opacity, g_color,
):
    """Per-entry gradients w.r.t. mean2d, conic (a, 2b, c), opacity and color.

    Each pixel replays its forward pass front to back to recover the
    per-contributor transmittance, then walks back to front accumulating the
    colour seen behind each contributor. No division by (1 - alpha).
    """
    n_tiles = offsets.shape[0] - 1
    for t in prange(n_tiles):
        tx0 = (t % tiles_x) * tile
        ty0 = (t // tiles_x) * tile
        start = offsets[t]
        stop = offsets[t + 1]
        n_list = stop - start
        idx_buf = np.empty(n_list, dtype=np.int64)
        a_buf = np.empty(n_list)
        T_buf = np.empty(n_list)
        for e in range(start, stop):
            g_mean[e, 0] = 0.0
            g_mean[e, 1] = 0.0
            g_conic[e, 0] = 0.0
            g_conic[e, 1] = 0.0
            g_conic[e, 2] = 0.0
            g_opacity[e] = 0.0
            g_color[e, 0] = 0.0
            g_color[e, 1] = 0.0
            g_color[e, 2] = 0.0
        for py in range(ty0, min(ty0 + tile, height)):
            for px in range(tx0, min(tx0 + tile, width)):
                u0 = upstream[py, px, 0]
                u1 = upstream[py, px, 1]
                u2 = upstream[py, px, 2]
                if u0 == 0.0 and u1 == 0.0 and u2 == 0.0:
                    continue
                end = last[py, px]
                T = 1.0
                m = 0
                for e in range(start, end):
                    g = entries[e]
                    dx = px - mean2d[g, 0]
                    dy = py - mean2d[g, 1]
                    m2 = conic[g, 0] * dx * dx + 2.0 * conic[g, 1] * dx * dy + conic[g, 2] * dy * dy
                    if m2 > support2:
                        continue
                    alpha = opacity[g] * math.exp(-0.5 * m2)
                    if alpha < alpha_min:
                        continue
                    idx_buf[m] = e
                    a_buf[m] = alpha
                    T_buf[m] = T
                    T = T * (1.0 - alpha)
                    m += 1
                b0 = 0.0
                b1 = 0.0
                b2 = 0.0
                for j in range(m - 1, -1, -1):
                    e = idx_buf[j]
                    g = entries[e]
                    alpha = a_buf[j]
                    Tj = T_buf[j]
                    c0 = color[g, 0]
                    c1 = color[g, 1]
                    c2 = color[g, 2]
                    w = alpha * Tj
                    g_color[e, 0] += w * u0
                    g_color[e, 1] += w * u1
                    g_color[e, 2] += w * u2
                    dL_da = Tj * ((c0 - b0) * u0 + (c1 - b1) * u1 + (c2 - b2) * u2)
                    b0 = c0 * alpha + (1.0 - alpha) * b0
                    b1 = c1 * alpha + (1.0 - alpha) * b1
                    b2 = c2 * alpha + (1.0 - alpha) * b2
                    op = opacity[g]
                    g_opacity[e] += dL_da * alpha / op
                    dL_dpow = dL_da * alpha
                    dx = px - mean2d[g, 0]
                    dy = py - mean2d[g, 1]
                    g_mean[e, 0] += dL_dpow * (conic[g, 0] * dx + conic[g, 1] * dy)
                    g_mean[e, 1] += dL_dpow * (conic[g, 1] * dx + conic[g, 2] * dy)
                    g_conic[e, 0] += -0.5 * dx * dx * dL_dpow
                    g_conic[e, 1] += -dx * dy * dL_dpow
                    g_conic[e, 2] += -0.5 * dy * dy * dL_dpow


@njit(cache=True)
def reduce_entries(entries, n, g_mean_e, g_conic_e, g_opacity_e, g_color_e):
    g_mean = np.zeros((n, 2))
    g_conic = np.zeros((n, 3))
    g_opacity = np.zeros(n)
    g_color = np.zeros((n, 3))
    for e in range(entries.shape[0]):
        g = entries[e]
        g_mean[g, 0] += g_mean_e[e, 0]
        g_mean[g, 1] += g_mean_e[e, 1]
        for c in range(3):
            g_conic[g, c] += g_conic_e[e, c]
            g_color[g, c] += g_color_e[e, c]
        g_opacity[g] += g_opacity_e[e]
    return g_mean, g_conic, g_opacity, g_color


@njit(cache=True, parallel=True)
def gaussian_backward(
    position, log_scale, rotation, opacity_logit, sh, degree,
    Rw, tw, campos, fx, fy, dilation, status,
    g_mean, g_conic, g_opacity, g_color,
    d_position, d_log_scale, d_rotation, d_opacity_logit, d_sh,
):
    """Chain per-Gaussian screen-space gradients back to the parameters."""
    n = position.shape[0]
    k = (degree + 1) * (degree + 1)
    for i in prange(n):
        if status[i] != VISIBLE:
            continue
        # opacity
        sig = 1.0 / (1.0 + math.exp(-opacity_logit[i]))
        d_opacity_logit[i] = g_opacity[i] * sig * (1.0 - sig)

        # colour -> SH coefficients and view direction
        px = position[i, 0]
        py = position[i, 1]
        pz = position[i, 2]
        vx = px - campos[0]
        vy = py - campos[1]
        vz = pz - campos[2]
        vn = math.sqrt(vx * vx + vy * vy + vz * vz)
        dxn = vx / vn
        dyn = vy / vn
        dzn = vz / vn
        basis = np.zeros(16)
        sh_basis(degree, dxn, dyn, dzn, basis)
        jac = np.zeros((16, 3))
        sh_basis_jacobian(degree, dxn, dyn, dzn, jac)
        gdir0 = 0.0
        gdir1 = 0.0
        gdir2 = 0.0
        for ch in range(3):
            raw = 0.5
            for b in range(k):
                raw += basis[b] * sh[i, b, ch]
            gc = g_color[i, ch] if raw >= 0.0 else 0.0
            if gc == 0.0:
                continue
            for b in range(k):
                d_sh[i, b, ch] = gc * basis[b]
                gdir0 += gc * sh[i, b, ch] * jac[b, 0]
                gdir1 += gc * sh[i, b, ch] * jac[b, 1]
                gdir2 += gc * sh[i, b, ch] * jac[b, 2]
        dot = gdir0 * dxn + gdir1 * dyn + gdir2 * dzn
        d_position[i, 0] = (gdir0 - dot * dxn) / vn
        d_position[i, 1] = (gdir1 - dot * dyn) / vn
        d_position[i, 2] = (gdir2 - dot * dzn) / vn

        # recompute forward geometry
        x = Rw[0, 0] * px + Rw[0, 1] * py + Rw[0, 2] * pz + tw[0]
        y = Rw[1, 0] * px + Rw[1, 1] * py + Rw[1, 2] * pz + tw[1]
        z = Rw[2, 0] * px + Rw[2, 1] * py + Rw[2, 2] * pz + tw[2]
        iz = 1.0 / z
        j00 = fx * iz
        j02 = -fx * x * iz * iz
        j11 = fy * iz
        j12 = -fy * y * iz * iz
        T = np.empty((2, 3))
        for c in range(3):
            T[0, c] = j00 * Rw[0, c] + j02 * Rw[2, c]
            T[1, c] = j11 * Rw[1, c] + j12 * Rw[2, c]
        q0 = rotation[i, 0]
        q1 = rotation[i, 1]
        q2 = rotation[i, 2]
        q3 = rotation[i, 3]
        qn = math.sqrt(q0 * q0 + q1 * q1 + q2 * q2 + q3 * q3)
        w_ = q0 / qn
        x_ = q1 / qn
        y_ = q2 / qn
        z_ = q3 / qn
        Rq = np.empty((3, 3))
        _quat_to_rot(w_, x_, y_, z_, Rq)
        s2 = np.empty(3)
        for c in range(3):
            s2[c] = math.exp(2.0 * log_scale[i, c])
        Sig = np.zeros((3, 3))
        for r in range(3):
            for c in range(3):
                acc = 0.0
                for m in range(3):
                    acc += Rq[r, m] * s2[m] * Rq[c, m]
                Sig[r, c] = acc
        TS = np.zeros((2, 3))
        for r in range(2):
            for c in range(3):
                acc = 0.0
                for m in range(3):
                    acc += T[r, m] * Sig[m, c]
                TS[r, c] = acc
        a00 = TS[0, 0] * T[0, 0] + TS[0, 1] * T[0, 1] + TS[0, 2] * T[0, 2]
        a01 = TS[0, 0] * T[1, 0] + TS[0, 1] * T[1, 1] + TS[0, 2] * T[1, 2]
        a11 = TS[1, 0] * T[1, 0] + TS[1, 1] * T[1, 1] + TS[1, 2] * T[1, 2]
        c00 = a00 + dilation
        c11 = a11 + dilation
        c01 = a01
        det = c00 * c11 - c01 * c01
        ma = c11 / det
        mb = -c01 / det
        mc = c00 / det

        # conic -> cov2d: dL/dCov = -M G_M M
        ga = g_conic[i, 0]
        gb = 0.5 * g_conic[i, 1]
        gcn = g_conic[i, 2]
        # P = G_M M
        p00 = ga * ma + gb * mb
        p01 = ga * mb + gb * mc
        p10 = gb * ma + gcn * mb
        p11 = gb * mb + gcn * mc
        G = np.empty((2, 2))
        G[0, 0] = -(ma * p00 + mb * p10)
        G[0, 1] = -(ma * p01 + mb * p11)
        G[1, 0] = -(mb * p00 + mc * p10)
        G[1, 1] = -(mb * p01 + mc * p11)
        sym = 0.5 * (G[0, 1] + G[1, 0])
        G[0, 1] = sym
        G[1, 0] = sym

        # cov2d = T Sig T^T: dL/dSig = T^T G T, dL/dT = 2 G T Sig
        GS = np.zeros((3, 3))
        for r in range(3):
            for c in range(3):
                acc = 0.0
                for a in range(2):
                    for b in range(2):
                        acc += T[a, r] * G[a, b] * T[b, c]
                GS[r, c] = acc
        GT = np.zeros((2, 3))
        for r in range(2):
            for c in range(3):
                acc = 0.0
                for b in range(2):
                    acc += G[r, b] * TS[b, c]
                GT[r, c] = 2.0 * acc
        # T = J W: dL/dJ = GT W^T (only the four non-zero J entries matter)
        gj00 = GT[0, 0] * Rw[0, 0] + GT[0, 1] * Rw[0, 1] + GT[0, 2] * Rw[0, 2]
        gj02 = GT[0, 0] * Rw[2, 0] + GT[0, 1] * Rw[2, 1] + GT[0, 2] * Rw[2, 2]
        gj11 = GT[1, 0] * Rw[1, 0] + GT[1, 1] * Rw[1, 1] + GT[1, 2] * Rw[1, 2]
        gj12 = GT[1, 0] * Rw[2, 0] + GT[1, 1] * Rw[2, 1] + GT[1, 2] * Rw[2, 2]
        gu = g_mean[i, 0]
        gv = g_mean[i, 1]
        iz2 = iz * iz
        iz3 = iz2 * iz
        gx = gu * fx * iz - gj02 * fx * iz2
        gy = gv * fy * iz - gj12 * fy * iz2
        gz = (
            -gu * fx * x * iz2 - gv * fy * y * iz2
            - gj00 * fx * iz2 + gj02 * 2.0 * fx * x * iz3
            - gj11 * fy * iz2 + gj12 * 2.0 * fy * y * iz3
        )
        for c in range(3):
            d_position[i, c] += Rw[0, c] * gx + Rw[1, c] * gy + Rw[2, c] * gz

        # Sig = Rq S^2 Rq^T
        GR = np.zeros((3, 3))
        for r in range(3):
            for c in range(3):
                acc = 0.0
                for m in range(3):
                    acc += GS[r, m] * Rq[m, c]
                GR[r, c] = 2.0 * acc * s2[c]
        for c in range(3):
            acc = 0.0
            for r in range(3):
                acc += Rq[r, c] * GR[r, c]
            d_log_scale[i, c] = acc
        gq = np.empty(4)
        _rot_vjp(w_, x_, y_, z_, GR, gq)
        qd = gq[0] * w_ + gq[1] * x_ + gq[2] * y_ + gq[3] * z_
        d_rotation[i, 0] = (gq[0] - qd * w_) / qn
        d_rotation[i, 1] = (gq[1] - qd * x_) / qn
        d_rotation[i, 2] = (gq[2] - qd * y_) / qn
        d_rotation[i, 3] = (gq[3] - qd * z_) / qn
