"""Vectorized numpy implementations of the hot kernels.

Arithmetic ordering (neighbor loops, channel loops, scatter order) mirrors
the compiled twin in ``_native.pyx`` so both backends produce bit-identical
results; keep the two files in sync when touching either.
"""

from __future__ import annotations

import numpy as np

# Canonical 8-neighborhood, row-major order.
NEIGHBOR_OFFSETS = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
)

NORMALIZATION_EPS = 1e-12


def _corner_data(plane: np.ndarray, py: np.ndarray, px: np.ndarray):
    """Clamped bilinear corner indices and fractions for fractional positions."""
    h, w = plane.shape
    cy = np.clip(py, 0.0, float(h - 1))
    cx = np.clip(px, 0.0, float(w - 1))
    y0f = np.floor(cy)
    x0f = np.floor(cx)
    fy = cy - y0f
    fx = cx - x0f
    y0 = y0f.astype(np.intp)
    x0 = x0f.astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    return y0, x0, y1, x1, fy, fx


def _lerp_sample(plane, y0, x0, y1, x1, fy, fx):
    v00 = plane[y0, x0]
    v01 = plane[y0, x1]
    v10 = plane[y1, x0]
    v11 = plane[y1, x1]
    top = v00 + fx * (v01 - v00)
    bot = v10 + fx * (v11 - v10)
    return top + fy * (bot - top)


def correlation_volume(f_l: np.ndarray, f_r: np.ndarray, max_disparity: int) -> np.ndarray:
    """Channel-averaged inner products; left features shifted by d.

    scores[d, y, x] = mean_c f_l[y, x - d, c] * f_r[y, x, c]; columns with
    x - d < 0 carry -inf so they can be excluded from soft selections.
    """
    h, w, c = f_l.shape
    scores = np.full((max_disparity, h, w), -np.inf, dtype=np.float64)
    for d in range(max_disparity):
        acc = np.zeros((h, w - d), dtype=np.float64)
        for ch in range(c):
            acc += f_l[:, : w - d, ch] * f_r[:, d:, ch]
        scores[d, :, d:] = acc / c
    return scores


def propagate_forward(d: np.ndarray, offsets: np.ndarray, aff: np.ndarray,
                      conf: np.ndarray) -> np.ndarray:
    """One confidence-normalized non-local propagation step.

    Neighbor values and confidences are bilinearly sampled at the canonical
    neighbor position plus the per-neighbor fractional offset (clamped to the
    image).  Affinity-confidence products are divided by the absolute sum at
    the pixel (floored at NORMALIZATION_EPS) and the self weight is one minus
    the normalized sum, so the weights always partition unity.
    """
    h, w = d.shape
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    d_n = np.empty((8, h, w), dtype=np.float64)
    u = np.empty((8, h, w), dtype=np.float64)
    s = np.zeros((h, w), dtype=np.float64)
    for i, (dy, dx) in enumerate(NEIGHBOR_OFFSETS):
        py = yy + dy + offsets[:, :, i, 0]
        px = xx + dx + offsets[:, :, i, 1]
        y0, x0, y1, x1, fy, fx = _corner_data(d, py, px)
        d_n[i] = _lerp_sample(d, y0, x0, y1, x1, fy, fx)
        c_n = _lerp_sample(conf, y0, x0, y1, x1, fy, fx)
        u[i] = aff[:, :, i] * c_n
        s = s + np.abs(u[i])
    z = np.maximum(s, NORMALIZATION_EPS)
    acc = np.zeros((h, w), dtype=np.float64)
    for i in range(8):
        acc = acc + (u[i] / z) * (d_n[i] - d)
    return d + acc


def propagate_backward(grad_out: np.ndarray, d: np.ndarray, offsets: np.ndarray,
                       aff: np.ndarray, conf: np.ndarray):
    """Vector-Jacobian products of propagate_forward w.r.t. all four inputs.

    sign(0) is taken as 0 in the absolute-sum quotient rule; offset gradients
    vanish where the sampling position was clamped to the border.
    """
    h, w = d.shape
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")

    ny0 = np.empty((h, w, 8), dtype=np.intp)
    nx0 = np.empty((h, w, 8), dtype=np.intp)
    ny1 = np.empty((h, w, 8), dtype=np.intp)
    nx1 = np.empty((h, w, 8), dtype=np.intp)
    nfy = np.empty((h, w, 8), dtype=np.float64)
    nfx = np.empty((h, w, 8), dtype=np.float64)
    passy = np.empty((h, w, 8), dtype=np.float64)
    passx = np.empty((h, w, 8), dtype=np.float64)
    d_n = np.empty((h, w, 8), dtype=np.float64)
    c_n = np.empty((h, w, 8), dtype=np.float64)
    u = np.empty((h, w, 8), dtype=np.float64)
    s = np.zeros((h, w), dtype=np.float64)

    for i, (dy, dx) in enumerate(NEIGHBOR_OFFSETS):
        py = yy + dy + offsets[:, :, i, 0]
        px = xx + dx + offsets[:, :, i, 1]
        y0, x0, y1, x1, fy, fx = _corner_data(d, py, px)
        ny0[:, :, i] = y0
        nx0[:, :, i] = x0
        ny1[:, :, i] = y1
        nx1[:, :, i] = x1
        nfy[:, :, i] = fy
        nfx[:, :, i] = fx
        passy[:, :, i] = ((py >= 0.0) & (py <= h - 1.0)).astype(np.float64)
        passx[:, :, i] = ((px >= 0.0) & (px <= w - 1.0)).astype(np.float64)
        d_n[:, :, i] = _lerp_sample(d, y0, x0, y1, x1, fy, fx)
        c_n[:, :, i] = _lerp_sample(conf, y0, x0, y1, x1, fy, fx)
        u[:, :, i] = aff[:, :, i] * c_n[:, :, i]
        s = s + np.abs(u[:, :, i])

    z = np.maximum(s, NORMALIZATION_EPS)
    atld = u / z[:, :, None]
    wsum = np.zeros((h, w), dtype=np.float64)
    for i in range(8):
        wsum = wsum + atld[:, :, i]

    g = grad_out
    t = g[:, :, None] * (d_n - d[:, :, None])

    inner = np.zeros((h, w), dtype=np.float64)
    for i in range(8):
        inner = inner + t[:, :, i] * atld[:, :, i]
    normalized = s > NORMALIZATION_EPS
    grad_u = np.where(normalized[:, :, None],
                      (t - np.sign(u) * inner[:, :, None]) / z[:, :, None],
                      t / NORMALIZATION_EPS)

    grad_aff = grad_u * c_n
    grad_cval = grad_u * aff

    # Self path first, then scatters in (pixel, neighbor, corner) order so the
    # accumulation sequence matches the compiled kernel.
    grad_d = g * (1.0 - wsum)
    grad_conf = np.zeros((h, w), dtype=np.float64)

    gdi = g[:, :, None] * atld
    w00 = (1.0 - nfy) * (1.0 - nfx)
    w01 = (1.0 - nfy) * nfx
    w10 = nfy * (1.0 - nfx)
    w11 = nfy * nfx

    corner_y = np.stack([ny0, ny0, ny1, ny1], axis=3).reshape(-1)
    corner_x = np.stack([nx0, nx1, nx0, nx1], axis=3).reshape(-1)
    d_vals = np.stack([gdi * w00, gdi * w01, gdi * w10, gdi * w11], axis=3).reshape(-1)
    c_vals = np.stack([grad_cval * w00, grad_cval * w01,
                       grad_cval * w10, grad_cval * w11], axis=3).reshape(-1)
    np.add.at(grad_d, (corner_y, corner_x), d_vals)
    np.add.at(grad_conf, (corner_y, corner_x), c_vals)

    # Position derivatives of both bilinear samples feed the offset gradient.
    dv00 = d[ny0, nx0]
    dv01 = d[ny0, nx1]
    dv10 = d[ny1, nx0]
    dv11 = d[ny1, nx1]
    cv00 = conf[ny0, nx0]
    cv01 = conf[ny0, nx1]
    cv10 = conf[ny1, nx0]
    cv11 = conf[ny1, nx1]
    d_dy = (dv10 + nfx * (dv11 - dv10)) - (dv00 + nfx * (dv01 - dv00))
    d_dx = (1.0 - nfy) * (dv01 - dv00) + nfy * (dv11 - dv10)
    c_dy = (cv10 + nfx * (cv11 - cv10)) - (cv00 + nfx * (cv01 - cv00))
    c_dx = (1.0 - nfy) * (cv01 - cv00) + nfy * (cv11 - cv10)

    grad_off = np.empty((h, w, 8, 2), dtype=np.float64)
    grad_off[:, :, :, 0] = (gdi * d_dy + grad_cval * c_dy) * passy
    grad_off[:, :, :, 1] = (gdi * d_dx + grad_cval * c_dx) * passx
    return grad_d, grad_aff, grad_conf, grad_off


def filter_forward(f: np.ndarray, a: np.ndarray, k: int) -> np.ndarray:
    """k x k window gather, one scalar weight per window cell shared across channels."""
    h, w, c = f.shape
    r = (k - 1) // 2
    ys = np.arange(h)
    xs = np.arange(w)
    out = np.zeros((h, w, c), dtype=np.float64)
    for idx in range(k * k):
        ay = idx // k - r
        bx = idx % k - r
        qy = np.clip(ys + ay, 0, h - 1)
        qx = np.clip(xs + bx, 0, w - 1)
        out = out + f[qy[:, None], qx[None, :]] * a[:, :, idx : idx + 1]
    return out


def filter_backward(grad_out: np.ndarray, f: np.ndarray, a: np.ndarray, k: int):
    """Adjoint of filter_forward w.r.t. features and the (normalized) weights."""
    h, w, c = f.shape
    r = (k - 1) // 2
    ys = np.arange(h)
    xs = np.arange(w)
    grad_a = np.empty((h, w, k * k), dtype=np.float64)
    qy_all = np.empty((h, w, k * k), dtype=np.intp)
    qx_all = np.empty((h, w, k * k), dtype=np.intp)
    scatter_vals = np.empty((h, w, k * k, c), dtype=np.float64)
    for idx in range(k * k):
        ay = idx // k - r
        bx = idx % k - r
        qy = np.clip(ys + ay, 0, h - 1)
        qx = np.clip(xs + bx, 0, w - 1)
        qy_all[:, :, idx] = qy[:, None]
        qx_all[:, :, idx] = qx[None, :]
        shifted = f[qy[:, None], qx[None, :]]
        acc = np.zeros((h, w), dtype=np.float64)
        for ch in range(c):
            acc = acc + grad_out[:, :, ch] * shifted[:, :, ch]
        grad_a[:, :, idx] = acc
        scatter_vals[:, :, idx] = grad_out * a[:, :, idx : idx + 1]
    grad_f = np.zeros((h, w, c), dtype=np.float64)
    np.add.at(grad_f, (qy_all.reshape(-1), qx_all.reshape(-1)),
              scatter_vals.reshape(-1, c))
    return grad_f, grad_a
