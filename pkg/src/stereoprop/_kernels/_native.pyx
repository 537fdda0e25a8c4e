# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels.

Mirror of ``_numpy.py``: identical arithmetic and accumulation order so the
two backends agree bit-for-bit (the extension is compiled with
-ffp-contract=off to rule out FMA contraction).  Keep both files in sync.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, floor

cnp.import_array()

cdef double EPS = 1e-12

cdef int NB_Y[8]
cdef int NB_X[8]
NB_Y[0] = -1; NB_X[0] = -1
NB_Y[1] = -1; NB_X[1] = 0
NB_Y[2] = -1; NB_X[2] = 1
NB_Y[3] = 0;  NB_X[3] = -1
NB_Y[4] = 0;  NB_X[4] = 1
NB_Y[5] = 1;  NB_X[5] = -1
NB_Y[6] = 1;  NB_X[6] = 0
NB_Y[7] = 1;  NB_X[7] = 1


cdef inline double _sign(double v) noexcept nogil:
    if v > 0.0:
        return 1.0
    if v < 0.0:
        return -1.0
    return 0.0


cdef inline void _corners(double pos, Py_ssize_t n, Py_ssize_t* i0, Py_ssize_t* i1,
                          double* frac) noexcept nogil:
    cdef double c = pos
    cdef double f0
    if c < 0.0:
        c = 0.0
    elif c > n - 1.0:
        c = n - 1.0
    f0 = floor(c)
    i0[0] = <Py_ssize_t> f0
    i1[0] = i0[0] + 1
    if i1[0] > n - 1:
        i1[0] = n - 1
    frac[0] = c - f0


def correlation_volume(const double[:, :, ::1] f_l, const double[:, :, ::1] f_r, Py_ssize_t max_disparity):
    cdef Py_ssize_t h = f_l.shape[0], w = f_l.shape[1], c = f_l.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out = np.full(
        (max_disparity, h, w), -np.inf, dtype=np.float64)
    cdef double[:, :, ::1] scores = out
    cdef Py_ssize_t d, y, x, ch
    cdef double acc
    with nogil:
        for d in range(max_disparity):
            for y in range(h):
                for x in range(d, w):
                    acc = 0.0
                    for ch in range(c):
                        acc = acc + f_l[y, x - d, ch] * f_r[y, x, ch]
                    scores[d, y, x] = acc / c
    return out


def propagate_forward(const double[:, ::1] d, const double[:, :, :, ::1] offsets,
                      const double[:, :, ::1] aff, const double[:, ::1] conf):
    cdef Py_ssize_t h = d.shape[0], w = d.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t y, x, i, y0, y1, x0, x1
    cdef double py, px, fy, fx, top, bot, dn, cn, s, z, acc, dp
    cdef double d_n[8]
    cdef double u[8]
    with nogil:
        for y in range(h):
            for x in range(w):
                s = 0.0
                for i in range(8):
                    py = y + NB_Y[i] + offsets[y, x, i, 0]
                    px = x + NB_X[i] + offsets[y, x, i, 1]
                    _corners(py, h, &y0, &y1, &fy)
                    _corners(px, w, &x0, &x1, &fx)
                    top = d[y0, x0] + fx * (d[y0, x1] - d[y0, x0])
                    bot = d[y1, x0] + fx * (d[y1, x1] - d[y1, x0])
                    dn = top + fy * (bot - top)
                    top = conf[y0, x0] + fx * (conf[y0, x1] - conf[y0, x0])
                    bot = conf[y1, x0] + fx * (conf[y1, x1] - conf[y1, x0])
                    cn = top + fy * (bot - top)
                    d_n[i] = dn
                    u[i] = aff[y, x, i] * cn
                    s = s + fabs(u[i])
                z = s if s > EPS else EPS
                dp = d[y, x]
                acc = 0.0
                for i in range(8):
                    acc = acc + (u[i] / z) * (d_n[i] - dp)
                out[y, x] = dp + acc
    return out_arr


def propagate_backward(const double[:, ::1] grad_out, const double[:, ::1] d,
                       const double[:, :, :, ::1] offsets, const double[:, :, ::1] aff,
                       const double[:, ::1] conf):
    cdef Py_ssize_t h = d.shape[0], w = d.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gd_arr = np.zeros((h, w), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] ga_arr = np.zeros((h, w, 8), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gc_arr = np.zeros((h, w), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=4] go_arr = np.zeros((h, w, 8, 2), dtype=np.float64)
    cdef double[:, ::1] grad_d = gd_arr
    cdef double[:, :, ::1] grad_aff = ga_arr
    cdef double[:, ::1] grad_conf = gc_arr
    cdef double[:, :, :, ::1] grad_off = go_arr

    # Per-pixel intermediates are cached so the self-weight pass and the
    # scatter pass see the exact values of a single forward evaluation.
    cdef cnp.ndarray[cnp.intp_t, ndim=3] iy0 = np.empty((h, w, 8), dtype=np.intp)
    cdef cnp.ndarray[cnp.intp_t, ndim=3] ix0 = np.empty((h, w, 8), dtype=np.intp)
    cdef cnp.ndarray[cnp.intp_t, ndim=3] iy1 = np.empty((h, w, 8), dtype=np.intp)
    cdef cnp.ndarray[cnp.intp_t, ndim=3] ix1 = np.empty((h, w, 8), dtype=np.intp)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] afy = np.empty((h, w, 8), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] afx = np.empty((h, w, 8), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] apy = np.empty((h, w, 8), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] apx = np.empty((h, w, 8), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] adn = np.empty((h, w, 8), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] acn = np.empty((h, w, 8), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] au = np.empty((h, w, 8), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] asum = np.empty((h, w), dtype=np.float64)
    cdef Py_ssize_t[:, :, ::1] vy0 = iy0, vx0 = ix0, vy1 = iy1, vx1 = ix1
    cdef double[:, :, ::1] vfy = afy, vfx = afx, vpy = apy, vpx = apx
    cdef double[:, :, ::1] vdn = adn, vcn = acn, vu = au
    cdef double[:, ::1] vs = asum

    cdef Py_ssize_t y, x, i, y0, y1, x0, x1
    cdef double py, px, fy, fx, top, bot, s, z, g, dp, wsum, inner, t_i, gu
    cdef double atld_i, gdi, gcv, w00, w01, w10, w11
    cdef double dv00, dv01, dv10, dv11, cv00, cv01, cv10, cv11, ddy, ddx, cdy, cdx

    with nogil:
        for y in range(h):
            for x in range(w):
                s = 0.0
                for i in range(8):
                    py = y + NB_Y[i] + offsets[y, x, i, 0]
                    px = x + NB_X[i] + offsets[y, x, i, 1]
                    _corners(py, h, &y0, &y1, &fy)
                    _corners(px, w, &x0, &x1, &fx)
                    vy0[y, x, i] = y0
                    vx0[y, x, i] = x0
                    vy1[y, x, i] = y1
                    vx1[y, x, i] = x1
                    vfy[y, x, i] = fy
                    vfx[y, x, i] = fx
                    vpy[y, x, i] = 1.0 if (py >= 0.0 and py <= h - 1.0) else 0.0
                    vpx[y, x, i] = 1.0 if (px >= 0.0 and px <= w - 1.0) else 0.0
                    top = d[y0, x0] + fx * (d[y0, x1] - d[y0, x0])
                    bot = d[y1, x0] + fx * (d[y1, x1] - d[y1, x0])
                    vdn[y, x, i] = top + fy * (bot - top)
                    top = conf[y0, x0] + fx * (conf[y0, x1] - conf[y0, x0])
                    bot = conf[y1, x0] + fx * (conf[y1, x1] - conf[y1, x0])
                    vcn[y, x, i] = top + fy * (bot - top)
                    vu[y, x, i] = aff[y, x, i] * vcn[y, x, i]
                    s = s + fabs(vu[y, x, i])
                vs[y, x] = s

        # Self-weight terms for every pixel before any scatter, matching the
        # fallback which initializes grad_d with them in one shot.
        for y in range(h):
            for x in range(w):
                z = vs[y, x] if vs[y, x] > EPS else EPS
                wsum = 0.0
                for i in range(8):
                    wsum = wsum + vu[y, x, i] / z
                grad_d[y, x] = grad_out[y, x] * (1.0 - wsum)

        for y in range(h):
            for x in range(w):
                g = grad_out[y, x]
                dp = d[y, x]
                s = vs[y, x]
                z = s if s > EPS else EPS
                inner = 0.0
                for i in range(8):
                    atld_i = vu[y, x, i] / z
                    inner = inner + (g * (vdn[y, x, i] - dp)) * atld_i
                for i in range(8):
                    t_i = g * (vdn[y, x, i] - dp)
                    atld_i = vu[y, x, i] / z
                    if s > EPS:
                        gu = (t_i - _sign(vu[y, x, i]) * inner) / z
                    else:
                        gu = t_i / EPS
                    grad_aff[y, x, i] = gu * vcn[y, x, i]
                    gcv = gu * aff[y, x, i]
                    gdi = g * atld_i
                    fy = vfy[y, x, i]
                    fx = vfx[y, x, i]
                    y0 = vy0[y, x, i]
                    x0 = vx0[y, x, i]
                    y1 = vy1[y, x, i]
                    x1 = vx1[y, x, i]
                    w00 = (1.0 - fy) * (1.0 - fx)
                    w01 = (1.0 - fy) * fx
                    w10 = fy * (1.0 - fx)
                    w11 = fy * fx
                    grad_d[y0, x0] += gdi * w00
                    grad_d[y0, x1] += gdi * w01
                    grad_d[y1, x0] += gdi * w10
                    grad_d[y1, x1] += gdi * w11
                    grad_conf[y0, x0] += gcv * w00
                    grad_conf[y0, x1] += gcv * w01
                    grad_conf[y1, x0] += gcv * w10
                    grad_conf[y1, x1] += gcv * w11
                    dv00 = d[y0, x0]
                    dv01 = d[y0, x1]
                    dv10 = d[y1, x0]
                    dv11 = d[y1, x1]
                    cv00 = conf[y0, x0]
                    cv01 = conf[y0, x1]
                    cv10 = conf[y1, x0]
                    cv11 = conf[y1, x1]
                    ddy = (dv10 + fx * (dv11 - dv10)) - (dv00 + fx * (dv01 - dv00))
                    ddx = (1.0 - fy) * (dv01 - dv00) + fy * (dv11 - dv10)
                    cdy = (cv10 + fx * (cv11 - cv10)) - (cv00 + fx * (cv01 - cv00))
                    cdx = (1.0 - fy) * (cv01 - cv00) + fy * (cv11 - cv10)
                    grad_off[y, x, i, 0] = (gdi * ddy + gcv * cdy) * vpy[y, x, i]
                    grad_off[y, x, i, 1] = (gdi * ddx + gcv * cdx) * vpx[y, x, i]
    return gd_arr, ga_arr, gc_arr, go_arr


def filter_forward(const double[:, :, ::1] f, const double[:, :, ::1] a, Py_ssize_t k):
    cdef Py_ssize_t h = f.shape[0], w = f.shape[1], c = f.shape[2]
    cdef Py_ssize_t r = (k - 1) // 2
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out_arr = np.zeros((h, w, c), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t y, x, idx, ch, qy, qx
    with nogil:
        for y in range(h):
            for x in range(w):
                for idx in range(k * k):
                    qy = y + idx // k - r
                    qx = x + idx % k - r
                    if qy < 0:
                        qy = 0
                    elif qy > h - 1:
                        qy = h - 1
                    if qx < 0:
                        qx = 0
                    elif qx > w - 1:
                        qx = w - 1
                    for ch in range(c):
                        out[y, x, ch] = out[y, x, ch] + f[qy, qx, ch] * a[y, x, idx]
    return out_arr


def filter_backward(const double[:, :, ::1] grad_out, const double[:, :, ::1] f,
                    const double[:, :, ::1] a, Py_ssize_t k):
    cdef Py_ssize_t h = f.shape[0], w = f.shape[1], c = f.shape[2]
    cdef Py_ssize_t r = (k - 1) // 2
    cdef cnp.ndarray[cnp.float64_t, ndim=3] gf_arr = np.zeros((h, w, c), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] ga_arr = np.empty((h, w, k * k), dtype=np.float64)
    cdef double[:, :, ::1] grad_f = gf_arr
    cdef double[:, :, ::1] grad_a = ga_arr
    cdef Py_ssize_t y, x, idx, ch, qy, qx
    cdef double acc
    with nogil:
        for y in range(h):
            for x in range(w):
                for idx in range(k * k):
                    qy = y + idx // k - r
                    qx = x + idx % k - r
                    if qy < 0:
                        qy = 0
                    elif qy > h - 1:
                        qy = h - 1
                    if qx < 0:
                        qx = 0
                    elif qx > w - 1:
                        qx = w - 1
                    acc = 0.0
                    for ch in range(c):
                        acc = acc + grad_out[y, x, ch] * f[qy, qx, ch]
                    grad_a[y, x, idx] = acc
                    for ch in range(c):
                        grad_f[qy, qx, ch] += grad_out[y, x, ch] * a[y, x, idx]
    return gf_arr, ga_arr
