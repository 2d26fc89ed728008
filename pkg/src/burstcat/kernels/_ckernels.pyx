# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels in ``fallback.py``.

Same results bit for bit; keep the floating-point operation order in step
with the numpy code when editing either side.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()

ctypedef fused real:
    float
    double


def im2col3(real[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    dtype = np.float32 if real is float else np.float64
    out_arr = np.empty((n * h * w, c * 9), dtype=dtype)
    cdef real[:, ::1] out = out_arr
    cdef Py_ssize_t i, ch, y, xx, dy, dx, row, col, sy, sx
    with nogil:
        for i in range(n):
            for y in range(h):
                for xx in range(w):
                    row = (i * h + y) * w + xx
                    for ch in range(c):
                        col = ch * 9
                        for dy in range(3):
                            sy = y + dy - 1
                            for dx in range(3):
                                sx = xx + dx - 1
                                if 0 <= sy < h and 0 <= sx < w:
                                    out[row, col] = x[i, ch, sy, sx]
                                else:
                                    out[row, col] = 0
                                col += 1
    return out_arr


def col2im3(real[:, ::1] dcols, x_shape):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3]
    dtype = np.float32 if real is float else np.float64
    out_arr = np.empty((n, c, h, w), dtype=dtype)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t i, ch, y, xx, dy, dx, py, px
    cdef real s
    with nogil:
        for i in range(n):
            for ch in range(c):
                for y in range(h):
                    for xx in range(w):
                        s = 0
                        for dy in range(3):
                            py = y + 1 - dy
                            if py < 0 or py >= h:
                                continue
                            for dx in range(3):
                                px = xx + 1 - dx
                                if px < 0 or px >= w:
                                    continue
                                s = s + dcols[(i * h + py) * w + px, ch * 9 + dy * 3 + dx]
                        out[i, ch, y, xx] = s
    return out_arr


def maxpool2_forward(real[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    if h % 2 or w % 2:
        raise ValueError(f"2x2 pooling needs even spatial size, got {h}x{w}")
    cdef Py_ssize_t h2 = h // 2, w2 = w // 2
    dtype = np.float32 if real is float else np.float64
    out_arr = np.empty((n, c, h2, w2), dtype=dtype)
    arg_arr = np.empty((n, c, h2, w2), dtype=np.int8)
    cdef real[:, :, :, ::1] out = out_arr
    cdef signed char[:, :, :, ::1] arg = arg_arr
    cdef Py_ssize_t i, ch, y, xx, k
    cdef real best, v
    cdef signed char bi
    with nogil:
        for i in range(n):
            for ch in range(c):
                for y in range(h2):
                    for xx in range(w2):
                        best = x[i, ch, 2 * y, 2 * xx]
                        bi = 0
                        for k in range(1, 4):
                            v = x[i, ch, 2 * y + k // 2, 2 * xx + k % 2]
                            if v > best:
                                best = v
                                bi = <signed char>k
                        out[i, ch, y, xx] = best
                        arg[i, ch, y, xx] = bi
    return out_arr, arg_arr


def maxpool2_backward(real[:, :, :, ::1] dout, signed char[:, :, :, ::1] arg, x_shape):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3]
    dtype = np.float32 if real is float else np.float64
    dx_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef real[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t i, ch, y, xx, k
    with nogil:
        for i in range(n):
            for ch in range(c):
                for y in range(h // 2):
                    for xx in range(w // 2):
                        k = arg[i, ch, y, xx]
                        dx[i, ch, 2 * y + k // 2, 2 * xx + k % 2] = dout[i, ch, y, xx]
    return dx_arr


def mog2_update(double[:, ::1] weight, double[:, ::1] mean, double[:, ::1] var,
                int[::1] nmodes, double[::1] frame, double alpha, double var_threshold,
                double background_ratio, double var_init, double var_min, double var_max,
                double complexity_prune):
    cdef Py_ssize_t p = weight.shape[0], m = weight.shape[1]
    fg_arr = np.empty(p, dtype=np.uint8)
    cdef unsigned char[::1] fg = fg_arr
    cdef Py_ssize_t i, k, j, best, n
    cdef double x, diff, d2, best_d2, cum, one_minus = 1.0 - alpha
    cdef double rho, mu, v, thr = alpha * complexity_prune, total, kw, km, kv, key
    cdef bint best_in_prefix
    with nogil:
        for i in range(p):
            x = frame[i]
            n = nmodes[i]
            best = -1
            best_d2 = INFINITY
            best_in_prefix = False
            cum = 0.0
            for k in range(n):
                diff = x - mean[i, k]
                d2 = diff * diff / var[i, k]
                if d2 < var_threshold and d2 < best_d2:
                    best = k
                    best_d2 = d2
                    best_in_prefix = cum < background_ratio
                cum = cum + weight[i, k]
            fg[i] = 0 if (best >= 0 and best_in_prefix) else 1

            for k in range(n):
                weight[i, k] = one_minus * weight[i, k]
            if best >= 0:
                weight[i, best] = weight[i, best] + alpha
                rho = alpha / weight[i, best]
                mu = mean[i, best]
                diff = x - mu
                mean[i, best] = (1.0 - rho) * mu + rho * x
                v = (1.0 - rho) * var[i, best] + rho * (diff * diff)
                if v < var_min:
                    v = var_min
                if v > var_max:
                    v = var_max
                var[i, best] = v
            else:
                if n < m:
                    k = n
                    n = n + 1
                else:
                    k = n - 1
                weight[i, k] = alpha
                mean[i, k] = x
                var[i, k] = var_init

            j = 0
            for k in range(n):
                if weight[i, k] >= thr:
                    weight[i, j] = weight[i, k]
                    mean[i, j] = mean[i, k]
                    var[i, j] = var[i, k]
                    j = j + 1
            n = j
            total = 0.0
            for k in range(n):
                total = total + weight[i, k]
            for k in range(n):
                weight[i, k] = weight[i, k] / total

            # stable insertion sort, descending weight / sigma
            for k in range(1, n):
                kw = weight[i, k]
                km = mean[i, k]
                kv = var[i, k]
                key = kw / sqrt(kv)
                j = k
                while j > 0 and weight[i, j - 1] / sqrt(var[i, j - 1]) < key:
                    weight[i, j] = weight[i, j - 1]
                    mean[i, j] = mean[i, j - 1]
                    var[i, j] = var[i, j - 1]
                    j = j - 1
                weight[i, j] = kw
                mean[i, j] = km
                var[i, j] = kv
            for k in range(n, m):
                weight[i, k] = 0.0
                mean[i, k] = 0.0
                var[i, k] = 0.0
            nmodes[i] = <int>n
    return fg_arr
