# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: 3x3 convolution, max pooling, LSTM forward."""

import numpy as np

cimport numpy as cnp
from libc.math cimport tanh

cnp.import_array()


def conv2d_3x3(cnp.ndarray x_in, cnp.ndarray w_in, cnp.ndarray b_in):
    """Same-padded 3x3 convolution; x (H, W, Cin), w (3, 3, Cin, Cout)."""
    cdef double[:, :, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef double[:, :, :, ::1] w = np.ascontiguousarray(w_in, dtype=np.float64)
    cdef double[::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef Py_ssize_t h = x.shape[0], wd = x.shape[1], cin = x.shape[2]
    cdef Py_ssize_t cout = w.shape[3]
    out_arr = np.empty((h, wd, cout), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, di, dj, si, sj, ci, co
    cdef double xv
    cdef double[::1] wrow
    for i in range(h):
        for j in range(wd):
            for co in range(cout):
                out[i, j, co] = b[co]
            for di in range(3):
                si = i + di - 1
                if si < 0 or si >= h:
                    continue
                for dj in range(3):
                    sj = j + dj - 1
                    if sj < 0 or sj >= wd:
                        continue
                    for ci in range(cin):
                        xv = x[si, sj, ci]
                        if xv == 0.0:
                            continue
                        for co in range(cout):
                            out[i, j, co] += xv * w[di, dj, ci, co]
    return out_arr


def maxpool2d(cnp.ndarray x_in, Py_ssize_t size, Py_ssize_t stride):
    """Max pooling over spatial dims of (H, W, C); no padding."""
    cdef double[:, :, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef Py_ssize_t h = x.shape[0], wd = x.shape[1], c = x.shape[2]
    cdef Py_ssize_t oh = (h - size) // stride + 1
    cdef Py_ssize_t ow = (wd - size) // stride + 1
    out_arr = np.empty((oh, ow, c), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, k, di, dj, si, sj
    cdef double best, v
    for i in range(oh):
        for j in range(ow):
            for k in range(c):
                si = i * stride
                sj = j * stride
                best = x[si, sj, k]
                for di in range(size):
                    for dj in range(size):
                        v = x[si + di, sj + dj, k]
                        if v > best:
                            best = v
                out[i, j, k] = best
    return out_arr


ctypedef fused real:
    float
    double


def maxpool2d_batch(cnp.ndarray x_in, Py_ssize_t size, Py_ssize_t stride):
    """Batched max pooling over spatial dims of (B, H, W, C)."""
    if x_in.dtype == np.float32:
        return _maxpool2d_batch_impl[float](
            np.ascontiguousarray(x_in, dtype=np.float32), size, stride,
            np.float32)
    return _maxpool2d_batch_impl[double](
        np.ascontiguousarray(x_in, dtype=np.float64), size, stride, np.float64)


cdef _maxpool2d_batch_impl(real[:, :, :, ::1] x, Py_ssize_t size,
                           Py_ssize_t stride, out_dtype):
    cdef Py_ssize_t bsz = x.shape[0], h = x.shape[1], wd = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t oh = (h - size) // stride + 1
    cdef Py_ssize_t ow = (wd - size) // stride + 1
    out_arr = np.empty((bsz, oh, ow, c), dtype=out_dtype)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t n, i, j, k, di, dj, si, sj
    cdef real best, v
    for n in range(bsz):
        for i in range(oh):
            for j in range(ow):
                si = i * stride
                sj = j * stride
                for k in range(c):
                    best = x[n, si, sj, k]
                    for di in range(size):
                        for dj in range(size):
                            v = x[n, si + di, sj + dj, k]
                            if v > best:
                                best = v
                    out[n, i, j, k] = best
    return out_arr


def maxpool2d_cf(cnp.ndarray x_in, Py_ssize_t size, Py_ssize_t stride):
    """Batched max pooling over spatial dims of (B, C, H, W)."""
    if x_in.dtype == np.float32:
        return _maxpool2d_cf_impl[float](
            np.ascontiguousarray(x_in, dtype=np.float32), size, stride,
            np.float32)
    return _maxpool2d_cf_impl[double](
        np.ascontiguousarray(x_in, dtype=np.float64), size, stride, np.float64)


cdef _maxpool2d_cf_impl(real[:, :, :, ::1] x, Py_ssize_t size,
                        Py_ssize_t stride, out_dtype):
    cdef Py_ssize_t bsz = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t oh = (h - size) // stride + 1
    cdef Py_ssize_t ow = (wd - size) // stride + 1
    out_arr = np.empty((bsz, c, oh, ow), dtype=out_dtype)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t n, k, i, j, di, dj, si, sj
    cdef real best, v
    for n in range(bsz):
        for k in range(c):
            for i in range(oh):
                si = i * stride
                for j in range(ow):
                    sj = j * stride
                    best = x[n, k, si, sj]
                    for di in range(size):
                        for dj in range(size):
                            v = x[n, k, si + di, sj + dj]
                            if v > best:
                                best = v
                    out[n, k, i, j] = best
    return out_arr


cdef inline double _hard_sigmoid(double z) nogil:
    cdef double v = 0.2 * z + 0.5
    if v < 0.0:
        return 0.0
    if v > 1.0:
        return 1.0
    return v


def lstm_forward(cnp.ndarray x_in, cnp.ndarray wx_in, cnp.ndarray wh_in,
                 cnp.ndarray b_in):
    """Single-sequence LSTM forward, gate order (i, f, g, o)."""
    cdef double[:, ::1] xw = np.ascontiguousarray(
        np.asarray(x_in, dtype=np.float64) @ np.asarray(wx_in, dtype=np.float64)
        + np.asarray(b_in, dtype=np.float64))
    cdef double[:, ::1] wh = np.ascontiguousarray(wh_in, dtype=np.float64)
    cdef Py_ssize_t t_steps = xw.shape[0]
    cdef Py_ssize_t units = wh.shape[0]
    h_arr = np.empty((t_steps, units), dtype=np.float64)
    c_arr = np.empty((t_steps, units), dtype=np.float64)
    g_arr = np.empty((t_steps, 4 * units), dtype=np.float64)
    cdef double[:, ::1] h_seq = h_arr
    cdef double[:, ::1] c_seq = c_arr
    cdef double[:, ::1] gates = g_arr
    z_arr = np.empty(4 * units, dtype=np.float64)
    cdef double[::1] z = z_arr
    h_prev_arr = np.zeros(units, dtype=np.float64)
    c_prev_arr = np.zeros(units, dtype=np.float64)
    cdef double[::1] h_prev = h_prev_arr
    cdef double[::1] c_prev = c_prev_arr
    cdef Py_ssize_t t, k, u
    cdef double hv, ig, fg, gg, og, cv
    for t in range(t_steps):
        for k in range(4 * units):
            z[k] = xw[t, k]
        for u in range(units):
            hv = h_prev[u]
            if hv == 0.0:
                continue
            for k in range(4 * units):
                z[k] += hv * wh[u, k]
        for u in range(units):
            ig = _hard_sigmoid(z[u])
            fg = _hard_sigmoid(z[units + u])
            gg = tanh(z[2 * units + u])
            og = _hard_sigmoid(z[3 * units + u])
            cv = fg * c_prev[u] + ig * gg
            gates[t, u] = ig
            gates[t, units + u] = fg
            gates[t, 2 * units + u] = gg
            gates[t, 3 * units + u] = og
            c_seq[t, u] = cv
            h_seq[t, u] = og * tanh(cv)
        for u in range(units):
            h_prev[u] = h_seq[t, u]
            c_prev[u] = c_seq[t, u]
    return h_arr, c_arr, g_arr
