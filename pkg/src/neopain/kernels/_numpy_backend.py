"""Pure-numpy implementations of the hot kernels.

Used when the compiled extension is unavailable or explicitly disabled via
NEOPAIN_BACKEND=python. Convolution uses the shift-and-GEMM formulation so
the heavy lifting still lands in BLAS.
"""

import numpy as np


def conv2d_3x3(x, w, b):
    """Same-padded 3x3 convolution.

    x: (H, W, Cin) float64, w: (3, 3, Cin, Cout), b: (Cout,).
    Returns (H, W, Cout).
    """
    h, wd, cin = x.shape
    cout = w.shape[3]
    xp = np.zeros((h + 2, wd + 2, cin), dtype=np.float64)
    xp[1:-1, 1:-1, :] = x
    out = np.empty((h * wd, cout), dtype=np.float64)
    out[:] = b
    for di in range(3):
        for dj in range(3):
            patch = xp[di:di + h, dj:dj + wd, :].reshape(h * wd, cin)
            out += patch @ w[di, dj]
    return out.reshape(h, wd, cout)


def _strip_rows(h, w, cin, itemsize, budget=1 << 20):
    """Largest divisor of h whose column buffer fits the cache budget."""
    target = max(2, budget // (cin * 9 * w * itemsize))
    if target >= h:
        return h
    best = 1
    for s in range(2, target + 1):
        if h % s == 0:
            best = s
    return best if best > 1 else h


def conv2d_3x3_cf(x, w, b):
    """Batched same-padded 3x3 convolution, channels-first, im2col + GEMM.

    x: (B, Cin, H, W), any float dtype (computation stays in that dtype);
    w: (3, 3, Cin, Cout), b: (Cout,). Returns (B, Cout, H, W).

    The image is processed in horizontal strips so the column buffer stays
    in cache; channels-first keeps the im2col copies running over long
    contiguous rows. Together these make this the fast bulk-extraction path.
    """
    bsz, cin, h, wd = x.shape
    cout = w.shape[3]
    wmat = np.ascontiguousarray(w.transpose(3, 2, 0, 1).reshape(cout, cin * 9),
                                dtype=x.dtype)
    bias = b.astype(x.dtype).reshape(cout, 1, 1)
    size = _strip_rows(h, wd, cin, x.itemsize)
    cols = np.zeros((cin, 3, 3, size, wd), dtype=x.dtype)
    cmat = cols.reshape(cin * 9, size * wd)
    strip = np.empty((cout, size, wd), dtype=x.dtype)
    out = np.empty((bsz, cout, h, wd), dtype=x.dtype)
    for bi in range(bsz):
        xb = x[bi]
        for r0 in range(0, h, size):
            for di in range(3):
                # rows of the strip whose shifted source row exists
                s_lo = max(0, 1 - di - r0)
                s_hi = min(size, h + 1 - di - r0)
                for dj in range(3):
                    j_lo = 1 if dj == 0 else 0
                    j_hi = wd - 1 if dj == 2 else wd
                    blk = cols[:, di, dj]
                    if s_lo > 0:
                        blk[:, :s_lo] = 0.0
                    if s_hi < size:
                        blk[:, s_hi:] = 0.0
                    blk[:, s_lo:s_hi, j_lo:j_hi] = xb[
                        :, r0 + s_lo + di - 1:r0 + s_hi + di - 1,
                        j_lo + dj - 1:j_hi + dj - 1]
            np.matmul(wmat, cmat, out=strip.reshape(cout, size * wd))
            strip += bias
            out[bi, :, r0:r0 + size] = strip
    return out


def maxpool2d(x, size, stride):
    """Max pooling over spatial dims of (H, W, C); no padding."""
    h, wd, c = x.shape
    oh = (h - size) // stride + 1
    ow = (wd - size) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (size, size), axis=(0, 1))
    win = win[::stride, ::stride]  # (oh, ow, C, size, size)
    return win.reshape(oh, ow, c, size * size).max(axis=3)


def maxpool2d_batch(x, size, stride):
    """Batched max pooling over spatial dims of (B, H, W, C)."""
    bsz, h, wd, c = x.shape
    oh = (h - size) // stride + 1
    ow = (wd - size) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (size, size), axis=(1, 2))
    win = win[:, ::stride, ::stride]
    return win.reshape(bsz, oh, ow, c, size * size).max(axis=4)


def maxpool2d_cf(x, size, stride):
    """Batched max pooling over spatial dims of (B, C, H, W)."""
    bsz, c, h, wd = x.shape
    oh = (h - size) // stride + 1
    ow = (wd - size) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (size, size), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    return win.reshape(bsz, c, oh, ow, size * size).max(axis=4)


def _hard_sigmoid(z):
    return np.clip(0.2 * z + 0.5, 0.0, 1.0)


def lstm_forward(x, wx, wh, b):
    """Single-sequence LSTM forward pass, Keras gate order (i, f, g, o).

    x: (T, F), wx: (F, 4U), wh: (U, 4U), b: (4U,).
    Gate activations: hard sigmoid for i/f/o, tanh for g.
    Returns (h_seq (T, U), c_seq (T, U), gates (T, 4U) post-activation).
    """
    t_steps = x.shape[0]
    units = wh.shape[0]
    xw = x @ wx + b
    h_seq = np.empty((t_steps, units), dtype=np.float64)
    c_seq = np.empty((t_steps, units), dtype=np.float64)
    gates = np.empty((t_steps, 4 * units), dtype=np.float64)
    h = np.zeros(units, dtype=np.float64)
    c = np.zeros(units, dtype=np.float64)
    for t in range(t_steps):
        z = xw[t] + h @ wh
        i = _hard_sigmoid(z[:units])
        f = _hard_sigmoid(z[units:2 * units])
        g = np.tanh(z[2 * units:3 * units])
        o = _hard_sigmoid(z[3 * units:])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[t, :units] = i
        gates[t, units:2 * units] = f
        gates[t, 2 * units:3 * units] = g
        gates[t, 3 * units:] = o
        h_seq[t] = h
        c_seq[t] = c
    return h_seq, c_seq, gates
