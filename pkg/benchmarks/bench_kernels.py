"""Benchmark the compiled kernels against the pure-numpy fallback.

Run from the repo root after an editable install:

    python3 benchmarks/bench_kernels.py

The batched convolution is shared by both backends (it lowers to im2col +
GEMM, so BLAS is the compiled core); it is timed here for reference.
"""

import time

import numpy as np

from neopain.kernels import _numpy_backend

try:
    from neopain.kernels import _fast
except ImportError:
    _fast = None


def timeit(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best * 1000.0


def row(name, py_ms, cy_ms):
    if cy_ms is None:
        print(f"{name:<36}{py_ms:>10.2f} ms {'n/a':>12}")
    else:
        print(f"{name:<36}{py_ms:>10.2f} ms {cy_ms:>9.2f} ms "
              f"{py_ms / cy_ms:>7.1f}x")


def main():
    rng = np.random.default_rng(0)
    print(f"{'kernel':<36}{'python':>13}{'compiled':>12}{'speedup':>8}")
    print("-" * 72)

    x = rng.random((112, 112, 16))
    w = rng.normal(0, 0.1, (3, 3, 16, 16))
    b = rng.normal(0, 0.1, 16)
    row("conv2d_3x3 (112x112x16 -> 16)",
        timeit(_numpy_backend.conv2d_3x3, x, w, b),
        None if _fast is None else timeit(_fast.conv2d_3x3, x, w, b))

    xb = rng.random((50, 8, 224, 224), dtype=np.float32)
    row("conv2d_3x3_cf (50x8x224x224 -> 8)",
        timeit(_numpy_backend.conv2d_3x3_cf, xb,
               rng.normal(0, 0.1, (3, 3, 8, 8)).astype(np.float32),
               rng.normal(0, 0.1, 8).astype(np.float32)),
        None)

    xp = rng.random((50, 224, 224, 8), dtype=np.float32)
    row("maxpool2d_batch (50x224x224x8)",
        timeit(_numpy_backend.maxpool2d_batch, xp, 2, 2),
        None if _fast is None else timeit(_fast.maxpool2d_batch, xp, 2, 2))

    xcf = rng.random((50, 8, 224, 224), dtype=np.float32)
    row("maxpool2d_cf (50x8x224x224)",
        timeit(_numpy_backend.maxpool2d_cf, xcf, 2, 2),
        None if _fast is None else timeit(_fast.maxpool2d_cf, xcf, 2, 2))

    seq = rng.random((200, 720))
    wx = rng.normal(0, 0.05, (720, 64))
    wh = rng.normal(0, 0.05, (16, 64))
    bl = np.zeros(64)
    row("lstm_forward (T=200, 720 -> 16)",
        timeit(_numpy_backend.lstm_forward, seq, wx, wh, bl),
        None if _fast is None else timeit(_fast.lstm_forward, seq, wx, wh, bl))

    if _fast is None:
        print("\ncompiled extension not built; python fallback only")


if __name__ == "__main__":
    main()
