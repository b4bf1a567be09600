"""Hot-kernel dispatch: compiled extension when available, numpy otherwise.

Set NEOPAIN_BACKEND=python to force the pure-numpy fallback, or
NEOPAIN_BACKEND=compiled to require the extension (ImportError if missing).
"""

import importlib
import os

from . import _numpy_backend

_requested = os.environ.get("NEOPAIN_BACKEND", "auto").lower()
_impl = None
if _requested in ("auto", "compiled"):
    try:
        _impl = importlib.import_module(__name__ + "._fast")
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = None

if _impl is not None:
    BACKEND = "compiled"
else:
    BACKEND = "python"
    _impl = _numpy_backend

conv2d_3x3 = _impl.conv2d_3x3
maxpool2d = _impl.maxpool2d
maxpool2d_batch = _impl.maxpool2d_batch
maxpool2d_cf = _impl.maxpool2d_cf
lstm_forward = _impl.lstm_forward

# Batched convolution lowers to im2col + GEMM, so the compiled core is BLAS
# itself; both backends share the numpy lowering.
conv2d_3x3_cf = _numpy_backend.conv2d_3x3_cf

__all__ = ["BACKEND", "conv2d_3x3", "conv2d_3x3_cf", "maxpool2d",
           "maxpool2d_batch", "maxpool2d_cf", "lstm_forward"]
