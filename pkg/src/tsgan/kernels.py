"""Backend selection for the Wasserstein kernels.

The compiled extension is used when importable; set ``TSGAN_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

import numpy as np

from . import _wfd_py

if os.environ.get("TSGAN_PURE_PYTHON", "") not in ("", "0"):
    _impl = _wfd_py
    BACKEND = "python"
else:
    try:
        from . import _wfd_ext as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _wfd_py
        BACKEND = "python"


def _vec(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def w2(a, b, x) -> float:
    return float(_impl.w2(_vec(a), _vec(b), _vec(x)))


def w2_rows(a, b, x) -> np.ndarray:
    return _impl.w2_rows(_vec(a), _vec(b), _vec(x))


def w2_cross(a, b, x) -> np.ndarray:
    return _impl.w2_cross(_vec(a), _vec(b), _vec(x))
