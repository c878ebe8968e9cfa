"""Kernel dispatch: compiled Cython kernels when built, numpy otherwise.

Set ``HARNN_PURE_PYTHON=1`` before import to force the numpy path.
"""
import os

import numpy as np

from harnn import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if not os.environ.get("HARNN_PURE_PYTHON"):
    try:
        from harnn import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def segment_max(scores, tokens, ptr, impl=None):
    return (impl or _impl).segment_max(_f64(scores), _i64(tokens), _i64(ptr))


def segment_max_backward(dout, arg, n_cols, impl=None):
    return (impl or _impl).segment_max_backward(_f64(dout), _i64(arg), int(n_cols))


def scatter_add_rows(target, idx, values, impl=None):
    if not (target.flags.c_contiguous and target.dtype == np.float64):
        raise ValueError("scatter target must be a C-contiguous float64 array")
    (impl or _impl).scatter_add_rows(target, _i64(idx), _f64(values))
