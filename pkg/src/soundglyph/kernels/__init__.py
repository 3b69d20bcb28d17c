"""3x3 convolution kernels: compiled core with a numpy fallback.

The backend is chosen once at import time. SOUNDGLYPH_KERNELS=python forces
the numpy reference, SOUNDGLYPH_KERNELS=compiled insists on the extension
(raising if it did not build), and leaving it unset prefers the extension
when present. Both backends implement the same three operations on float64
arrays and agree to rounding error; `benchmarks/bench_kernels.py` compares
their throughput.
"""

from __future__ import annotations

import os

import numpy as np

from ..errors import ParameterError, ShapeError
from . import reference

try:
    from . import compiled as _compiled
except ImportError:
    _compiled = None

_choice = os.environ.get("SOUNDGLYPH_KERNELS", "").strip().lower()
if _choice == "python":
    _impl = reference
elif _choice == "compiled":
    if _compiled is None:
        raise ImportError(
            "SOUNDGLYPH_KERNELS=compiled but the extension is not built; "
            "reinstall the package or unset the variable"
        )
    _impl = _compiled
elif _choice == "":
    _impl = _compiled if _compiled is not None else reference
else:
    raise ImportError(f"SOUNDGLYPH_KERNELS must be 'python' or 'compiled', got {_choice!r}")


def backend_name() -> str:
    return "compiled" if _impl is _compiled else "python"


def _check_common(w: np.ndarray, stride: int) -> None:
    if w.ndim != 4 or w.shape[2:] != (3, 3):
        raise ShapeError(f"weights must be (Co, Ci, 3, 3), got shape {w.shape}")
    if stride not in (1, 2):
        raise ParameterError(f"stride must be 1 or 2, got {stride}")


def _f64(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def conv3x3_forward(
    x: np.ndarray, w: np.ndarray, bias: np.ndarray, stride: int = 1
) -> np.ndarray:
    """Correlate x (B, Ci, H, W) with w (Co, Ci, 3, 3), zero padding 1."""
    x, w, bias = _f64(x), _f64(w), _f64(bias)
    _check_common(w, stride)
    if x.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"input {x.shape} does not match weights {w.shape}")
    if bias.shape != (w.shape[0],):
        raise ShapeError(f"bias must be ({w.shape[0]},), got {bias.shape}")
    return _impl.conv3x3_forward(x, w, bias, stride)


def conv3x3_grad_input(
    gy: np.ndarray, w: np.ndarray, x_shape: tuple[int, ...], stride: int = 1
) -> np.ndarray:
    """Gradient of the forward output w.r.t. its input, shape x_shape."""
    gy, w = _f64(gy), _f64(w)
    _check_common(w, stride)
    x_shape = tuple(int(s) for s in x_shape)
    if gy.ndim != 4 or gy.shape[1] != w.shape[0]:
        raise ShapeError(f"grad {gy.shape} does not match weights {w.shape}")
    if len(x_shape) != 4 or x_shape[1] != w.shape[1]:
        raise ShapeError(f"x_shape {x_shape} does not match weights {w.shape}")
    ho = (x_shape[2] - 1) // stride + 1
    wo = (x_shape[3] - 1) // stride + 1
    if gy.shape[0] != x_shape[0] or gy.shape[2:] != (ho, wo):
        raise ShapeError(f"grad {gy.shape} inconsistent with x_shape {x_shape}")
    return _impl.conv3x3_grad_input(gy, w, x_shape, stride)


def conv3x3_grad_weight(
    gy: np.ndarray, x: np.ndarray, stride: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients w.r.t. weights (Co, Ci, 3, 3) and bias (Co,)."""
    gy, x = _f64(gy), _f64(x)
    if gy.ndim != 4 or x.ndim != 4 or gy.shape[0] != x.shape[0]:
        raise ShapeError(f"grad {gy.shape} does not match input {x.shape}")
    if stride not in (1, 2):
        raise ParameterError(f"stride must be 1 or 2, got {stride}")
    ho = (x.shape[2] - 1) // stride + 1
    wo = (x.shape[3] - 1) // stride + 1
    if gy.shape[2:] != (ho, wo):
        raise ShapeError(f"grad {gy.shape} inconsistent with input {x.shape}")
    return _impl.conv3x3_grad_weight(gy, x, stride)
