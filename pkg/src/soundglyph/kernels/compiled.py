"""Wrappers binding the compiled extension to the common kernel interface.

Only the stride-1 paths are hot (the denoiser); stride-2 calls and rows
wider than the extension's fixed accumulators are delegated to the numpy
reference. grad_input reuses the forward kernel on the rotated, transposed
weight tensor, which is the standard correlation identity for padding 1.
The extension is compiled for float32 and float64; the wrappers follow the
input dtype so both precisions share one call path.
"""

from __future__ import annotations

import numpy as np

from . import reference
from ._convext import MAX_ROW, conv3x3_fwd_s1, conv3x3_gw_s1


def _pad(x: np.ndarray) -> np.ndarray:
    return np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))


def _dtype(x: np.ndarray) -> np.dtype:
    return np.dtype(np.float32) if x.dtype == np.float32 else np.dtype(np.float64)


def conv3x3_forward(
    x: np.ndarray, w: np.ndarray, bias: np.ndarray, stride: int = 1
) -> np.ndarray:
    if stride != 1 or x.shape[3] > MAX_ROW - 2:
        return reference.conv3x3_forward(x, w, bias, stride)
    dt = _dtype(x)
    b, ci, h, wd = x.shape
    out = np.empty((b, w.shape[0], h, wd), dtype=dt)
    conv3x3_fwd_s1(
        _pad(np.ascontiguousarray(x, dtype=dt)),
        np.ascontiguousarray(w, dtype=dt),
        np.ascontiguousarray(bias, dtype=dt),
        out,
    )
    return out


def conv3x3_grad_input(
    gy: np.ndarray, w: np.ndarray, x_shape: tuple[int, ...], stride: int = 1
) -> np.ndarray:
    if stride != 1 or gy.shape[3] > MAX_ROW - 2:
        return reference.conv3x3_grad_input(gy, w, x_shape, stride)
    dt = _dtype(gy)
    w_rot = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3), dtype=dt)
    gx = np.empty(x_shape, dtype=dt)
    zero_bias = np.zeros(x_shape[1], dtype=dt)
    conv3x3_fwd_s1(_pad(np.ascontiguousarray(gy, dtype=dt)), w_rot, zero_bias, gx)
    return gx


def conv3x3_grad_weight(
    gy: np.ndarray, x: np.ndarray, stride: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    if stride != 1 or gy.shape[3] > MAX_ROW - 2:
        return reference.conv3x3_grad_weight(gy, x, stride)
    dt = _dtype(gy)
    gw = np.zeros((gy.shape[1], x.shape[1], 3, 3), dtype=dt)
    conv3x3_gw_s1(
        np.ascontiguousarray(gy, dtype=dt), _pad(np.ascontiguousarray(x, dtype=dt)), gw
    )
    gb = gy.sum(axis=(0, 2, 3))
    return gw, gb
