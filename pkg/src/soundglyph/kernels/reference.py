"""Pure numpy 3x3 convolution kernels (zero padding 1, stride 1 or 2).

Each tap is one shifted view contracted with a GEMM-backed einsum, so the
backend stays correct and reasonably fast anywhere numpy runs. Buffers
follow the input dtype, so float32 and float64 both work. Gradients
follow the standard correlation identities; grad_input scatters into a
padded buffer so one code path covers both strides.
"""

from __future__ import annotations

import numpy as np


def _pad(x: np.ndarray) -> np.ndarray:
    return np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))


def _out_hw(h: int, w: int, stride: int) -> tuple[int, int]:
    return (h - 1) // stride + 1, (w - 1) // stride + 1


def conv3x3_forward(
    x: np.ndarray, w: np.ndarray, bias: np.ndarray, stride: int = 1
) -> np.ndarray:
    b, ci, h, wd = x.shape
    ho, wo = _out_hw(h, wd, stride)
    xp = _pad(x)
    out = np.empty((b, w.shape[0], ho, wo), dtype=x.dtype)
    out[:] = bias[None, :, None, None]
    for ky in range(3):
        for kx in range(3):
            sl = xp[:, :, ky : ky + stride * (ho - 1) + 1 : stride,
                    kx : kx + stride * (wo - 1) + 1 : stride]
            out += np.einsum("bchw,oc->bohw", sl, w[:, :, ky, kx], optimize=True)
    return out


def conv3x3_grad_input(
    gy: np.ndarray, w: np.ndarray, x_shape: tuple[int, ...], stride: int = 1
) -> np.ndarray:
    b, ci, h, wd = x_shape
    ho, wo = gy.shape[2], gy.shape[3]
    gxp = np.zeros((b, ci, h + 2, wd + 2), dtype=gy.dtype)
    for ky in range(3):
        for kx in range(3):
            view = gxp[:, :, ky : ky + stride * (ho - 1) + 1 : stride,
                       kx : kx + stride * (wo - 1) + 1 : stride]
            view += np.einsum("bohw,oc->bchw", gy, w[:, :, ky, kx], optimize=True)
    return gxp[:, :, 1 : h + 1, 1 : wd + 1]


def conv3x3_grad_weight(
    gy: np.ndarray, x: np.ndarray, stride: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    co = gy.shape[1]
    ci = x.shape[1]
    ho, wo = gy.shape[2], gy.shape[3]
    xp = _pad(x)
    gw = np.empty((co, ci, 3, 3), dtype=gy.dtype)
    for ky in range(3):
        for kx in range(3):
            sl = xp[:, :, ky : ky + stride * (ho - 1) + 1 : stride,
                    kx : kx + stride * (wo - 1) + 1 : stride]
            gw[:, :, ky, kx] = np.einsum("bohw,bchw->oc", gy, sl, optimize=True)
    gb = gy.sum(axis=(0, 2, 3))
    return gw, gb
