# cython: boundscheck=False, wraparound=False, cdivision=True
"""Direct 3x3 stride-1 convolution kernels for float32 and float64.

The forward kernel walks output channels four at a time with one row of
local accumulators per channel, so the nine-tap chains stay in registers
and the compiler can fuse them into FMAs. The weight-gradient kernel runs
nine scalar reductions per (row, output channel), relying on the build's
reassociation flags to turn them into vector accumulators. Inputs arrive
already padded by one pixel and C-contiguous; rows must fit the fixed
accumulator width. Both dtypes share one fused-type implementation.
"""
import numpy as np

cimport numpy as cnp

MAX_ROW = 1024

ctypedef fused real:
    float
    double


def conv3x3_fwd_s1(const real[:, :, :, ::1] xp,
                   const real[:, :, :, ::1] w,
                   const real[::1] bias,
                   real[:, :, :, ::1] out):
    """out[b,o,y,x] = bias[o] + sum_{c,ky,kx} w[o,c,ky,kx] xp[b,c,y+ky,x+kx]."""
    cdef Py_ssize_t B = out.shape[0], Co = out.shape[1], H = out.shape[2], W = out.shape[3]
    cdef Py_ssize_t Ci = xp.shape[1]
    cdef Py_ssize_t Co4 = Co - (Co & 3)
    cdef Py_ssize_t b, co, ci, y, x, cb, j
    cdef real acc0[1024]
    cdef real acc1[1024]
    cdef real acc2[1024]
    cdef real acc3[1024]
    cdef real w0[9]
    cdef real w1[9]
    cdef real w2[9]
    cdef real w3[9]
    cdef const real* r0
    cdef const real* r1
    cdef const real* r2
    cdef const real* wp
    if W > MAX_ROW:
        raise ValueError("row wider than kernel accumulator")
    for b in range(B):
        for cb in range(0, Co4, 4):
            for y in range(H):
                for x in range(W):
                    acc0[x] = bias[cb]
                    acc1[x] = bias[cb + 1]
                    acc2[x] = bias[cb + 2]
                    acc3[x] = bias[cb + 3]
                for ci in range(Ci):
                    r0 = &xp[b, ci, y, 0]
                    r1 = &xp[b, ci, y + 1, 0]
                    r2 = &xp[b, ci, y + 2, 0]
                    wp = &w[cb, ci, 0, 0]
                    for j in range(9):
                        w0[j] = wp[j]
                    wp = &w[cb + 1, ci, 0, 0]
                    for j in range(9):
                        w1[j] = wp[j]
                    wp = &w[cb + 2, ci, 0, 0]
                    for j in range(9):
                        w2[j] = wp[j]
                    wp = &w[cb + 3, ci, 0, 0]
                    for j in range(9):
                        w3[j] = wp[j]
                    for x in range(W):
                        acc0[x] += (w0[0] * r0[x] + w0[1] * r0[x + 1] + w0[2] * r0[x + 2]
                                    + w0[3] * r1[x] + w0[4] * r1[x + 1] + w0[5] * r1[x + 2]
                                    + w0[6] * r2[x] + w0[7] * r2[x + 1] + w0[8] * r2[x + 2])
                        acc1[x] += (w1[0] * r0[x] + w1[1] * r0[x + 1] + w1[2] * r0[x + 2]
                                    + w1[3] * r1[x] + w1[4] * r1[x + 1] + w1[5] * r1[x + 2]
                                    + w1[6] * r2[x] + w1[7] * r2[x + 1] + w1[8] * r2[x + 2])
                        acc2[x] += (w2[0] * r0[x] + w2[1] * r0[x + 1] + w2[2] * r0[x + 2]
                                    + w2[3] * r1[x] + w2[4] * r1[x + 1] + w2[5] * r1[x + 2]
                                    + w2[6] * r2[x] + w2[7] * r2[x + 1] + w2[8] * r2[x + 2])
                        acc3[x] += (w3[0] * r0[x] + w3[1] * r0[x + 1] + w3[2] * r0[x + 2]
                                    + w3[3] * r1[x] + w3[4] * r1[x + 1] + w3[5] * r1[x + 2]
                                    + w3[6] * r2[x] + w3[7] * r2[x + 1] + w3[8] * r2[x + 2])
                for x in range(W):
                    out[b, cb, y, x] = acc0[x]
                    out[b, cb + 1, y, x] = acc1[x]
                    out[b, cb + 2, y, x] = acc2[x]
                    out[b, cb + 3, y, x] = acc3[x]
        for co in range(Co4, Co):
            for y in range(H):
                for x in range(W):
                    acc0[x] = bias[co]
                for ci in range(Ci):
                    r0 = &xp[b, ci, y, 0]
                    r1 = &xp[b, ci, y + 1, 0]
                    r2 = &xp[b, ci, y + 2, 0]
                    wp = &w[co, ci, 0, 0]
                    for j in range(9):
                        w0[j] = wp[j]
                    for x in range(W):
                        acc0[x] += (w0[0] * r0[x] + w0[1] * r0[x + 1] + w0[2] * r0[x + 2]
                                    + w0[3] * r1[x] + w0[4] * r1[x + 1] + w0[5] * r1[x + 2]
                                    + w0[6] * r2[x] + w0[7] * r2[x + 1] + w0[8] * r2[x + 2])
                for x in range(W):
                    out[b, co, y, x] = acc0[x]


def conv3x3_gw_s1(const real[:, :, :, ::1] gy,
                  const real[:, :, :, ::1] xp,
                  real[:, :, :, ::1] gw):
    """gw[o,c,ky,kx] += sum_{b,y,x} gy[b,o,y,x] xp[b,c,y+ky,x+kx] (gw pre-zeroed).

    The row loop reduces into nine scalars per output channel (one per tap),
    which the compiler turns into vector accumulators with a single horizontal
    sum per row: no stores in the hot loop. Looping outputs inside (b, ci, y)
    keeps the three input rows L1-resident across all output channels.
    """
    cdef Py_ssize_t B = gy.shape[0], Co = gy.shape[1], H = gy.shape[2], W = gy.shape[3]
    cdef Py_ssize_t Ci = xp.shape[1]
    cdef Py_ssize_t b, o, ci, y, x, k
    cdef real gv, s0, s1, s2, s3, s4, s5, s6, s7, s8
    cdef const real* g
    cdef const real* r0
    cdef const real* r1
    cdef const real* r2
    if real is float:
        acc_arr = np.zeros((Co, 9), dtype=np.float32)
    else:
        acc_arr = np.zeros((Co, 9), dtype=np.float64)
    cdef real[:, ::1] acc = acc_arr
    if W > MAX_ROW:
        raise ValueError("row wider than kernel accumulator")
    for b in range(B):
        for ci in range(Ci):
            for o in range(Co):
                for k in range(9):
                    acc[o, k] = 0.0
            for y in range(H):
                r0 = &xp[b, ci, y, 0]
                r1 = &xp[b, ci, y + 1, 0]
                r2 = &xp[b, ci, y + 2, 0]
                for o in range(Co):
                    g = &gy[b, o, y, 0]
                    s0 = 0.0; s1 = 0.0; s2 = 0.0; s3 = 0.0; s4 = 0.0
                    s5 = 0.0; s6 = 0.0; s7 = 0.0; s8 = 0.0
                    for x in range(W):
                        gv = g[x]
                        s0 += gv * r0[x]
                        s1 += gv * r0[x + 1]
                        s2 += gv * r0[x + 2]
                        s3 += gv * r1[x]
                        s4 += gv * r1[x + 1]
                        s5 += gv * r1[x + 2]
                        s6 += gv * r2[x]
                        s7 += gv * r2[x + 1]
                        s8 += gv * r2[x + 2]
                    acc[o, 0] += s0
                    acc[o, 1] += s1
                    acc[o, 2] += s2
                    acc[o, 3] += s3
                    acc[o, 4] += s4
                    acc[o, 5] += s5
                    acc[o, 6] += s6
                    acc[o, 7] += s7
                    acc[o, 8] += s8
            for o in range(Co):
                gw[o, ci, 0, 0] += acc[o, 0]
                gw[o, ci, 0, 1] += acc[o, 1]
                gw[o, ci, 0, 2] += acc[o, 2]
                gw[o, ci, 1, 0] += acc[o, 3]
                gw[o, ci, 1, 1] += acc[o, 4]
                gw[o, ci, 1, 2] += acc[o, 5]
                gw[o, ci, 2, 0] += acc[o, 6]
                gw[o, ci, 2, 1] += acc[o, 7]
                gw[o, ci, 2, 2] += acc[o, 8]
