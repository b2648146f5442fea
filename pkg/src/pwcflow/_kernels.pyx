# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled sampling kernels: bilinear warping, windowed correlation,
2x bilinear upsampling, each with its backward pass.

Semantics match pwcflow.backends.numpy_kernels exactly; see that module for
the reference definitions (zero padding outside the image for warping and
correlation, edge clamping for upsampling).
"""

import numpy as np

cimport cython
from libc.math cimport floor

NAME = "cython"

ctypedef fused floating:
    float
    double


cdef inline object _dtype_of(floating sample):
    if floating is float:
        return np.float32
    return np.float64


# -- bilinear warping ---------------------------------------------------------

def warp_forward(floating[:, :, :, ::1] feat, floating[:, :, :, ::1] flow):
    cdef Py_ssize_t B = feat.shape[0], C = feat.shape[1]
    cdef Py_ssize_t H = feat.shape[2], W = feat.shape[3]
    out_np = np.zeros((B, C, H, W), dtype=_dtype_of(<floating> 0))
    cdef floating[:, :, :, ::1] out = out_np
    cdef Py_ssize_t b, c, y, x, x0, y0, x1, y1
    cdef floating sx, sy, wx, wy, w00, w10, w01, w11
    cdef bint in00, in10, in01, in11

    with nogil:
        for b in range(B):
            for y in range(H):
                for x in range(W):
                    sx = x + flow[b, 0, y, x]
                    sy = y + flow[b, 1, y, x]
                    x0 = <Py_ssize_t> floor(sx)
                    y0 = <Py_ssize_t> floor(sy)
                    x1 = x0 + 1
                    y1 = y0 + 1
                    wx = sx - <floating> x0
                    wy = sy - <floating> y0
                    w00 = (1 - wx) * (1 - wy)
                    w10 = wx * (1 - wy)
                    w01 = (1 - wx) * wy
                    w11 = wx * wy
                    in00 = 0 <= x0 < W and 0 <= y0 < H
                    in10 = 0 <= x1 < W and 0 <= y0 < H
                    in01 = 0 <= x0 < W and 0 <= y1 < H
                    in11 = 0 <= x1 < W and 0 <= y1 < H
                    if not (in00 or in10 or in01 or in11):
                        continue
                    for c in range(C):
                        out[b, c, y, x] = (
                            (feat[b, c, y0, x0] * w00 if in00 else 0)
                            + (feat[b, c, y0, x1] * w10 if in10 else 0)
                            + (feat[b, c, y1, x0] * w01 if in01 else 0)
                            + (feat[b, c, y1, x1] * w11 if in11 else 0)
                        )
    return out_np


def warp_backward(floating[:, :, :, ::1] feat, floating[:, :, :, ::1] flow,
                  floating[:, :, :, ::1] gout):
    cdef Py_ssize_t B = feat.shape[0], C = feat.shape[1]
    cdef Py_ssize_t H = feat.shape[2], W = feat.shape[3]
    dtype = _dtype_of(<floating> 0)
    gfeat_np = np.zeros((B, C, H, W), dtype=dtype)
    gflow_np = np.zeros((B, 2, H, W), dtype=dtype)
    cdef floating[:, :, :, ::1] gfeat = gfeat_np
    cdef floating[:, :, :, ::1] gflow = gflow_np
    cdef Py_ssize_t b, c, y, x, x0, y0, x1, y1
    cdef floating sx, sy, wx, wy, g, v00, v10, v01, v11, gu, gv
    cdef bint in00, in10, in01, in11

    with nogil:
        for b in range(B):
            for y in range(H):
                for x in range(W):
                    sx = x + flow[b, 0, y, x]
                    sy = y + flow[b, 1, y, x]
                    x0 = <Py_ssize_t> floor(sx)
                    y0 = <Py_ssize_t> floor(sy)
                    x1 = x0 + 1
                    y1 = y0 + 1
                    wx = sx - <floating> x0
                    wy = sy - <floating> y0
                    in00 = 0 <= x0 < W and 0 <= y0 < H
                    in10 = 0 <= x1 < W and 0 <= y0 < H
                    in01 = 0 <= x0 < W and 0 <= y1 < H
                    in11 = 0 <= x1 < W and 0 <= y1 < H
                    if not (in00 or in10 or in01 or in11):
                        continue
                    gu = 0
                    gv = 0
                    for c in range(C):
                        g = gout[b, c, y, x]
                        v00 = feat[b, c, y0, x0] if in00 else 0
                        v10 = feat[b, c, y0, x1] if in10 else 0
                        v01 = feat[b, c, y1, x0] if in01 else 0
                        v11 = feat[b, c, y1, x1] if in11 else 0
                        if in00:
                            gfeat[b, c, y0, x0] += g * (1 - wx) * (1 - wy)
                        if in10:
                            gfeat[b, c, y0, x1] += g * wx * (1 - wy)
                        if in01:
                            gfeat[b, c, y1, x0] += g * (1 - wx) * wy
                        if in11:
                            gfeat[b, c, y1, x1] += g * wx * wy
                        gu += g * ((1 - wy) * (v10 - v00) + wy * (v11 - v01))
                        gv += g * ((1 - wx) * (v01 - v00) + wx * (v11 - v10))
                    gflow[b, 0, y, x] = gu
                    gflow[b, 1, y, x] = gv
    return gfeat_np, gflow_np


# -- windowed correlation -----------------------------------------------------

def corr_forward(floating[:, :, :, ::1] a, floating[:, :, :, ::1] b, int d):
    cdef Py_ssize_t B = a.shape[0], N = a.shape[1]
    cdef Py_ssize_t H = a.shape[2], W = a.shape[3]
    cdef Py_ssize_t K = 2 * d + 1
    out_np = np.zeros((B, K * K, H, W), dtype=_dtype_of(<floating> 0))
    cdef floating[:, :, :, ::1] out = out_np
    cdef Py_ssize_t bb, c, y, x, dy, dx, yy, xx, ch
    cdef floating acc, inv_n = <floating> (1.0 / N)

    with nogil:
        for bb in range(B):
            for dy in range(-d, d + 1):
                for dx in range(-d, d + 1):
                    ch = (dy + d) * K + (dx + d)
                    for y in range(H):
                        yy = y + dy
                        if yy < 0 or yy >= H:
                            continue
                        for x in range(W):
                            xx = x + dx
                            if xx < 0 or xx >= W:
                                continue
                            acc = 0
                            for c in range(N):
                                acc += a[bb, c, y, x] * b[bb, c, yy, xx]
                            out[bb, ch, y, x] = acc * inv_n
    return out_np


def corr_backward(floating[:, :, :, ::1] a, floating[:, :, :, ::1] b, int d,
                  floating[:, :, :, ::1] gout):
    cdef Py_ssize_t B = a.shape[0], N = a.shape[1]
    cdef Py_ssize_t H = a.shape[2], W = a.shape[3]
    cdef Py_ssize_t K = 2 * d + 1
    dtype = _dtype_of(<floating> 0)
    ga_np = np.zeros((B, N, H, W), dtype=dtype)
    gb_np = np.zeros((B, N, H, W), dtype=dtype)
    cdef floating[:, :, :, ::1] ga = ga_np
    cdef floating[:, :, :, ::1] gb = gb_np
    cdef Py_ssize_t bb, c, y, x, dy, dx, yy, xx, ch
    cdef floating g, inv_n = <floating> (1.0 / N)

    with nogil:
        for bb in range(B):
            for dy in range(-d, d + 1):
                for dx in range(-d, d + 1):
                    ch = (dy + d) * K + (dx + d)
                    for y in range(H):
                        yy = y + dy
                        if yy < 0 or yy >= H:
                            continue
                        for x in range(W):
                            xx = x + dx
                            if xx < 0 or xx >= W:
                                continue
                            g = gout[bb, ch, y, x] * inv_n
                            for c in range(N):
                                ga[bb, c, y, x] += g * b[bb, c, yy, xx]
                                gb[bb, c, yy, xx] += g * a[bb, c, y, x]
    return ga_np, gb_np


# -- 2x bilinear upsampling ---------------------------------------------------

def _taps(Py_ssize_t n):
    t = np.arange(2 * n, dtype=np.float64)
    src = (t + 0.5) / 2.0 - 0.5
    base = np.floor(src)
    w1 = src - base
    i0 = np.clip(base.astype(np.int64), 0, n - 1)
    i1 = np.clip(base.astype(np.int64) + 1, 0, n - 1)
    return i0, i1, 1.0 - w1, w1


def upsample2x_forward(floating[:, :, :, ::1] src):
    cdef Py_ssize_t B = src.shape[0], C = src.shape[1]
    cdef Py_ssize_t H = src.shape[2], W = src.shape[3]
    out_np = np.zeros((B, C, 2 * H, 2 * W), dtype=_dtype_of(<floating> 0))
    cdef floating[:, :, :, ::1] out = out_np
    iy0_np, iy1_np, wy0_np, wy1_np = _taps(H)
    ix0_np, ix1_np, wx0_np, wx1_np = _taps(W)
    cdef long[::1] iy0 = iy0_np, iy1 = iy1_np, ix0 = ix0_np, ix1 = ix1_np
    cdef double[::1] wy0 = wy0_np, wy1 = wy1_np, wx0 = wx0_np, wx1 = wx1_np
    cdef Py_ssize_t b, c, oy, ox, sy0, sy1, sx0, sx1
    cdef floating top, bottom

    with nogil:
        for b in range(B):
            for c in range(C):
                for oy in range(2 * H):
                    sy0 = iy0[oy]
                    sy1 = iy1[oy]
                    for ox in range(2 * W):
                        sx0 = ix0[ox]
                        sx1 = ix1[ox]
                        top = (<floating> wx0[ox]) * src[b, c, sy0, sx0] + \
                              (<floating> wx1[ox]) * src[b, c, sy0, sx1]
                        bottom = (<floating> wx0[ox]) * src[b, c, sy1, sx0] + \
                                 (<floating> wx1[ox]) * src[b, c, sy1, sx1]
                        out[b, c, oy, ox] = (<floating> wy0[oy]) * top + (<floating> wy1[oy]) * bottom
    return out_np


def upsample2x_backward(floating[:, :, :, ::1] gout):
    cdef Py_ssize_t B = gout.shape[0], C = gout.shape[1]
    cdef Py_ssize_t H2 = gout.shape[2], W2 = gout.shape[3]
    cdef Py_ssize_t H = H2 // 2, W = W2 // 2
    gx_np = np.zeros((B, C, H, W), dtype=_dtype_of(<floating> 0))
    cdef floating[:, :, :, ::1] gx = gx_np
    iy0_np, iy1_np, wy0_np, wy1_np = _taps(H)
    ix0_np, ix1_np, wx0_np, wx1_np = _taps(W)
    cdef long[::1] iy0 = iy0_np, iy1 = iy1_np, ix0 = ix0_np, ix1 = ix1_np
    cdef double[::1] wy0 = wy0_np, wy1 = wy1_np, wx0 = wx0_np, wx1 = wx1_np
    cdef Py_ssize_t b, c, oy, ox, sy0, sy1, sx0, sx1
    cdef floating g, gy0, gy1

    with nogil:
        for b in range(B):
            for c in range(C):
                for oy in range(H2):
                    sy0 = iy0[oy]
                    sy1 = iy1[oy]
                    for ox in range(W2):
                        sx0 = ix0[ox]
                        sx1 = ix1[ox]
                        g = gout[b, c, oy, ox]
                        gy0 = (<floating> wy0[oy]) * g
                        gy1 = (<floating> wy1[oy]) * g
                        gx[b, c, sy0, sx0] += (<floating> wx0[ox]) * gy0
                        gx[b, c, sy0, sx1] += (<floating> wx1[ox]) * gy0
                        gx[b, c, sy1, sx0] += (<floating> wx0[ox]) * gy1
                        gx[b, c, sy1, sx1] += (<floating> wx1[ox]) * gy1
    return gx_np
