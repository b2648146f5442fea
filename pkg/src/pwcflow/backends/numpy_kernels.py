"""Pure-numpy implementations of the hot sampling kernels.

These are the fallback twins of the compiled `pwcflow._kernels` extension:
bilinear warping, windowed feature correlation, and 2x bilinear upsampling,
each with its backward pass.  All functions take and return plain numpy
arrays (float32 or float64) and are deterministic.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


# -- bilinear warping ---------------------------------------------------------

def _corner_terms(feat_flat, x0, y0, wx, wy, H, W):
    """Gathered values and weights for the four bilinear corners.

    Out-of-range corners contribute zero (zero padding).  Returns lists of
    (value, weight) with value shape (B, C, H*W) and weight shape (B, 1, H*W).
    """
    terms = []
    for dx, dy in ((0, 0), (1, 0), (0, 1), (1, 1)):
        xc = x0 + dx
        yc = y0 + dy
        valid = (xc >= 0) & (xc < W) & (yc >= 0) & (yc < H)
        idx = (np.clip(yc, 0, H - 1) * W + np.clip(xc, 0, W - 1)).reshape(xc.shape[0], 1, -1)
        val = np.take_along_axis(feat_flat, idx, axis=2)
        val = val * valid.reshape(valid.shape[0], 1, -1)
        w = (wx if dx else (1.0 - wx)) * (wy if dy else (1.0 - wy))
        terms.append((val, w.reshape(w.shape[0], 1, -1)))
    return terms


def _sample_grid(flow, H, W):
    xs = flow[:, 0] + np.arange(W, dtype=flow.dtype)
    ys = flow[:, 1] + np.arange(H, dtype=flow.dtype)[:, None]
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    return x0, y0, xs - x0, ys - y0


def warp_forward(feat: np.ndarray, flow: np.ndarray) -> np.ndarray:
    B, C, H, W = feat.shape
    x0, y0, wx, wy = _sample_grid(flow, H, W)
    feat_flat = feat.reshape(B, C, H * W)
    out = np.zeros((B, C, H * W), dtype=feat.dtype)
    for val, w in _corner_terms(feat_flat, x0, y0, wx, wy, H, W):
        out += val * w
    return out.reshape(B, C, H, W)


def warp_backward(feat: np.ndarray, flow: np.ndarray, gout: np.ndarray):
    B, C, H, W = feat.shape
    x0, y0, wx, wy = _sample_grid(flow, H, W)
    feat_flat = feat.reshape(B, C, H * W)
    gout_flat = gout.reshape(B, C, H * W)

    gfeat = np.zeros((B, C * H * W), dtype=np.float64)
    gu = np.zeros((B, H * W), dtype=feat.dtype)
    gv = np.zeros((B, H * W), dtype=feat.dtype)
    chan_base = (np.arange(C, dtype=np.int64) * (H * W))[:, None]

    corners = {}
    for dx, dy in ((0, 0), (1, 0), (0, 1), (1, 1)):
        xc = x0 + dx
        yc = y0 + dy
        valid = ((xc >= 0) & (xc < W) & (yc >= 0) & (yc < H)).reshape(B, -1)
        idx = (np.clip(yc, 0, H - 1) * W + np.clip(xc, 0, W - 1)).reshape(B, -1)
        val = np.take_along_axis(feat_flat, idx[:, None, :], axis=2) * valid[:, None, :]
        corners[(dx, dy)] = (val, idx, valid)

    wxf = wx.reshape(B, -1)
    wyf = wy.reshape(B, -1)
    for (dx, dy), (val, idx, valid) in corners.items():
        w = (wxf if dx else (1.0 - wxf)) * (wyf if dy else (1.0 - wyf))
        contrib = gout_flat * (w * valid)[:, None, :]
        for b in range(B):
            flat_idx = (chan_base + idx[b][None, :]).ravel()
            gfeat[b] += np.bincount(flat_idx, weights=contrib[b].ravel().astype(np.float64),
                                    minlength=C * H * W)

    v00, v10 = corners[(0, 0)][0], corners[(1, 0)][0]
    v01, v11 = corners[(0, 1)][0], corners[(1, 1)][0]
    dsx = (1.0 - wyf)[:, None, :] * (v10 - v00) + wyf[:, None, :] * (v11 - v01)
    dsy = (1.0 - wxf)[:, None, :] * (v01 - v00) + wxf[:, None, :] * (v11 - v10)
    gu = (gout_flat * dsx).sum(axis=1)
    gv = (gout_flat * dsy).sum(axis=1)

    gflow = np.stack([gu.reshape(B, H, W), gv.reshape(B, H, W)], axis=1).astype(feat.dtype)
    return gfeat.reshape(B, C, H, W).astype(feat.dtype), gflow


# -- windowed correlation -----------------------------------------------------

def corr_forward(a: np.ndarray, b: np.ndarray, d: int) -> np.ndarray:
    B, N, H, W = a.shape
    K = 2 * d + 1
    bp = np.zeros((B, N, H + 2 * d, W + 2 * d), dtype=b.dtype)
    bp[:, :, d:d + H, d:d + W] = b
    out = np.empty((B, K * K, H, W), dtype=a.dtype)
    inv_n = 1.0 / N
    for oy in range(K):
        for ox in range(K):
            window = bp[:, :, oy:oy + H, ox:ox + W]
            out[:, oy * K + ox] = np.einsum("bnhw,bnhw->bhw", a, window) * inv_n
    return out


def corr_backward(a: np.ndarray, b: np.ndarray, d: int, gout: np.ndarray):
    B, N, H, W = a.shape
    K = 2 * d + 1
    bp = np.zeros((B, N, H + 2 * d, W + 2 * d), dtype=b.dtype)
    bp[:, :, d:d + H, d:d + W] = b
    ga = np.zeros_like(a)
    gbp = np.zeros_like(bp)
    inv_n = 1.0 / N
    for oy in range(K):
        for ox in range(K):
            g = gout[:, oy * K + ox][:, None] * inv_n
            ga += g * bp[:, :, oy:oy + H, ox:ox + W]
            gbp[:, :, oy:oy + H, ox:ox + W] += g * a
    return ga, gbp[:, :, d:d + H, d:d + W]


# -- 2x bilinear upsampling ---------------------------------------------------

def _up2_taps(n: int):
    """Source indices/weights for doubling a length-n axis.

    Convention: source coordinate of output t is (t + 0.5) / 2 - 0.5, with
    edge clamping, so constants are preserved exactly.
    """
    t = np.arange(2 * n, dtype=np.float64)
    src = (t + 0.5) / 2.0 - 0.5
    base = np.floor(src)
    w1 = src - base
    i0 = np.clip(base.astype(np.int64), 0, n - 1)
    i1 = np.clip(base.astype(np.int64) + 1, 0, n - 1)
    return i0, i1, 1.0 - w1, w1


def _up2_axis(x: np.ndarray, axis: int) -> np.ndarray:
    n = x.shape[axis]
    i0, i1, w0, w1 = _up2_taps(n)
    shape = [1] * x.ndim
    shape[axis] = 2 * n
    w0 = w0.reshape(shape).astype(x.dtype)
    w1 = w1.reshape(shape).astype(x.dtype)
    return np.take(x, i0, axis=axis) * w0 + np.take(x, i1, axis=axis) * w1


def _down2_axis(g: np.ndarray, axis: int) -> np.ndarray:
    n2 = g.shape[axis]
    n = n2 // 2
    i0, i1, w0, w1 = _up2_taps(n)
    gm = np.moveaxis(g, axis, 0)
    out = np.zeros((n,) + gm.shape[1:], dtype=g.dtype)
    wshape = (n2,) + (1,) * (gm.ndim - 1)
    np.add.at(out, i0, gm * w0.reshape(wshape).astype(g.dtype))
    np.add.at(out, i1, gm * w1.reshape(wshape).astype(g.dtype))
    return np.moveaxis(out, 0, axis)


def upsample2x_forward(x: np.ndarray) -> np.ndarray:
    return _up2_axis(_up2_axis(x, 2), 3)


def upsample2x_backward(gout: np.ndarray) -> np.ndarray:
    return _down2_axis(_down2_axis(gout, 3), 2)
