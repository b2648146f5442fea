"""Generic differentiable building blocks: convolution, activation, resampling.

Each operator validates shapes, computes its result, and registers a VJP
closure on the output tensor (see :mod:`pwcflow.tensor`).  Convolution runs
through im2col + BLAS in both kernel backends; the data-dependent sampling
kernels dispatch through :mod:`pwcflow.backends`.
"""

from __future__ import annotations

import numpy as np

from . import backends
from .tensor import Tensor, as_tensor, from_op


class ShapeError(ValueError):
    """Raised when operator inputs have incompatible dimensions."""


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ShapeError(message)


# -- convolution ----------------------------------------------------------------

def conv2d_output_size(size: int, k: int, stride: int, padding: int, dilation: int) -> int:
    return (size + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def _im2col(xp: np.ndarray, k: int, stride: int, dilation: int, ho: int, wo: int) -> np.ndarray:
    B, C, Hp, Wp = xp.shape
    sB, sC, sH, sW = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(B, ho, wo, C, k, k),
        strides=(sB, stride * sH, stride * sW, sC, dilation * sH, dilation * sW),
        writeable=False,
    )
    # reshape copies into the (rows, patch) layout BLAS wants
    return view.reshape(B * ho * wo, C * k * k)


def _conv_forward(x: np.ndarray, w: np.ndarray, stride: int, padding: int, dilation: int):
    B, C, H, W = x.shape
    O, _, k, _ = w.shape
    ho = conv2d_output_size(H, k, stride, padding, dilation)
    wo = conv2d_output_size(W, k, stride, padding, dilation)
    _require(ho >= 1 and wo >= 1,
             f"conv2d input {H}x{W} too small for kernel {k}, stride {stride}, "
             f"padding {padding}, dilation {dilation}")
    if padding > 0:
        xp = np.zeros((B, C, H + 2 * padding, W + 2 * padding), dtype=x.dtype)
        xp[:, :, padding:padding + H, padding:padding + W] = x
    else:
        xp = x
    cols = _im2col(xp, k, stride, dilation, ho, wo)
    out = cols @ w.reshape(O, -1).T
    return out.reshape(B, ho, wo, O).transpose(0, 3, 1, 2), cols, (ho, wo)


def _conv_input_grad(gout: np.ndarray, w: np.ndarray, in_hw: tuple,
                     stride: int, padding: int, dilation: int) -> np.ndarray:
    """Gradient w.r.t. the convolution input via a stride-1 correlation.

    Zero-stuffs the output gradient back onto the strided grid, pads by the
    kernel footprint, and correlates with the flipped kernel.
    """
    B, O, ho, wo = gout.shape
    k = w.shape[2]
    H, W = in_hw
    span = dilation * (k - 1)
    gh = (ho - 1) * stride + 1
    gw = (wo - 1) * stride + 1
    right_h = H + 2 * padding - gh
    right_w = W + 2 * padding - gw
    stuffed = np.zeros((B, O, span + gh + right_h, span + gw + right_w), dtype=gout.dtype)
    stuffed[:, :, span:span + gh:stride, span:span + gw:stride] = gout
    wflip = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    gxp, _, _ = _conv_forward(stuffed, wflip, stride=1, padding=0, dilation=dilation)
    return np.ascontiguousarray(gxp[:, :, padding:padding + H, padding:padding + W])


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1,
           padding: int = 0, dilation: int = 1) -> Tensor:
    """2-D convolution (BCHW), zero padding, square kernel.

    Output spatial size is floor((n + 2*padding - dilation*(k-1) - 1) / stride) + 1.
    """
    _require(x.ndim == 4, f"conv2d expects BCHW input, got shape {x.shape}")
    _require(weight.ndim == 4 and weight.shape[2] == weight.shape[3],
             f"conv2d expects a square OIkk weight, got shape {weight.shape}")
    _require(x.shape[1] == weight.shape[1],
             f"conv2d channel mismatch: input has {x.shape[1]}, weight expects {weight.shape[1]}")
    _require(bias.shape == (weight.shape[0],),
             f"conv2d bias shape {bias.shape} does not match {weight.shape[0]} output channels")
    _require(stride >= 1 and dilation >= 1, "conv2d stride and dilation must be >= 1")
    _require(x.dtype == weight.dtype == bias.dtype, "conv2d inputs must share one dtype")

    B, C, H, W = x.shape
    O, _, k, _ = weight.shape
    out, cols, (ho, wo) = _conv_forward(x.data, weight.data, stride, padding, dilation)
    out = np.ascontiguousarray(out)
    out += bias.data[None, :, None, None]

    def vjp(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, O)
        gw = (gmat.T @ cols).reshape(weight.shape)
        gb = gmat.sum(axis=0)
        gx = _conv_input_grad(g, weight.data, (H, W), stride, padding, dilation)
        return gx, gw, gb

    return from_op(out, (x, weight, bias), vjp)


# -- pointwise / structural -------------------------------------------------------

def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    """max(x, slope*x) for slope in (0, 1); gradient slope on the negative side."""
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky_relu slope must lie in (0, 1), got {slope}")
    scale = np.where(x.data >= 0, x.data.dtype.type(1.0), x.data.dtype.type(slope))

    def vjp(g):
        return (g * scale,)

    return from_op(x.data * scale, (x,), vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    _require(a.shape == b.shape, f"add shape mismatch: {a.shape} vs {b.shape}")

    def vjp(g):
        return g, g

    return from_op(a.data + b.data, (a, b), vjp)


def scale(x: Tensor, factor: float) -> Tensor:
    factor = float(factor)

    def vjp(g):
        return (g * factor,)

    return from_op(x.data * factor, (x,), vjp)


def concat_channels(tensors: list[Tensor]) -> Tensor:
    _require(len(tensors) > 0, "concat_channels needs at least one tensor")
    first = tensors[0]
    for t in tensors[1:]:
        _require(t.ndim == 4 and t.shape[0] == first.shape[0] and t.shape[2:] == first.shape[2:],
                 f"concat_channels spatial/batch mismatch: {t.shape} vs {first.shape}")
    widths = [t.shape[1] for t in tensors]
    splits = np.cumsum(widths)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(part) for part in np.split(g, splits, axis=1))

    return from_op(np.concatenate([t.data for t in tensors], axis=1), tuple(tensors), vjp)


def pad2d(x: Tensor, top: int, bottom: int, left: int, right: int) -> Tensor:
    """Zero-pad the two trailing (spatial) dimensions."""
    B, C, H, W = x.shape
    out = np.zeros((B, C, H + top + bottom, W + left + right), dtype=x.dtype)
    out[:, :, top:top + H, left:left + W] = x.data

    def vjp(g):
        return (np.ascontiguousarray(g[:, :, top:top + H, left:left + W]),)

    return from_op(out, (x,), vjp)


def crop2d(x: Tensor, top: int, left: int, height: int, width: int) -> Tensor:
    B, C, H, W = x.shape
    _require(top + height <= H and left + width <= W,
             f"crop2d window {height}x{width}@({top},{left}) exceeds input {H}x{W}")

    def vjp(g):
        gx = np.zeros((B, C, H, W), dtype=g.dtype)
        gx[:, :, top:top + height, left:left + width] = g
        return (gx,)

    return from_op(np.ascontiguousarray(x.data[:, :, top:top + height, left:left + width]), (x,), vjp)


def avgpool2x2(x: Tensor) -> Tensor:
    """2x2 average pooling with stride 2; trailing odd row/column dropped."""
    B, C, H, W = x.shape
    h, w = H // 2, W // 2
    _require(h >= 1 and w >= 1, f"avgpool2x2 input {H}x{W} too small")
    win = x.data[:, :, :2 * h, :2 * w].reshape(B, C, h, 2, w, 2)
    out = win.mean(axis=(3, 5))

    def vjp(g):
        gx = np.zeros((B, C, H, W), dtype=g.dtype)
        spread = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * g.dtype.type(0.25)
        gx[:, :, :2 * h, :2 * w] = spread
        return (gx,)

    return from_op(out, (x,), vjp)


def upsample2x_bilinear(x: Tensor) -> Tensor:
    """Double both spatial dimensions with bilinear weights.

    Source coordinate of output t is (t + 0.5)/2 - 0.5 (edge-clamped), so a
    constant map stays constant.
    """
    _require(x.ndim == 4, f"upsample2x_bilinear expects BCHW, got {x.shape}")

    def vjp(g):
        return (backends.kernels.upsample2x_backward(np.ascontiguousarray(g)),)

    return from_op(backends.kernels.upsample2x_forward(x.data), (x,), vjp)


# -- reductions used by losses ----------------------------------------------------

def sumsq(x: Tensor) -> Tensor:
    data = x.data

    def vjp(g):
        return (g * (2.0 * data),)

    return from_op(np.asarray((data.astype(np.float64) ** 2).sum(), dtype=x.dtype), (x,), vjp)


def masked_epe_sum(pred: Tensor, target, mask) -> Tensor:
    """Sum over pixels of mask * ||pred - target||_2 for 2-channel flow maps.

    ``target`` and ``mask`` are constants (no gradient).  The subgradient at
    an exact match is zero.
    """
    target = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=pred.dtype)
    mask = mask.data if isinstance(mask, Tensor) else np.asarray(mask, dtype=pred.dtype)
    _require(pred.ndim == 4 and pred.shape[1] == 2,
             f"masked_epe_sum expects a B2HW flow, got {pred.shape}")
    _require(target.shape == pred.shape,
             f"masked_epe_sum target shape {target.shape} != prediction {pred.shape}")
    _require(mask.shape == (pred.shape[0], 1) + pred.shape[2:] or mask.shape == pred.shape[2:]
             or mask.shape == (pred.shape[0],) + pred.shape[2:],
             f"masked_epe_sum mask shape {mask.shape} incompatible with {pred.shape}")
    mask = mask.reshape(pred.shape[0], 1, pred.shape[2], pred.shape[3]) if mask.ndim != 4 else mask

    diff = pred.data - target
    epe = np.sqrt((diff ** 2).sum(axis=1, keepdims=True))
    total = np.asarray((mask * epe).sum(), dtype=pred.dtype)

    def vjp(g):
        denom = np.maximum(epe, np.finfo(pred.dtype).tiny)
        return (g * (mask / denom) * diff,)

    return from_op(total, (pred,), vjp)


def masked_robust_sum(pred: Tensor, target, mask, epsilon: float, q: float) -> Tensor:
    """Sum over pixels of mask * (|du| + |dv| + epsilon)^q (sub-linear penalty)."""
    if not q < 1.0:
        raise ValueError(f"robust exponent q must be < 1, got {q}")
    if not epsilon > 0.0:
        raise ValueError(f"robust epsilon must be positive, got {epsilon}")
    target = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=pred.dtype)
    mask = mask.data if isinstance(mask, Tensor) else np.asarray(mask, dtype=pred.dtype)
    _require(target.shape == pred.shape,
             f"masked_robust_sum target shape {target.shape} != prediction {pred.shape}")
    mask = mask.reshape(pred.shape[0], 1, pred.shape[2], pred.shape[3]) if mask.ndim != 4 else mask

    diff = pred.data - target
    t = np.abs(diff).sum(axis=1, keepdims=True) + epsilon
    total = np.asarray((mask * t ** q).sum(), dtype=pred.dtype)

    def vjp(g):
        outer = mask * (q * t ** (q - 1.0))
        return (g * outer * np.sign(diff),)

    return from_op(total, (pred,), vjp)
