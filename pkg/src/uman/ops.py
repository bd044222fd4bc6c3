"""Convolution, pooling, interpolation and normalization ops on NCHW tensors."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import DimensionError, Tensor, log_branch, make_op, tmean


def _out_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def _check_conv(x: Tensor, k: int, stride: int, pad: int) -> None:
    if x.ndim != 4:
        raise DimensionError(f"expected NCHW input, got shape {x.shape}")
    if k % 2 == 0:
        raise DimensionError(f"kernel size must be odd, got {k}")
    if stride < 1:
        raise DimensionError(f"stride must be >= 1, got {stride}")
    if min(x.shape[2], x.shape[3]) + 2 * pad < k:
        raise DimensionError(f"input {x.shape[2:]} with pad {pad} smaller than kernel {k}")


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """Zero-padded cross-correlation of ``x`` [N,Cin,H,W] with ``w`` [Cout,Cin,k,k]."""
    cout, cin, k, k2 = w.shape
    if k != k2:
        raise DimensionError(f"square kernels only, got {w.shape}")
    _check_conv(x, k, stride, pad)
    if x.shape[1] != cin:
        raise DimensionError(f"conv2d: input has {x.shape[1]} channels, weight expects {cin}")
    n, _, h, wd = x.shape
    ho, wo = _out_size(h, k, stride, pad), _out_size(wd, k, stride, pad)

    if k == 1 and pad == 0:
        xs = x.data[:, :, ::stride, ::stride]
        wm = w.data[:, :, 0, 0]
        out = np.einsum("nchw,oc->nohw", xs, wm, optimize=True)

        def bw_core(g):
            gw = np.einsum("nohw,nchw->oc", g, xs, optimize=True)[:, :, None, None]
            gxs = np.einsum("nohw,oc->nchw", g, wm, optimize=True)
            if stride == 1:
                gx = gxs
            else:
                gx = np.zeros_like(x.data)
                gx[:, :, ::stride, ::stride] = gxs
            return gx, gw

    else:
        xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
        out = np.tensordot(win, w.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)

        def bw_core(g):
            gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
            cols = np.tensordot(g, w.data, axes=([1], [0]))  # N,Ho,Wo,Cin,k,k
            gxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[
                        ..., i, j
                    ].transpose(0, 3, 1, 2)
            return gxp[:, :, pad : pad + h, pad : pad + wd], gw

    out = np.ascontiguousarray(out)
    if b is not None:
        out = out + b.data[None, :, None, None]

    def bw(g):
        gx, gw = bw_core(g)
        gb = g.sum(axis=(0, 2, 3)) if b is not None else None
        return gx, gw, gb

    parents = (x, w, b) if b is not None else (x, w)
    return make_op(out, parents, bw, "conv2d")


def depthwise_conv2d(x: Tensor, w: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """One ``k x k`` filter per channel; ``w`` is [C,1,k,k]."""
    c, one, k, _ = w.shape
    _check_conv(x, k, stride, pad)
    if one != 1 or x.shape[1] != c:
        raise DimensionError(f"depthwise_conv2d: input channels {x.shape[1]} vs weight {w.shape}")
    n, _, h, wd = x.shape
    ho, wo = _out_size(h, k, stride, pad), _out_size(wd, k, stride, pad)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((n, c, ho, wo))
    for i in range(k):
        for j in range(k):
            out += xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] * w.data[
                None, :, 0, i, j, None, None
            ]

    def bw(g):
        gw = np.zeros_like(w.data)
        gxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                sl = (slice(None), slice(None), slice(i, i + stride * ho, stride), slice(j, j + stride * wo, stride))
                gw[:, 0, i, j] = (g * xp[sl]).sum(axis=(0, 2, 3))
                gxp[sl] += g * w.data[None, :, 0, i, j, None, None]
        return gxp[:, :, pad : pad + h, pad : pad + wd], gw

    return make_op(out, (x, w), bw, "depthwise_conv2d")


def _upsample_matrix(n: int) -> np.ndarray:
    # align_corners=False: src = (dst + 0.5) / 2 - 0.5, clamped at the border
    m = np.zeros((2 * n, n))
    for o in range(2 * n):
        src = max((o + 0.5) / 2.0 - 0.5, 0.0)
        i0 = min(int(np.floor(src)), n - 1)
        i1 = min(i0 + 1, n - 1)
        lam = src - i0
        m[o, i0] += 1.0 - lam
        m[o, i1] += lam
    return m


def bilinear_upsample2x(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise DimensionError(f"expected NCHW input, got shape {x.shape}")
    mh = _upsample_matrix(x.shape[2])
    mw = _upsample_matrix(x.shape[3])
    out = mh @ x.data @ mw.T
    return make_op(out, (x,), lambda g: (mh.T @ g @ mw,), "bilinear_upsample2x")


def max_pool2x(x: Tensor) -> Tensor:
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise DimensionError(f"max_pool2x needs even spatial dims, got {h}x{w}")
    blocks = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    arg = blocks.argmax(axis=-1)
    log_branch(arg)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def bw(g):
        gb = np.zeros((n, c, h // 2, w // 2, 4))
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        return (gb.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w),)

    return make_op(out, (x,), bw, "max_pool2x")


def avg_pool_global(x: Tensor) -> Tensor:
    return tmean(x, axis=(2, 3), keepdims=True)


def mean_channelwise(x: Tensor) -> Tensor:
    return tmean(x, axis=1, keepdims=True)


def max_pool_channelwise(x: Tensor) -> Tensor:
    arg = x.data.argmax(axis=1)[:, None]
    log_branch(arg)
    out = np.take_along_axis(x.data, arg, axis=1)

    def bw(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, arg, g, axis=1)
        return (gx,)

    return make_op(out, (x,), bw, "max_pool_channelwise")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(f"layer_norm: last dim {d} vs gamma {gamma.shape} / beta {beta.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    out = xhat * gamma.data + beta.data

    def bw(g):
        red = tuple(range(x.ndim - 1))
        gg = (g * xhat).sum(axis=red)
        gbeta = g.sum(axis=red)
        dxhat = g * gamma.data
        gx = rstd * (
            dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, gg, gbeta

    return make_op(out, (x, gamma, beta), bw, "layer_norm")


def batch_norm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization of NCHW maps.

    In training mode the batch statistics are used and ``running_mean`` /
    ``running_var`` are updated in place (unbiased variance for the running
    estimate). In eval mode only the running statistics are read.
    """
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,) or running_mean.shape != (c,):
        raise DimensionError(f"batch_norm2d: {c} channels vs gamma {gamma.shape}")
    if not 0.0 < momentum <= 1.0:
        raise ValueError(f"momentum must be in (0, 1], got {momentum}")
    gshape = (1, c, 1, 1)
    if training:
        mu = x.data.mean(axis=(0, 2, 3))
        xc = x.data - mu.reshape(gshape)
        var = (xc * xc).mean(axis=(0, 2, 3))
        m = x.data.size // c
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * (m / max(m - 1, 1))
    else:
        xc = x.data - running_mean.reshape(gshape)
        var = running_var
    rstd = (1.0 / np.sqrt(var + eps)).reshape(gshape)
    xhat = xc * rstd
    out = xhat * gamma.data.reshape(gshape) + beta.data.reshape(gshape)

    def bw(g):
        gg = (g * xhat).sum(axis=(0, 2, 3))
        gbeta = g.sum(axis=(0, 2, 3))
        dxhat = g * gamma.data.reshape(gshape)
        if training:
            gx = rstd * (
                dxhat
                - dxhat.mean(axis=(0, 2, 3), keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
            )
        else:
            gx = dxhat * rstd
        return gx, gg, gbeta

    return make_op(out, (x, gamma, beta), bw, "batch_norm2d")
