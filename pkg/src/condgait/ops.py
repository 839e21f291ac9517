"""Structured network ops over (time, joint, channel) tensors.

Layout convention throughout: x has shape (T, N, C) — frames, joints,
channels — optionally with one leading batch axis, (B, T, N, C). Per-batch
operands (generated filters, composed topologies) carry the same leading
axis; shared operands broadcast over it. All ops differentiate through the
tape in tensor.py.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .tensor import ShapeError, Tensor, make_op, relu, softmax

__all__ = [
    "relu",
    "softmax",
    "conv1x1",
    "fully_connected",
    "depthwise_joint_scale",
    "depthwise_temporal_conv",
    "temporal_conv",
    "gated_graph_aggregate",
    "graph_conv_mix",
    "batch_norm",
    "adaptive_temporal_pool",
    "temporal_mean_pool",
    "temporal_max_pool",
    "global_average_pool",
]


def _dense_last(x: Tensor, w: Tensor, bias: Optional[Tensor], op: str) -> Tensor:
    """Affine map over the last axis: out[..., d] = sum_c x[..., c] w[c, d] (+ b)."""
    if w.ndim != 2 or x.data.shape[-1] != w.data.shape[0]:
        raise ShapeError(
            f"{op}: last axis of {x.data.shape} must match rows of {w.data.shape}")
    lead = x.data.shape[:-1]
    c_in, c_out = w.data.shape
    flat = x.data.reshape(-1, c_in)
    out = flat @ w.data
    if bias is not None:
        if bias.data.shape != (c_out,):
            raise ShapeError(
                f"{op}: bias shape {bias.data.shape} must be ({c_out},)")
        out = out + bias.data
    out = out.reshape(*lead, c_out)
    x_data, w_data = x.data, w.data
    parents = (x, w) if bias is None else (x, w, bias)

    def rule(g):
        gf = g.reshape(-1, c_out)
        gx = (gf @ w_data.T).reshape(x_data.shape)
        gw = flat.T @ gf
        if bias is None:
            return gx, gw
        return gx, gw, gf.sum(axis=0)

    return make_op(op, parents, out, rule)


def conv1x1(x: Tensor, w: Tensor) -> Tensor:
    """Per-(t, n) linear map over channels; equals matmul after flattening."""
    return _dense_last(x, w, None, "conv1x1")


def fully_connected(x: Tensor, w: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Affine map over the last axis of an arbitrarily batched input."""
    return _dense_last(x, w, bias, "fully_connected")


def depthwise_joint_scale(x: Tensor, f: Tensor) -> Tensor:
    """out[t, n, c] = x[t, n, c] * f[n, c] — a per-joint, per-channel gate.

    Batched: x (B, T, N, C) with f (B, N, C) or shared f (N, C).
    """
    if x.ndim not in (3, 4) or f.ndim != x.ndim - 1 \
            or x.data.shape[-2:] != f.data.shape[-2:] \
            or (x.ndim == 4 and f.ndim == 3
                and x.data.shape[0] != f.data.shape[0]):
        raise ShapeError(
            f"depthwise_joint_scale: x {x.data.shape} incompatible with "
            f"f {f.data.shape}")
    fe = np.expand_dims(f.data, -3)
    out = x.data * fe
    x_data = x.data

    def rule(g):
        return g * fe, (g * x_data).sum(axis=-3)

    return make_op("depthwise_joint_scale", (x, f), out, rule)


def _padded_windows(x_data: np.ndarray, k: int, stride: int):
    """Zero-padded sliding windows over the time axis (-3).

    Returns the padded buffer, a (..., T_out, N, C, K) window view, and the
    pad width.
    """
    pad = k // 2
    widths = [(0, 0)] * (x_data.ndim - 3) + [(pad, pad), (0, 0), (0, 0)]
    xp = np.pad(x_data, widths)
    windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=-3)
    sub = (Ellipsis, slice(None, None, stride)) + (slice(None),) * 3
    return xp, windows[sub], pad


def _time_slice(j: int, t_out: int, stride: int):
    return (Ellipsis, slice(j, j + (t_out - 1) * stride + 1, stride),
            slice(None), slice(None))


def depthwise_temporal_conv(x: Tensor, f: Tensor, stride: int = 1) -> Tensor:
    """Per-joint, per-channel temporal convolution with symmetric zero padding.

    out[t, n, c] = sum_k x[t*stride + k - K//2, n, c] * f[k, n, c], indices
    outside [0, T) read as zero. Output length is ceil(T / stride); stride 1
    preserves T. f may have a singleton joint axis to share taps across
    joints, and either carries the input's batch axis or is shared over it.
    """
    if x.ndim not in (3, 4) or f.ndim not in (3, x.ndim):
        raise ShapeError(
            f"depthwise_temporal_conv: need (T,N,C)[+batch] x and "
            f"(K,N,C)[+batch] f, got {x.data.shape} and {f.data.shape}")
    k, fn, fc = f.data.shape[-3:]
    t_len, n, c = x.data.shape[-3:]
    if k % 2 == 0:
        raise ValueError(f"depthwise_temporal_conv: kernel size {k} must be odd")
    if fc != c or fn not in (n, 1):
        raise ShapeError(
            f"depthwise_temporal_conv: filter {f.data.shape} incompatible "
            f"with input {x.data.shape}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    shared = f.ndim < x.ndim
    pad = k // 2
    widths = [(0, 0)] * (x.ndim - 3) + [(pad, pad), (0, 0), (0, 0)]
    xp = np.pad(x.data, widths)
    t_out = -(-t_len // stride)
    lead = x.data.shape[:-3]
    out = np.zeros(lead + (t_out, n, c))
    taps = [np.expand_dims(f.data[..., j, :, :], -3) for j in range(k)]
    for j in range(k):
        out += xp[_time_slice(j, t_out, stride)] * taps[j]
    f_shape = f.data.shape

    def rule(g):
        gxp = np.zeros_like(xp)
        gf = np.empty(lead + (k, fn, c)) if not shared \
            else np.empty((k, fn, c))
        for j in range(k):
            gxp[_time_slice(j, t_out, stride)] += g * taps[j]
            prod = (g * xp[_time_slice(j, t_out, stride)]).sum(axis=-3)
            if fn == 1:
                prod = prod.sum(axis=-2, keepdims=True)
            if shared and prod.ndim > 2:
                prod = prod.reshape(-1, fn, c).sum(axis=0)
            gf[..., j, :, :] = prod
        return gxp[(Ellipsis, slice(pad, pad + t_len), slice(None),
                    slice(None))], gf

    return make_op("depthwise_temporal_conv", (x, f), out, rule)


def temporal_conv(x: Tensor, w: Tensor, stride: int = 1) -> Tensor:
    """Dense temporal convolution mixing channels: w has shape (K, C, C').

    Same symmetric zero padding and stride handling as the depthwise op.
    """
    if x.ndim not in (3, 4) or w.ndim != 3:
        raise ShapeError(
            f"temporal_conv: need (T,N,C)[+batch] x and (K,C,C') w, got "
            f"{x.data.shape} and {w.data.shape}")
    k, c_in, c_out = w.data.shape
    t_len, n, c = x.data.shape[-3:]
    if k % 2 == 0:
        raise ValueError(f"temporal_conv: kernel size {k} must be odd")
    if c_in != c:
        raise ShapeError(
            f"temporal_conv: weight {w.data.shape} expects {c_in} channels, "
            f"input has {c}")
    xp, windows, pad = _padded_windows(x.data, k, stride)
    # (..., T_out, N, C, K) x (K, C, D): flatten the (C, K) contraction to
    # one gemm.
    win_flat = np.ascontiguousarray(windows).reshape(-1, c * k)
    w_flat = w.data.transpose(1, 0, 2).reshape(c * k, c_out)
    lead = windows.shape[:-2]
    t_out = windows.shape[-4]
    out = (win_flat @ w_flat).reshape(*lead, c_out)
    w_data = w.data

    def rule(g):
        gxp = np.zeros_like(xp)
        g_flat = g.reshape(-1, c_out)
        # One gemm per tap: (M, D) @ (D, C).
        gw_taps = np.matmul(g_flat[None], w_data.transpose(0, 2, 1))
        gw_taps = gw_taps.reshape((k,) + g.shape[:-1] + (c,))
        for j in range(k):
            gxp[_time_slice(j, t_out, stride)] += gw_taps[j]
        gw = (win_flat.T @ g_flat).reshape(c, k, c_out)
        return gxp[(Ellipsis, slice(pad, pad + t_len), slice(None), slice(None))], gw.transpose(1, 0, 2)

    return make_op("temporal_conv", (x, w), out, rule)


def _promote(data: np.ndarray, ndim: int):
    """View with leading singleton axes added up to ndim."""
    while data.ndim < ndim:
        data = data[None]
    return data


def gated_graph_aggregate(x: Tensor, filters: Tensor, topology: Tensor) -> Tensor:
    """Fused sum_k topology[k] @ (x * filters[k]) for (T,N,C) features.

    Equivalent to composing depthwise_joint_scale and matmul per topology
    slice and summing; fused because it is the inner loop of every adaptive
    block. Batched: x (B,T,N,C) with filters (B,K,N,C) and topology
    (B,K,N,N); filters/topology may also be shared (no batch axis).
    """
    t_len, n, c = x.data.shape[-3:]
    k_s = topology.data.shape[-3]
    if filters.data.shape[-3:] != (k_s, n, c) \
            or topology.data.shape[-2:] != (n, n):
        raise ShapeError(
            f"gated_graph_aggregate: x {x.data.shape}, filters "
            f"{filters.data.shape}, topology {topology.data.shape} disagree")
    x4 = _promote(x.data, 4)
    f4 = _promote(filters.data, 4)
    g4 = _promote(topology.data, 4)
    gated = x4[:, None] * f4[:, :, None]                   # (B, K, T, N, C)
    out = np.matmul(g4[:, :, None], gated).sum(axis=1)
    if x.ndim == 3:
        out = out[0]
    x_shape, f_shape, g_shape = x.data.shape, filters.data.shape, topology.data.shape

    def rule(g):
        gg = _promote(g, 4)
        dgated = np.matmul(g4.swapaxes(-1, -2)[:, :, None], gg[:, None])
        dx = (dgated * f4[:, :, None]).sum(axis=1)
        df = (dgated * x4[:, None]).sum(axis=2)
        dg = np.matmul(gg[:, None], gated.swapaxes(-1, -2)).sum(axis=2)
        return (dx.reshape(x_shape),
                df.sum(axis=0) if len(f_shape) == 3 else df,
                dg.sum(axis=0) if len(g_shape) == 3 else dg)

    return make_op("gated_graph_aggregate", (x, filters, topology), out, rule)


def graph_conv_mix(x: Tensor, topology: Tensor, weights: Tensor) -> Tensor:
    """Fused sum_k (topology[k] @ x) @ weights[k] — the plain graph convolution.

    weights has shape (K, C, D) and is always shared; topology may carry the
    batch axis.
    """
    t_len, n, c = x.data.shape[-3:]
    k_s = topology.data.shape[-3]
    if topology.data.shape[-2:] != (n, n) or weights.data.shape[:2] != (k_s, c):
        raise ShapeError(
            f"graph_conv_mix: x {x.data.shape}, topology {topology.data.shape}, "
            f"weights {weights.data.shape} disagree")
    x4 = _promote(x.data, 4)
    g4 = _promote(topology.data, 4)
    agg = np.matmul(g4[:, :, None], x4[:, None])           # (B, K, T, N, C)
    out = np.matmul(agg, weights.data[None, :, None]).sum(axis=1)
    if x.ndim == 3:
        out = out[0]
    batch = agg.shape[0]
    k_w, d_out = weights.data.shape[0], weights.data.shape[2]
    x_shape, g_shape = x.data.shape, topology.data.shape
    w_data = weights.data

    def rule(g):
        gg = _promote(g, 4)
        gw_back = np.matmul(gg[:, None], w_data.swapaxes(-1, -2)[None, :, None])
        dx = np.matmul(g4.swapaxes(-1, -2)[:, :, None], gw_back).sum(axis=1)
        dg = np.matmul(gw_back, x4.swapaxes(-1, -2)[:, None]).sum(axis=2)
        agg_flat = agg.transpose(1, 0, 2, 3, 4).reshape(k_w, -1, c)
        dw = np.matmul(agg_flat.swapaxes(-1, -2),
                       np.broadcast_to(gg.reshape(1, -1, d_out),
                                       (k_w, batch * t_len * n, d_out)))
        return (dx.reshape(x_shape),
                dg.sum(axis=0) if len(g_shape) == 3 else dg,
                dw)

    return make_op("graph_conv_mix", (x, topology, weights), out, rule)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               running_mean: np.ndarray, running_var: np.ndarray,
               eps: float = 1e-5, momentum: float = 0.1,
               training: bool = True) -> Tensor:
    """Normalize per channel (last axis) over all other axes.

    Training mode uses the current statistics and updates the running
    buffers in place; eval mode reads the running buffers. A zero-variance
    slice normalizes to exactly zero before the affine thanks to the eps
    guard.
    """
    if eps <= 0:
        raise ValueError(f"batch_norm: eps must be positive, got {eps}")
    c = x.data.shape[-1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(
            f"batch_norm: gamma/beta must have shape ({c},), got "
            f"{gamma.data.shape} and {beta.data.shape}")
    flat = x.data.reshape(-1, c)
    count = flat.shape[0]
    if training:
        mean = np.add.reduce(flat, axis=0) / count
        # Biased variance via E[x^2] - E[x]^2; fine in 64-bit at these scales.
        var = np.maximum(np.add.reduce(flat * flat, axis=0) / count
                         - mean * mean, 0.0)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mean = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    # Fused normalize + affine: out = x * scale + shift.
    scale = gamma.data * inv_std
    shift = beta.data - mean * scale
    out = x.data * scale + shift
    g_data = gamma.data
    x_data = x.data
    shape = x.data.shape

    if training:
        def rule(g):
            gf = g.reshape(-1, c)
            xhat_f = (flat - mean) * inv_std
            gxhat = gf * g_data
            m1 = np.add.reduce(gxhat, axis=0) / count
            m2 = np.add.reduce(gxhat * xhat_f, axis=0) / count
            gx = (inv_std * (gxhat - m1 - xhat_f * m2)).reshape(shape)
            return (gx, np.add.reduce(gf * xhat_f, axis=0),
                    np.add.reduce(gf, axis=0))
    else:
        def rule(g):
            gf = g.reshape(-1, c)
            xhat_f = (x_data.reshape(-1, c) - mean) * inv_std
            return ((gf * (g_data * inv_std)).reshape(shape),
                    np.add.reduce(gf * xhat_f, axis=0),
                    np.add.reduce(gf, axis=0))

    return make_op("batch_norm", (x, gamma, beta), out, rule)


def _adaptive_bins(t_len: int, t_p: int):
    """Contiguous partition of [0, T) into t_p bins with sizes differing <= 1.

    Bin b spans [ceil(b*T/t_p), ceil((b+1)*T/t_p)); larger bins come first,
    e.g. T=5, t_p=2 gives {0,1,2}, {3,4}.
    """
    edges = [-(-b * t_len // t_p) for b in range(t_p + 1)]
    return [(edges[b], edges[b + 1]) for b in range(t_p)]


def adaptive_temporal_pool(x: Tensor, t_p: int) -> Tensor:
    """Average T frames into t_p contiguous near-equal bins: (...,T,N,C) -> (...,t_p,N,C)."""
    t_len = x.data.shape[-3]
    if not 1 <= t_p <= t_len:
        raise ValueError(
            f"adaptive_temporal_pool: t_p must be in [1, {t_len}], got {t_p}")
    bins = _adaptive_bins(t_len, t_p)
    starts = np.array([lo for lo, _ in bins])
    sizes = np.array([hi - lo for lo, hi in bins], dtype=float)
    norm = sizes[:, None, None]
    out = np.add.reduceat(x.data, starts, axis=-3) / norm
    shape = x.data.shape

    def rule(g):
        return (np.repeat(g / norm, sizes.astype(int), axis=-3).reshape(shape),)

    return make_op("adaptive_temporal_pool", (x,), out, rule)


def temporal_mean_pool(x: Tensor) -> Tensor:
    """Mean over frames: (...,T,N,C) -> (...,N,C). Adaptive pooling to one bin."""
    t_len = x.data.shape[-3]
    out = x.data.mean(axis=-3)
    shape = x.data.shape

    def rule(g):
        return (np.broadcast_to(np.expand_dims(g / t_len, -3), shape).copy(),)

    return make_op("temporal_mean_pool", (x,), out, rule)


def temporal_max_pool(x: Tensor) -> Tensor:
    """Max over frames: (...,T,N,C) -> (...,N,C); gradient to the earliest max."""
    arg = np.expand_dims(x.data.argmax(axis=-3), -3)
    out = np.take_along_axis(x.data, arg, axis=-3).squeeze(axis=-3)
    shape = x.data.shape

    def rule(g):
        gx = np.zeros(shape)
        np.put_along_axis(gx, arg, np.expand_dims(g, -3), axis=-3)
        return (gx,)

    return make_op("temporal_max_pool", (x,), out, rule)


def global_average_pool(x: Tensor) -> Tensor:
    """Mean over frames and joints: (...,T,N,C) -> (...,C)."""
    out = x.data.mean(axis=(-3, -2))
    shape = x.data.shape
    count = shape[-3] * shape[-2]

    def rule(g):
        ge = np.expand_dims(np.expand_dims(g, -2), -2)
        return (np.broadcast_to(ge / count, shape).copy(),)

    return make_op("global_average_pool", (x,), out, rule)
