"""Learnable-parameter counts and analytic FLOP estimates per variant.

count_params builds the actual model and counts scalars, so it is exact by
construction. estimate_flops is a closed-form multiply-add model (x2 for
FLOPs) of one forward pass over a single sequence; temporal sizes halve as
real numbers through the block stack so the estimate is exactly linear in
the frame count.
"""

from __future__ import annotations

from dataclasses import replace

from .network import GaitModel, NetworkConfig, VARIANTS

__all__ = ["count_params", "estimate_flops", "complexity_table"]


def count_params(cfg: NetworkConfig, variant: str) -> int:
    """Exact learnable scalar count of the given variant at this config."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant '{variant}' (use one of {VARIANTS})")
    model = GaitModel(replace(cfg, variant=variant), seed=0)
    return model.param_count()


def _block_flops(cfg: NetworkConfig, n: int, c_in: int, c_out: int,
                 t_in: float, adaptive: bool) -> float:
    """Multiply-adds of one block at (real-valued) input length t_in."""
    k_s, k_t = cfg.k_s, cfg.k_t
    stride = cfg.temporal_stride
    t_out = t_in / stride
    macs = k_s * n * n * t_in * c_in            # graph aggregation
    if adaptive:
        macs += k_s * t_in * n * c_in           # depthwise spatial gate
        macs += t_in * n * c_in * c_out         # 1x1 mix in
        macs += t_out * n * k_t * c_out         # depthwise temporal taps
        macs += t_out * n * c_out * c_out       # 1x1 mix out
        t_p = min(cfg.t_p, t_in)
        k = cfg.tc_kernel
        c_mid = max(c_in // cfg.reduction, 1)
        macs += t_p * n * k * c_in                          # spatial context
        macs += n * (c_in * c_mid + c_mid * k_s * c_in)     # squeeze/widen
        macs += t_p * n * k * c_in * c_out                  # temporal context
        t_wide = cfg.inflation * t_p
        macs += n * c_out * (t_p * t_wide + t_wide * k_t)   # inflate/project
    else:
        macs += k_s * t_in * n * c_in * c_out   # dense spatial weights
        macs += t_out * n * k_t * c_out * c_out  # dense temporal conv
    if c_in != c_out:
        macs += t_out * n * c_in * c_out        # shortcut projection
    return macs


def _stream_flops(cfg: NetworkConfig, n: int, t: float, adaptive: bool) -> float:
    macs = cfg.k_s * n * n * t * cfg.c_in
    macs += cfg.k_s * t * n * cfg.c_in * cfg.embed_channels
    c_prev, t_cur = cfg.embed_channels, t
    for width in cfg.block_channels:
        macs += _block_flops(cfg, n, c_prev, width, t_cur, adaptive)
        c_prev = width
        t_cur = t_cur / cfg.temporal_stride
    scales = 6
    macs += scales * c_prev * cfg.head_channels
    return macs


def _vatl_flops(cfg: NetworkConfig, n: int, t: float) -> float:
    c = cfg.view_channels
    macs = cfg.k_s * n * n * t * cfg.c_in
    macs += cfg.k_s * t * n * cfg.c_in * c
    macs += t * n * cfg.view_temporal_kernel * c * c
    macs += c * cfg.k_v
    return macs


def estimate_flops(cfg: NetworkConfig, variant: str,
                   t_frames: float = None) -> float:
    """Estimated GFLOPs (2x multiply-adds) per forward of one sequence."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant '{variant}' (use one of {VARIANTS})")
    n = cfg.skeleton_spec().n
    t = float(cfg.t_frames if t_frames is None else t_frames)
    adaptive = variant in ("jsfl-only", "cag-joint", "cag-two-stream")
    macs = _stream_flops(cfg, n, t, adaptive)
    if variant == "cag-two-stream":
        macs *= 2
    if variant in ("vatl-only", "cag-joint", "cag-two-stream"):
        macs += _vatl_flops(cfg, n, t)
    return 2.0 * macs / 1e9


def complexity_table(cfg: NetworkConfig, t_frames: float = None) -> list:
    """(variant, params, gflops) rows for every supported variant."""
    return [(v, count_params(cfg, v), estimate_flops(cfg, v, t_frames))
            for v in VARIANTS]
