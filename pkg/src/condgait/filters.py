"""Per-sequence, per-joint depthwise filter generation.

From a temporally pooled block input (T_P, N, C), a spatial branch produces
gating filters F_S of shape (K_S, N, C) and a temporal branch produces
convolution taps F_T of shape (K_T, N, C'). Both branches end in batch
normalization so generated values stay in a stable range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .nn import BatchNorm, Linear, Module, Parameter, glorot
from .tensor import Tensor, transpose

__all__ = ["FilterConfig", "JointFilterGenerator", "StaticJointFilters",
           "make_filter_source"]


@dataclass(frozen=True)
class FilterConfig:
    """Shared generator hyperparameters.

    t_p: pooled temporal size fed to the branches (blocks clamp it to their
    input length); reduction: channel bottleneck ratio of the spatial
    branch; inflation: temporal widening ratio of the temporal branch;
    k_s / k_t: spatial slice count and temporal tap count of the produced
    filters; tc_kernel: kernel of the context convolutions inside both
    branches.
    """

    t_p: int = 15
    reduction: int = 8
    inflation: int = 2
    k_s: int = 3
    k_t: int = 9
    tc_kernel: int = 3

    def __post_init__(self):
        if self.t_p < 1:
            raise ValueError(f"t_p must be >= 1, got {self.t_p}")
        if self.inflation < 1:
            raise ValueError(f"inflation must be >= 1, got {self.inflation}")
        if self.k_t % 2 == 0:
            raise ValueError(f"k_t must be odd, got {self.k_t}")
        if self.tc_kernel % 2 == 0:
            raise ValueError(f"tc_kernel must be odd, got {self.tc_kernel}")


class JointFilterGenerator(Module):
    """Two-branch generator conditioned on the pooled block input (B,T_P,N,C).

    Spatial branch: depthwise temporal context conv (taps shared across
    joints) -> temporal mean pool -> bottleneck FC + BN + ReLU -> widening FC
    to K_S*C -> reshape -> BN. Temporal branch: dense temporal context conv
    lifting C -> C' -> FC pair along the time axis (T_P -> inflation*T_P,
    ReLU, -> K_T) -> BN.

    joint_specific=False averages the finished filters over the joint axis
    and broadcasts the single set back, so filtering stays adaptive but not
    joint-specific.
    """

    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int,
                 n_joints: int, cfg: FilterConfig, t_p_eff: int,
                 joint_specific: bool = True, bn_momentum: float = 0.1):
        super().__init__()
        if c_in % cfg.reduction != 0:
            raise ValueError(
                f"block input channels {c_in} not divisible by reduction "
                f"ratio {cfg.reduction}")
        if not 1 <= t_p_eff:
            raise ValueError(f"effective pooled size must be >= 1, got {t_p_eff}")
        self.cfg = cfg
        self.c_in = c_in
        self.c_out = c_out
        self.n_joints = n_joints
        self.t_p_eff = t_p_eff
        self.joint_specific = joint_specific
        k = cfg.tc_kernel
        c_mid = c_in // cfg.reduction
        t_wide = cfg.inflation * t_p_eff

        # Upstream ReLU features zero out whole (joint, channel) columns, so
        # zero-initialized biases would park the branch ReLUs exactly on
        # their kinks for those columns; small random biases keep every
        # activation at a generic (differentiable) point.
        def bias(size):
            return Parameter(rng.uniform(-0.05, 0.05, size=size))

        # Spatial branch.
        self.spatial_taps = Parameter(glorot(rng, k, 1, shape=(k, 1, c_in)))
        self.spatial_tap_bias = bias(c_in)
        self.squeeze = Linear(rng, c_in, c_mid)
        self.squeeze.bias = bias(c_mid)
        self.squeeze_bn = BatchNorm(c_mid, momentum=bn_momentum)
        self.widen = Linear(rng, c_mid, cfg.k_s * c_in)
        self.widen.bias = bias(cfg.k_s * c_in)
        # beta_init=1: gates start fluctuating around identity.
        self.spatial_bn = BatchNorm(c_in, momentum=bn_momentum,
                                    beta_init=1.0)

        # Temporal branch.
        self.lift_weight = Parameter(glorot(rng, k * c_in, c_out,
                                            shape=(k, c_in, c_out)))
        self.lift_bias = bias(c_out)
        self.inflate = Linear(rng, t_p_eff, t_wide)
        self.inflate.bias = bias(t_wide)
        self.project = Linear(rng, t_wide, cfg.k_t)
        self.project.bias = bias(cfg.k_t)
        # beta_init=1/k_t: taps start near a moving average.
        self.temporal_bn = BatchNorm(c_out, momentum=bn_momentum,
                                     beta_init=1.0 / cfg.k_t)

    def forward(self, x_p: Tensor) -> tuple[Tensor, Tensor]:
        b, t_p, n, c = x_p.shape
        if t_p != self.t_p_eff or n != self.n_joints or c != self.c_in:
            raise ValueError(
                f"generator built for (B,{self.t_p_eff},{self.n_joints},"
                f"{self.c_in}), got input {x_p.shape}")
        cfg = self.cfg

        ctx = ops.depthwise_temporal_conv(x_p, self.spatial_taps)
        ctx = ctx + self.spatial_tap_bias
        pooled = ops.temporal_mean_pool(ctx)                     # (B, N, C)
        z = ops.relu(self.squeeze_bn(self.squeeze(pooled)))
        flat = self.widen(z)                                     # (B, N, K_S*C)
        f_s = transpose(flat.reshape(b, n, cfg.k_s, c), (0, 2, 1, 3))
        f_s = self.spatial_bn(f_s)                               # (B, K_S, N, C)

        ctx_t = ops.temporal_conv(x_p, self.lift_weight)
        ctx_t = ctx_t + self.lift_bias                           # (B, T_P, N, C')
        over_time = transpose(ctx_t, (0, 2, 3, 1))               # (B, N, C', T_P)
        z_t = ops.relu(self.inflate(over_time))
        taps = self.project(z_t)                                 # (B, N, C', K_T)
        f_t = transpose(taps, (0, 3, 1, 2))
        f_t = self.temporal_bn(f_t)                              # (B, K_T, N, C')

        if not self.joint_specific:
            spread = Tensor(np.ones((self.n_joints, 1)))
            f_s = f_s.mean(axis=2, keepdims=True) * spread
            f_t = f_t.mean(axis=2, keepdims=True) * spread
        return f_s, f_t


class StaticJointFilters(Module):
    """Learned per-joint filters with no input conditioning (ablation)."""

    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int,
                 n_joints: int, cfg: FilterConfig, t_p_eff: int):
        super().__init__()
        del rng, t_p_eff
        self.c_in = c_in
        self.spatial = Parameter(np.ones((cfg.k_s, n_joints, c_in)))
        self.temporal = Parameter(np.full((cfg.k_t, n_joints, c_out),
                                          1.0 / cfg.k_t))

    def forward(self, x_p: Tensor) -> tuple[Tensor, Tensor]:
        del x_p
        return self.spatial, self.temporal


def make_filter_source(mode: str, rng: np.random.Generator, c_in: int,
                       c_out: int, n_joints: int, cfg: FilterConfig,
                       t_p_eff: int, bn_momentum: float = 0.1) -> Module:
    """Filter provider for a block: 'adaptive', 'global' or 'static'."""
    if mode == "adaptive":
        return JointFilterGenerator(rng, c_in, c_out, n_joints, cfg, t_p_eff,
                                    bn_momentum=bn_momentum)
    if mode == "global":
        return JointFilterGenerator(rng, c_in, c_out, n_joints, cfg, t_p_eff,
                                    joint_specific=False,
                                    bn_momentum=bn_momentum)
    if mode == "static":
        return StaticJointFilters(rng, c_in, c_out, n_joints, cfg, t_p_eff)
    raise ValueError(f"unknown filter mode '{mode}'")
