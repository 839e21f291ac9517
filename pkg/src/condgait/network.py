"""Gait recognition network: embedding block, adaptive blocks, pyramid head.

A stream maps one sequence (T, N, C_in) to a 6 x head_channels matrix via an
input BN, an ordinary graph-convolution embedding, a stack of blocks that
halve the frame count, six-scale pyramid pooling over joint groups, and one
linear head per scale. The two-stream model runs a joint-coordinate stream
and a bone-vector stream and concatenates to 12 x head_channels.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import ops
from .filters import FilterConfig, make_filter_source
from .nn import BatchNorm, Linear, Module, ModuleList, Parameter, glorot
from .skeleton import (PartitionedAdjacency, SkeletonSpec, bone_pairs,
                       build_skeleton, partition_adjacency)
from .tensor import Tensor, concat, stack
from .topology import ComposedTopology, ViewPrediction, ViewTopologyLearner

__all__ = ["NetworkConfig", "ModelOutput", "GaitModel", "VARIANTS"]

VARIANTS = ("baseline", "jsfl-only", "vatl-only", "cag-joint", "cag-two-stream")


@dataclass
class NetworkConfig:
    """Architecture hyperparameters; profiles below match shipped presets."""

    skeleton: str = "coco17"
    custom_skeleton: Optional[dict] = None
    t_frames: int = 30
    c_in: int = 2
    embed_channels: int = 16
    block_channels: tuple = (32, 32, 64, 64)
    head_channels: int = 64
    k_v: int = 11
    k_s: int = 3
    k_t: int = 9
    t_p: int = 15
    reduction: int = 8
    inflation: int = 2
    tc_kernel: int = 3
    view_channels: int = 16
    view_temporal_kernel: int = 9
    temporal_stride: int = 2
    bn_momentum: float = 0.1
    g_coefficients: tuple = (0.5, 0.5, 1.0)
    filter_mode: str = "adaptive"
    variant: str = "cag-two-stream"

    def __post_init__(self):
        self.block_channels = tuple(int(c) for c in self.block_channels)
        self.g_coefficients = tuple(float(g) for g in self.g_coefficients)
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got "
                             f"'{self.variant}'")
        widths = (self.embed_channels, *self.block_channels,
                  self.head_channels, self.view_channels)
        if any(w < 1 for w in widths):
            raise ValueError(f"all widths must be positive, got {widths}")
        if self.t_frames < 1 or self.t_p < 1 or self.k_v < 1:
            raise ValueError("t_frames, t_p and k_v must be positive")
        if len(self.g_coefficients) != 3:
            raise ValueError("g_coefficients needs exactly three entries")
        if not 0.0 < self.bn_momentum <= 1.0:
            raise ValueError("bn_momentum must be in (0, 1]")
        if self.filter_mode not in ("adaptive", "static", "global"):
            raise ValueError(f"unknown filter_mode '{self.filter_mode}'")

    @classmethod
    def casia_b(cls, **overrides) -> "NetworkConfig":
        """Full-size profile: T=60, widths 64/128/128/256/256, head 256."""
        base = dict(t_frames=60, embed_channels=64,
                    block_channels=(128, 128, 256, 256), head_channels=256,
                    view_channels=32, k_v=11, t_p=15, reduction=8)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def desk(cls, **overrides) -> "NetworkConfig":
        """Minute-scale profile used by the CLI defaults and the test suite.

        Running statistics average with a small momentum here: with only a
        few dozen batches per training run, momentum 0.1 leaves eval-mode
        features jittering with the last batches seen.
        """
        base = dict(bn_momentum=0.02)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def tiny(cls, **overrides) -> "NetworkConfig":
        """Gradient-check profile: T=8, 5-joint chain, widths 4/8."""
        base = dict(
            skeleton="custom",
            custom_skeleton={"n": 5, "edges": [[0, 1], [1, 2], [2, 3], [3, 4]],
                             "root": 2},
            t_frames=8, embed_channels=4, block_channels=(8,),
            head_channels=8, k_v=3, k_t=3, t_p=4, reduction=2,
            view_channels=4, view_temporal_kernel=3)
        base.update(overrides)
        return cls(**base)

    def skeleton_spec(self) -> SkeletonSpec:
        if self.skeleton == "custom":
            blob = self.custom_skeleton
            if not blob:
                raise ValueError("custom skeleton requires custom_skeleton data")
            return build_skeleton("custom", edges=blob["edges"], n=blob["n"],
                                  root=blob.get("root", 0))
        return build_skeleton(self.skeleton)

    def filter_config(self) -> FilterConfig:
        return FilterConfig(t_p=self.t_p, reduction=self.reduction,
                            inflation=self.inflation, k_s=self.k_s,
                            k_t=self.k_t, tc_kernel=self.tc_kernel)

    def frame_chain(self) -> list:
        """Input length of each block under the stride schedule."""
        chain, t = [], self.t_frames
        for _ in self.block_channels:
            chain.append(t)
            t = -(-t // self.temporal_stride)
        return chain

    def uses_vatl(self) -> bool:
        return self.variant in ("vatl-only", "cag-joint", "cag-two-stream")

    def uses_adaptive_blocks(self) -> bool:
        return self.variant in ("jsfl-only", "cag-joint", "cag-two-stream")

    def two_stream(self) -> bool:
        return self.variant == "cag-two-stream"

    def embedding_rows(self) -> int:
        return 12 if self.two_stream() else 6

    def to_dict(self) -> dict:
        blob = asdict(self)
        blob["block_channels"] = list(self.block_channels)
        blob["g_coefficients"] = list(self.g_coefficients)
        return blob

    @classmethod
    def from_dict(cls, blob: dict) -> "NetworkConfig":
        return cls(**blob)


@dataclass
class ModelOutput:
    """Per-sequence forward result."""

    embedding: Tensor
    view_logits: Optional[Tensor] = None
    view_probs: Optional[Tensor] = None
    view_index: Optional[int] = None
    topology: Optional[ComposedTopology] = None


@dataclass
class BatchOutput:
    """Batched forward result: embeddings (B, rows, head_channels)."""

    embeddings: Tensor
    view_logits: Optional[Tensor] = None
    view_probs: Optional[Tensor] = None
    view_indices: Optional[list] = None
    topology: Optional[ComposedTopology] = None


class EmbeddingBlock(Module):
    """Ordinary graph convolution over the fixed adjacency, BN + ReLU."""

    def __init__(self, rng, k_s: int, c_in: int, c_out: int,
                 momentum: float = 0.1):
        super().__init__()
        self.weight = Parameter(glorot(rng, c_in, c_out, shape=(k_s, c_in, c_out)))
        self.bn = BatchNorm(c_out, momentum=momentum)

    def forward(self, x: Tensor, topology: Tensor) -> Tensor:
        return ops.relu(self.bn(ops.graph_conv_mix(x, topology, self.weight)))


class DenseBlock(Module):
    """Reference block: dense spatial weights per slice + dense temporal conv."""

    def __init__(self, rng, cfg: NetworkConfig, c_in: int, c_out: int,
                 t_in: int, n_joints: int, residual: bool = True,
                 normalize: bool = True, stride: Optional[int] = None):
        super().__init__()
        del n_joints
        self.t_in = t_in
        self.stride = cfg.temporal_stride if stride is None else stride
        self.residual = residual
        self.normalize = normalize
        self.spatial_weight = Parameter(
            glorot(rng, c_in, c_out, shape=(cfg.k_s, c_in, c_out)))
        self.bn1 = BatchNorm(c_out, momentum=cfg.bn_momentum)
        self.temporal_weight = Parameter(
            glorot(rng, cfg.k_t * c_out, c_out, shape=(cfg.k_t, c_out, c_out)))
        self.bn2 = BatchNorm(c_out, momentum=cfg.bn_momentum)
        if residual and c_in != c_out:
            self.shortcut = Linear(rng, c_in, c_out, bias=False)
            self.shortcut_bn = BatchNorm(c_out, momentum=cfg.bn_momentum)
        else:
            self.shortcut = None

    def forward(self, x: Tensor, topology: Tensor) -> Tensor:
        h = ops.graph_conv_mix(x, topology, self.spatial_weight)
        if self.normalize:
            h = self.bn1(h)
        h = ops.relu(h)
        h = ops.temporal_conv(h, self.temporal_weight, stride=self.stride)
        if self.normalize:
            h = self.bn2(h)
        if self.residual:
            s = x[:, ::self.stride] if self.stride > 1 else x
            if self.shortcut is not None:
                s = self.shortcut(s)
                if self.normalize:
                    s = self.shortcut_bn(s)
            h = h + s
        return ops.relu(h)


class AdaptiveBlock(Module):
    """Block with generated per-joint filters and a composed topology.

    Spatial: gate each topology slice's input with its generated filter,
    aggregate over the graph, mix channels with a 1x1 conv. Temporal:
    depthwise convolution with the generated taps (stride halves T), then a
    second 1x1 mix. Residual shortcut matches channel and stride.
    """

    def __init__(self, rng, cfg: NetworkConfig, c_in: int, c_out: int,
                 t_in: int, n_joints: int, residual: bool = True,
                 normalize: bool = True, stride: Optional[int] = None):
        super().__init__()
        spec_n = n_joints
        self.t_in = t_in
        self.stride = cfg.temporal_stride if stride is None else stride
        self.residual = residual
        self.normalize = normalize
        self.k_s = cfg.k_s
        self.t_p_eff = min(cfg.t_p, t_in)
        self.filters = make_filter_source(
            cfg.filter_mode, rng, c_in, c_out, spec_n, cfg.filter_config(),
            self.t_p_eff, bn_momentum=cfg.bn_momentum)
        self.mix1 = Linear(rng, c_in, c_out, bias=False)
        self.bn1 = BatchNorm(c_out, momentum=cfg.bn_momentum)
        self.mix2 = Linear(rng, c_out, c_out, bias=False)
        self.bn2 = BatchNorm(c_out, momentum=cfg.bn_momentum)
        if residual and c_in != c_out:
            self.shortcut = Linear(rng, c_in, c_out, bias=False)
            self.shortcut_bn = BatchNorm(c_out, momentum=cfg.bn_momentum)
        else:
            self.shortcut = None
        self.last_filters: Optional[tuple] = None

    def forward(self, x: Tensor, topology: Tensor) -> Tensor:
        pooled = ops.adaptive_temporal_pool(x, self.t_p_eff)
        f_s, f_t = self.filters(pooled)
        self.last_filters = (f_s.data, f_t.data)
        agg = ops.gated_graph_aggregate(x, f_s, topology)
        h = self.mix1(agg)
        if self.normalize:
            h = self.bn1(h)
        h = ops.relu(h)
        h = ops.depthwise_temporal_conv(h, f_t, stride=self.stride)
        h = self.mix2(h)
        if self.normalize:
            h = self.bn2(h)
        if self.residual:
            s = x[:, ::self.stride] if self.stride > 1 else x
            if self.shortcut is not None:
                s = self.shortcut(s)
                if self.normalize:
                    s = self.shortcut_bn(s)
            h = h + s
        return ops.relu(h)


class PyramidPool(Module):
    """Six-scale joint-group pooling after temporal aggregation.

    Frames are reduced with mean + max (summed); each scale averages its
    joint groups and then averages the group vectors, which collapses to one
    constant (6, N) projection matrix applied to the (N, C) map.
    """

    def __init__(self, spec: SkeletonSpec):
        super().__init__()
        scales = spec.pyramid_groups()
        proj = np.zeros((len(scales), spec.n))
        for s, groups in enumerate(scales):
            for group in groups:
                for j in group:
                    proj[s, j] += 1.0 / (len(group) * len(groups))
        self.register_buffer("projection", proj)

    def forward(self, x: Tensor) -> Tensor:
        agg = ops.temporal_mean_pool(x) + ops.temporal_max_pool(x)
        return Tensor(self.projection) @ agg             # (B, 6, C)


class ScaleHeads(Module):
    """One independent linear head per pyramid scale."""

    def __init__(self, rng, scales: int, c_in: int, c_out: int):
        super().__init__()
        self.heads = ModuleList([Linear(rng, c_in, c_out) for _ in range(scales)])

    def forward(self, rows: Tensor) -> Tensor:
        return stack([head(rows[:, s]) for s, head in enumerate(self.heads)],
                     axis=1)


class GaitStream(Module):
    """Input BN -> embedding -> block stack -> pyramid -> per-scale heads."""

    def __init__(self, rng, cfg: NetworkConfig, spec: SkeletonSpec):
        super().__init__()
        self.input_bn = BatchNorm(cfg.c_in, momentum=cfg.bn_momentum)
        self.embed = EmbeddingBlock(rng, cfg.k_s, cfg.c_in,
                                    cfg.embed_channels, cfg.bn_momentum)
        block_cls = AdaptiveBlock if cfg.uses_adaptive_blocks() else DenseBlock
        blocks = []
        c_prev = cfg.embed_channels
        for width, t_in in zip(cfg.block_channels, cfg.frame_chain()):
            blocks.append(block_cls(rng, cfg, c_prev, width, t_in, spec.n))
            c_prev = width
        self.blocks = ModuleList(blocks)
        self.pyramid = PyramidPool(spec)
        self.heads = ScaleHeads(rng, len(spec.pyramid_groups()), c_prev,
                                cfg.head_channels)

    def features(self, x_norm: Tensor, fixed: Tensor, topology: Tensor) -> Tensor:
        h = self.embed(x_norm, fixed)
        for block in self.blocks:
            h = block(h, topology)
        return self.heads(self.pyramid(h))


class GaitModel(Module):
    """Variant-selectable recognition model producing pyramid embeddings.

    Baseline variants use dense blocks on the fixed adjacency; adaptive
    variants add generated filters; VATL variants drive the blocks with the
    composed view topology (one composition per sequence, shared by both
    streams).
    """

    def __init__(self, cfg: NetworkConfig, seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.spec = cfg.skeleton_spec()
        self.fixed = partition_adjacency(self.spec, cfg.k_s)
        pairs = bone_pairs(self.spec)
        bone_mat = np.zeros((self.spec.n, self.spec.n))
        for child, parent in pairs:
            if child != parent:
                bone_mat[child, child] = 1.0
                bone_mat[child, parent] = -1.0
        self.register_buffer("bone_matrix", bone_mat)
        self.joint_stream = GaitStream(rng, cfg, self.spec)
        if cfg.two_stream():
            self.bone_stream = GaitStream(rng, cfg, self.spec)
        else:
            self.bone_stream = None
        if cfg.uses_vatl():
            self.vatl = ViewTopologyLearner(
                rng, self.fixed, cfg.k_v, c_in=cfg.c_in,
                embed_channels=cfg.view_channels,
                temporal_kernel=cfg.view_temporal_kernel,
                coefficients=cfg.g_coefficients,
                bn_momentum=cfg.bn_momentum)
        else:
            self.vatl = None

    def _check_batch(self, frames: np.ndarray):
        expect = (self.cfg.t_frames, self.spec.n, self.cfg.c_in)
        if frames.ndim != 4 or frames.shape[1:] != expect:
            raise ValueError(
                f"model expects a batch of shape (B, {expect[0]}, {expect[1]}, "
                f"{expect[2]}), got {frames.shape}")

    def bone_input(self, frames: np.ndarray) -> np.ndarray:
        return np.matmul(self.bone_matrix, frames)

    def forward_batch(self, frames: np.ndarray,
                      topology_override: Optional[Tensor] = None) -> BatchOutput:
        """All sequences of one batch share a tape and the BN statistics."""
        frames = np.asarray(frames, dtype=np.float64)
        self._check_batch(frames)
        x_joint = self.joint_stream.input_bn(Tensor(frames))
        fixed_t = Tensor(self.fixed.slices)
        pred: Optional[ViewPrediction] = None
        composed = None
        if topology_override is not None:
            topology = topology_override
        elif self.vatl is not None:
            pred, composed = self.vatl(x_joint)
            topology = composed.combined
        else:
            topology = fixed_t
        emb = self.joint_stream.features(x_joint, fixed_t, topology)
        if self.bone_stream is not None:
            x_bone = self.bone_stream.input_bn(Tensor(self.bone_input(frames)))
            emb_bone = self.bone_stream.features(x_bone, fixed_t, topology)
            emb = concat([emb, emb_bone], axis=1)
        return BatchOutput(
            embeddings=emb,
            view_logits=None if pred is None else pred.logits,
            view_probs=None if pred is None else pred.probs,
            view_indices=None if pred is None else pred.view_indices,
            topology=composed)

    def forward(self, frames: np.ndarray,
                topology_override: Optional[Tensor] = None) -> ModelOutput:
        """Single-sequence forward: a batch of one."""
        frames = np.asarray(frames, dtype=np.float64)
        out = self.forward_batch(frames[None], topology_override)
        return ModelOutput(
            embedding=out.embeddings[0],
            view_logits=None if out.view_logits is None else out.view_logits[0],
            view_probs=None if out.view_probs is None else out.view_probs[0],
            view_index=None if out.view_indices is None else out.view_indices[0],
            topology=out.topology)

    def forward_parts(self, joint_frames: np.ndarray,
                      bone_frames: Optional[np.ndarray] = None,
                      topology: Optional[Tensor] = None) -> Tensor:
        """Embedding from explicit per-stream inputs under a pinned topology.

        Diagnostic entry point: the joint half (rows 0-5) sees only
        joint_frames and the bone half (rows 6-11) only bone_frames.
        """
        joint_frames = np.asarray(joint_frames, dtype=np.float64)
        self._check_batch(joint_frames[None])
        if topology is None:
            topology = Tensor(self.fixed.slices)
        fixed_t = Tensor(self.fixed.slices)
        x_joint = self.joint_stream.input_bn(Tensor(joint_frames[None]))
        emb = self.joint_stream.features(x_joint, fixed_t, topology)
        if self.bone_stream is not None:
            if bone_frames is None:
                bone_frames = self.bone_input(joint_frames)
            x_bone = self.bone_stream.input_bn(
                Tensor(np.asarray(bone_frames, dtype=np.float64)[None]))
            emb = concat([emb, self.bone_stream.features(x_bone, fixed_t,
                                                         topology)], axis=1)
        return emb[0]

    def collect_filters(self, frames: np.ndarray) -> list:
        """Run one single-sequence forward; return [(block_idx, stream, F_S, F_T)]."""
        self.forward(frames)
        out = []
        streams = [("joint", self.joint_stream)]
        if self.bone_stream is not None:
            streams.append(("bone", self.bone_stream))
        for stream_name, stream in streams:
            for idx, block in enumerate(stream.blocks):
                captured = getattr(block, "last_filters", None)
                if captured is not None:
                    out.append((idx, stream_name, captured[0], captured[1]))
        return out
