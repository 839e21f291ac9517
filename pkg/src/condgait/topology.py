"""View-adaptive topology learning.

A small view classifier predicts which of K_V camera views a sequence comes
from; a bank of K_V learnable topologies (each K_S x N x N) is combined with
the fixed skeleton adjacency into the composed topology that drives spatial
aggregation downstream:

    composed = g1 * selected + g2 * probability_mixture + g3 * fixed

The hard selection by argmax passes no gradient to the index; the selected
member and the mixture members learn through their value slots, the
classifier learns through the mixture weights and its cross-entropy loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .nn import BatchNorm, Linear, Module, Parameter, glorot
from .skeleton import PartitionedAdjacency
from .tensor import Tensor, softmax, stack

__all__ = ["ViewPrediction", "ComposedTopology", "ViewTopologyLearner",
           "topology_correlation_matrix"]


@dataclass
class ViewPrediction:
    """Classifier output: logits (B, K_V), their softmax, argmax per sequence."""

    logits: Tensor
    probs: Tensor
    view_indices: list

    @property
    def view_index(self) -> int:
        return self.view_indices[0]


@dataclass
class ComposedTopology:
    """The fused per-sequence topology (B, K_S, N, N) and its ingredients."""

    combined: Tensor
    selected: Tensor
    mixture: Tensor
    fixed: Tensor
    coefficients: tuple


class ViewTopologyLearner(Module):
    """View classifier plus learnable per-view topology bank.

    The classifier is one ordinary graph-convolution block over the fixed
    adjacency (embed_channels wide), a dense temporal convolution, global
    average pooling and a linear layer to K_V logits. Each topology bank
    member initializes to the fixed adjacency plus uniform noise so training
    starts from the anatomical prior.
    """

    def __init__(self, rng: np.random.Generator, fixed: PartitionedAdjacency,
                 k_v: int, c_in: int = 2, embed_channels: int = 32,
                 temporal_kernel: int = 9,
                 coefficients: tuple = (0.5, 0.5, 1.0),
                 init_noise: float = 0.01, bn_momentum: float = 0.1):
        super().__init__()
        if k_v < 1:
            raise ValueError(f"need at least one view, got k_v={k_v}")
        self.k_v = k_v
        self.n = fixed.n
        self.coefficients = tuple(float(c) for c in coefficients)
        self.register_buffer("fixed_slices", fixed.slices.copy())
        k_s = fixed.k_s
        self.embed_weight = Parameter(
            glorot(rng, c_in, embed_channels, shape=(k_s, c_in, embed_channels)))
        self.embed_bn = BatchNorm(embed_channels, momentum=bn_momentum)
        self.temporal_weight = Parameter(glorot(
            rng, temporal_kernel * embed_channels, embed_channels,
            shape=(temporal_kernel, embed_channels, embed_channels)))
        self.temporal_bias = Parameter(np.zeros(embed_channels))
        self.temporal_bn = BatchNorm(embed_channels,
                                     momentum=bn_momentum)
        self.classifier = Linear(rng, embed_channels, k_v)
        members = []
        for i in range(k_v):
            init = fixed.slices + rng.uniform(-init_noise, init_noise,
                                              size=fixed.slices.shape)
            members.append(Parameter(init))
        for i, m in enumerate(members):
            self._params[f"view_topology.{i}"] = m
        self.members = members

    def predict(self, x: Tensor) -> ViewPrediction:
        """Classify the views of a batch of normalized sequences (B, T, N, C_in)."""
        if x.ndim != 4 or x.shape[2] != self.n:
            raise ValueError(
                f"expected (B, T, {self.n}, C) input, got {x.shape}")
        fixed = Tensor(self.fixed_slices)
        h = ops.graph_conv_mix(x, fixed, self.embed_weight)
        h = ops.relu(self.embed_bn(h))
        h = ops.temporal_conv(h, self.temporal_weight) + self.temporal_bias
        h = ops.relu(self.temporal_bn(h))
        pooled = ops.global_average_pool(h)              # (B, C)
        logits = self.classifier(pooled)                 # (B, K_V)
        probs = softmax(logits, axis=-1)
        # Ties break to the lowest index (argmax convention).
        ids = [int(i) for i in np.argmax(probs.data, axis=-1)]
        return ViewPrediction(logits, probs, ids)

    def compose(self, pred: ViewPrediction) -> ComposedTopology:
        """Fuse selected, mixed and fixed topologies with the configured weights."""
        assert all(0 <= i < self.k_v for i in pred.view_indices)
        selected = stack([self.members[i] for i in pred.view_indices])
        bank_flat = stack(self.members).reshape(self.k_v, -1)
        b = len(pred.view_indices)
        mixture = (pred.probs @ bank_flat).reshape(
            b, *self.fixed_slices.shape)
        fixed = Tensor(self.fixed_slices[None])
        g1, g2, g3 = self.coefficients
        combined = g1 * selected + g2 * mixture + g3 * fixed
        return ComposedTopology(combined, selected, mixture, fixed,
                                self.coefficients)

    def forward(self, x: Tensor) -> tuple[ViewPrediction, ComposedTopology]:
        pred = self.predict(x)
        return pred, self.compose(pred)


def topology_correlation_matrix(learner: ViewTopologyLearner) -> np.ndarray:
    """Pairwise mean squared difference between topology bank members.

    Entry (i, j) averages (member_i - member_j)^2 over all K_S*N*N elements;
    the matrix is symmetric with a zero diagonal.
    """
    k_v = learner.k_v
    out = np.zeros((k_v, k_v))
    for i in range(k_v):
        for j in range(i + 1, k_v):
            d = learner.members[i].data - learner.members[j].data
            out[i, j] = out[j, i] = float(np.mean(d * d))
    return out
