"""Training objectives: batch-all triplet, pairwise circle, view cross-entropy.

All losses are differentiable through the tape (no detached coefficients) so
finite-difference checks cover them end to end.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import Tensor, exp, log, relu, softmax, sqrt

__all__ = ["LossConfig", "triplet_loss", "circle_loss", "view_ce_loss",
           "view_ce_batch", "total_loss"]

_DIST_EPS = 1e-12


@dataclass(frozen=True)
class LossConfig:
    """Loss margins, circle scale, and combination weights."""

    triplet_margin: float = 0.2
    circle_margin: float = 0.5
    circle_scale: float = 64.0
    w_triplet: float = 0.9
    w_circle: float = 0.1
    w_view: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.triplet_margin < 1.0:
            raise ValueError(f"triplet margin must be in (0,1), got "
                             f"{self.triplet_margin}")
        if not 0.0 < self.circle_margin < 1.0:
            raise ValueError(f"circle margin must be in (0,1), got "
                             f"{self.circle_margin}")
        if self.circle_scale <= 0:
            raise ValueError(f"circle scale must be positive, got "
                             f"{self.circle_scale}")
        if min(self.w_triplet, self.w_circle, self.w_view) < 0:
            raise ValueError("loss weights must be non-negative")


def _as_batch(embeddings) -> Tensor:
    if isinstance(embeddings, Tensor):
        return embeddings
    from .tensor import stack
    return stack(list(embeddings))


def triplet_loss(embeddings, labels: Sequence, margin: float = 0.2) -> Tensor:
    """Batch-all triplet hinge, per embedding row, averaged over rows.

    embeddings: (B, R, C) tensor or list of (R, C) tensors; labels: length-B
    subject ids. For every valid (anchor, positive, negative) triple the
    hinge max(0, d_ap - d_an + margin) uses the Euclidean distance of the
    corresponding rows; the loss averages over all valid triples and the R
    rows. A batch with no valid triple contributes 0 (single-class batches
    additionally warn).
    """
    emb = _as_batch(embeddings)
    b, r, _ = emb.shape
    labels = np.asarray(labels)
    if len(labels) != b:
        raise ValueError(f"{b} embeddings but {len(labels)} labels")
    if len(set(labels.tolist())) < 2:
        warnings.warn("degenerate batch: a single subject id, triplet loss is 0")
        return Tensor(0.0)

    same = labels[:, None] == labels[None, :]
    eye = np.eye(b, dtype=bool)
    valid = (same & ~eye)[:, :, None] & ~same[:, None, :]   # (a, p, n)
    count = int(valid.sum())
    if count == 0:
        return Tensor(0.0)

    diff = emb.reshape(b, 1, r, -1) - emb.reshape(1, b, r, -1)
    dist = sqrt((diff * diff).sum(axis=3) + _DIST_EPS)       # (B, B, R)
    hinge = relu(dist.reshape(b, b, 1, r) - dist.reshape(b, 1, b, r) + margin)
    mask = Tensor(valid[..., None].astype(float))
    return (hinge * mask).sum() * (1.0 / (count * r))


def circle_loss(embeddings, labels: Sequence, margin: float = 0.5,
                scale: float = 64.0) -> Tensor:
    """Pairwise circle objective on cosine similarities of flattened rows.

    log(1 + sum_n exp(scale*a_n*(s_n - d_n)) * sum_p exp(-scale*a_p*(s_p - d_p)))
    with a_p = relu(1 + margin - s_p), a_n = relu(s_n + margin),
    d_p = 1 - margin, d_n = margin, over unordered within-batch pairs.
    """
    emb = _as_batch(embeddings)
    b = emb.shape[0]
    labels = np.asarray(labels)
    if len(labels) != b:
        raise ValueError(f"{b} embeddings but {len(labels)} labels")
    if len(set(labels.tolist())) < 2:
        warnings.warn("degenerate batch: a single subject id, circle loss is 0")
        return Tensor(0.0)

    flat = emb.reshape(b, -1)
    norms = sqrt((flat * flat).sum(axis=1, keepdims=True) + _DIST_EPS)
    unit = flat / norms
    sims = unit @ unit.transpose()                           # (B, B)
    upper = ~np.tri(b, dtype=bool)                           # i < j pairs
    same = labels[:, None] == labels[None, :]
    pos_mask = upper & same
    neg_mask = upper & ~same
    if not pos_mask.any() or not neg_mask.any():
        return Tensor(0.0)

    s_p = sims[pos_mask]
    s_n = sims[neg_mask]
    alpha_p = relu(1.0 + margin - s_p)
    alpha_n = relu(s_n + margin)
    pos_term = exp(-scale * (alpha_p * (s_p - (1.0 - margin))))
    neg_term = exp(scale * (alpha_n * (s_n - margin)))
    return log(1.0 + neg_term.sum() * pos_term.sum())


def view_ce_loss(logits: Tensor, view_label: int) -> Tensor:
    """Softmax cross-entropy of a single logit vector against its view label."""
    k = logits.shape[0]
    if not 0 <= view_label < k:
        raise ValueError(f"view label {view_label} out of range [0, {k})")
    probs = softmax(logits, axis=0)
    return -log(probs[view_label])


def view_ce_batch(logits: Tensor, view_labels: Sequence) -> Tensor:
    """Mean view cross-entropy over a batch of logit rows (B, K_V)."""
    b, k = logits.shape
    labels = np.asarray(view_labels)
    if labels.shape != (b,):
        raise ValueError(f"{b} logit rows but {labels.shape} labels")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"view labels out of range [0, {k})")
    probs = softmax(logits, axis=-1)
    picked = probs[np.arange(b), labels]
    return -(log(picked).mean())


def total_loss(parts: dict, cfg: LossConfig) -> Tensor:
    """Weighted sum w_triplet*L_tri + w_circle*L_circle + w_view*L_view.

    Each part must be finite; a NaN/Inf part raises with the part named.
    """
    order = ("triplet", "circle", "view")
    weights = (cfg.w_triplet, cfg.w_circle, cfg.w_view)
    total = None
    for name, weight in zip(order, weights):
        part = parts[name]
        if not np.all(np.isfinite(part.data)):
            raise ValueError(f"loss part '{name}' is not finite: {part.data!r}")
        term = weight * part
        total = term if total is None else total + term
    return total
