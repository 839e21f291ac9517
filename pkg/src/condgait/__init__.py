"""Skeleton-based gait recognition with condition-adaptive graph convolution.

Per-sequence, per-joint filters are generated on the fly and the graph
topology adapts to the predicted camera view; everything runs on a small
self-contained float64 tensor engine with reverse-mode differentiation so
every gradient is finite-difference checkable.
"""

from .data import BatchSpec, Corpus, SequenceRecord
from .evaluation import ProbeResult, extract_embeddings, rank1
from .gradcheck import finite_diff_check
from .losses import LossConfig, circle_loss, total_loss, triplet_loss, view_ce_loss
from .network import GaitModel, ModelOutput, NetworkConfig
from .skeleton import SkeletonSpec, bone_pairs, build_skeleton, partition_adjacency
from .tensor import Tensor, no_grad
from .topology import topology_correlation_matrix
from .training import RunConfig, Trainer, load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "BatchSpec", "Corpus", "SequenceRecord",
    "ProbeResult", "extract_embeddings", "rank1",
    "finite_diff_check",
    "LossConfig", "circle_loss", "total_loss", "triplet_loss", "view_ce_loss",
    "GaitModel", "ModelOutput", "NetworkConfig",
    "SkeletonSpec", "bone_pairs", "build_skeleton", "partition_adjacency",
    "Tensor", "no_grad",
    "topology_correlation_matrix",
    "RunConfig", "Trainer", "load_checkpoint", "save_checkpoint",
    "__version__",
]
