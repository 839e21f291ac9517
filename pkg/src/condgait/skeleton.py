"""Skeleton topology: shipped joint conventions, adjacency partitioning, bones.

Joint index order for the shipped skeletons is documented next to each
definition; sequence files must use the same order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = ["SkeletonSpec", "PartitionedAdjacency", "build_skeleton",
           "load_skeleton", "partition_adjacency", "bone_pairs",
           "default_pyramid_groups"]


# COCO-17 keypoints: 0 nose, 1/2 eyes (L/R), 3/4 ears, 5/6 shoulders,
# 7/8 elbows, 9/10 wrists, 11/12 hips, 13/14 knees, 15/16 ankles.
# Tree rooted at the nose (COCO has no neck/thorax keypoint).
_COCO17_EDGES = [(0, 1), (0, 2), (1, 3), (2, 4), (0, 5), (0, 6), (5, 7),
                 (6, 8), (7, 9), (8, 10), (5, 11), (6, 12), (11, 13),
                 (12, 14), (13, 15), (14, 16)]
_COCO17_NAMES = ["nose", "l_eye", "r_eye", "l_ear", "r_ear", "l_shoulder",
                 "r_shoulder", "l_elbow", "r_elbow", "l_wrist", "r_wrist",
                 "l_hip", "r_hip", "l_knee", "r_knee", "l_ankle", "r_ankle"]
_COCO17_PYRAMID = [
    [list(range(17))],
    [list(range(11)), list(range(11, 17))],
    [[0, 1, 2, 3, 4, 5, 6, 11, 12], [7, 8, 9, 10], [13, 14, 15, 16]],
    [[5, 7, 9], [6, 8, 10], [11, 13, 15], [12, 14, 16]],
    [[0, 1, 2, 3, 4], [5, 7, 9], [6, 8, 10], [11, 13, 15], [12, 14, 16]],
    [[0, 1, 2], [3, 4], [5, 7], [9], [6, 8], [10], [11, 13], [15],
     [12, 14], [16]],
]

# OpenPose BODY-18: 0 nose, 1 neck, 2-4 right arm, 5-7 left arm,
# 8-10 right leg, 11-13 left leg, 14/15 eyes (R/L), 16/17 ears (R/L).
# Tree rooted at the neck.
_BODY18_EDGES = [(0, 1), (1, 2), (1, 5), (1, 8), (1, 11), (2, 3), (3, 4),
                 (5, 6), (6, 7), (8, 9), (9, 10), (11, 12), (12, 13),
                 (0, 14), (0, 15), (14, 16), (15, 17)]
_BODY18_NAMES = ["nose", "neck", "r_shoulder", "r_elbow", "r_wrist",
                 "l_shoulder", "l_elbow", "l_wrist", "r_hip", "r_knee",
                 "r_ankle", "l_hip", "l_knee", "l_ankle", "r_eye", "l_eye",
                 "r_ear", "l_ear"]
_BODY18_PYRAMID = [
    [list(range(18))],
    [[0, 1, 2, 3, 4, 5, 6, 7, 14, 15, 16, 17], [8, 9, 10, 11, 12, 13]],
    [[0, 1, 2, 5, 8, 11, 14, 15, 16, 17], [3, 4, 6, 7], [9, 10, 12, 13]],
    [[5, 6, 7], [2, 3, 4], [11, 12, 13], [8, 9, 10]],
    [[0, 1, 14, 15, 16, 17], [5, 6, 7], [2, 3, 4], [11, 12, 13], [8, 9, 10]],
    [[0, 14, 15], [16, 17], [1], [2, 3], [4], [5, 6], [7], [8, 9], [10],
     [11, 12], [13]],
]


def _freeze_pyramid(scales) -> tuple:
    return tuple(tuple(tuple(g) for g in scale) for scale in scales)


def default_pyramid_groups(n: int) -> list[list[list[int]]]:
    """Six coarse-to-fine index partitions for skeletons without named parts.

    Scale s splits the joint range into min(s, n) contiguous near-equal
    groups; scale 1 is always the whole body.
    """
    scales = []
    for s in range(1, 7):
        count = min(s, n)
        edges = [-(-b * n // count) for b in range(count + 1)]
        scales.append([list(range(edges[b], edges[b + 1])) for b in range(count)])
    return scales


@dataclass(frozen=True)
class SkeletonSpec:
    """Joint topology: N joints, undirected bone edges, a root used as body center."""

    name: str
    n: int
    edges: tuple
    root: int
    joint_names: tuple = ()
    pyramid: tuple = ()

    def __post_init__(self):
        seen = set()
        for i, j in self.edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i},{j}) out of range for n={self.n}")
            if i == j:
                raise ValueError(f"self-loop edge ({i},{j}) not allowed")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge ({i},{j})")
            seen.add(key)
        if not (0 <= self.root < self.n):
            raise ValueError(f"root {self.root} out of range for n={self.n}")
        if self.hop_distances() is None:
            raise ValueError("skeleton graph must be connected")
        if not self.pyramid:
            object.__setattr__(self, "pyramid",
                               _freeze_pyramid(default_pyramid_groups(self.n)))

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a

    def hop_distances(self) -> Optional[np.ndarray]:
        """BFS hop count from the root, or None if disconnected."""
        dist = np.full(self.n, -1, dtype=int)
        dist[self.root] = 0
        frontier = [self.root]
        neighbors = [[] for _ in range(self.n)]
        for i, j in self.edges:
            neighbors[i].append(j)
            neighbors[j].append(i)
        while frontier:
            nxt = []
            for u in frontier:
                for v in neighbors[u]:
                    if dist[v] < 0:
                        dist[v] = dist[u] + 1
                        nxt.append(v)
            frontier = nxt
        return None if (dist < 0).any() else dist

    def is_tree(self) -> bool:
        return len(self.edges) == self.n - 1

    def pyramid_groups(self) -> list[list[list[int]]]:
        return [[list(g) for g in scale] for scale in self.pyramid]


@dataclass(frozen=True)
class PartitionedAdjacency:
    """Degree-normalized adjacency split into k_s non-negative slices.

    slices[k] sum to D^{-1/2}(A+I)D^{-1/2} entrywise; each unnormalized
    support entry belongs to exactly one slice.
    """

    slices: np.ndarray
    k_s: int
    n: int

    def __post_init__(self):
        self.slices.setflags(write=False)

    def combined(self) -> np.ndarray:
        return self.slices.sum(axis=0)


def build_skeleton(spec_name: str,
                   edges: Optional[Sequence[tuple]] = None,
                   n: Optional[int] = None,
                   root: int = 0) -> SkeletonSpec:
    """Return a canonical skeleton ('coco17', 'body18') or build a custom one.

    For 'custom', pass n, the undirected edge list and the root joint.
    """
    if spec_name == "coco17":
        return SkeletonSpec("coco17", 17, tuple(_COCO17_EDGES), 0,
                            tuple(_COCO17_NAMES), _freeze_pyramid(_COCO17_PYRAMID))
    if spec_name == "body18":
        return SkeletonSpec("body18", 18, tuple(_BODY18_EDGES), 1,
                            tuple(_BODY18_NAMES), _freeze_pyramid(_BODY18_PYRAMID))
    if spec_name == "custom":
        if edges is None or n is None:
            raise ValueError("custom skeleton needs n and an edge list")
        return SkeletonSpec("custom", n, tuple(tuple(e) for e in edges), root)
    raise ValueError(f"unknown skeleton spec '{spec_name}'")


def load_skeleton(path) -> SkeletonSpec:
    """Load a custom skeleton from JSON: {"n": int, "edges": [[i,j],...], "root": int}."""
    with open(path, "r", encoding="utf-8") as fh:
        blob = json.load(fh)
    try:
        return build_skeleton("custom", edges=blob["edges"], n=blob["n"],
                              root=blob.get("root", 0))
    except KeyError as err:
        raise ValueError(f"skeleton file {path} missing field {err}") from err


def partition_adjacency(spec: SkeletonSpec, k_s: int = 3) -> PartitionedAdjacency:
    """Split the normalized adjacency by spatial configuration.

    k_s=3: self / centripetal (neighbor nearer the root) / centrifugal
    (neighbor farther). k_s=1: the whole normalized graph in one slice.
    """
    if k_s not in (1, 3):
        raise ValueError(f"unsupported partition count k_s={k_s} (use 1 or 3)")
    a_loop = spec.adjacency() + np.eye(spec.n)
    deg = a_loop.sum(axis=1)
    d_inv_sqrt = 1.0 / np.sqrt(deg)
    norm = d_inv_sqrt[:, None] * a_loop * d_inv_sqrt[None, :]
    if k_s == 1:
        return PartitionedAdjacency(norm[None].copy(), 1, spec.n)
    hops = spec.hop_distances()
    target, source = np.meshgrid(hops, hops, indexing="ij")
    masks = np.stack([
        np.eye(spec.n, dtype=bool),
        (a_loop > 0) & ~np.eye(spec.n, dtype=bool) & (source < target),
        (a_loop > 0) & ~np.eye(spec.n, dtype=bool) & (source > target),
    ])
    return PartitionedAdjacency(np.where(masks, norm, 0.0), 3, spec.n)


def bone_pairs(spec: SkeletonSpec) -> list[tuple[int, int]]:
    """(child, parent) per joint, root paired with itself (zero bone).

    Requires a rooted tree; every non-root joint has exactly one parent on
    the path to the root.
    """
    if not spec.is_tree():
        raise ValueError(
            f"bone pairs need a tree skeleton: {len(spec.edges)} edges for "
            f"{spec.n} joints")
    parent = {spec.root: spec.root}
    neighbors = [[] for _ in range(spec.n)]
    for i, j in spec.edges:
        neighbors[i].append(j)
        neighbors[j].append(i)
    frontier = [spec.root]
    while frontier:
        nxt = []
        for u in frontier:
            for v in neighbors[u]:
                if v not in parent:
                    parent[v] = u
                    nxt.append(v)
        frontier = nxt
    return [(child, parent[child]) for child in range(spec.n)]
