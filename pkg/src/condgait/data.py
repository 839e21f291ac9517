"""Sequence records, the JSONL file format, sampling, and bone vectors.

File format (one sequence per file): line 1 is a header
{"subject": s, "view": v, "condition": c, "n": N, "cin": C} and every
following line is one frame {"j": [[x, y, ...], xN]}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .skeleton import SkeletonSpec

__all__ = ["SequenceRecord", "BatchSpec", "ParseError", "parse_sequence_file",
           "write_sequence_file", "sample_fixed_length", "to_bone_stream",
           "Corpus", "sample_batch"]

CONDITIONS = ("nm", "bg", "cl", "synthetic")


class ParseError(ValueError):
    """Malformed sequence file; message carries the file and line number."""


@dataclass
class SequenceRecord:
    """One skeleton sequence with its identity, view and condition labels."""

    subject_id: str
    view_label: int
    condition: str
    frames: np.ndarray          # (T_raw, N, C_in)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[0] < 1:
            raise ValueError(
                f"frames must be (T>=1, N, C), got {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("frames contain non-finite coordinates")
        if self.view_label < 0:
            raise ValueError(f"view label must be >= 0, got {self.view_label}")
        if self.condition not in CONDITIONS:
            raise ValueError(
                f"condition must be one of {CONDITIONS}, got '{self.condition}'")

    @property
    def t_raw(self) -> int:
        return self.frames.shape[0]

    @property
    def n_joints(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class BatchSpec:
    """p subjects per batch, k sequences per subject."""

    p: int
    k: int

    def __post_init__(self):
        if self.p < 2 or self.k < 2:
            raise ValueError(
                f"metric losses need p >= 2 and k >= 2, got ({self.p},{self.k})")

    @property
    def size(self) -> int:
        return self.p * self.k


def parse_sequence_file(path, spec: Optional[SkeletonSpec] = None) -> SequenceRecord:
    """Parse one JSONL sequence file, validating the per-frame joint count."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(f"{path}:1: empty sequence file")

    def fail(lineno, msg):
        raise ParseError(f"{path}:{lineno}: {msg}")

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as err:
        fail(1, f"bad header JSON ({err.msg})")
    for key in ("subject", "view", "condition", "n", "cin"):
        if key not in header:
            fail(1, f"header missing field '{key}'")
    n, cin = int(header["n"]), int(header["cin"])
    if spec is not None and n != spec.n:
        fail(1, f"expected {spec.n} joints for skeleton '{spec.name}', got {n}")
    frames = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            blob = json.loads(line)
            joints = blob["j"]
        except (json.JSONDecodeError, KeyError, TypeError):
            fail(lineno, "bad frame line (expected {\"j\": [[...], ...]})")
        if len(joints) != n:
            fail(lineno, f"expected {n} joints, got {len(joints)}")
        arr = np.asarray(joints, dtype=np.float64)
        if arr.shape != (n, cin):
            fail(lineno, f"expected joint rows of length {cin}, got {arr.shape}")
        frames.append(arr)
    if not frames:
        fail(2, "sequence has no frames")
    return SequenceRecord(subject_id=str(header["subject"]),
                          view_label=int(header["view"]),
                          condition=str(header["condition"]),
                          frames=np.stack(frames))


def write_sequence_file(path, record: SequenceRecord):
    """Serialize a record; parse_sequence_file inverts this bit-exactly.

    Coordinates are written with repr-roundtrip precision.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    t, n, cin = record.frames.shape
    header = {"subject": record.subject_id, "view": record.view_label,
              "condition": record.condition, "n": n, "cin": cin}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for t_i in range(t):
            frame = [[float(v) for v in joint] for joint in record.frames[t_i]]
            fh.write(json.dumps({"j": frame}) + "\n")


def sample_fixed_length(record: SequenceRecord, t: int, mode: str = "eval",
                        rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Fixed-length view of a sequence: crop when long, loop-pad when short.

    train mode crops at a random offset; eval mode center-crops. Loop
    padding repeats frames cyclically ([0,1,2] -> [0,1,2,0,1,2] for t=6).
    """
    if t < 1:
        raise ValueError(f"target length must be >= 1, got {t}")
    frames = record.frames
    t_raw = frames.shape[0]
    if t_raw >= t:
        if mode == "train":
            if rng is None:
                raise ValueError("train-mode sampling needs an rng")
            start = int(rng.integers(0, t_raw - t + 1))
        else:
            start = (t_raw - t) // 2
        return frames[start:start + t].copy()
    idx = np.arange(t) % t_raw
    return frames[idx].copy()


def to_bone_stream(frames: np.ndarray, pairs: Sequence) -> np.ndarray:
    """Bone vectors: out[t, child] = x[t, child] - x[t, parent]; root row 0."""
    frames = np.asarray(frames, dtype=np.float64)
    out = np.zeros_like(frames)
    for child, parent in pairs:
        if child != parent:
            out[:, child] = frames[:, child] - frames[:, parent]
    return out


class Corpus:
    """Immutable collection of sequence records grouped by subject."""

    def __init__(self, records: Iterable[SequenceRecord]):
        self.records = list(records)
        if not self.records:
            raise ValueError("corpus is empty")
        self.by_subject: dict = {}
        for rec in self.records:
            self.by_subject.setdefault(rec.subject_id, []).append(rec)
        self.subjects = sorted(self.by_subject)

    @classmethod
    def load(cls, root, spec: Optional[SkeletonSpec] = None) -> "Corpus":
        """Read every *.jsonl under root (sorted paths for determinism)."""
        root = Path(root)
        paths = sorted(root.rglob("*.jsonl"))
        if not paths:
            raise FileNotFoundError(f"no .jsonl sequence files under {root}")
        return cls(parse_sequence_file(p, spec) for p in paths)

    def __len__(self):
        return len(self.records)

    def views(self) -> list:
        return sorted({rec.view_label for rec in self.records})


def sample_batch(corpus: Corpus, spec: BatchSpec,
                 rng: np.random.Generator) -> list:
    """Draw p subjects without replacement and k sequences per subject.

    Sequences are drawn without replacement while the subject has enough,
    with replacement otherwise. Returns p*k records.
    """
    if len(corpus.subjects) < spec.p:
        raise ValueError(
            f"batch needs {spec.p} subjects, corpus has {len(corpus.subjects)}")
    chosen = rng.choice(len(corpus.subjects), size=spec.p, replace=False)
    batch = []
    for idx in chosen:
        pool = corpus.by_subject[corpus.subjects[int(idx)]]
        if len(pool) >= spec.k:
            picks = rng.choice(len(pool), size=spec.k, replace=False)
        else:
            picks = rng.integers(0, len(pool), size=spec.k)
        batch.extend(pool[int(i)] for i in picks)
    return batch
