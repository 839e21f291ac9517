"""Gallery/probe retrieval: rank-1 matrix over view pairs.

Each (probe view, gallery view) cell restricts the gallery to one view and
scores every probe of the other view by nearest Euclidean neighbor on the
flattened embedding; a hit is a matching subject. Identical-view cells are
excluded from every average when the exclusion flag is set. Cells without
probes or eligible gallery rows are undefined and never enter averages.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .data import SequenceRecord, sample_fixed_length
from .tensor import no_grad

__all__ = ["EmbeddingRow", "ProbeResult", "extract_embeddings", "rank1"]


@dataclass
class EmbeddingRow:
    """One evaluated sequence: labels plus its embedding matrix."""

    subject_id: str
    view_label: int
    condition: str
    embedding: np.ndarray

    @property
    def flat(self) -> np.ndarray:
        return self.embedding.reshape(-1)


@dataclass
class ProbeResult:
    """Rank-1 accuracies per view pair with exclusion-aware averages.

    matrix[i, j] is the accuracy of probes of views[i] against gallery rows
    of views[j]; NaN marks undefined or excluded cells.
    """

    views: list
    matrix: np.ndarray
    exclude_identical_view: bool
    per_probe_view: dict = field(default_factory=dict)
    overall: float = float("nan")

    def defined_cells(self) -> list:
        out = []
        for i in range(len(self.views)):
            for j in range(len(self.views)):
                if np.isfinite(self.matrix[i, j]):
                    out.append((self.views[i], self.views[j],
                                float(self.matrix[i, j])))
        return out

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["probe_view\\gallery_view"] +
                            [str(v) for v in self.views] + ["avg"])
            for i, pv in enumerate(self.views):
                row = [str(pv)]
                for j in range(len(self.views)):
                    cell = self.matrix[i, j]
                    row.append("" if not np.isfinite(cell) else f"{cell:.6f}")
                avg = self.per_probe_view.get(pv, float("nan"))
                row.append("" if not np.isfinite(avg) else f"{avg:.6f}")

                writer.writerow(row)
            writer.writerow(["overall", f"{self.overall:.6f}"])

    def __str__(self):
        lines = ["probe\\gallery " + " ".join(f"{v:>6}" for v in self.views)]
        for i, pv in enumerate(self.views):
            cells = " ".join(
                "     -" if not np.isfinite(self.matrix[i, j])
                else f"{100 * self.matrix[i, j]:6.1f}"
                for j in range(len(self.views)))
            avg = self.per_probe_view.get(pv, float("nan"))
            avg_s = "     -" if not np.isfinite(avg) else f"{100 * avg:6.1f}"
            lines.append(f"{pv:>13} {cells} | {avg_s}")
        lines.append(f"overall rank-1: {100 * self.overall:.2f}%")
        return "\n".join(lines)


def extract_embeddings(model, records: Iterable[SequenceRecord],
                       batch_size: int = 8) -> list:
    """Deterministic eval-mode embeddings, one row per record.

    batch_size only chunks the loop; each sequence is processed
    independently so results do not depend on it.
    """
    was_training = model.training
    model.eval()
    records = list(records)
    rows = []
    step = max(batch_size, 1)
    with no_grad():
        for start in range(0, len(records), step):
            chunk = records[start:start + step]
            frames = np.stack([
                sample_fixed_length(rec, model.cfg.t_frames, "eval")
                for rec in chunk])
            out = model.forward_batch(frames)
            for rec, emb in zip(chunk, out.embeddings.data):
                rows.append(EmbeddingRow(rec.subject_id, rec.view_label,
                                         rec.condition, emb.copy()))
    if was_training:
        model.train()
    return rows


def rank1(gallery: Sequence[EmbeddingRow], probe: Sequence[EmbeddingRow],
          exclude_identical_view: bool = True) -> ProbeResult:
    """Rank-1 retrieval over every (probe view, gallery view) pair.

    Distance ties break toward the earliest gallery row (insertion order).
    """
    gallery = list(gallery)
    probe = list(probe)
    if not gallery or not probe:
        raise ValueError("gallery and probe tables must be non-empty")
    views = sorted({r.view_label for r in gallery} |
                   {r.view_label for r in probe})
    v_count = len(views)
    matrix = np.full((v_count, v_count), np.nan)

    gal_flat = np.stack([g.flat for g in gallery])
    gal_views = np.array([g.view_label for g in gallery])
    gal_subjects = [g.subject_id for g in gallery]

    for i, pv in enumerate(views):
        probes_v = [p for p in probe if p.view_label == pv]
        if not probes_v:
            continue
        for j, gv in enumerate(views):
            if exclude_identical_view and pv == gv:
                continue
            idx = np.flatnonzero(gal_views == gv)
            if idx.size == 0:
                continue
            cand = gal_flat[idx]
            hits = 0
            for p in probes_v:
                d = np.linalg.norm(cand - p.flat[None, :], axis=1)
                best = idx[int(np.argmin(d))]
                hits += gal_subjects[best] == p.subject_id
            matrix[i, j] = hits / len(probes_v)

    per_probe_view = {}
    included = []
    for i, pv in enumerate(views):
        cells = [matrix[i, j] for j in range(v_count)
                 if np.isfinite(matrix[i, j])
                 and not (exclude_identical_view and views[j] == pv)]
        if cells:
            per_probe_view[pv] = float(np.mean(cells))
            included.extend(cells)
    overall = float(np.mean(included)) if included else float("nan")
    return ProbeResult(views=views, matrix=matrix,
                       exclude_identical_view=exclude_identical_view,
                       per_probe_view=per_probe_view, overall=overall)
