"""Run configuration, the training loop, metrics logging and checkpoints."""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .data import BatchSpec, Corpus, sample_batch, sample_fixed_length
from .losses import (LossConfig, circle_loss, total_loss, triplet_loss,
                     view_ce_batch)
from .network import GaitModel, NetworkConfig
from .optim import Adam, LrSchedule
from .tensor import Tensor

__all__ = ["RunConfig", "Trainer", "save_checkpoint", "load_checkpoint",
           "CheckpointError", "CHECKPOINT_VERSION"]

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable checkpoint or version/config mismatch."""


@dataclass
class RunConfig:
    """Everything one training run needs; JSON/TOML-loadable."""

    network: NetworkConfig = field(default_factory=NetworkConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    lr: float = 1e-3
    vatl_lr: float = 1e-4
    warmup_epochs: int = 5
    decay_epochs: tuple = ()
    decay_ratio: float = 0.1
    epochs: int = 100
    iters_per_epoch: int = 4
    batch_p: int = 4
    batch_k: int = 4
    seed: int = 0
    corpus: str = "corpus"
    out_dir: str = "runs/default"

    def __post_init__(self):
        self.decay_epochs = tuple(int(e) for e in self.decay_epochs)
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.warmup_epochs >= self.epochs:
            raise ValueError(
                f"warmup ({self.warmup_epochs}) must be < epochs ({self.epochs})")
        if list(self.decay_epochs) != sorted(set(self.decay_epochs)):
            raise ValueError("decay epochs must be strictly increasing")
        if self.lr <= 0 or self.vatl_lr <= 0:
            raise ValueError("learning rates must be positive")

    def schedule(self) -> LrSchedule:
        return LrSchedule(self.warmup_epochs, self.decay_epochs,
                          self.decay_ratio)

    def batch_spec(self) -> BatchSpec:
        return BatchSpec(self.batch_p, self.batch_k)

    def to_dict(self) -> dict:
        blob = asdict(self)
        blob["network"] = self.network.to_dict()
        blob["loss"] = asdict(self.loss)
        blob["decay_epochs"] = list(self.decay_epochs)
        return blob

    @classmethod
    def from_dict(cls, blob: dict) -> "RunConfig":
        blob = dict(blob)
        if "network" in blob:
            blob["network"] = NetworkConfig.from_dict(blob["network"])
        if "loss" in blob:
            blob["loss"] = LossConfig(**blob["loss"])
        return cls(**blob)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            raw = path.read_bytes()
        except OSError as err:
            raise ValueError(f"cannot read config {path}: {err}") from err
        if path.suffix == ".toml":
            if sys.version_info >= (3, 11):
                import tomllib
            else:
                import tomli as tomllib
            try:
                blob = tomllib.loads(raw.decode("utf-8"))
            except Exception as err:
                raise ValueError(f"bad TOML in {path}: {err}") from err
        else:
            try:
                blob = json.loads(raw)
            except json.JSONDecodeError as err:
                raise ValueError(f"bad JSON in {path}: {err}") from err
        try:
            return cls.from_dict(blob)
        except (TypeError, ValueError) as err:
            raise ValueError(f"invalid config {path}: {err}") from err


def save_checkpoint(path, model: GaitModel):
    """Single self-describing JSON file: version, network config, state."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = {name: arr.tolist() for name, arr in model.state_dict().items()}
    blob = {"version": CHECKPOINT_VERSION,
            "network": model.cfg.to_dict(),
            "state": state}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(blob, fh)


def load_checkpoint(path, expect_cfg: Optional[NetworkConfig] = None) -> GaitModel:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            blob = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise CheckpointError(f"cannot read checkpoint {path}: {err}") from err
    version = blob.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint {path} has version {version!r}, expected "
            f"{CHECKPOINT_VERSION}")
    cfg = NetworkConfig.from_dict(blob["network"])
    if expect_cfg is not None and cfg.to_dict() != expect_cfg.to_dict():
        raise CheckpointError(
            f"checkpoint {path} was written for a different network config")
    model = GaitModel(cfg)
    state = {name: np.asarray(arr) for name, arr in blob["state"].items()}
    model.load_state_dict(state)
    return model


class Trainer:
    """Seed-deterministic training loop over a loaded corpus.

    Per epoch: iters_per_epoch (p, k)-batches, one combined loss each
    (triplet + circle + view cross-entropy when the variant has the view
    module), Adam with a separate rate for view-topology parameters, linear
    warmup then step decay. Metrics go to out_dir/metrics.jsonl as one JSON
    line per epoch with no timestamps, so equal seeds give byte-equal logs.
    """

    def __init__(self, cfg: RunConfig, corpus: Corpus,
                 out_dir: Optional[Path] = None):
        self.cfg = cfg
        self.corpus = corpus
        self.out_dir = Path(out_dir if out_dir is not None else cfg.out_dir)
        self.model = GaitModel(cfg.network, seed=cfg.seed)
        self.rng = np.random.default_rng([cfg.seed, 77])
        vatl_params, main_params = [], []
        for name, p in self.model.named_parameters():
            (vatl_params if name.startswith("vatl.") else main_params).append(p)
        groups = [{"name": "main", "params": main_params, "lr": cfg.lr}]
        if vatl_params:
            groups.append({"name": "vatl", "params": vatl_params,
                           "lr": cfg.vatl_lr})
        self.optimizer = Adam(groups)
        self.schedule = cfg.schedule()
        self.history: list = []

    def _train_step(self, records) -> dict:
        model, cfg = self.model, self.cfg
        frames = np.stack([
            sample_fixed_length(rec, cfg.network.t_frames, "train", self.rng)
            for rec in records])
        labels = [rec.subject_id for rec in records]
        views = [rec.view_label for rec in records]
        out = model.forward_batch(frames)
        tri = triplet_loss(out.embeddings, labels, cfg.loss.triplet_margin)
        circ = circle_loss(out.embeddings, labels, cfg.loss.circle_margin,
                           cfg.loss.circle_scale)
        if out.view_logits is not None:
            view = view_ce_batch(out.view_logits, views)
            view_acc = float(np.mean(
                [p == v for p, v in zip(out.view_indices, views)]))
        else:
            view = Tensor(0.0)
            view_acc = float("nan")
        loss = total_loss({"triplet": tri, "circle": circ, "view": view},
                          cfg.loss)
        model.zero_grad()
        loss.backward()
        return {"loss": loss.item(), "triplet": tri.item(),
                "circle": circ.item(), "view_ce": view.item(),
                "view_acc": view_acc}

    def run_epoch(self, epoch: int) -> dict:
        self.model.train()
        scale = self.schedule.scale(epoch)
        sums: dict = {}
        spec = self.cfg.batch_spec()
        for _ in range(self.cfg.iters_per_epoch):
            records = sample_batch(self.corpus, spec, self.rng)
            stats = self._train_step(records)
            self.optimizer.step(scale)
            self.optimizer.zero_grad()
            for key, val in stats.items():
                sums[key] = sums.get(key, 0.0) + val
        row = {"epoch": epoch}
        for key, val in sums.items():
            row[key] = val / self.cfg.iters_per_epoch
        row["lr_scale"] = scale
        return row

    def train(self, epochs: Optional[int] = None,
              log_path: Optional[Path] = None,
              checkpoint_path: Optional[Path] = None) -> list:
        epochs = self.cfg.epochs if epochs is None else epochs
        self.out_dir.mkdir(parents=True, exist_ok=True)
        log_path = Path(log_path) if log_path else self.out_dir / "metrics.jsonl"
        checkpoint_path = (Path(checkpoint_path) if checkpoint_path
                           else self.out_dir / "checkpoint.json")
        with open(log_path, "w", encoding="utf-8") as log:
            for epoch in range(epochs):
                row = self.run_epoch(epoch)
                self.history.append(row)
                log.write(json.dumps(row) + "\n")
                log.flush()
        save_checkpoint(checkpoint_path, self.model)
        return self.history
