"""Adam with parameter groups and the warmup + step-decay schedule."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .nn import Parameter

__all__ = ["Adam", "LrSchedule"]


class Adam:
    """Adam over named parameter groups, each with its own base rate.

    groups: [{"name": str, "params": [Parameter, ...], "lr": float}, ...].
    step() applies one update scaled by the schedule factor; parameters
    without gradients are skipped.
    """

    def __init__(self, groups: Sequence[dict], betas=(0.9, 0.999),
                 eps: float = 1e-8):
        self.groups = []
        for group in groups:
            params = list(group["params"])
            self.groups.append({
                "name": group.get("name", "default"),
                "params": params,
                "lr": float(group["lr"]),
                "m": [np.zeros_like(p.data) for p in params],
                "v": [np.zeros_like(p.data) for p in params],
            })
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0

    def step(self, lr_scale: float = 1.0):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for group in self.groups:
            lr = group["lr"] * lr_scale
            for p, m, v in zip(group["params"], group["m"], group["v"]):
                if p.grad is None:
                    continue
                g = p.grad
                m *= b1
                m += (1.0 - b1) * g
                v *= b2
                v += (1.0 - b2) * g * g
                m_hat = m / bias1
                v_hat = v / bias2
                p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for group in self.groups:
            for p in group["params"]:
                p.zero_grad()


@dataclass(frozen=True)
class LrSchedule:
    """Linear warmup to the base rate, then step decay at fixed epochs.

    Epoch e (0-based) scale: (e+1)/warmup_epochs while warming up, after
    that decay_ratio**(number of decay epochs <= e).
    """

    warmup_epochs: int = 5
    decay_epochs: tuple = ()
    decay_ratio: float = 0.1

    def __post_init__(self):
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be >= 0")
        if list(self.decay_epochs) != sorted(set(self.decay_epochs)):
            raise ValueError(
                f"decay epochs must be strictly increasing, got "
                f"{self.decay_epochs}")

    def scale(self, epoch: int) -> float:
        if self.warmup_epochs > 0 and epoch < self.warmup_epochs:
            return (epoch + 1) / self.warmup_epochs
        return self.decay_ratio ** sum(1 for d in self.decay_epochs
                                       if d <= epoch)
