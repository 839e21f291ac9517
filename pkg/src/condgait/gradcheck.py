"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor, no_grad

__all__ = ["GradCheckReport", "NondeterministicFunctionError", "finite_diff_check"]


class NondeterministicFunctionError(RuntimeError):
    """Raised when two evaluations of the checked function disagree."""


@dataclass
class GradCheckReport:
    """Worst-case relative error between tape and finite-difference gradients."""

    max_rel_error: float
    tol: float
    coords_checked: int
    coords_skipped: int = 0
    worst: str = ""
    per_tensor: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        skipped = (f", {self.coords_skipped} kink-adjacent skipped"
                   if self.coords_skipped else "")
        return (f"gradcheck {status}: max rel err {self.max_rel_error:.3e} "
                f"(tol {self.tol:.1e}, {self.coords_checked} coords{skipped}, "
                f"worst {self.worst})")


def _rel_error(a: float, b: float) -> float:
    # Scale floor of 1.0: losses here are O(1), and central differences on a
    # near-zero gradient coordinate carry ~1e-11 absolute noise that must not
    # be amplified into a spurious failure.
    return abs(a - b) / max(1.0, abs(a), abs(b))


def finite_diff_check(f: Callable[[], Tensor],
                      inputs: Sequence[Tensor] | Tensor,
                      h: float = 1e-5,
                      tol: float = 1e-4,
                      max_coords_per_tensor: Optional[int] = None,
                      rng: Optional[np.random.Generator] = None,
                      names: Optional[Sequence[str]] = None,
                      kink_tol: float = 0.25,
                      max_skip_fraction: float = 0.5) -> GradCheckReport:
    """Compare tape gradients of scalar f against central differences.

    f is a zero-argument callable that rebuilds its forward pass from the
    given input tensors each call; each input must have requires_grad set.
    Central difference per coordinate: (f(x+h) - f(x-h)) / 2h. The check
    evaluates f twice up front and rejects nondeterministic functions.

    Central differences are invalid where the stencil straddles a kink or a
    jump (ReLU, hinge, max ties, hard selections): a smooth f keeps the
    central estimates at steps h and h/2 within O(h^2 f'''), while any
    non-smoothness inside the stencil separates them by a fraction of the
    slope change. Coordinates whose two-scale estimates disagree beyond
    kink_tol * tol are excluded. The exclusion rule reads only the two FD
    values, never the tape, so a wrong backward rule cannot trigger it and
    is still caught on the remaining coordinates; the check fails outright
    when more than max_skip_fraction of a tensor is excluded (one
    kink-adjacent activation can contaminate many weight coordinates of
    the layer feeding it, hence the generous cap).

    max_coords_per_tensor caps the verified coordinates per input with a
    seeded subsample (exhaustive when None).
    """
    if h <= 0:
        raise ValueError(f"step h must be positive, got {h}")
    tensors = [inputs] if isinstance(inputs, Tensor) else list(inputs)
    if names is None:
        names = [f"input[{i}]" for i in range(len(tensors))]

    y1 = f()
    y2 = f()
    if y1.size != 1:
        raise ValueError(f"f must be scalar-valued, got shape {y1.shape}")
    if not np.array_equal(y1.data, y2.data):
        raise NondeterministicFunctionError(
            f"f changed between evaluations: {y1.data!r} vs {y2.data!r}")

    for t in tensors:
        t.zero_grad()
    y2.backward()
    analytic = []
    for name, t in zip(names, tensors):
        if t.grad is None:
            analytic.append(np.zeros_like(t.data))
        else:
            analytic.append(t.grad.copy())
        t.zero_grad()

    def central(flat, i, step):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = f().item()
        flat[i] = orig - step
        f_minus = f().item()
        flat[i] = orig
        return (f_plus - f_minus) / (2.0 * step)

    worst = (0.0, "")
    checked = skipped = 0
    per_tensor: dict[str, float] = {}
    for name, t, g_tape in zip(names, tensors, analytic):
        flat = t.data.reshape(-1)
        n = flat.size
        if max_coords_per_tensor is not None and n > max_coords_per_tensor:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(n, size=max_coords_per_tensor, replace=False)
        else:
            coords = range(n)
        g_flat = g_tape.reshape(-1)
        tensor_worst = 0.0
        tensor_total = tensor_skipped = 0
        with no_grad():
            for i in coords:
                tensor_total += 1
                g_wide = central(flat, i, h)
                g_fd = central(flat, i, 0.5 * h)
                if abs(g_wide - g_fd) > kink_tol * tol * max(1.0, abs(g_fd)):
                    tensor_skipped += 1
                    continue
                err = _rel_error(g_flat[i], g_fd)
                checked += 1
                tensor_worst = max(tensor_worst, err)
                if err > worst[0]:
                    worst = (err, f"{name}[{i}] tape={g_flat[i]:.6g} fd={g_fd:.6g}")
        skipped += tensor_skipped
        if tensor_total and tensor_skipped > max(2.0, max_skip_fraction
                                                 * tensor_total):
            worst = (float("inf"),
                     f"{name}: {tensor_skipped}/{tensor_total} coordinates "
                     f"kink-adjacent, function too non-smooth to verify")
        per_tensor[name] = tensor_worst

    return GradCheckReport(max_rel_error=worst[0], tol=tol,
                           coords_checked=checked, coords_skipped=skipped,
                           worst=worst[1], per_tensor=per_tensor)
