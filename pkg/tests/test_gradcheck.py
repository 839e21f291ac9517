"""The finite-difference checker itself, plus the full op suite."""

import numpy as np
import pytest

from condgait import tensor as tz
from condgait.gradcheck import (NondeterministicFunctionError,
                                finite_diff_check)
from condgait.tensor import Tensor
from condgait.verification import run_gradient_suite


def test_linear_function_is_exact():
    x = Tensor(np.arange(5.0), requires_grad=True)
    report = finite_diff_check(lambda: x.sum(), x)
    assert report.passed
    assert report.max_rel_error < 1e-9


def test_sum_of_squares_analytic():
    x = Tensor([1.0, 2.0], requires_grad=True)
    report = finite_diff_check(lambda: (x * x).sum(), x)
    assert report.passed
    x.zero_grad()
    (x * x).sum().backward()
    assert np.allclose(x.grad, [2.0, 4.0])
    assert report.max_rel_error < 1e-9


def test_composite_matmul_relu_sum():
    rng = np.random.default_rng(0)
    a = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    report = finite_diff_check(lambda: tz.relu(a @ b).sum(), [a, b])
    assert report.passed
    assert report.max_rel_error < 1e-6


def test_detects_nondeterminism():
    state = {"n": 0.0}

    def f():
        state["n"] += 1.0
        return Tensor(state["n"])

    with pytest.raises(NondeterministicFunctionError):
        finite_diff_check(f, [Tensor(np.zeros(1), requires_grad=True)])


def test_rejects_nonscalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        finite_diff_check(lambda: x * 2.0, x)


def test_rejects_bad_step():
    x = Tensor(np.ones(1), requires_grad=True)
    with pytest.raises(ValueError, match="step"):
        finite_diff_check(lambda: x.sum(), x, h=0.0)


def test_coordinate_subsampling():
    x = Tensor(np.arange(100.0), requires_grad=True)
    report = finite_diff_check(lambda: (x * x).sum(), x,
                               max_coords_per_tensor=10,
                               rng=np.random.default_rng(0))
    assert report.passed
    assert report.coords_checked == 10


def test_full_op_suite_passes():
    # Criterion: backward of every op matches central differences at 1e-4.
    results = run_gradient_suite(tol=1e-4, h=1e-5, include_network=False)
    failed = [name for name, rep in results if not rep.passed]
    assert not failed, f"gradient checks failed: {failed}"
