"""Core tensor engine: arithmetic, matmul, activations, backward mechanics."""

import numpy as np
import pytest

from condgait import tensor as tz
from condgait.tensor import ShapeError, Tensor


class TestMatmul:
    def test_identity_case(self):
        eye = Tensor(np.eye(2))
        m = Tensor([[3.0, -1.0], [2.5, 7.0]])
        assert np.array_equal((eye @ m).data, m.data)

    def test_annihilator(self):
        zero = Tensor(np.zeros((2, 2)))
        m = Tensor([[3.0, -1.0], [2.5, 7.0]])
        assert np.array_equal((zero @ m).data, np.zeros((2, 2)))

    def test_hand_expanded_product(self):
        # Sum-of-products oracle worked out by hand.
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = Tensor([[5.0, 6.0], [7.0, 8.0]])
        assert np.array_equal((a @ b).data, [[19.0, 22.0], [43.0, 50.0]])

    def test_inner_dim_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 2)))

    def test_batch_broadcast(self):
        rng = np.random.default_rng(0)
        a = Tensor(rng.normal(size=(4, 2, 3)))
        b = Tensor(rng.normal(size=(3, 5)))
        out = a @ b
        assert out.shape == (4, 2, 5)
        for i in range(4):
            assert np.allclose(out.data[i], a.data[i] @ b.data)

    def test_backward_rules(self):
        rng = np.random.default_rng(1)
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        (a @ b).sum().backward()
        ones = np.ones((3, 2))
        assert np.allclose(a.grad, ones @ b.data.T)
        assert np.allclose(b.grad, a.data.T @ ones)


class TestActivations:
    def test_relu_definition(self):
        out = tz.relu(Tensor([-1.0, 0.0, 2.0]))
        assert np.array_equal(out.data, [0.0, 0.0, 2.0])

    def test_relu_idempotent(self):
        rng = np.random.default_rng(2)
        x = Tensor(rng.normal(size=(5, 7)))
        once = tz.relu(x)
        twice = tz.relu(once)
        assert np.array_equal(once.data, twice.data)

    def test_softmax_uniform_logits(self):
        out = tz.softmax(Tensor(np.zeros(11)), axis=0)
        assert np.allclose(out.data, np.full(11, 1 / 11), atol=1e-15)

    def test_softmax_shift_invariance(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 6))
        a = tz.softmax(Tensor(x), axis=1)
        b = tz.softmax(Tensor(x + 123.456), axis=1)
        assert np.abs(a.data - b.data).max() < 1e-12

    def test_softmax_sums_to_one(self):
        rng = np.random.default_rng(4)
        out = tz.softmax(Tensor(rng.normal(size=(3, 9)) * 10), axis=1)
        assert np.abs(out.data.sum(axis=1) - 1.0).max() < 1e-12

    def test_softmax_bad_axis(self):
        with pytest.raises(ShapeError):
            tz.softmax(Tensor(np.zeros((2, 2))), axis=5)


class TestBackward:
    def test_sum_gives_ones(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        x.sum().backward()
        assert np.array_equal(x.grad, np.ones((2, 3)))

    def test_quadratic_gives_x(self):
        rng = np.random.default_rng(5)
        x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        (x * x * 0.5).sum().backward()
        assert np.allclose(x.grad, x.data)

    def test_non_scalar_loss_rejected(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            (x * 2.0).backward()

    def test_accumulation_is_additive(self):
        x = Tensor(np.arange(4.0), requires_grad=True)
        loss1 = (x * x).sum()
        loss1.backward()
        first = x.grad.copy()
        loss2 = (x * x).sum()
        loss2.backward()
        assert np.allclose(x.grad, 2 * first)

    def test_reused_operand_accumulates(self):
        x = Tensor([3.0], requires_grad=True)
        (x * x).sum().backward()
        assert np.allclose(x.grad, [6.0])

    def test_no_grad_suppresses_tape(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with tz.no_grad():
            y = (x * 2.0).sum()
        assert y.node is None and not y.requires_grad

    def test_grad_reaches_interior_nodes(self):
        x = Tensor(np.ones(3), requires_grad=True)
        mid = x * 2.0
        mid.sum().backward()
        assert np.allclose(mid.grad, np.ones(3))


class TestElementwise:
    @pytest.mark.parametrize("seed", range(5))
    def test_finite_outputs_on_finite_inputs(self, seed):
        rng = np.random.default_rng(seed)
        x = Tensor(rng.normal(size=(3, 4)) * 100)
        y = Tensor(rng.normal(size=(3, 4)) * 100)
        for out in (x + y, x - y, x * y, tz.relu(x), tz.exp(x * 0.01),
                    tz.softmax(x, axis=1), x.sum(), x.mean(axis=0),
                    x.max(axis=1)):
            assert np.all(np.isfinite(out.data))

    def test_broadcast_backward_shapes(self):
        a = Tensor(np.ones((4, 3)), requires_grad=True)
        b = Tensor(np.ones(3), requires_grad=True)
        ((a + b) * 2.0).sum().backward()
        assert a.grad.shape == (4, 3)
        assert b.grad.shape == (3,)
        assert np.allclose(b.grad, 8.0)

    def test_div(self):
        a = Tensor([6.0, 9.0], requires_grad=True)
        b = Tensor([2.0, 3.0], requires_grad=True)
        out = a / b
        assert np.allclose(out.data, [3.0, 3.0])
        out.sum().backward()
        assert np.allclose(a.grad, [0.5, 1 / 3])
        assert np.allclose(b.grad, [-6 / 4, -1.0])

    def test_getitem_scatter(self):
        x = Tensor(np.arange(10.0), requires_grad=True)
        x[2:7:2].sum().backward()
        expect = np.zeros(10)
        expect[2:7:2] = 1.0
        assert np.array_equal(x.grad, expect)

    def test_concat_stack_roundtrip(self):
        a = Tensor(np.ones((2, 3)), requires_grad=True)
        b = Tensor(2 * np.ones((2, 3)), requires_grad=True)
        cat = tz.concat([a, b], axis=0)
        stk = tz.stack([a, b], axis=1)
        assert cat.shape == (4, 3)
        assert stk.shape == (2, 2, 3)
        (cat * 1.0).sum().backward()
        assert np.array_equal(a.grad, np.ones((2, 3)))

    def test_max_routes_to_first_tie(self):
        x = Tensor([[2.0, 5.0, 5.0]], requires_grad=True)
        x.max(axis=1).sum().backward()
        assert np.array_equal(x.grad, [[0.0, 1.0, 0.0]])
