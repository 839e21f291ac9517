"""Network ops against brute-force loop oracles and their contracts."""

import numpy as np
import pytest

from condgait import ops
from condgait.tensor import ShapeError, Tensor


def loop_conv1x1(x, w):
    t, n, c = x.shape
    cp = w.shape[1]
    out = np.zeros((t, n, cp))
    for ti in range(t):
        for ni in range(n):
            for d in range(cp):
                for ci in range(c):
                    out[ti, ni, d] += x[ti, ni, ci] * w[ci, d]
    return out


def loop_joint_scale(x, f):
    out = np.zeros_like(x)
    t, n, c = x.shape
    for ti in range(t):
        for ni in range(n):
            for ci in range(c):
                out[ti, ni, ci] = x[ti, ni, ci] * f[ni, ci]
    return out


def loop_depthwise_temporal(x, f, stride=1):
    t, n, c = x.shape
    k = f.shape[0]
    t_out = -(-t // stride)
    out = np.zeros((t_out, n, c))
    for to in range(t_out):
        for ni in range(n):
            for ci in range(c):
                for ki in range(k):
                    ti = to * stride + ki - k // 2
                    if 0 <= ti < t:
                        out[to, ni, ci] += x[ti, ni, ci] * f[ki, ni, ci]
    return out


def loop_dense_temporal(x, w, stride=1):
    t, n, c = x.shape
    k, _, d = w.shape
    t_out = -(-t // stride)
    out = np.zeros((t_out, n, d))
    for to in range(t_out):
        for ni in range(n):
            for ki in range(k):
                ti = to * stride + ki - k // 2
                if 0 <= ti < t:
                    out[to, ni] += x[ti, ni] @ w[ki]
    return out


class TestConv1x1:
    def test_identity_weight(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(4, 3, 5))
        out = ops.conv1x1(Tensor(x), Tensor(np.eye(5)))
        assert np.array_equal(out.data, x)

    def test_all_ones_counting(self):
        out = ops.conv1x1(Tensor(np.ones((2, 2, 3))), Tensor(np.ones((3, 4))))
        assert np.all(out.data == 3.0)

    def test_matches_flatten_matmul_oracle(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(2, 2, 3))
        w = rng.normal(size=(3, 2))
        out = ops.conv1x1(Tensor(x), Tensor(w))
        assert np.array_equal(out.data, (x.reshape(-1, 3) @ w).reshape(2, 2, 2))

    @pytest.mark.parametrize("seed", range(20))
    def test_loop_oracle_battery(self, seed):
        rng = np.random.default_rng(seed)
        t, n, c, d = rng.integers(1, 5, size=4)
        x = rng.normal(size=(t, n, c))
        w = rng.normal(size=(c, d))
        out = ops.conv1x1(Tensor(x), Tensor(w))
        assert np.abs(out.data - loop_conv1x1(x, w)).max() < 1e-10

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ops.conv1x1(Tensor(np.ones((2, 2, 3))), Tensor(np.ones((4, 2))))


class TestDepthwiseJointScale:
    def test_ones_identity(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(4, 3, 2))
        out = ops.depthwise_joint_scale(Tensor(x), Tensor(np.ones((3, 2))))
        assert np.array_equal(out.data, x)

    def test_zeros_annihilate(self):
        out = ops.depthwise_joint_scale(Tensor(np.ones((4, 3, 2))),
                                        Tensor(np.zeros((3, 2))))
        assert np.all(out.data == 0.0)

    @pytest.mark.parametrize("seed", range(20))
    def test_loop_oracle_battery(self, seed):
        rng = np.random.default_rng(100 + seed)
        t, n, c = rng.integers(1, 6, size=3)
        x = rng.normal(size=(t, n, c))
        f = rng.normal(size=(n, c))
        out = ops.depthwise_joint_scale(Tensor(x), Tensor(f))
        assert np.abs(out.data - loop_joint_scale(x, f)).max() < 1e-10

    def test_spec_example_shapes(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(3, 2, 2))
        f = rng.normal(size=(2, 2))
        out = ops.depthwise_joint_scale(Tensor(x), Tensor(f))
        assert np.abs(out.data - loop_joint_scale(x, f)).max() == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ops.depthwise_joint_scale(Tensor(np.ones((3, 2, 2))),
                                      Tensor(np.ones((3, 2))))


class TestDepthwiseTemporalConv:
    def test_k1_identity(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(5, 2, 3))
        out = ops.depthwise_temporal_conv(Tensor(x), Tensor(np.ones((1, 2, 3))))
        assert np.array_equal(out.data, x)

    def test_centered_delta(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(5, 2, 3))
        delta = np.zeros((3, 2, 3))
        delta[1] = 1.0
        out = ops.depthwise_temporal_conv(Tensor(x), Tensor(delta))
        assert np.array_equal(out.data, x)

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            ops.depthwise_temporal_conv(Tensor(np.ones((5, 2, 2))),
                                        Tensor(np.ones((2, 2, 2))))

    def test_spec_example(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(5, 2, 2))
        f = rng.normal(size=(3, 2, 2))
        out = ops.depthwise_temporal_conv(Tensor(x), Tensor(f))
        assert np.abs(out.data - loop_depthwise_temporal(x, f)).max() < 1e-10

    @pytest.mark.parametrize("seed", range(20))
    @pytest.mark.parametrize("stride", [1, 2])
    def test_loop_oracle_battery(self, seed, stride):
        rng = np.random.default_rng(200 + seed)
        t, n, c = int(rng.integers(1, 8)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
        k = int(rng.choice([1, 3, 5]))
        x = rng.normal(size=(t, n, c))
        f = rng.normal(size=(k, n, c))
        out = ops.depthwise_temporal_conv(Tensor(x), Tensor(f), stride=stride)
        ref = loop_depthwise_temporal(x, f, stride)
        assert out.data.shape == ref.shape
        assert np.abs(out.data - ref).max() < 1e-10


class TestTemporalConv:
    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("stride", [1, 2])
    def test_loop_oracle_battery(self, seed, stride):
        rng = np.random.default_rng(300 + seed)
        t, n, c, d = (int(rng.integers(1, 7)), int(rng.integers(1, 4)),
                      int(rng.integers(1, 4)), int(rng.integers(1, 4)))
        k = int(rng.choice([1, 3]))
        x = rng.normal(size=(t, n, c))
        w = rng.normal(size=(k, c, d))
        out = ops.temporal_conv(Tensor(x), Tensor(w), stride=stride)
        assert np.abs(out.data - loop_dense_temporal(x, w, stride)).max() < 1e-10

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            ops.temporal_conv(Tensor(np.ones((4, 2, 3))),
                              Tensor(np.ones((3, 4, 2))))


class TestFusedGraphOps:
    """The fused block kernels against their spec-op compositions."""

    @pytest.mark.parametrize("seed", range(10))
    def test_gated_aggregate_equals_composition(self, seed):
        rng = np.random.default_rng(400 + seed)
        t, n, c, k = 4, 3, 2, 3
        x = Tensor(rng.normal(size=(t, n, c)))
        f = Tensor(rng.normal(size=(k, n, c)))
        g = Tensor(rng.normal(size=(k, n, n)))
        fused = ops.gated_graph_aggregate(x, f, g)
        ref = None
        for ki in range(k):
            part = g[ki] @ ops.depthwise_joint_scale(x, f[ki])
            ref = part if ref is None else ref + part
        assert np.abs(fused.data - ref.data).max() < 1e-12

    @pytest.mark.parametrize("seed", range(10))
    def test_graph_mix_equals_composition(self, seed):
        rng = np.random.default_rng(500 + seed)
        t, n, c, d, k = 4, 3, 2, 5, 3
        x = Tensor(rng.normal(size=(t, n, c)))
        g = Tensor(rng.normal(size=(k, n, n)))
        w = Tensor(rng.normal(size=(k, c, d)))
        fused = ops.graph_conv_mix(x, g, w)
        ref = None
        for ki in range(k):
            part = ops.conv1x1(g[ki] @ x, w[ki])
            ref = part if ref is None else ref + part
        assert np.abs(fused.data - ref.data).max() < 1e-12

    def test_batched_equals_per_sequence(self):
        rng = np.random.default_rng(7)
        xb = Tensor(rng.normal(size=(3, 4, 3, 2)))
        fb = Tensor(rng.normal(size=(3, 3, 3, 2)))
        gb = Tensor(rng.normal(size=(3, 3, 3, 3)))
        out = ops.gated_graph_aggregate(xb, fb, gb)
        for b in range(3):
            single = ops.gated_graph_aggregate(
                Tensor(xb.data[b]), Tensor(fb.data[b]), Tensor(gb.data[b]))
            assert np.allclose(out.data[b], single.data, atol=1e-13)


class TestBatchNorm:
    def test_constant_input_zero_output(self):
        g = Tensor(np.ones(3))
        b = Tensor(np.zeros(3))
        rm, rv = np.zeros(3), np.ones(3)
        x = Tensor(np.full((4, 2, 3), 7.5))
        out = ops.batch_norm(x, g, b, rm, rv, training=True)
        assert np.all(out.data == 0.0)

    def test_affine_shift(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(500, 4))
        x = (x - x.mean(axis=0)) / x.std(axis=0)
        out = ops.batch_norm(Tensor(x), Tensor(np.ones(4)),
                             Tensor(np.full(4, 5.0)), np.zeros(4), np.ones(4),
                             training=True)
        assert np.abs(out.data.mean(axis=0) - 5.0).max() < 1e-6

    def test_moment_oracle(self):
        # eps=1e-5 leaves the output variance at var/(var+eps), so the
        # 1e-6 closeness bound needs a batch whose variance dwarfs eps.
        rng = np.random.default_rng(9)
        x = rng.normal(loc=3.0, scale=20.0, size=(50, 7, 5))
        out = ops.batch_norm(Tensor(x), Tensor(np.ones(5)), Tensor(np.zeros(5)),
                             np.zeros(5), np.ones(5), training=True)
        flat = out.data.reshape(-1, 5)
        var = x.reshape(-1, 5).var(axis=0)
        assert np.abs(flat.mean(axis=0)).max() < 1e-10
        assert np.abs(flat.var(axis=0) - 1.0).max() < 1e-6
        assert np.allclose(flat.var(axis=0), var / (var + 1e-5), atol=1e-12)

    def test_bad_eps(self):
        with pytest.raises(ValueError, match="eps"):
            ops.batch_norm(Tensor(np.ones((2, 2))), Tensor(np.ones(2)),
                           Tensor(np.zeros(2)), np.zeros(2), np.ones(2),
                           eps=0.0)

    def test_running_stats_update_and_eval(self):
        rng = np.random.default_rng(10)
        x = rng.normal(loc=2.0, size=(200, 3))
        rm, rv = np.zeros(3), np.ones(3)
        ops.batch_norm(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3)),
                       rm, rv, momentum=1.0, training=True)
        assert np.allclose(rm, x.mean(axis=0))
        out = ops.batch_norm(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3)),
                             rm, rv, training=False)
        expect = (x - rm) / np.sqrt(rv + 1e-5)
        assert np.allclose(out.data, expect)


class TestPools:
    def test_adaptive_identity_bins(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(6, 2, 3))
        out = ops.adaptive_temporal_pool(Tensor(x), 6)
        assert np.array_equal(out.data, x)

    def test_mean_of_constant(self):
        out = ops.temporal_mean_pool(Tensor(np.full((5, 2, 3), 4.25)))
        assert np.all(out.data == 4.25)

    def test_spec_bin_partition(self):
        # T=5, t_p=2 must use bins {0,1,2} and {3,4}.
        rng = np.random.default_rng(12)
        x = rng.normal(size=(5, 2, 2))
        out = ops.adaptive_temporal_pool(Tensor(x), 2)
        assert np.allclose(out.data[0], x[0:3].mean(axis=0))
        assert np.allclose(out.data[1], x[3:5].mean(axis=0))

    @pytest.mark.parametrize("t,t_p", [(7, 3), (9, 4), (8, 8), (5, 1)])
    def test_bin_sizes_differ_at_most_one(self, t, t_p):
        from condgait.ops import _adaptive_bins
        bins = _adaptive_bins(t, t_p)
        sizes = [hi - lo for lo, hi in bins]
        assert sum(sizes) == t
        assert bins[0][0] == 0 and bins[-1][1] == t
        assert max(sizes) - min(sizes) <= 1
        for (_, hi), (lo, _) in zip(bins, bins[1:]):
            assert hi == lo

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            ops.adaptive_temporal_pool(Tensor(np.ones((4, 2, 2))), 5)
        with pytest.raises(ValueError):
            ops.adaptive_temporal_pool(Tensor(np.ones((4, 2, 2))), 0)

    def test_global_average(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=(4, 3, 5))
        out = ops.global_average_pool(Tensor(x))
        assert out.shape == (5,)
        assert np.allclose(out.data, x.mean(axis=(0, 1)))

    def test_temporal_max(self):
        rng = np.random.default_rng(14)
        x = rng.normal(size=(6, 3, 2))
        out = ops.temporal_max_pool(Tensor(x))
        assert np.array_equal(out.data, x.max(axis=0))


class TestFullyConnected:
    def test_identity(self):
        rng = np.random.default_rng(15)
        x = rng.normal(size=(3, 4))
        out = ops.fully_connected(Tensor(x), Tensor(np.eye(4)),
                                  Tensor(np.zeros(4)))
        assert np.array_equal(out.data, x)

    def test_zero_weight_bias_rows(self):
        b = np.array([1.0, -2.0])
        out = ops.fully_connected(Tensor(np.ones((5, 3))),
                                  Tensor(np.zeros((3, 2))), Tensor(b))
        assert np.array_equal(out.data, np.tile(b, (5, 1)))

    @pytest.mark.parametrize("seed", range(10))
    def test_matmul_broadcast_add_oracle(self, seed):
        rng = np.random.default_rng(600 + seed)
        x = rng.normal(size=(4, 3, 5))
        w = rng.normal(size=(5, 2))
        b = rng.normal(size=2)
        out = ops.fully_connected(Tensor(x), Tensor(w), Tensor(b))
        assert np.abs(out.data - (x @ w + b)).max() < 1e-12
