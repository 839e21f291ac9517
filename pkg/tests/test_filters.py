"""Generated per-joint filter banks."""

import numpy as np
import pytest

from condgait.filters import (FilterConfig, JointFilterGenerator,
                              StaticJointFilters, make_filter_source)
from condgait.gradcheck import finite_diff_check
from condgait.tensor import Tensor


def make_gen(c_in=8, c_out=16, n=5, t_p=4, reduction=2, joint_specific=True,
             seed=0):
    cfg = FilterConfig(t_p=t_p, reduction=reduction, inflation=2, k_s=3,
                       k_t=3, tc_kernel=3)
    rng = np.random.default_rng(seed)
    return JointFilterGenerator(rng, c_in, c_out, n, cfg, t_p,
                                joint_specific=joint_specific), cfg


class TestConfig:
    def test_rejects_even_kernels(self):
        with pytest.raises(ValueError):
            FilterConfig(k_t=4)
        with pytest.raises(ValueError):
            FilterConfig(tc_kernel=2)

    def test_rejects_bad_ratios(self):
        with pytest.raises(ValueError):
            FilterConfig(t_p=0)
        with pytest.raises(ValueError):
            FilterConfig(inflation=0)

    def test_channel_divisibility_enforced(self):
        cfg = FilterConfig(t_p=4, reduction=8)
        with pytest.raises(ValueError, match="divisible"):
            JointFilterGenerator(np.random.default_rng(0), 12, 16, 5, cfg, 4)


class TestShapes:
    def test_output_shapes(self):
        gen, cfg = make_gen()
        x = Tensor(np.random.default_rng(1).normal(size=(2, 4, 5, 8)))
        f_s, f_t = gen(x)
        assert f_s.shape == (2, cfg.k_s, 5, 8)
        assert f_t.shape == (2, cfg.k_t, 5, 16)

    def test_casia_first_block_shapes(self):
        # K_S=3, K_T=9, N=17, r=8, first block 64 -> 128 channels, pooled 15.
        cfg = FilterConfig(t_p=15, reduction=8, inflation=2, k_s=3, k_t=9)
        gen = JointFilterGenerator(np.random.default_rng(2), 64, 128, 17,
                                   cfg, 15)
        x = Tensor(np.random.default_rng(3).normal(size=(1, 15, 17, 64)))
        f_s, f_t = gen(x)
        assert f_s.shape == (1, 3, 17, 64)
        assert f_t.shape == (1, 9, 17, 128)

    def test_input_shape_validated(self):
        gen, _ = make_gen()
        with pytest.raises(ValueError, match="generator built for"):
            gen(Tensor(np.zeros((1, 3, 5, 8))))


class TestBehavior:
    def test_zero_input_zero_biases_gives_zero_pre_affine(self):
        gen, _ = make_gen()
        # Zero every bias so the branches are purely linear up to the BNs;
        # keep BN affine at identity (gamma=1, beta=0) to read the pre-affine
        # value directly.
        for name, p in gen.named_parameters():
            if "bias" in name or name.endswith("beta"):
                p.data = np.zeros_like(p.data)
            if name.endswith("gamma"):
                p.data = np.ones_like(p.data)
        f_s, f_t = gen(Tensor(np.zeros((2, 4, 5, 8))))
        assert np.allclose(f_s.data, 0.0)
        assert np.allclose(f_t.data, 0.0)

    def test_two_inputs_give_distinct_filters(self):
        gen, _ = make_gen()
        rng = np.random.default_rng(4)
        a = Tensor(rng.normal(size=(1, 4, 5, 8)))
        b = Tensor(rng.normal(size=(1, 4, 5, 8)))
        fa_s, fa_t = gen(a)
        fb_s, fb_t = gen(b)
        assert np.abs(fa_s.data - fb_s.data).max() > 1e-6
        assert np.abs(fa_t.data - fb_t.data).max() > 1e-6

    def test_eval_mode_deterministic(self):
        gen, _ = make_gen()
        gen.eval()
        x = Tensor(np.random.default_rng(5).normal(size=(1, 4, 5, 8)))
        a_s, a_t = gen(x)
        b_s, b_t = gen(x)
        assert np.array_equal(a_s.data, b_s.data)
        assert np.array_equal(a_t.data, b_t.data)

    def test_temporal_branch_permutation_equivariance(self):
        # Permuting two joints of the input permutes the matching F_T slices.
        gen, _ = make_gen()
        gen.eval()
        rng = np.random.default_rng(6)
        x = rng.normal(size=(1, 4, 5, 8))
        perm = [1, 0, 2, 3, 4]
        _, f_t = gen(Tensor(x))
        _, f_t_perm = gen(Tensor(x[:, :, perm]))
        assert np.allclose(f_t_perm.data, f_t.data[:, :, perm], atol=1e-12)

    def test_spatial_branch_permutation_equivariance(self):
        gen, _ = make_gen()
        gen.eval()
        rng = np.random.default_rng(7)
        x = rng.normal(size=(1, 4, 5, 8))
        perm = [4, 3, 2, 1, 0]
        f_s, _ = gen(Tensor(x))
        f_s_perm, _ = gen(Tensor(x[:, :, perm]))
        assert np.allclose(f_s_perm.data, f_s.data[:, :, perm], atol=1e-12)

    def test_global_mode_broadcasts_one_filter_set(self):
        gen, _ = make_gen(joint_specific=False)
        x = Tensor(np.random.default_rng(8).normal(size=(1, 4, 5, 8)))
        f_s, f_t = gen(x)
        for j in range(1, 5):
            assert np.array_equal(f_s.data[:, :, j], f_s.data[:, :, 0])
            assert np.array_equal(f_t.data[:, :, j], f_t.data[:, :, 0])

    def test_gradients_flow_to_generator_weights(self):
        gen, _ = make_gen(c_in=4, c_out=4, n=3, t_p=3, reduction=2)
        rng = np.random.default_rng(9)
        x = Tensor(rng.normal(size=(1, 3, 3, 4)), requires_grad=True)

        def f():
            f_s, f_t = gen(x)
            return (f_s * f_s).sum() + (f_t * f_t).sum()

        names, params = zip(*gen.named_parameters())
        report = finite_diff_check(f, list(params), names=list(names),
                                   max_coords_per_tensor=6,
                                   rng=np.random.default_rng(0))
        assert report.passed, str(report)


class TestStaticAndFactory:
    def test_static_ignores_input(self):
        cfg = FilterConfig(t_p=4, reduction=2, k_t=3)
        static = StaticJointFilters(np.random.default_rng(0), 8, 16, 5, cfg, 4)
        rng = np.random.default_rng(1)
        a = static(Tensor(rng.normal(size=(1, 4, 5, 8))))
        b = static(Tensor(rng.normal(size=(1, 4, 5, 8))))
        assert np.array_equal(a[0].data, b[0].data)
        assert np.array_equal(a[1].data, b[1].data)
        assert a[0].shape == (3, 5, 8)
        assert a[1].shape == (3, 5, 16)

    def test_factory_modes(self):
        cfg = FilterConfig(t_p=4, reduction=2, k_t=3)
        rng = np.random.default_rng(0)
        for mode, cls in (("adaptive", JointFilterGenerator),
                          ("global", JointFilterGenerator),
                          ("static", StaticJointFilters)):
            src = make_filter_source(mode, rng, 8, 16, 5, cfg, 4)
            assert isinstance(src, cls)
        with pytest.raises(ValueError):
            make_filter_source("learned", rng, 8, 16, 5, cfg, 4)
