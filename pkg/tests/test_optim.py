"""Adam updates and the warmup/step-decay schedule."""

import numpy as np
import pytest

from condgait.nn import Parameter
from condgait.optim import Adam, LrSchedule


class TestAdam:
    def test_first_step_matches_closed_form(self):
        p = Parameter(np.array([1.0, -2.0]))
        p.grad = np.array([0.5, -1.0])
        opt = Adam([{"name": "m", "params": [p], "lr": 0.01}])
        opt.step()
        # After bias correction the first step is -lr * g / (|g| + eps).
        expect = np.array([1.0, -2.0]) - 0.01 * np.sign([0.5, -1.0])
        assert np.allclose(p.data, expect, atol=1e-6)

    def test_skips_gradless_params(self):
        p = Parameter(np.ones(3))
        opt = Adam([{"name": "m", "params": [p], "lr": 0.1}])
        opt.step()
        assert np.array_equal(p.data, np.ones(3))

    def test_per_group_rates(self):
        a = Parameter(np.zeros(1))
        b = Parameter(np.zeros(1))
        a.grad = np.ones(1)
        b.grad = np.ones(1)
        opt = Adam([{"name": "fast", "params": [a], "lr": 0.1},
                    {"name": "slow", "params": [b], "lr": 0.001}])
        opt.step()
        assert abs(a.data[0]) > 50 * abs(b.data[0])

    def test_lr_scale(self):
        a = Parameter(np.zeros(1))
        a.grad = np.ones(1)
        opt = Adam([{"name": "m", "params": [a], "lr": 0.1}])
        opt.step(lr_scale=0.0)
        assert a.data[0] == 0.0

    def test_zero_grad(self):
        a = Parameter(np.zeros(2))
        a.grad = np.ones(2)
        opt = Adam([{"name": "m", "params": [a], "lr": 0.1}])
        opt.zero_grad()
        assert a.grad is None

    def test_deterministic_across_instances(self):
        def run():
            rng = np.random.default_rng(0)
            p = Parameter(rng.normal(size=4))
            opt = Adam([{"name": "m", "params": [p], "lr": 0.05}])
            for i in range(10):
                p.grad = np.sin(p.data + i)
                opt.step()
                opt.zero_grad()
            return p.data.copy()

        assert np.array_equal(run(), run())


class TestSchedule:
    def test_linear_warmup(self):
        sched = LrSchedule(warmup_epochs=5, decay_epochs=(), decay_ratio=0.1)
        assert [sched.scale(e) for e in range(5)] == \
            [0.2, 0.4, 0.6, 0.8, 1.0]
        assert sched.scale(5) == 1.0

    def test_step_decay(self):
        sched = LrSchedule(warmup_epochs=0, decay_epochs=(10, 20),
                           decay_ratio=0.1)
        assert sched.scale(9) == 1.0
        assert abs(sched.scale(10) - 0.1) < 1e-15
        assert abs(sched.scale(19) - 0.1) < 1e-15
        assert abs(sched.scale(20) - 0.01) < 1e-15

    def test_published_schedule_shape(self):
        # 500 epochs, warmup 5, decays at 255/355/455 with ratio 0.1.
        sched = LrSchedule(warmup_epochs=5, decay_epochs=(255, 355, 455))
        assert sched.scale(0) == 0.2
        assert sched.scale(4) == 1.0
        assert sched.scale(254) == 1.0
        assert abs(sched.scale(255) - 0.1) < 1e-15
        assert abs(sched.scale(499) - 1e-3) < 1e-15

    def test_decay_epochs_must_increase(self):
        with pytest.raises(ValueError):
            LrSchedule(warmup_epochs=0, decay_epochs=(20, 10))
        with pytest.raises(ValueError):
            LrSchedule(warmup_epochs=0, decay_epochs=(10, 10))
