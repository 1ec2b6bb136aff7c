"""ADAM update rules."""

import numpy as np
import pytest

from nmfseg.optim import adam_step, init_adam


class TestAdam:
    def test_first_step_magnitude(self):
        params = {"w": np.array([0.0])}
        state = init_adam(params)
        new, state = adam_step(params, {"w": np.array([1.0])}, state, lr=1e-3)
        # m_hat = v_hat = 1 at t=1, so the step is lr / (1 + eps)
        assert new["w"][0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-12)

    def test_zero_gradient_no_move(self):
        params = {"w": np.array([1.5, -2.0])}
        state = init_adam(params)
        new, _ = adam_step(params, {"w": np.zeros(2)}, state, lr=1e-3)
        np.testing.assert_array_equal(new["w"], params["w"])

    def test_optimizes_quadratic(self):
        params = {"theta": np.array([1.0])}
        state = init_adam(params)
        for _ in range(100):
            grads = {"theta": 2.0 * params["theta"]}
            params, state = adam_step(params, grads, state, lr=5e-2)
        assert abs(params["theta"][0]) < 0.1

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        g = rng.normal(size=(3, 4))
        p0 = {"w": rng.normal(size=(3, 4))}
        a, b = dict(p0), dict(p0)
        sa, sb = init_adam(a), init_adam(b)
        for _ in range(10):
            a, sa = adam_step(a, {"w": g}, sa, lr=1e-3)
            b, sb = adam_step(b, {"w": g}, sb, lr=1e-3)
        np.testing.assert_array_equal(a["w"], b["w"])

    def test_step_counter_advances(self):
        params = {"w": np.zeros(1)}
        state = init_adam(params)
        for expected in (1, 2, 3):
            params, state = adam_step(params, {"w": np.ones(1)}, state, lr=1e-3)
            assert state.t == expected
