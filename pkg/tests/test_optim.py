import math

import numpy as np
import pytest

from memxl.autodiff import Tensor
from memxl.optim import AdamState, adam_update, clip_global_norm, cosine_lr


class TestCosineLr:
    def test_endpoints_and_midpoint(self):
        assert cosine_lr(0, 0.1, 1000) == pytest.approx(0.1)
        assert cosine_lr(500, 0.1, 1000) == pytest.approx(0.05)
        assert cosine_lr(1000, 0.1, 1000) == pytest.approx(0.0, abs=1e-18)

    def test_flat_zero_past_horizon(self):
        assert cosine_lr(5000, 0.1, 1000) == cosine_lr(1000, 0.1, 1000)

    def test_monotone_decay(self):
        values = [cosine_lr(s, 0.3, 100) for s in range(101)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_quarter_point_matches_closed_form(self):
        assert cosine_lr(250, 1.0, 1000) == pytest.approx(0.5 * (1 + math.cos(math.pi / 4)))

    def test_validation(self):
        with pytest.raises(ValueError):
            cosine_lr(-1, 0.1, 100)
        with pytest.raises(ValueError):
            cosine_lr(0, 0.1, 0)


class TestClipGlobalNorm:
    def make_params(self):
        a = Tensor(np.zeros(3), requires_grad=True)
        b = Tensor(np.zeros(2), requires_grad=True)
        a.grad = np.array([3.0, 0.0, 0.0])
        b.grad = np.array([0.0, 4.0])
        return a, b

    def test_small_gradients_untouched(self):
        a, b = self.make_params()
        norm = clip_global_norm([a, b], max_norm=10.0)
        assert norm == pytest.approx(5.0)
        np.testing.assert_array_equal(a.grad, [3.0, 0.0, 0.0])
        np.testing.assert_array_equal(b.grad, [0.0, 4.0])

    def test_large_gradients_scaled_to_max(self):
        a, b = self.make_params()
        pre = clip_global_norm([a, b], max_norm=1.0)
        assert pre == pytest.approx(5.0)
        post = math.sqrt(float(np.sum(a.grad**2) + np.sum(b.grad**2)))
        assert post == pytest.approx(1.0)
        # direction is preserved
        np.testing.assert_allclose(a.grad, [0.6, 0.0, 0.0], rtol=1e-12)

    def test_none_grads_ignored(self):
        a, _ = self.make_params()
        c = Tensor(np.zeros(4), requires_grad=True)
        assert clip_global_norm([a, c], max_norm=10.0) == pytest.approx(3.0)
        assert c.grad is None

    def test_validation(self):
        with pytest.raises(ValueError):
            clip_global_norm([], max_norm=0.0)


class TestAdam:
    def test_zero_gradient_leaves_parameters_unchanged(self):
        p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        named = [("p", p)]
        state = AdamState.init(named)
        adam_update(named, state, lr=0.1)
        np.testing.assert_array_equal(p.data, [1.0, 2.0])
        assert state.t == 1

    def test_first_step_moves_by_lr_in_gradient_direction(self):
        p = Tensor(np.array([1.0, -1.0]), requires_grad=True)
        p.grad = np.array([0.5, -2.0])
        named = [("p", p)]
        state = AdamState.init(named)
        adam_update(named, state, lr=0.01)
        # bias-corrected first step is lr * sign(g) up to eps rounding
        np.testing.assert_allclose(p.data, [1.0 - 0.01, -1.0 + 0.01], rtol=1e-6)

    def test_matches_scalar_reference_on_quadratic_bowl(self):
        lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8

        # independent plain-float reference
        x_ref, m_ref, v_ref = 3.0, 0.0, 0.0
        ref_path = []
        for t in range(1, 11):
            g = 2.0 * x_ref
            m_ref = b1 * m_ref + (1 - b1) * g
            v_ref = b2 * v_ref + (1 - b2) * g * g
            x_ref -= lr * (m_ref / (1 - b1**t)) / (math.sqrt(v_ref / (1 - b2**t)) + eps)
            ref_path.append(x_ref)

        p = Tensor(np.array([3.0]), requires_grad=True)
        named = [("x", p)]
        state = AdamState.init(named)
        got_path = []
        for _ in range(10):
            p.grad = 2.0 * p.data
            adam_update(named, state, lr=lr, beta1=b1, beta2=b2, eps=eps)
            got_path.append(float(p.data[0]))

        np.testing.assert_allclose(got_path, ref_path, rtol=1e-12)
        assert abs(got_path[-1]) < 3.0  # heading toward the minimum

    def test_unknown_parameter_rejected(self):
        p = Tensor(np.zeros(2), requires_grad=True)
        state = AdamState.init([("a", p)])
        with pytest.raises(KeyError):
            adam_update([("b", p)], state, lr=0.1)

    def test_moments_keyed_per_parameter(self):
        a = Tensor(np.zeros(2), requires_grad=True)
        b = Tensor(np.zeros(3), requires_grad=True)
        state = AdamState.init([("a", a), ("b", b)])
        a.grad = np.ones(2)
        adam_update([("a", a), ("b", b)], state, lr=0.1)
        assert np.abs(state.m["a"]).max() > 0
        np.testing.assert_array_equal(state.m["b"], np.zeros(3))
