import numpy as np
import pytest

from msgen import autodiff as ad
from msgen.autodiff import (AdamState, Tensor, adam_step, backward,
                            finite_difference_check)
from msgen.errors import InvalidInputError, NonFiniteError


class TestBackwardBasics:
    def test_linear_grad_is_other_factor(self, rng):
        w = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
        x = rng.standard_normal((4, 3))
        loss = ad.tsum(w * Tensor(x))
        backward(loss)
        np.testing.assert_allclose(w.grad, x)

    def test_softplus_grad_at_zero(self):
        x = Tensor(np.zeros(()), requires_grad=True)
        backward(ad.softplus(x))
        assert float(x.grad) == pytest.approx(0.5)

    def test_non_scalar_root_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(InvalidInputError):
            backward(x + Tensor(np.ones(3)))

    def test_shared_subexpression_accumulates(self):
        x = Tensor(np.array(2.0), requires_grad=True)
        y = x * x  # dy/dx = 2x = 4
        backward(y)
        assert float(x.grad) == pytest.approx(4.0)

    def test_forward_replay_identical(self, rng):
        w = rng.standard_normal((5, 5))
        x = rng.standard_normal((5, 5))

        def run():
            return ad.tsum(ad.leaky_relu(Tensor(w) @ Tensor(x), 0.2)).item()
        assert run() == run()

    def test_nan_trips_fault(self):
        with pytest.raises(NonFiniteError):
            Tensor(np.array([1.0, np.nan]))

    def test_div_overflow_trips_fault(self):
        a = Tensor(np.array([1.0]), requires_grad=True)
        with pytest.raises(NonFiniteError):
            a / Tensor(np.array([0.0]))


class TestPrimitiveGradients:
    def test_all_primitives_within_tolerance(self):
        from msgen.gradcheck import primitive_gradchecks
        assert primitive_gradchecks(seed=0) <= 1e-6

    def test_segment_softmax_rows_sum_to_one(self, rng):
        seg = np.array([0, 0, 0, 1, 1, 2])
        x = Tensor(rng.standard_normal(6))
        y = ad.segment_softmax(x, seg, 3)
        sums = np.zeros(3)
        np.add.at(sums, seg, y.data)
        np.testing.assert_allclose(sums, 1.0, atol=1e-12)

    def test_segment_softmax_single_element(self):
        y = ad.segment_softmax(Tensor(np.array([3.7])), np.array([0]), 1)
        np.testing.assert_allclose(y.data, [1.0])

    def test_leaky_relu_negative_slope(self):
        y = ad.leaky_relu(Tensor(np.array([-1.0])), 0.2)
        np.testing.assert_allclose(y.data, [-0.2])

    def test_gather_identity(self, rng):
        x = rng.standard_normal((5, 2))
        y = ad.gather_rows(Tensor(x), np.arange(5))
        np.testing.assert_array_equal(y.data, x)

    def test_matmul_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_zero_grad_parameter(self):
        # A parameter the loss never touches: both sides exactly zero.
        def fn(p):
            return ad.tsum(p["used"] * p["used"])
        params = {"used": np.ones(3), "unused": np.ones(2)}
        tensors = {k: Tensor(v, requires_grad=True) for k, v in params.items()}
        backward(fn(tensors))
        assert tensors["unused"].grad is None
        assert finite_difference_check(fn, params) <= 1e-9

    def test_quadratic_is_exact(self, rng):
        q = rng.standard_normal((4, 4))
        q = q + q.T

        def fn(p):
            return ad.tsum(ad.matmul(p["x"], Tensor(q)) * p["x"])
        params = {"x": rng.standard_normal((2, 4))}
        assert finite_difference_check(fn, params) <= 1e-9


class TestAdam:
    def test_first_moment_equals_gradient_with_beta1_zero(self):
        state = AdamState()
        params = {"w": np.zeros(3)}
        g = np.array([0.5, -1.0, 2.0])
        adam_step(state, params, {"w": g.copy()})
        np.testing.assert_allclose(state.m["w"], g)
        adam_step(state, params, {"w": 2 * g})
        np.testing.assert_allclose(state.m["w"], 2 * g)

    def test_zero_gradient_leaves_parameter(self):
        state = AdamState()
        params = {"w": np.array([1.0, 2.0])}
        adam_step(state, params, {"w": np.zeros(2)})
        np.testing.assert_array_equal(params["w"], [1.0, 2.0])

    def test_unit_gradient_first_step_size(self):
        # v_hat = g^2 after bias correction, so the step is ~alpha.
        state = AdamState(alpha=1e-4)
        params = {"w": np.array([0.0])}
        adam_step(state, params, {"w": np.array([1.0])})
        assert params["w"][0] == pytest.approx(-1e-4, rel=1e-6)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            adam_step(AdamState(), {"w": np.zeros(3)}, {"w": np.zeros(2)})

    def test_descends_quadratic(self):
        state = AdamState(alpha=0.05, beta1=0.0, beta2=0.99)
        params = {"w": np.array([3.0])}
        for _ in range(200):
            adam_step(state, params, {"w": 2 * params["w"]})
        assert abs(params["w"][0]) < 0.5
