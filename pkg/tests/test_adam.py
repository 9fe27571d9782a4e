import numpy as np
import pytest

from greybox.errors import ContractError
from greybox.nncore import AdamState, adam_step


def test_zero_gradient_is_fixed_point():
    state = AdamState.fresh(4)
    params = np.array([1.0, -2.0, 0.5, 3.0])
    new, st = adam_step(params, np.zeros(4), state)
    assert np.array_equal(new, params)
    assert st.t == 1
    assert state.t == 0  # caller's state untouched


@pytest.mark.parametrize("g", [1e-4, 1e-2, 1.0, 1e4])
def test_first_step_magnitude_independent_of_gradient_scale(g):
    # first bias-corrected update is step_size * g / (|g| + eps): the scale
    # cancels up to the tiny epsilon correction
    state = AdamState.fresh(1)
    new, _ = adam_step(np.zeros(1), np.array([g]), state)
    assert new[0] == pytest.approx(-state.step_size, rel=1e-3)


def _adam_oracle_scalar(p0, n_steps, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """Hand-rolled recurrence for loss p^2 (gradient 2p)."""
    p, m, v = p0, 0.0, 0.0
    for t in range(1, n_steps + 1):
        g = 2.0 * p
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    return p


def test_three_step_trajectory_matches_scalar_oracle():
    params = np.array([1.0])
    state = AdamState.fresh(1)
    for _ in range(3):
        grad = 2.0 * params
        params, state = adam_step(params, grad, state)
    assert params[0] == pytest.approx(_adam_oracle_scalar(1.0, 3), abs=1e-12)
    assert state.t == 3


def test_second_moment_nonnegative_and_t_monotone():
    rng = np.random.default_rng(0)
    params = rng.standard_normal(10)
    state = AdamState.fresh(10)
    for k in range(20):
        params, state = adam_step(params, rng.standard_normal(10), state)
        assert np.all(state.v >= 0)
        assert state.t == k + 1


def test_length_mismatch_rejected():
    with pytest.raises(ContractError):
        adam_step(np.zeros(3), np.zeros(4), AdamState.fresh(3))
    with pytest.raises(ContractError):
        adam_step(np.zeros(4), np.zeros(4), AdamState.fresh(3))
