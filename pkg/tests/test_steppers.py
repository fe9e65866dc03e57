import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blockcg.core import BlockPartition
from blockcg.errors import ConfigurationError, ContractError, NumericalFailure, UnsupportedError
from blockcg.measures import block_gap
from blockcg.oracles import Box
from blockcg.problems import ProblemInstance, gen_box_quadratic
from blockcg.smooth import CallableOuter, ResidualState, SmoothComposite
from blockcg.steppers import (
    MAX_BACKTRACKS,
    StepContext,
    adaptive_step,
    backtracking_step,
    exact_line_search_quadratic,
    predefined_step,
)

from conftest import make_problem, random_feasible


def test_predefined_examples():
    assert predefined_step(0) == 1.0
    assert predefined_step(2) == 0.5
    assert predefined_step(0, "rbcg", 100, 0) == 1.0
    assert predefined_step(0, "rbcg", 100, 200) == 0.5
    with pytest.raises(ConfigurationError):
        predefined_step(0, "other")


def test_adaptive_examples():
    assert adaptive_step(StepContext(0, 0, 0.0, 1.0, 1.0)) == 0.0
    assert adaptive_step(StepContext(0, 0, 2.0, 1.0, 1.0)) == 1.0
    assert adaptive_step(StepContext(0, 0, 0.3, 0.5, 2.0)) == pytest.approx(0.3, rel=1e-15)


def test_adaptive_degenerate_denominator():
    assert adaptive_step(StepContext(0, 0, 0.5, 0.0, 1.0)) == 1.0
    assert adaptive_step(StepContext(0, 0, 0.0, 0.0, 1.0)) == 0.0


def test_adaptive_errors():
    with pytest.raises(ConfigurationError):
        adaptive_step(StepContext(0, 0, 1.0, 1.0, 0.0))
    with pytest.raises(ContractError):
        StepContext(0, 0, 1.0, -1.0, 1.0)
    assert StepContext(0, 0, -1e-13, 1.0, 1.0).S_i == 0.0


@given(st.floats(0, 1e6), st.floats(1e-6, 1e6), st.floats(0, 1e6))
def test_adaptive_in_unit_interval(S, beta, q):
    a = adaptive_step(StepContext(0, 0, S, q, beta))
    assert 0.0 <= a <= 1.0


def _quadratic_block(beta_true, S, q):
    """Exact decrease of the 1-D model ``-a S + beta_true a^2 q / 2``."""
    return lambda a: a * S - 0.5 * beta_true * a * a * q


def test_backtracking_no_extra_trials_when_start_is_large():
    ctx = StepContext(3, 0, 0.8, 2.0, 1.0, xi_prev=2)
    res = backtracking_step(ctx, 2.0, 1.0, _quadratic_block(1.0, 0.8, 2.0))
    assert res.trials == 1 and res.xi == 2 and res.beta == 4.0


def test_backtracking_bound_from_small_start():
    beta_i = 3.0
    ctx = StepContext(0, 0, 0.5, 0.2, beta_i)
    res = backtracking_step(ctx, 2.0, beta_i / 8, _quadratic_block(beta_i, 0.5, 0.2))
    assert beta_i / 8 <= res.beta <= 2 * beta_i


def test_backtracking_zero_gap():
    calls = []
    res = backtracking_step(StepContext(0, 0, 0.0, 1.0, 1.0), 2.0, 1.0, lambda a: calls.append(a) or 0.0)
    assert res.alpha == 0.0 and res.trials == 1 and not calls


def test_backtracking_safety_cap():
    with pytest.raises(NumericalFailure):
        backtracking_step(StepContext(0, 0, 1.0, 1.0, 1.0), 2.0, 1.0, lambda a: -1.0)
    assert MAX_BACKTRACKS == 64


def test_backtracking_parameter_validation():
    ctx = StepContext(0, 0, 1.0, 1.0, 1.0)
    with pytest.raises(ConfigurationError):
        backtracking_step(ctx, 1.0, 1.0, lambda a: 1.0)
    with pytest.raises(ConfigurationError):
        backtracking_step(ctx, 2.0, 0.0, lambda a: 1.0)


@given(st.integers(0, 10), st.floats(0.01, 10), st.floats(1e-3, 10), st.floats(1e-3, 10), st.floats(1e-3, 10))
def test_backtracking_memory_never_decreases(xi_prev, S, q, beta_true, beta_init):
    ctx = StepContext(0, 0, S, q, beta_true, xi_prev=xi_prev)
    res = backtracking_step(ctx, 2.0, beta_init, _quadratic_block(beta_true, S, q))
    assert res.xi >= xi_prev
    assert beta_init <= res.beta <= max(2.0 * beta_true, beta_init * 2.0**xi_prev)


def test_exact_line_search_examples():
    prob = make_problem([[1.0]], [1], [0.0], [Box([-1.0], [1.0])])
    st_ = ResidualState([0.5], prob.smooth)
    assert exact_line_search_quadratic(st_, prob, 0, [0.0]) == 0.0
    assert exact_line_search_quadratic(st_, prob, 0, [-1.5]) == pytest.approx(1 / 3, rel=1e-15)


def test_exact_line_search_matches_adaptive(rng):
    prob = gen_box_quadratic(10, 20, seed=7)
    for _ in range(500):
        x = random_feasible(rng, prob)
        st_ = ResidualState(x, prob.smooth)
        i = int(rng.integers(prob.N))
        S, p = block_gap(st_, prob, i)
        d = p - x[i : i + 1]
        Ad = prob.smooth.blocks[i] @ d
        a_ad = adaptive_step(StepContext(0, i, S, float(Ad @ Ad), 1.0))
        a_ls = exact_line_search_quadratic(st_, prob, i, d)
        assert abs(a_ad - a_ls) <= 1e-12


def test_exact_line_search_unsupported():
    part = BlockPartition((1,))
    outer = CallableOuter(lambda z: float(np.sum(z**4)), lambda z: 4 * z**3, 12.0)
    prob = ProblemInstance(SmoothComposite(np.eye(1), part, outer), [Box([-1.0], [1.0])])
    with pytest.raises(UnsupportedError):
        exact_line_search_quadratic(ResidualState([0.5], prob.smooth), prob, 0, [-1.5])
