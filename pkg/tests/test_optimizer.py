import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdicash import optimizer
from sdicash.bounds import M, P_Q, TRIPLE_SUM_BOUND
from sdicash.optimizer import (
    StrategyParams, check_inequality_chain, decode_povm, double_guessing_value, single_guessing_value,
)


@pytest.fixture(scope="module")
def single_report():
    return optimizer.maximize_single_guessing(restarts=20, seed=1)


class TestObjectives:
    def test_honest_strategy(self):
        assert single_guessing_value(optimizer.honest_strategy()) == pytest.approx(P_Q, abs=1e-12)

    def test_maximally_mixed(self):
        s = optimizer.honest_strategy()
        s = StrategyParams(np.zeros((4, 3)), s.povms)
        assert single_guessing_value(s) == pytest.approx(0.5, abs=1e-15)

    def test_constant_guess_value(self):
        # y-independent states, always (0, 0): each bit right half the time
        assert double_guessing_value(optimizer.constant_guess_strategy()) == pytest.approx(1.0, abs=1e-15)

    def test_uniform_output_chain(self):
        chain = check_inequality_chain(optimizer.uniform_output_strategy())
        assert chain.triple_sum == pytest.approx(1.5, abs=1e-15) and chain.holds()

    def test_chain_needs_joint_povm(self):
        with pytest.raises(ValueError):
            check_inequality_chain(optimizer.honest_strategy())

    def test_chain_rejects_invalid(self):
        bad = optimizer.uniform_output_strategy()
        bad.bloch[0] = [2.0, 0, 0]
        with pytest.raises(ValueError):
            check_inequality_chain(bad)

    def test_classical_exhaustive(self):
        assert optimizer.classical_single_guessing_exhaustive() == 0.75


class TestParametrization:
    @given(st.integers(0, 2**32 - 1), st.integers(2, 5))
    @settings(max_examples=50, deadline=None)
    def test_decoded_povm_valid(self, seed, m):
        v = np.random.default_rng(seed).normal(size=8 * (m - 1)) * 3
        elems = decode_povm(v, m)
        assert np.allclose(sum(elems), np.eye(2), atol=1e-12)
        for e in elems:
            assert np.linalg.eigvalsh(e).min() >= -1e-12

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_random_strategies_validate(self, seed):
        optimizer.random_strategy(np.random.default_rng(seed), "single").validate()


class TestSearch:
    def test_single_guessing_reaches_p_q(self, single_report):
        assert single_report.best_value >= P_Q - 1e-3
        assert single_report.best_value <= P_Q + 1e-6
        assert single_report.max_evaluated <= P_Q + 1e-6
        assert single_report.margin >= -1e-6

    def test_grid_agrees_with_optimizer(self, single_report):
        value, _ = optimizer.grid_single_guessing(0.5)
        assert abs(value - single_report.best_value) <= 1e-3

    def test_classical_restriction(self):
        r = optimizer.maximize_single_guessing(restarts=5, classical=True, seed=2)
        assert r.max_evaluated <= 0.75 + 1e-12
        assert r.best_value == pytest.approx(0.75, abs=1e-6)

    def test_double_guessing_below_m(self):
        r = optimizer.maximize_double_guessing(restarts=8, seed=3)
        assert r.max_evaluated <= M + 1e-6 and r.margin >= -1e-6
        assert check_inequality_chain(r.best_strategy).holds()

    def test_restarts_validated(self):
        with pytest.raises(ValueError):
            optimizer.maximize_single_guessing(restarts=0)

    def test_deterministic_and_worker_independent(self):
        a = optimizer.maximize_single_guessing(restarts=3, seed=7, maxiter=300)
        b = optimizer.maximize_single_guessing(restarts=3, seed=7, maxiter=300, workers=3)
        assert a.best_value == b.best_value
        assert np.array_equal(a.best_strategy.bloch, b.best_strategy.bloch)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=200, deadline=None)
def test_inequality_chain_random(seed):
    chain = check_inequality_chain(optimizer.random_strategy(np.random.default_rng(seed)))
    assert chain.triple_sum <= TRIPLE_SUM_BOUND + 1e-6
    assert chain.p0 + chain.p1 - 1 <= chain.p_xor + 1e-9
