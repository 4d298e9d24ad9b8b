import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sdicash import bounds
from sdicash.bounds import (
    B_AVG, ETA_MAX, M, P_CRIT_KEY, P_CRIT_MONEY, P_Q, beta, count_bound, forgery_bound,
    min_nontrivial_n, required_n, typicality_epsilon,
)


class TestConstants:
    def test_values(self):
        m, pq, key, money, bavg = bounds.constants()
        assert m == pytest.approx(1.683013, abs=1e-6)
        assert pq == pytest.approx(0.853553, abs=1e-6)
        assert money == pytest.approx(0.84755, abs=5e-5)
        assert bavg == pytest.approx((2 * pq + m) / 2, abs=1e-15)

    def test_p_crit_money_between(self):
        assert P_CRIT_KEY < P_CRIT_MONEY < P_Q

    def test_triple_sum(self):
        assert bounds.TRIPLE_SUM_BOUND == pytest.approx(2.366025, abs=1e-6)


class TestBeta:
    def test_intercept_and_slope(self):
        assert beta(0) == pytest.approx(0.847530, abs=1e-6)
        assert bounds.BETA_SLOPE == pytest.approx(2.695060, abs=1e-6)
        assert beta(0) == pytest.approx((2 * P_Q + M) / 4, abs=1e-12)
        assert beta(0) == pytest.approx(B_AVG / 2, abs=1e-12)

    def test_eta_max(self):
        assert bounds.eta_max() == pytest.approx(0.002235, abs=1e-5)
        assert abs(beta(ETA_MAX) - P_Q) < 1e-9
        assert beta(ETA_MAX + 0.001) > P_Q

    def test_negative(self):
        with pytest.raises(ValueError):
            beta(-0.1)

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_affine_increasing(self, a, b):
        # strict increase is only observable above double resolution
        if b - a > 1e-9:
            assert beta(a) < beta(b)
        slope = beta(1.0) - beta(0.0)
        assert slope > 0
        assert beta(b) - beta(a) == pytest.approx(slope * (b - a), abs=1e-12)
        assert beta((a + b) / 2) == pytest.approx((beta(a) + beta(b)) / 2, abs=1e-12)


class TestEpsilon:
    def test_value(self):
        assert typicality_epsilon(0.1, 1000) == pytest.approx(2 * math.exp(-20), rel=1e-12)
        assert typicality_epsilon(0.1, 1000) == pytest.approx(4.12e-9, rel=1e-2)

    def test_clamp(self):
        assert typicality_epsilon(1e-9, 1) == 1.0

    def test_nonpositive(self):
        with pytest.raises(ValueError):
            typicality_epsilon(0, 10)
        with pytest.raises(ValueError):
            typicality_epsilon(0.1, 0)

    def test_atypical_fraction_below_bound(self):
        n, eta, trials = 10**4, 0.02, 20000
        zeros = np.random.default_rng(0).binomial(n, 0.5, size=trials)
        frac = np.mean(np.abs(zeros / n - 0.5) > eta)
        assert frac <= typicality_epsilon(eta, n)


class TestForgeryBound:
    def test_threshold_n(self):
        assert bounds.forgery_bound_raw(463018, ETA_MAX, 1) == pytest.approx(1.0, abs=1e-3)

    def test_k_squared(self):
        n = 10**6
        assert bounds.forgery_bound_raw(n, ETA_MAX, 2) / bounds.forgery_bound_raw(n, ETA_MAX, 1) == pytest.approx(4)

    def test_doubling(self):
        assert forgery_bound(2 * 463018, ETA_MAX, 1) == pytest.approx(0.1, rel=0.1)

    def test_domain(self):
        with pytest.raises(ValueError):
            forgery_bound(100, 0.01, 1)
        with pytest.raises(ValueError):
            forgery_bound(100, 0.0, 1)

    def test_trivial_flag(self):
        assert bounds.forgery_bound_trivial(1000, ETA_MAX, 1)
        assert forgery_bound(1000, ETA_MAX, 1) == 1.0
        assert not bounds.forgery_bound_trivial(10**6, ETA_MAX, 1)

    @given(st.integers(1, 10**7), st.integers(1, 10))
    def test_monotone(self, n, k):
        raw = bounds.forgery_bound_raw
        assert raw(n + 1000, ETA_MAX, k) < raw(n, ETA_MAX, k)
        assert raw(n, ETA_MAX, k + 1) > raw(n, ETA_MAX, k)


class TestQubitCounts:
    def test_min_nontrivial(self):
        n = min_nontrivial_n(1)
        assert abs(n - 463018) <= 0.001 * 463018
        assert forgery_bound(n, ETA_MAX, 1) < 1 <= bounds.forgery_bound_raw(n - 1, ETA_MAX, 1)

    def test_k2_ratio(self):
        assert min_nontrivial_n(2) / min_nontrivial_n(1) == pytest.approx(math.log(40) / math.log(10), rel=1e-5)

    def test_monotone_in_k(self):
        values = [min_nontrivial_n(k) for k in range(1, 8)]
        assert values == sorted(values)

    def test_required_n_boundary(self):
        n, eta = required_n(1 - 1e-12, 1)
        assert n == min_nontrivial_n(1) and eta == pytest.approx(ETA_MAX)

    def test_required_n_target(self):
        n, eta = required_n(1e-6, 1)
        assert n == pytest.approx(7 * 463018, rel=0.01)
        assert eta == pytest.approx(ETA_MAX, rel=1e-9)
        assert forgery_bound(n, eta, 1) <= 1e-6 < bounds.forgery_bound_raw(n - 1, eta, 1)

    def test_required_n_domain(self):
        with pytest.raises(ValueError):
            required_n(1.5)


class TestCountBound:
    def test_value(self):
        assert count_bound(100, 0) == pytest.approx(100 * (2 * P_Q + M) / 2, abs=1e-9)
        assert count_bound(100, 0) == pytest.approx(169.506, abs=1e-3)
        assert count_bound(1, 0) == pytest.approx(B_AVG)

    @given(st.integers(1, 10**7), st.floats(0, 0.5))
    def test_equals_two_n_beta(self, n, eta):
        assert count_bound(n, eta) == pytest.approx(2 * n * beta(eta), rel=1e-9)


class TestReport:
    def test_report_fields(self):
        r = bounds.bounds_report()
        assert r.min_nontrivial_n == min_nontrivial_n(1)
        assert 0 <= r.forgery_bound <= 1
        names = [name for name, _ in r.rows()]
        assert "P_crit_money" in names and dict(r.rows())["P_crit_key"] == "0.8415"
