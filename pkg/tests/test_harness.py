import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdicash import adversary, bounds, harness
from sdicash.adversary import copy_box, deterministic_box, random_box, uniform_box
from sdicash.harness import ExperimentConfig, exact_forgery_small_n


def _hand_uniform_n1(theta):
    # strict: each needs more than theta correct answers in one round
    total = 0.0
    for y0, y1, xa, xf, aa, af in itertools.product((0, 1), repeat=6):
        w = 0.25 / 16
        if (aa == (y0, y1)[xa]) > theta and (af == (y0, y1)[xf]) > theta:
            total += w
    return total


class TestExact:
    def test_uniform_n1(self):
        assert exact_forgery_small_n(uniform_box(), 1, 0.0) == pytest.approx(_hand_uniform_n1(0.0), abs=1e-15)
        assert exact_forgery_small_n(uniform_box(), 1, 0.0) == pytest.approx(0.25, abs=1e-15)

    def test_always_wrong(self):
        wrong = deterministic_box(lambda y0, y1, xa, xf: (1 - (y0, y1)[xa], 1 - (y0, y1)[xf]))
        for n in (1, 2, 3):
            assert exact_forgery_small_n(wrong, n, 0.3) == 0.0

    def test_copy_box_matches_reference(self):
        box = copy_box()
        assert abs(exact_forgery_small_n(box, 2, 0.5) - harness.exact_forgery_reference(box, 2, 0.5)) <= 1e-12

    @given(st.integers(0, 2**32 - 1), st.sampled_from([0.0, 0.4, 0.6]))
    @settings(max_examples=15, deadline=None)
    def test_random_boxes_match_reference(self, seed, theta):
        box = random_box(np.random.default_rng(seed))
        for n in (1, 2):
            assert abs(exact_forgery_small_n(box, n, theta) - harness.exact_forgery_reference(box, n, theta)) <= 1e-12

    def test_size_limit(self):
        with pytest.raises(ValueError):
            exact_forgery_small_n(copy_box(), 5, 0.5)

    def test_xor_equivalence(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            assert harness.xor_equivalence_test(random_box(rng), 2, 0.5)
        assert harness.xor_equivalence_test(copy_box(), 3, 0.5)
        p = exact_forgery_small_n(copy_box(), 3, 0.5)
        assert p == exact_forgery_small_n(copy_box(), 3, 0.5)

    def test_agrees_with_monte_carlo(self):
        rng = np.random.default_rng(5)
        for box in (copy_box(), random_box(rng), random_box(rng)):
            exact = exact_forgery_small_n(box, 3, 0.5)
            est = harness.monte_carlo_forgery(ExperimentConfig(n=3, theta=0.5, trials=4000, seed=2, box=box))
            se = math.sqrt(max(exact * (1 - exact), 1e-6) / est.trials)
            assert abs(est.estimate - exact) <= 4 * se


class TestMonteCarlo:
    def test_copy_box_secure_config(self):
        est = harness.monte_carlo_forgery(ExperimentConfig(n=10_000, theta=0.86, trials=200))
        assert est.successes == 0
        assert est.ci[0] == 0.0 <= est.estimate <= est.ci[1]

    def test_honest_single_acceptance(self):
        est = harness.monte_carlo_forgery(ExperimentConfig(n=10**5, theta=0.8475, trials=5, strategy="honest"))
        assert est.single_acceptance >= 0.99 and est.successes == 0

    def test_attack1_wiesner(self):
        est = harness.monte_carlo_forgery(ExperimentConfig(n=500, trials=10, strategy="attack1", verifier="wiesner"))
        assert est.estimate == 1.0

    def test_config_errors(self):
        with pytest.raises(harness.ConfigError):
            harness.monte_carlo_forgery(ExperimentConfig(strategy="attack1"))
        with pytest.raises(harness.ConfigError):
            harness.monte_carlo_forgery(ExperimentConfig(strategy="nonsense"))
        with pytest.raises(harness.ConfigError):
            harness.monte_carlo_forgery(ExperimentConfig(strategy="box"))
        with pytest.raises(harness.ConfigError):
            harness.monte_carlo_forgery(ExperimentConfig(trials=0))

    def test_deterministic_across_workers(self):
        a = harness.run_trials(ExperimentConfig(n=2000, trials=30, seed=4, k=3))
        b = harness.run_trials(ExperimentConfig(n=2000, trials=30, seed=4, k=3, workers=4))
        assert a == b

    def test_birthday_counts_any_pair(self):
        est = harness.monte_carlo_forgery(ExperimentConfig(n=200, trials=50, strategy="attack1",
                                                           verifier="wiesner", k=4))
        assert est.successes == 50

    def test_wilson(self):
        lo, hi = harness.wilson_interval(0, 1000)
        assert lo == 0 and 0.003 < hi < 0.0045
        lo, hi = harness.wilson_interval(500, 1000)
        assert lo < 0.5 < hi

    def test_strict_versus_inclusive(self):
        # theta * n exactly hit: inclusive acceptance but no strict forgery
        box = deterministic_box(lambda y0, y1, xa, xf: ((y0, y1)[xa], (y0, y1)[xf]))
        est = harness.monte_carlo_forgery(ExperimentConfig(n=10, theta=1.0, trials=5, box=box))
        assert est.successes == 0 and est.successes_nonstrict == 5


class TestAudit:
    def test_copy_box(self):
        r = harness.concentration_audit(copy_box(), 10_000, 0.05, 200)
        assert r.p_exceed == 0.0 and r.within_bounds and not r.vacuous
        assert r.d_size + r.dbar_size == 10_000
        assert abs(r.d_size / 10_000 - 0.5) <= 0.05

    def test_vacuous(self):
        assert harness.concentration_audit(copy_box(), 100, 0.5, 5).vacuous

    def test_expected_counters_match_sampling(self):
        box = random_box(np.random.default_rng(3))
        r = harness.concentration_audit(box, 4000, 0.2, 5)
        rates = adversary.counter_rates(box)
        assert r.expected["xbar_A"] == pytest.approx(rates.x_alice * r.d_size)


class TestSweep:
    def test_eta_crossing(self):
        values = np.linspace(bounds.ETA_MAX * 0.9, bounds.ETA_MAX, 5)
        rows = harness.sweep("eta", values, ExperimentConfig(n=463018, k=1))
        assert rows[-1]["forgery_bound"] < 1.0
        assert all(r["forgery_bound"] == 1.0 for r in rows[:-1])

    def test_theta_transition(self):
        rows = harness.sweep("theta", [0.75, 0.80, 0.84, 0.87], ExperimentConfig(n=20000, k=1, trials=4,
                                                                                   strategy="honest"),
                             empirical=True)
        acc = [r["single_acceptance"] for r in rows]
        assert acc[0] == 1.0 and acc[-1] == 0.0

    def test_empty(self):
        with pytest.raises(ValueError):
            harness.sweep("eta", [], ExperimentConfig())

    def test_parse_range(self):
        assert harness.parse_range("0:1:3") == [0.0, 0.5, 1.0]
        assert harness.parse_range("1,2") == [1.0, 2.0]
        assert harness.parse_range("") == []
