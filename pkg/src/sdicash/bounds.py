"""Closed-form constants and security bounds for the SDI money scheme.

Two different quantities are conventionally called B: the per-round average
two-party guess bound ``B_AVG = (2 P_Q + M) / 2`` and the total-count bound
``count_bound(n, eta)``.  They live under separate names here.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from scipy.optimize import minimize_scalar

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)

M = (5.0 + SQRT3) / 4.0
P_Q = math.cos(math.pi / 8.0) ** 2
P_CLASSICAL = 0.75
# No closed form available; carried as a 4-decimal constant.
P_CRIT_KEY = 0.8415
P_CRIT_MONEY = (P_Q + P_CRIT_KEY) / 2.0
B_AVG = (2.0 * P_Q + M) / 2.0
TRIPLE_SUM_BOUND = 1.5 * (1.0 + 1.0 / SQRT3)

BETA_INTERCEPT = (9.0 + 2.0 * SQRT2 + SQRT3) / 16.0
BETA_SLOPE = (17.0 + 2.0 * SQRT2 + SQRT3) / 8.0
ETA_MAX = (-1.0 + 2.0 * SQRT2 - SQRT3) / (34.0 + 4.0 * SQRT2 + 2.0 * SQRT3)

_ETA_SLACK = 1e-12


def constants() -> tuple[float, float, float, float, float]:
    """(M, P_Q, P_crit_key, P_crit_money, B_avg)."""
    return M, P_Q, P_CRIT_KEY, P_CRIT_MONEY, B_AVG


def beta(eta: float) -> float:
    """Per-party acceptance threshold that defeats two colluding holders: intercept + slope * eta."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    return BETA_INTERCEPT + BETA_SLOPE * eta


def eta_max() -> float:
    """Largest eta with beta(eta) <= P_Q."""
    return ETA_MAX


def _clamp(p: float) -> float:
    return min(1.0, max(0.0, p))


def typicality_epsilon(eta: float, n: int) -> float:
    """2 exp(-2 eta^2 n), clamped to [0, 1]."""
    if eta <= 0 or n < 1:
        raise ValueError("typicality_epsilon needs eta > 0 and n >= 1")
    return _clamp(2.0 * math.exp(-2.0 * eta * eta * n))


def hoeffding_epsilon(eta: float, size: int) -> float:
    """2 exp(-2 eta^2 size) without a domain check; size 0 gives the vacuous value."""
    return _clamp(2.0 * math.exp(-2.0 * eta * eta * size))


def _check_eta(eta: float):
    if not 0 < eta <= ETA_MAX * (1 + _ETA_SLACK):
        raise ValueError(f"eta must lie in (0, eta_max={ETA_MAX:.6g}], got {eta}")


def forgery_exponent(eta: float) -> float:
    """Coefficient c in exp(-c n): 2 eta^2 (1/2 - eta)."""
    return 2.0 * eta * eta * (0.5 - eta)


def forgery_bound_raw(n: int, eta: float, k: int) -> float:
    """10 k^2 exp(-2 eta^2 (1/2 - eta) n), unclamped."""
    _check_eta(eta)
    if n < 1 or k < 1:
        raise ValueError("need n >= 1 and k >= 1")
    return 10.0 * k * k * math.exp(-forgery_exponent(eta) * n)


def forgery_bound(n: int, eta: float, k: int) -> float:
    return _clamp(forgery_bound_raw(n, eta, k))


def forgery_bound_trivial(n: int, eta: float, k: int) -> bool:
    return forgery_bound_raw(n, eta, k) >= 1.0


def _n_for(log_target_ratio: float, eta: float) -> float:
    return log_target_ratio / forgery_exponent(eta)


def min_nontrivial_n(k: int = 1) -> int:
    """Smallest n with forgery_bound(n, eta_max, k) < 1."""
    if k < 1:
        raise ValueError("k must be >= 1")
    x = _n_for(math.log(10.0 * k * k), ETA_MAX)
    n = math.floor(x) + 1
    # guard against x sitting on an integer up to rounding
    while n > 1 and forgery_bound_raw(n - 1, ETA_MAX, k) < 1.0:
        n -= 1
    return n


def required_n(target: float, k: int = 1) -> tuple[int, float]:
    """Smallest n (and the eta achieving it) with forgery_bound(n, eta, k) <= target."""
    if not 0 < target < 1:
        raise ValueError("target must lie strictly between 0 and 1")
    if k < 1:
        raise ValueError("k must be >= 1")
    log_ratio = math.log(10.0 * k * k / target)
    res = minimize_scalar(lambda e: _n_for(log_ratio, e), bounds=(ETA_MAX * 1e-3, ETA_MAX),
                          method="bounded", options={"xatol": 1e-15})
    eta = ETA_MAX if _n_for(log_ratio, ETA_MAX) <= res.fun else float(res.x)
    n = max(1, math.ceil(_n_for(log_ratio, eta)))
    while forgery_bound_raw(n, eta, k) > target:
        n += 1
    while n > 1 and forgery_bound_raw(n - 1, eta, k) <= target:
        n -= 1
    return n, eta


def count_bound(n: int, eta: float) -> float:
    """Upper count for the total correct guesses of both parties: 2 P_Q (1/2+eta) n + M (1/2+eta) n + 2 eta n."""
    if eta < 0 or n < 1:
        raise ValueError("count_bound needs eta >= 0 and n >= 1")
    return 2 * P_Q * (0.5 + eta) * n + M * (0.5 + eta) * n + 2 * eta * n


@dataclass(frozen=True)
class BoundsReport:
    M: float
    P_Q: float
    P_crit_key: float
    P_crit_money: float
    B_avg: float
    triple_sum_bound: float
    beta_intercept: float
    beta_slope: float
    eta_max: float
    n: int
    eta: float
    k: int
    beta: float
    B_count: float
    epsilon_typ: float
    forgery_bound: float
    forgery_bound_trivial: bool
    min_nontrivial_n: int

    def to_dict(self) -> dict:
        return asdict(self)

    def rows(self) -> list[tuple[str, str]]:
        out = []
        for name, value in asdict(self).items():
            if isinstance(value, (bool, int)):
                text = str(value)
            elif name in ("P_crit_key", "P_crit_money"):
                text = f"{value:.4f}"
            elif value != 0 and abs(value) < 1e-3:
                text = f"{value:.6e}"
            else:
                text = f"{value:.6f}"
            out.append((name, text))
        return out


def bounds_report(n: int = 463018, eta: float | None = None, k: int = 1) -> BoundsReport:
    eta = ETA_MAX if eta is None else eta
    return BoundsReport(
        M=M, P_Q=P_Q, P_crit_key=P_CRIT_KEY, P_crit_money=P_CRIT_MONEY, B_avg=B_AVG,
        triple_sum_bound=TRIPLE_SUM_BOUND, beta_intercept=BETA_INTERCEPT, beta_slope=BETA_SLOPE,
        eta_max=ETA_MAX, n=n, eta=eta, k=k, beta=beta(eta), B_count=count_bound(n, eta),
        epsilon_typ=typicality_epsilon(eta, n), forgery_bound=forgery_bound(n, eta, k),
        forgery_bound_trivial=forgery_bound_trivial(n, eta, k), min_nontrivial_n=min_nontrivial_n(k),
    )
