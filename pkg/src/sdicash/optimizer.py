"""Numerical search over qubit strategies for the guessing games behind the security proof.

Single guessing: four states rho_{y0 y1} and two binary measurements, one per
question x; score (1/8) sum P(a = y_x).  Double guessing: four states and one
4-outcome measurement giving a guess of both bits at once; score
P(g0 = y0) + P(g1 = y1).  Objective values are exact Born-rule arithmetic; only
the search is approximate.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import qcore
from .bounds import M, P_CLASSICAL, P_Q, TRIPLE_SUM_BOUND
from .protocol import HONEST_DIRECTIONS, honest_source

BITS2 = ((0, 0), (0, 1), (1, 0), (1, 1))
PAULI_STACK = np.stack(qcore.PAULIS)

DEFAULT_RESTARTS = 50
DEFAULT_MAXITER = 2000
DEFAULT_TOL = 1e-9


@dataclass
class StrategyParams:
    """Decoded strategy: Bloch vectors per (y0, y1) and POVM elements per context.

    ``povms`` maps a context (x for single guessing, "joint" for double
    guessing) to a list of 2x2 elements; for single guessing the list is
    [E_{a=0}, E_{a=1}], for double guessing it is ordered (g0, g1)
    lexicographic.
    """

    bloch: np.ndarray
    povms: dict = field(default_factory=dict)

    def states(self) -> list[np.ndarray]:
        return [(qcore.I2 + np.einsum("i,ijk->jk", r, PAULI_STACK)) / 2 for r in self.bloch]

    def validate(self, atol: float = 1e-9) -> None:
        for r in self.bloch:
            if np.linalg.norm(r) > 1 + atol:
                raise ValueError("state outside the Bloch ball")
        for elems in self.povms.values():
            for e in elems:
                if np.linalg.eigvalsh((e + e.conj().T) / 2).min() < -atol:
                    raise ValueError("POVM element not positive semidefinite")
            if not np.allclose(sum(elems), qcore.I2, atol=atol):
                raise ValueError("POVM not complete")

    def to_dict(self) -> dict:
        def enc(m):
            return [[[float(v.real), float(v.imag)] for v in row] for row in m]
        return {
            "bloch": {f"{y0}{y1}": self.bloch[i].tolist() for i, (y0, y1) in enumerate(BITS2)},
            "povms": {str(k): [enc(e) for e in v] for k, v in self.povms.items()},
        }


@dataclass
class OptimizationReport:
    objective: str
    best_value: float
    best_strategy: StrategyParams
    restarts: int
    converged: bool
    bound: float
    max_evaluated: float
    evaluations: int

    @property
    def margin(self) -> float:
        return self.bound - self.best_value

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "best_value": self.best_value,
            "bound": self.bound,
            "margin": self.margin,
            "max_evaluated": self.max_evaluated,
            "restarts": self.restarts,
            "converged": self.converged,
            "evaluations": self.evaluations,
            "best_strategy": self.best_strategy.to_dict(),
        }


# --- exact objectives -----------------------------------------------------------


def _outcome_table(bloch: np.ndarray, elems: list[np.ndarray]) -> np.ndarray:
    """P[state, outcome] = Tr(rho E) = (tr E + r . e) / 2 with e the Pauli coefficients of E."""
    stack = np.asarray(elems)
    tr = np.einsum("kii->k", stack).real
    coef = np.einsum("kij,pji->kp", stack, PAULI_STACK).real
    return 0.5 * (tr[None, :] + bloch @ coef.T)


_Y = np.array(BITS2)


def single_guessing_value(s: StrategyParams) -> float:
    """(1/8) sum over y0, y1, x of P(a = y_x)."""
    total = 0.0
    for x in (0, 1):
        table = _outcome_table(s.bloch, s.povms[x])
        total += table[np.arange(4), _Y[:, x]].sum()
    return float(total / 8)


def _joint_guess_probs(s: StrategyParams) -> np.ndarray:
    """P(g0, g1 | y0, y1) as a (4, 2, 2) array over states."""
    return _outcome_table(s.bloch, s.povms["joint"]).reshape(4, 2, 2)


# indicator masks over (state, g0, g1)
_HIT0 = np.array([[[g0 == y0 for g1 in (0, 1)] for g0 in (0, 1)] for y0, y1 in BITS2], dtype=float)
_HIT1 = np.array([[[g1 == y1 for g1 in (0, 1)] for g0 in (0, 1)] for y0, y1 in BITS2], dtype=float)
_HITX = np.array([[[(g0 ^ g1) == (y0 ^ y1) for g1 in (0, 1)] for g0 in (0, 1)] for y0, y1 in BITS2],
                 dtype=float)


def guessing_marginals(s: StrategyParams) -> tuple[float, float, float]:
    """(P(g0 = y0), P(g1 = y1), P(g0 ^ g1 = y0 ^ y1)), uniform over (y0, y1)."""
    p = _joint_guess_probs(s)
    return (float((p * _HIT0).sum() / 4), float((p * _HIT1).sum() / 4),
            float((p * _HITX).sum() / 4))


def double_guessing_value(s: StrategyParams) -> float:
    p = _joint_guess_probs(s)
    return float((p * (_HIT0 + _HIT1)).sum() / 4)


@dataclass(frozen=True)
class InequalityChain:
    p0: float
    p1: float
    p_xor: float

    @property
    def triple_sum(self) -> float:
        return self.p0 + self.p1 + self.p_xor

    def holds(self, tol: float = 1e-9) -> bool:
        return (self.triple_sum <= TRIPLE_SUM_BOUND + tol
                and self.p0 + self.p1 - 1 <= self.p_xor + tol)


def check_inequality_chain(strategy: StrategyParams) -> InequalityChain:
    """Guessing probabilities of y0, y1 and y0 ^ y1 (the parity of the two guesses)."""
    if "joint" not in strategy.povms or len(strategy.povms["joint"]) != 4:
        raise ValueError("inequality chain needs a 4-outcome joint guessing POVM")
    strategy.validate()
    return InequalityChain(*guessing_marginals(strategy))


# --- parametrization ---------------------------------------------------------------


def _ball(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    return v / norm if norm > 1 else v


def _factor(v: np.ndarray, classical: bool) -> np.ndarray:
    if classical:
        return np.diag(v[:2]).astype(complex)
    return (v[:4] + 1j * v[4:8]).reshape(2, 2)


def decode_povm(v: np.ndarray, outcomes: int, classical: bool = False) -> list[np.ndarray]:
    """Positive factors A_k A_k^dag for all but the last element, scaled so their sum is <= I.

    The last element is the remainder I - sum, clipped to PSD if it dips below
    zero by rounding.
    """
    width = 2 if classical else 8
    parts = [_factor(v[k * width:(k + 1) * width], classical) for k in range(outcomes - 1)]
    elems = [a @ a.conj().T for a in parts]
    partial = sum(elems)
    top = np.linalg.eigvalsh(partial).max()
    scale = 1.0 / max(1.0, top)
    elems = [scale * e for e in elems]
    last = qcore.I2 - scale * partial
    vals, vecs = np.linalg.eigh((last + last.conj().T) / 2)
    if vals.min() < -1e-9:
        raise ValueError("remainder element is not positive semidefinite")
    last = vecs @ np.diag(np.clip(vals, 0, None)) @ vecs.conj().T
    return elems + [last]


def _povm_width(outcomes: int, classical: bool) -> int:
    return (outcomes - 1) * (2 if classical else 8)


class _Problem:
    def __init__(self, objective: str, classical: bool = False):
        self.objective = objective
        self.classical = classical
        if objective == "single":
            self.contexts = [(0, 2), (1, 2)]
            self.evaluate = single_guessing_value
            self.bound = P_CLASSICAL if classical else P_Q
        elif objective == "double":
            self.contexts = [("joint", 4)]
            self.evaluate = double_guessing_value
            self.bound = M
        else:
            raise ValueError(f"unknown objective {objective!r}")
        self.state_width = 1 if classical else 3
        self.dim = 4 * self.state_width + sum(_povm_width(m, classical) for _, m in self.contexts)
        self.max_seen = -np.inf
        self.evaluations = 0

    def decode(self, v: np.ndarray) -> StrategyParams:
        w = self.state_width
        if self.classical:
            bloch = np.array([[0.0, 0.0, float(np.clip(z, -1, 1))] for z in v[:4]])
        else:
            bloch = np.array([_ball(v[3 * i:3 * i + 3]) for i in range(4)])
        pos = 4 * w
        povms = {}
        for ctx, m in self.contexts:
            width = _povm_width(m, self.classical)
            povms[ctx] = decode_povm(v[pos:pos + width], m, self.classical)
            pos += width
        return StrategyParams(bloch, povms)

    def loss(self, v: np.ndarray) -> float:
        value = self.evaluate(self.decode(v))
        self.evaluations += 1
        if value > self.max_seen:
            self.max_seen = value
        return -value


def polish_states(s: StrategyParams, objective: str) -> StrategyParams:
    """Replace each state by the best pure state for the fixed measurements (top eigenvector)."""
    bloch = np.empty((4, 3))
    for i, (y0, y1) in enumerate(BITS2):
        if objective == "single":
            op = s.povms[0][y0] + s.povms[1][y1]
        else:
            op = sum(e * ((g0 == y0) + (g1 == y1))
                     for (g0, g1), e in zip(BITS2, s.povms["joint"]))
        vals, vecs = np.linalg.eigh((op + op.conj().T) / 2)
        psi = vecs[:, -1]
        rho = np.outer(psi, psi.conj())
        bloch[i] = [np.trace(rho @ p).real for p in qcore.PAULIS]
    return StrategyParams(bloch, s.povms)


def honest_params() -> np.ndarray:
    """Encoding of the honest strategy (Wiesner states, corrected measurement pairing)."""
    v = [honest_source(y0, y1).state.bloch for y0, y1 in BITS2]
    for x in (0, 1):
        proj = qcore.observable_from_direction(HONEST_DIRECTIONS[x]).projectors[+1]
        v.append(np.concatenate([proj.real.ravel(), proj.imag.ravel()]))
    return np.concatenate(v)


def _run(problem: _Problem, x0: np.ndarray, maxiter: int, tol: float):
    res = minimize(problem.loss, x0, method="Nelder-Mead",
                   options={"maxiter": maxiter, "maxfev": 2 * maxiter, "xatol": 1e-10,
                            "fatol": tol, "adaptive": True})
    return res


def _maximize(objective: str, restarts: int, tolerance: float, seed: int, maxiter: int,
              classical: bool, workers: int) -> OptimizationReport:
    if restarts < 1:
        raise ValueError("restarts must be >= 1")

    def one(i: int):
        problem = _Problem(objective, classical)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        if i == 0 and objective == "single" and not classical:
            x0 = honest_params()
        else:
            x0 = rng.normal(size=problem.dim)
        res = _run(problem, x0, maxiter, tolerance)
        strat = problem.decode(res.x)
        if not classical:
            polished = polish_states(strat, objective)
            if problem.evaluate(polished) >= problem.evaluate(strat):
                strat = polished
        value = problem.evaluate(strat)
        return value, strat, bool(res.success), max(problem.max_seen, value), problem.evaluations

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, range(restarts)))
    else:
        results = [one(i) for i in range(restarts)]
    best = max(results, key=lambda r: r[0])
    bound = P_CLASSICAL if classical else (P_Q if objective == "single" else M)
    return OptimizationReport(
        objective=objective + ("_classical" if classical else ""),
        best_value=float(best[0]),
        best_strategy=best[1],
        restarts=restarts,
        converged=best[2],
        bound=bound,
        max_evaluated=float(max(r[3] for r in results)),
        evaluations=int(sum(r[4] for r in results)),
    )


def maximize_single_guessing(restarts: int = DEFAULT_RESTARTS, tolerance: float = DEFAULT_TOL,
                             seed: int = 0, maxiter: int = DEFAULT_MAXITER,
                             classical: bool = False, workers: int = 1) -> OptimizationReport:
    """Best (1/8) sum P(a = y_x) over qubit states and two binary POVMs.

    With ``classical=True`` states and measurements are restricted to be
    diagonal in one basis.
    """
    return _maximize("single", restarts, tolerance, seed, maxiter, classical, workers)


def maximize_double_guessing(restarts: int = DEFAULT_RESTARTS, tolerance: float = DEFAULT_TOL,
                             seed: int = 0, maxiter: int = DEFAULT_MAXITER,
                             workers: int = 1) -> OptimizationReport:
    """Best P(g0 = y0) + P(g1 = y1) over qubit states and one 4-outcome POVM."""
    return _maximize("double", restarts, tolerance, seed, maxiter, False, workers)


# --- reference strategies and oracles ---------------------------------------------


def honest_strategy() -> StrategyParams:
    return _Problem("single").decode(honest_params())


def random_strategy(rng: np.random.Generator, objective: str = "double") -> StrategyParams:
    problem = _Problem(objective)
    return problem.decode(rng.normal(size=problem.dim))


def constant_guess_strategy() -> StrategyParams:
    """Maximally mixed states and a POVM that always outputs (0, 0)."""
    zero = np.zeros((2, 2), dtype=complex)
    return StrategyParams(np.zeros((4, 3)), {"joint": [qcore.I2.copy(), zero, zero, zero.copy()]})


def uniform_output_strategy() -> StrategyParams:
    return StrategyParams(np.zeros((4, 3)), {"joint": [qcore.I2 / 4 for _ in range(4)]})


def grid_single_guessing(step_deg: float = 0.5) -> tuple[float, float]:
    """Grid oracle in the x-z plane: projective measurements and pure states on a step_deg grid.

    The value is invariant under rotating everything about the y axis, so the
    x = 0 measurement is pinned along +z and only the relative angle of the
    x = 1 measurement is scanned.  Returns (best value, best relative angle in degrees).
    """
    angles = np.deg2rad(np.arange(0.0, 360.0, step_deg))
    r = np.stack([np.sin(angles), np.zeros_like(angles), np.cos(angles)], axis=1)
    n0 = np.array([0.0, 0.0, 1.0])
    best, best_phi = -np.inf, 0.0
    for phi in angles:
        n1 = np.array([np.sin(phi), 0.0, np.cos(phi)])
        total = 0.0
        for y0, y1 in BITS2:
            s0 = 1 - 2 * y0
            s1 = 1 - 2 * y1
            score = (1 + s0 * r @ n0) / 2 + (1 + s1 * r @ n1) / 2
            total += score.max()
        value = total / 8
        if value > best:
            best, best_phi = value, float(np.rad2deg(phi))
    return float(best), best_phi


def classical_single_guessing_exhaustive() -> float:
    """Best single-guessing score over all deterministic one-bit encodings and decodings."""
    best = 0.0
    for enc in itertools.product((0, 1), repeat=4):
        for dec in itertools.product((0, 1), repeat=4):
            hits = sum(dec[2 * x + enc[2 * y0 + y1]] == (y0, y1)[x]
                       for (y0, y1), x in itertools.product(BITS2, (0, 1)))
            best = max(best, hits / 8)
    return best
