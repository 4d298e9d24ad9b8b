"""Experiment orchestration: Monte Carlo forgery trials, exact small-n enumeration,
the XOR-measure check, the concentration audit and parameter sweeps.

Randomness: every trial draws from its own stream
``SeedSequence(seed, spawn_key=(trial, role))``, so results do not depend on how
many worker threads run the trials.
"""

from __future__ import annotations

import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.stats import binomtest

from . import adversary, bounds, protocol
from .adversary import CollusionBox
from .protocol import BankRegistry, Banknote, RoundCarrier

STRATEGIES = ("honest", "attack1", "attack2", "attack3", "copy_box", "uniform_box", "box", "quantum")
VERIFIERS = ("sdi", "wiesner", "basis_revealing")
MODES = ("at_bank", "at_distance")
MAX_EXACT_N = 4

# stream roles inside one trial
ROLE_KEY, ROLE_MINT, ROLE_ADVERSARY = 0, 1, 2
ROLE_BRANCH = 16


class ConfigError(ValueError):
    """An experiment configuration that cannot be run."""


@dataclass
class ExperimentConfig:
    n: int = 10_000
    theta: float = 0.86
    eta: Optional[float] = None
    k: int = 2
    trials: int = 1000
    seed: int = 0
    strategy: str = "copy_box"
    source_path: Optional[str] = None
    verifier: str = "sdi"
    mode: str = "at_bank"
    liar: str = "identity"
    workers: int = 1
    box: Optional[CollusionBox] = field(default=None, repr=False, compare=False)

    def validate(self) -> None:
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigError("theta must lie in [0, 1]")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; choose from {', '.join(STRATEGIES)}")
        if self.verifier not in VERIFIERS:
            raise ConfigError(f"unknown verifier {self.verifier!r}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown verification mode {self.mode!r}")
        if self.liar not in protocol.LIARS:
            raise ConfigError(f"unknown liar {self.liar!r}")
        if self.strategy in ("box", "quantum") and self.box is None and not self.source_path:
            raise ConfigError(f"strategy {self.strategy!r} needs a source file")
        if self.strategy in ("attack1", "attack2") and self.verifier == "sdi":
            raise ConfigError(
                f"{self.strategy} notes carry more than one qubit per round; the SDI verifier "
                "refuses them (use --verifier wiesner or basis_revealing)")
        if self.box is not None and self.verifier != "sdi":
            raise ConfigError("collusion boxes are defined against the SDI verifier only")

    def summary(self) -> dict:
        """Fields that determine the results (worker count does not)."""
        d = asdict(self)
        d.pop("box")
        d.pop("workers")
        return d


def load_box(strategy: str, path: Optional[str]) -> CollusionBox:
    if strategy == "copy_box":
        return adversary.copy_box()
    if strategy == "uniform_box":
        return adversary.uniform_box()
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if strategy == "box":
        return CollusionBox.from_dict(doc)
    return adversary.box_from_quantum_strategy(adversary.QuantumCollusionStrategy.from_dict(doc))


def resolve_box(cfg: ExperimentConfig) -> Optional[CollusionBox]:
    """The collusion box the config describes, or None for protocol-level strategies."""
    if cfg.box is not None:
        return cfg.box
    if cfg.strategy in ("copy_box", "uniform_box", "box", "quantum"):
        return load_box(cfg.strategy, cfg.source_path)
    return None


def trial_rng(seed: int, trial: int, role: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial, role)))


# --- results --------------------------------------------------------------------


def wilson_interval(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    ci = binomtest(successes, trials).proportion_ci(confidence_level=level, method="wilson")
    est = successes / trials
    return min(float(ci.low), est), max(float(ci.high), est)


@dataclass(frozen=True)
class TrialOutcome:
    counts: tuple
    accepted: tuple

    def strict(self, theta: float, n: int) -> list[bool]:
        return [c > theta * n for c in self.counts]


@dataclass(frozen=True)
class ForgeryEstimate:
    """Forgery = at least two branches above theta * n (strict, as in the forgery event)."""

    successes: int
    trials: int
    estimate: float
    ci: tuple
    bound: Optional[float]
    bound_trivial: bool
    successes_nonstrict: int
    single_acceptance: float
    mean_rate: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ci"] = list(self.ci)
        return d


def _sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Row-wise draw from (m, c) probability rows; one uniform per row.

    An all-zero row (conditioning on an impossible event) is treated as uniform.
    """
    empty = probs.sum(axis=1) <= 0
    if empty.any():
        probs = probs.copy()
        probs[empty] = 1.0
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(len(probs)) * cdf[:, -1]
    return np.minimum((u[:, None] >= cdf).sum(axis=1), probs.shape[1] - 1)


def _answers_to_counts(y: np.ndarray, x: np.ndarray, a: np.ndarray) -> int:
    return int(np.count_nonzero(a == y[np.arange(len(y)), x]))


def _box_trial(box: CollusionBox, cfg: ExperimentConfig, trial: int) -> TrialOutcome:
    """One trial of a qubit-by-qubit collusion attack across k branches.

    Branch 0 is Alice.  Branch 1 draws (a_A, a_F) jointly from the box; every
    further branch draws its answer from the box's conditional law given a_A,
    which reproduces the box exactly whenever k = 2.
    """
    n, k = cfg.n, cfg.k
    y = trial_rng(cfg.seed, trial, ROLE_KEY).integers(0, 2, size=(n, 2))
    xs = [trial_rng(cfg.seed, trial, ROLE_BRANCH + j).integers(0, 2, size=n) for j in range(k)]
    rng = trial_rng(cfg.seed, trial, ROLE_ADVERSARY)
    t = box.table
    partner = xs[1] if k > 1 else xs[0]
    joint = t[y[:, 0], y[:, 1], xs[0], partner].reshape(n, 4)
    pick = _sample_categorical(joint, rng)
    answers = [pick >> 1]
    if k > 1:
        answers.append(pick & 1)
    for j in range(2, k):
        cond = t[y[:, 0], y[:, 1], xs[0], xs[j], answers[0], :]
        answers.append(_sample_categorical(cond, rng))
    liar = protocol.LIARS[cfg.liar] if cfg.mode == "at_distance" else protocol.identity_liar
    counts = []
    for j in range(k):
        reported = liar(xs[j], answers[j].astype(np.uint8), rng)
        counts.append(_answers_to_counts(y, xs[j], reported))
    return TrialOutcome(tuple(counts), tuple(c >= cfg.theta * n for c in counts))


def _verify(note: Banknote, registry: BankRegistry, branch: int, terminal, cfg: ExperimentConfig,
            rng: np.random.Generator):
    if cfg.verifier == "wiesner":
        return protocol.verify_wiesner(note, registry, branch, cfg.theta, rng)[0]
    if cfg.verifier == "basis_revealing":
        return protocol.verify_basis_revealing(note, registry, branch, terminal, cfg.theta, rng)[0]
    if cfg.mode == "at_distance":
        return protocol.verify_at_distance(note, registry, branch, terminal,
                                           protocol.LIARS[cfg.liar], cfg.theta, rng)[0]
    return protocol.verify_at_bank(note, registry, branch, terminal, cfg.theta, rng)[0]


_MIXED = RoundCarrier(protocol.qcore.MAXIMALLY_MIXED)


def _protocol_trial(cfg: ExperimentConfig, trial: int) -> TrialOutcome:
    """One trial through the full mint / verify path for the named strategies."""
    n, k = cfg.n, cfg.k
    serial = f"trial-{trial}"
    registry = BankRegistry(k)
    key = protocol.generate_key(n, trial_rng(cfg.seed, trial, ROLE_KEY))
    adv = trial_rng(cfg.seed, trial, ROLE_ADVERSARY)
    registry.register(serial, key)

    honest_term = (protocol.basis_terminal if cfg.verifier == "basis_revealing"
                   else protocol.honest_terminal_vectorized)
    if cfg.strategy == "honest":
        notes = [protocol.mint(protocol.honest_source, key, serial)]
        # the other holders have nothing but a blank qubit per round
        notes += [Banknote(serial, [_MIXED] * n) for _ in range(k - 1)]
        terminals = [honest_term] * k
    elif cfg.strategy == "attack1":
        notes = adversary.attack1_mint_and_clone(key, k, serial, adv)
        terminals = [protocol.basis_terminal] * k
    elif cfg.strategy == "attack2":
        stolen = adversary.attack2_superdense(key, adv)
        notes = [protocol.mint(protocol.honest_source, stolen, serial) for _ in range(k)]
        terminals = [honest_term] * k
    elif cfg.strategy == "attack3":
        note, strat = adversary.attack3_classical(key, serial)
        notes = [Banknote(serial, note.rounds) for _ in range(k)]
        if cfg.verifier == "basis_revealing":
            terminals = [lambda nt, basis, rng: (nt.bloch[:, 2] < 0).astype(np.uint8)] * k
        else:
            terminals = [strat.terminal] * k
    else:
        raise ConfigError(f"strategy {cfg.strategy!r} is not a protocol-level strategy")

    counts, accepted = [], []
    for j, (note, term) in enumerate(zip(notes, terminals)):
        res = _verify(note, registry, j, term, cfg, trial_rng(cfg.seed, trial, ROLE_BRANCH + j))
        counts.append(res.guess_count)
        accepted.append(res.accepted)
    return TrialOutcome(tuple(counts), tuple(accepted))


def run_trials(cfg: ExperimentConfig) -> list[TrialOutcome]:
    cfg.validate()
    box = resolve_box(cfg)
    if box is not None:
        def one(t):
            return _box_trial(box, cfg, t)
    else:
        def one(t):
            return _protocol_trial(cfg, t)
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            return list(pool.map(one, range(cfg.trials)))
    return [one(t) for t in range(cfg.trials)]


def analytic_bound(cfg: ExperimentConfig) -> tuple[Optional[float], bool]:
    eta = bounds.ETA_MAX if cfg.eta is None else cfg.eta
    try:
        return (bounds.forgery_bound(cfg.n, eta, cfg.k),
                bounds.forgery_bound_trivial(cfg.n, eta, cfg.k))
    except ValueError:
        return None, True


def summarize(outcomes: Sequence[TrialOutcome], cfg: ExperimentConfig) -> ForgeryEstimate:
    trials = len(outcomes)
    strict = [sum(o.strict(cfg.theta, cfg.n)) >= 2 for o in outcomes]
    nonstrict = [sum(o.accepted) >= 2 for o in outcomes]
    successes = int(sum(strict))
    bound, trivial = analytic_bound(cfg)
    return ForgeryEstimate(
        successes=successes,
        trials=trials,
        estimate=successes / trials,
        ci=wilson_interval(successes, trials),
        bound=bound,
        bound_trivial=trivial,
        successes_nonstrict=int(sum(nonstrict)),
        single_acceptance=float(np.mean([o.accepted[0] for o in outcomes])),
        mean_rate=float(np.mean([o.counts[0] for o in outcomes]) / cfg.n),
    )


def monte_carlo_forgery(cfg: ExperimentConfig) -> ForgeryEstimate:
    """Estimate the probability that two of the k branches accept the same serial.

    With k > 2 the adversary verifies at every branch and wins if any pair
    accepts.
    """
    return summarize(run_trials(cfg), cfg)


# --- exact enumeration ------------------------------------------------------------


def _round_table(box: CollusionBox, xor: bool = False):
    """Per-round weights and guess indicators over the 64 tuples (y0, y1, x_A, x, a_A, a_F).

    ``x`` is Frederick's question x_F, or x_A ^ x_F in the XOR scenario.
    """
    w = np.empty(64)
    ca = np.empty(64, dtype=np.int64)
    cf = np.empty(64, dtype=np.int64)
    for i, (y0, y1, xa, x, aa, af) in enumerate(itertools.product((0, 1), repeat=6)):
        xf = xa ^ x if xor else x
        w[i] = box.table[y0, y1, xa, xf, aa, af] / 16.0
        ca[i] = aa == (y0, y1)[xa]
        cf[i] = af == (y0, y1)[xf]
    return w, ca, cf


def _check_n(n: int, limit: int):
    if not 1 <= n <= limit:
        raise ValueError(f"exact enumeration needs 1 <= n <= {limit}, got {n}")


def _enumerate(w, ca, cf, n: int, theta: float) -> float:
    weights, alice, fred = w, ca, cf
    for _ in range(n - 1):
        weights = np.multiply.outer(weights, w).ravel()
        alice = np.add.outer(alice, ca).ravel()
        fred = np.add.outer(fred, cf).ravel()
    mask = (alice > theta * n) & (fred > theta * n)
    return float(weights[mask].sum())


def exact_forgery_small_n(box: CollusionBox, n: int, theta: float) -> float:
    """Exact P(F) under the product measure of the box, summing all 64^n weighted tuples."""
    _check_n(n, MAX_EXACT_N)
    return _enumerate(*_round_table(box), n, theta)


def exact_forgery_reference(box: CollusionBox, n: int, theta: float) -> float:
    """Independent pure-Python enumerator over explicit transcripts (slow; n <= 3)."""
    _check_n(n, 3)
    rounds = list(itertools.product((0, 1), repeat=6))
    total = 0.0
    for combo in itertools.product(rounds, repeat=n):
        weight = 1.0
        for y0, y1, xa, xf, aa, af in combo:
            weight *= box.p(aa, af, y0, y1, xa, xf) / 16.0
        if weight == 0.0:
            continue
        s = adversary.PairTranscript(np.array([[y0, y1, xa, aa, xf, af]
                                               for y0, y1, xa, xf, aa, af in combo]))
        if adversary.in_forgery_set(s, theta):
            total += weight
    return total


def exact_forgery_xor(box: CollusionBox, n: int, theta: float) -> float:
    """Exact P(F') under the transformed measure, where Frederick's question is x_A ^ x_F."""
    _check_n(n, MAX_EXACT_N)
    return _enumerate(*_round_table(box, xor=True), n, theta)


def xor_equivalence_test(box: CollusionBox, n: int, theta: float, atol: float = 1e-12) -> bool:
    _check_n(n, 3)
    return abs(exact_forgery_small_n(box, n, theta) - exact_forgery_xor(box, n, theta)) <= atol


# --- concentration audit ---------------------------------------------------------

COUNTER_NAMES = ("xbar_A", "xbar_F", "ybar_A", "ybar_F")


@dataclass(frozen=True)
class AuditReport:
    n: int
    eta: float
    trials: int
    d_size: int
    dbar_size: int
    b_count: float
    expected: dict
    deviation_rates: dict
    epsilons: dict
    p_exceed: float
    epsilon_sum: float
    max_zbar: int
    vacuous: bool

    @property
    def within_bounds(self) -> bool:
        return (self.p_exceed <= min(1.0, self.epsilon_sum)
                and all(self.deviation_rates[c] <= self.epsilons[c] for c in COUNTER_NAMES))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["within_bounds"] = self.within_bounds
        return d


def typical_xor_string(n: int, eta: float, rng: np.random.Generator, max_tries: int = 10_000):
    """Uniform x_xor conditioned on |#zeros/n - 1/2| <= eta (rejection sampling)."""
    for _ in range(max_tries):
        x = rng.integers(0, 2, size=n)
        if abs(np.count_nonzero(x == 0) / n - 0.5) <= eta + 1e-15:
            return x
    raise RuntimeError("could not draw a typical XOR string; eta too small for n")


def concentration_audit(box: CollusionBox, n: int, eta: float, trials: int,
                        seed: int = 0) -> AuditReport:
    """Sample XOR-scenario transcripts at a fixed typical x_xor and compare the guess counters
    with their Hoeffding envelopes.

    A counter deviates when it leaves expectation +/- eta * (size of its round set).
    """
    if n < 1 or trials < 1 or not 0 < eta <= 0.5:
        raise ValueError("need n >= 1, trials >= 1 and 0 < eta <= 1/2")
    x_xor = typical_xor_string(n, eta, trial_rng(seed, 0, ROLE_KEY))
    d_size = int(np.count_nonzero(x_xor == 0))
    dbar_size = n - d_size
    rates = adversary.counter_rates(box)
    expected = {
        "xbar_A": rates.x_alice * d_size, "xbar_F": rates.x_frederick * d_size,
        "ybar_A": rates.y_alice * dbar_size, "ybar_F": rates.y_frederick * dbar_size,
    }
    sizes = {"xbar_A": d_size, "xbar_F": d_size, "ybar_A": dbar_size, "ybar_F": dbar_size}
    eps = {c: bounds.hoeffding_epsilon(eta, sizes[c]) for c in COUNTER_NAMES}
    b_count = bounds.count_bound(n, eta)

    deviations = dict.fromkeys(COUNTER_NAMES, 0)
    exceed = 0
    max_zbar = 0
    t = box.table
    for trial in range(trials):
        rng = trial_rng(seed, trial + 1, ROLE_ADVERSARY)
        y = rng.integers(0, 2, size=(n, 2))
        xa = rng.integers(0, 2, size=n)
        xf = xa ^ x_xor
        pick = _sample_categorical(t[y[:, 0], y[:, 1], xa, xf].reshape(n, 4), rng)
        s = adversary.XorTranscript(np.column_stack([y, xa, pick >> 1, x_xor, pick & 1]))
        g = adversary.guess_counters(s)
        for c in COUNTER_NAMES:
            if abs(getattr(g, c) - expected[c]) > eta * sizes[c]:
                deviations[c] += 1
        exceed += g.zbar > b_count
        max_zbar = max(max_zbar, g.zbar)
    eps_sum = float(sum(eps.values()))
    return AuditReport(
        n=n, eta=eta, trials=trials, d_size=d_size, dbar_size=dbar_size, b_count=b_count,
        expected=expected, deviation_rates={c: v / trials for c, v in deviations.items()},
        epsilons=eps, p_exceed=exceed / trials, epsilon_sum=eps_sum, max_zbar=int(max_zbar),
        vacuous=bool(b_count >= 2 * n or eps_sum >= 1.0),
    )


# --- sweeps -------------------------------------------------------------------------

SWEEP_PARAMETERS = ("n", "eta", "theta", "k")
SWEEP_COLUMNS = ("parameter", "value", "n", "theta", "eta", "k", "beta", "forgery_bound",
                 "bound_trivial", "successes", "trials", "estimate", "ci_lo", "ci_hi",
                 "single_acceptance")


def sweep(parameter: str, values: Sequence[float], cfg: ExperimentConfig,
          empirical: bool = False) -> list[dict]:
    """One row per grid point with the analytic bound and, if asked, a Monte Carlo estimate."""
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"cannot sweep {parameter!r}; choose from {', '.join(SWEEP_PARAMETERS)}")
    values = list(values)
    if not values:
        raise ValueError("sweep range is empty")
    rows = []
    for v in values:
        point = ExperimentConfig(**{**cfg.summary(), parameter: int(v) if parameter in ("n", "k") else float(v)})
        point.box, point.workers = cfg.box, cfg.workers
        eta = bounds.ETA_MAX if point.eta is None else point.eta
        bound, trivial = analytic_bound(point)
        row = dict.fromkeys(SWEEP_COLUMNS, "")
        row.update(parameter=parameter, value=v, n=point.n, theta=point.theta, eta=eta, k=point.k,
                   beta=bounds.beta(eta) if eta >= 0 else "",
                   forgery_bound="" if bound is None else bound, bound_trivial=trivial)
        if empirical:
            est = monte_carlo_forgery(point)
            row.update(successes=est.successes, trials=est.trials, estimate=est.estimate,
                       ci_lo=est.ci[0], ci_hi=est.ci[1], single_acceptance=est.single_acceptance)
        rows.append(row)
    return rows


def parse_range(spec: str) -> list[float]:
    """'start:stop:count' (inclusive linspace) or a comma-separated list."""
    spec = spec.strip()
    if not spec:
        return []
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError("range must be start:stop:count")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 0:
            raise ValueError("range count must be non-negative")
        return np.linspace(start, stop, count).tolist()
    return [float(p) for p in spec.split(",") if p.strip()]
