"""Attacks on the money scheme and the collusion-box model of a two-holder forgery.

A collusion box is the per-round conditional law P(a_A, a_F | y0, y1, x_A, x_F)
shared by two cooperating holders, Alice (A) and Frederick (F), who try to get
the same note accepted at two branches.  Tables are indexed
``[y0, y1, x_A, x_F, a_A, a_F]``; the flat 64-entry order used in JSON is the
C-order ravel of that array, i.e. (y0, y1, x_A, x_F) lexicographic by
(a_A, a_F) lexicographic.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import binom

from . import qcore
from .protocol import (
    FORMAT, HONEST_DIRECTIONS, Banknote, RoundCarrier, SecretKey, _check_format,
    honest_source, mint, wiesner_basis_value,
)
from .qcore import Povm

BITS2 = ((0, 0), (0, 1), (1, 0), (1, 1))


# --- collusion boxes ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CollusionBox:
    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table, dtype=float).reshape(2, 2, 2, 2, 2, 2)
        if np.any(t < -1e-15):
            raise ValueError("collusion box has negative entries")
        sums = t.sum(axis=(4, 5))
        if not np.allclose(sums, 1.0, atol=1e-12, rtol=0):
            raise ValueError("collusion box outputs do not sum to 1 for every input")
        t = np.clip(t, 0.0, None)
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    def p(self, a_a, a_f, y0, y1, x_a, x_f) -> float:
        return float(self.table[y0, y1, x_a, x_f, a_a, a_f])

    def flat(self) -> np.ndarray:
        return self.table.reshape(64)

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "type": "collusion_box",
            "order": "rows (y0,y1,x_A,x_F) lexicographic; columns (a_A,a_F) lexicographic",
            "table": self.flat().tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CollusionBox":
        _check_format(d, "collusion_box")
        table = np.asarray(d["table"], dtype=float)
        if table.size != 64:
            raise ValueError("collusion box table must have 64 entries")
        return cls(table)

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    # marginal helpers
    def alice_correct(self) -> np.ndarray:
        """P(a_A = y_{x_A} | y0, y1, x_A, x_F) as a (2,2,2,2) array."""
        out = np.empty((2, 2, 2, 2))
        for y0, y1, xa, xf in itertools.product((0, 1), repeat=4):
            target = (y0, y1)[xa]
            out[y0, y1, xa, xf] = self.table[y0, y1, xa, xf, target, :].sum()
        return out

    def frederick_correct(self, against_own: bool = True) -> np.ndarray:
        """P(a_F = y_{x_F} | ...), or P(a_F = y_{x_A} | ...) when against_own is False."""
        out = np.empty((2, 2, 2, 2))
        for y0, y1, xa, xf in itertools.product((0, 1), repeat=4):
            target = (y0, y1)[xf if against_own else xa]
            out[y0, y1, xa, xf] = self.table[y0, y1, xa, xf, :, target].sum()
        return out


def uniform_box() -> CollusionBox:
    return CollusionBox(np.full((2,) * 6, 0.25))


def deterministic_box(fn) -> CollusionBox:
    """Box whose outputs are fn(y0, y1, x_A, x_F) -> (a_A, a_F) with certainty."""
    t = np.zeros((2,) * 6)
    for y0, y1, xa, xf in itertools.product((0, 1), repeat=4):
        aa, af = fn(y0, y1, xa, xf)
        t[y0, y1, xa, xf, aa, af] = 1.0
    return CollusionBox(t)


def random_box(rng: np.random.Generator) -> CollusionBox:
    t = rng.dirichlet(np.ones(4), size=16).reshape((2,) * 6)
    return CollusionBox(t)


def copy_box() -> CollusionBox:
    """Alice measures honestly; Frederick repeats her answer."""
    t = np.zeros((2,) * 6)
    for (y0, y1), xa, xf in itertools.product(BITS2, (0, 1), (0, 1)):
        r = honest_source(y0, y1).state.bloch
        p0 = float(qcore.plus_probability(r, HONEST_DIRECTIONS[xa]))
        t[y0, y1, xa, xf, 0, 0] = p0
        t[y0, y1, xa, xf, 1, 1] = 1.0 - p0
    return CollusionBox(t)


@dataclass(frozen=True, eq=False)
class QuantumCollusionStrategy:
    """Qubit states indexed by (y0, y1) and, per (x_A, x_F), a 4-outcome POVM labelled (a_A, a_F)."""

    states: dict
    povms: dict

    def __post_init__(self):
        if set(self.states) != set(BITS2) or set(self.povms) != set(BITS2):
            raise ValueError("need states for all (y0,y1) and POVMs for all (x_A,x_F)")
        for povm in self.povms.values():
            if not isinstance(povm, Povm) or set(povm.labels) != set(BITS2):
                raise ValueError("each POVM must have outcomes labelled (a_A, a_F)")

    def to_dict(self) -> dict:
        def enc(m):
            return [[[float(v.real), float(v.imag)] for v in row] for row in m]
        return {
            "format": FORMAT,
            "type": "quantum_strategy",
            "states": {f"{y0}{y1}": list(map(float, self.states[(y0, y1)].bloch)) for y0, y1 in BITS2},
            "povms": {
                f"{xa}{xf}": {f"{aa}{af}": enc(p.element((aa, af))) for aa, af in BITS2}
                for (xa, xf), p in self.povms.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuantumCollusionStrategy":
        _check_format(d, "quantum_strategy")

        def dec(m):
            return np.array([[complex(re, im) for re, im in row] for row in m])
        states = {(int(k[0]), int(k[1])): qcore.bloch_to_state(v) for k, v in d["states"].items()}
        povms = {}
        for k, elems in d["povms"].items():
            labels = [(int(o[0]), int(o[1])) for o in elems]
            povms[(int(k[0]), int(k[1]))] = Povm([dec(elems[o]) for o in elems], labels)
        return cls(states, povms)


def box_from_quantum_strategy(s: QuantumCollusionStrategy) -> CollusionBox:
    t = np.zeros((2,) * 6)
    for (y0, y1), (xa, xf) in itertools.product(BITS2, BITS2):
        for aa, af in BITS2:
            t[y0, y1, xa, xf, aa, af] = qcore.born(s.states[(y0, y1)], s.povms[(xa, xf)], (aa, af))
    # born() clamps each entry; renormalize away the last-ulp drift
    t /= t.sum(axis=(4, 5), keepdims=True)
    return CollusionBox(t)


def random_povm(rng: np.random.Generator, labels, rank_one: bool = False) -> Povm:
    """Random POVM: E_k = S^-1/2 A_k S^-1/2 with S = sum A_k for random positive A_k."""
    mats = []
    for _ in labels:
        g = rng.normal(size=(2, 1 if rank_one else 2)) + 1j * rng.normal(size=(2, 1 if rank_one else 2))
        mats.append(g @ g.conj().T)
    s = sum(mats)
    vals, vecs = np.linalg.eigh(s)
    s_inv_half = vecs @ np.diag(vals ** -0.5) @ vecs.conj().T
    elems = [s_inv_half @ a @ s_inv_half for a in mats]
    elems = [(e + e.conj().T) / 2 for e in elems]
    elems[-1] = qcore.I2 - sum(elems[:-1])
    return Povm(elems, labels)


def random_bloch(rng: np.random.Generator, pure: bool = False) -> np.ndarray:
    v = rng.normal(size=3)
    v /= np.linalg.norm(v)
    return v if pure else v * rng.random() ** (1 / 3)


def random_quantum_strategy(rng: np.random.Generator, pure: bool = True) -> QuantumCollusionStrategy:
    states = {y: qcore.bloch_to_state(random_bloch(rng, pure)) for y in BITS2}
    povms = {x: random_povm(rng, BITS2) for x in BITS2}
    return QuantumCollusionStrategy(states, povms)


def honest_copy_strategy() -> QuantumCollusionStrategy:
    """The copy attack written as a quantum strategy: honest states, Alice's projectors, a_F = a_A."""
    states = {y: honest_source(*y).state for y in BITS2}
    povms = {}
    for xa, xf in BITS2:
        obs = qcore.observable_from_direction(HONEST_DIRECTIONS[xa])
        zero = np.zeros((2, 2))
        povms[(xa, xf)] = Povm([obs.projectors[+1], zero, zero, obs.projectors[-1]], BITS2)
    return QuantumCollusionStrategy(states, povms)


# --- per-round expectations -----------------------------------------------------


@dataclass(frozen=True)
class CounterRates:
    """Per-round expected guess indicators, averaged over uniform (y0, y1, x_A).

    ``x_alice``/``x_frederick`` are for rounds with x_A == x_F (both judged
    against y_{x_A}); ``y_alice``/``y_frederick`` for x_A != x_F (Frederick
    judged against the other bit).
    """

    x_alice: float
    x_frederick: float
    y_alice: float
    y_frederick: float

    @property
    def same_question(self) -> float:
        return self.x_alice + self.x_frederick

    @property
    def different_question(self) -> float:
        return self.y_alice + self.y_frederick


def counter_rates(box: CollusionBox) -> CounterRates:
    ca = box.alice_correct()
    cf = box.frederick_correct(against_own=True)
    xa_, xf_, ya_, yf_ = [], [], [], []
    for y0, y1, xa in itertools.product((0, 1), repeat=3):
        xa_.append(ca[y0, y1, xa, xa])
        xf_.append(cf[y0, y1, xa, xa])
        ya_.append(ca[y0, y1, xa, 1 - xa])
        yf_.append(cf[y0, y1, xa, 1 - xa])
    return CounterRates(*(float(np.mean(v)) for v in (xa_, xf_, ya_, yf_)))


def single_party_rate(box: CollusionBox) -> tuple[float, float]:
    """Average per-round success of Alice and of Frederick over uniform inputs."""
    return float(box.alice_correct().mean()), float(box.frederick_correct().mean())


# --- XOR scenario -----------------------------------------------------------------

PAIR_COLUMNS = ("y0", "y1", "x_A", "a_A", "x_F", "a_F")
XOR_COLUMNS = ("y0", "y1", "x_A", "a_A", "x_xor", "a_F")


@dataclass(frozen=True, eq=False)
class PairTranscript:
    """Two-holder record S: rows (y0, y1, x_A, a_A, x_F, a_F)."""

    data: np.ndarray

    def __post_init__(self):
        d = np.array(self.data, dtype=np.uint8).reshape(-1, 6)
        if np.any(d > 1):
            raise ValueError("transcript entries must be bits")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other):
        return type(other) is type(self) and np.array_equal(self.data, other.data)

    def __hash__(self):
        return hash((type(self).__name__, self.data.tobytes()))


class XorTranscript(PairTranscript):
    """Transformed record S': rows (y0, y1, x_A, a_A, x_A ^ x_F, a_F)."""


def xor_transform(s: PairTranscript) -> PairTranscript:
    """Swap x_F for x_A ^ x_F (or back).  Involutive: xor_transform(xor_transform(s)) == s."""
    d = s.data.copy()
    d[:, 4] ^= d[:, 2]
    return PairTranscript(d) if isinstance(s, XorTranscript) else XorTranscript(d)


def _pair_counts(s: PairTranscript) -> tuple[int, int]:
    d = s.data.astype(int)
    y = d[:, :2]
    rows = np.arange(len(d))
    x_f = d[:, 4] if not isinstance(s, XorTranscript) else d[:, 4] ^ d[:, 2]
    alice = int(np.count_nonzero(d[:, 3] == y[rows, d[:, 2]]))
    fred = int(np.count_nonzero(d[:, 5] == y[rows, x_f]))
    return alice, fred


def in_forgery_set(s: PairTranscript, theta: float) -> bool:
    """Both holders strictly above theta * n.  Works for S (set F) and S' (set F')."""
    alice, fred = _pair_counts(s)
    return alice > theta * s.n and fred > theta * s.n


@dataclass(frozen=True)
class GuessCounters:
    xbar_A: int
    xbar_F: int
    ybar_A: int
    ybar_F: int
    d_size: int
    dbar_size: int

    @property
    def zbar(self) -> int:
        return self.xbar_A + self.xbar_F + self.ybar_A + self.ybar_F

    @property
    def n(self) -> int:
        return self.d_size + self.dbar_size


def guess_counters(s: XorTranscript) -> GuessCounters:
    """Count correct guesses on D (x_xor = 0) and its complement."""
    if not isinstance(s, XorTranscript):
        raise TypeError("guess_counters expects an XOR-scenario transcript")
    d = s.data.astype(int)
    rows = np.arange(len(d))
    y = d[:, :2]
    xa, aa, xx, af = d[:, 2], d[:, 3], d[:, 4], d[:, 5]
    in_d = xx == 0
    alice_ok = aa == y[rows, xa]
    fred_same = af == y[rows, xa]
    fred_other = af == y[rows, 1 - xa]
    return GuessCounters(
        xbar_A=int(np.count_nonzero(alice_ok & in_d)),
        xbar_F=int(np.count_nonzero(fred_same & in_d)),
        ybar_A=int(np.count_nonzero(alice_ok & ~in_d)),
        ybar_F=int(np.count_nonzero(fred_other & ~in_d)),
        d_size=int(np.count_nonzero(in_d)),
        dbar_size=int(np.count_nonzero(~in_d)),
    )


# --- the three joined attacks ---------------------------------------------------


def attack1_source(y0: int, y1: int) -> RoundCarrier:
    """Honest Wiesner qubit plus a hidden classical register holding the basis bit."""
    basis, _ = wiesner_basis_value(y0, y1)
    return RoundCarrier(honest_source(y0, y1).state, hidden=int(basis))


_BASIS_POVMS = (
    Povm((qcore.KET0.matrix, qcore.KET1.matrix), (0, 1)),
    Povm((qcore.KET_PLUS.matrix, qcore.KET_MINUS.matrix), (0, 1)),
)
_WIESNER_STATES = {(0, 0): qcore.KET0, (0, 1): qcore.KET1, (1, 0): qcore.KET_PLUS, (1, 1): qcore.KET_MINUS}


def clone_round(carrier: RoundCarrier, rng: np.random.Generator) -> RoundCarrier:
    """Read the hidden basis, measure in it, re-prepare: exact copy for Wiesner states."""
    if carrier.hidden is None:
        raise ValueError("round has no hidden register to clone from")
    value = qcore.sample_outcome(carrier.state, _BASIS_POVMS[carrier.hidden], rng)
    return RoundCarrier(_WIESNER_STATES[(carrier.hidden, value)], hidden=carrier.hidden)


def attack1_mint_and_clone(key: SecretKey, copies: int, serial: str = "attack1",
                           rng: Optional[np.random.Generator] = None) -> list[Banknote]:
    """Mint a note with hidden basis registers and produce ``copies`` identical notes from it."""
    if copies < 1:
        raise ValueError("copies must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    original = mint(attack1_source, key, serial)
    notes = [original]
    for _ in range(copies - 1):
        notes.append(Banknote(serial, [clone_round(c, rng) for c in original.rounds]))
    return notes


def strip_hidden(note: Banknote) -> Banknote:
    """The dimension-bounded view of a note: the qubits alone."""
    return Banknote(note.serial, [RoundCarrier(c.state) for c in note.rounds])


def attack2_source(y0: int, y1: int) -> RoundCarrier:
    """Pauli-encoded half of a singlet; the other half stays with the adversary."""
    pair = qcore.encode_pair(y0, y1)
    return RoundCarrier(pair.reduced_first(), partner=pair)


def attack2_superdense(key: SecretKey, rng: Optional[np.random.Generator] = None) -> SecretKey:
    """Recover the whole key by Bell-measuring each carried half with the adversary's half."""
    note = mint(attack2_source, key, "attack2")
    recovered = [qcore.bell_measure(c.partner, rng) for c in note.rounds]
    return SecretKey(np.array(recovered, dtype=np.uint8))


@dataclass(frozen=True)
class ClassicalStrategy:
    """One classical bit m = encode[y0, y1] per round; guess a = decode[x, m]."""

    encode: tuple
    decode: tuple

    def message(self, y0, y1):
        return np.asarray(self.encode, dtype=np.uint8).reshape(2, 2)[y0, y1]

    def answer(self, x, m):
        return np.asarray(self.decode, dtype=np.uint8).reshape(2, 2)[x, m]

    def success(self) -> float:
        """Exact per-round probability a = y_x over uniform (y0, y1, x)."""
        hits = 0
        for (y0, y1), x in itertools.product(BITS2, (0, 1)):
            hits += int(self.answer(x, self.message(y0, y1)) == (y0, y1)[x])
        return hits / 8

    def box(self) -> CollusionBox:
        """Both holders read the same copied bit and decode with their own challenge."""
        return deterministic_box(lambda y0, y1, xa, xf: (
            int(self.answer(xa, self.message(y0, y1))), int(self.answer(xf, self.message(y0, y1)))))

    def source(self, y0: int, y1: int) -> RoundCarrier:
        return RoundCarrier(qcore.KET1 if self.message(y0, y1) else qcore.KET0)

    def terminal(self, note: Banknote, challenge, rng) -> np.ndarray:
        m = (note.bloch[:, 2] < 0).astype(np.uint8)
        return self.answer(np.asarray(challenge, dtype=int), m).astype(np.uint8)


def all_classical_strategies():
    for enc in itertools.product((0, 1), repeat=4):
        for dec in itertools.product((0, 1), repeat=4):
            yield ClassicalStrategy(enc, dec)


def best_classical_strategy() -> ClassicalStrategy:
    return max(all_classical_strategies(), key=ClassicalStrategy.success)


# send the Wiesner value bit y1, answer it regardless of the question
ATTACK3 = ClassicalStrategy(encode=(0, 1, 0, 1), decode=(0, 1, 0, 1))


def attack3_classical(key: SecretKey, serial: str = "attack3") -> tuple[Banknote, ClassicalStrategy]:
    """Mint a note of classical states |v> carrying the Wiesner value bit."""
    return mint(ATTACK3.source, key, serial), ATTACK3


def sdi_rejection_lower_bound(rate: float, theta: float, n: int) -> float:
    """Hoeffding lower bound on rejection for per-round success ``rate`` < theta."""
    gap = theta - rate
    if gap <= 0:
        return 0.0
    return max(0.0, 1.0 - 2.0 * np.exp(-2.0 * gap * gap * n))


# --- device-independent no-go ------------------------------------------------------


@dataclass(frozen=True)
class NoGoResult:
    single_acceptance: float
    joint_acceptance: float
    empirical_joint: Optional[float] = None
    empirical_alice: Optional[float] = None
    empirical_frederick: Optional[float] = None
    trials: int = 0


def honest_law() -> np.ndarray:
    """P(a | y0, y1, x) of the honest device as a (2,2,2,2) array."""
    law = np.zeros((2, 2, 2, 2))
    for (y0, y1), x in itertools.product(BITS2, (0, 1)):
        p0 = float(qcore.plus_probability(honest_source(y0, y1).state.bloch, HONEST_DIRECTIONS[x]))
        law[y0, y1, x] = (p0, 1 - p0)
    return law


def nogo_demo(law: np.ndarray, theta: float, n: int, trials: int = 0,
              rng: Optional[np.random.Generator] = None) -> NoGoResult:
    """Both branches face an independent copy of the same honest device (product device H1 x H1).

    With uniform inputs each round succeeds independently with the law's
    average success, so one branch accepts with a binomial tail probability
    and both accept with its square.  ``trials`` > 0 adds a Monte Carlo check.
    """
    law = np.asarray(law, dtype=float).reshape(2, 2, 2, 2)
    success = np.mean([law[y0, y1, x, (y0, y1)[x]] for (y0, y1), x in itertools.product(BITS2, (0, 1))])
    need = math.ceil(theta * n)
    single = float(binom.sf(need - 1, n, success)) if need > 0 else 1.0
    if trials <= 0:
        return NoGoResult(single, single * single)
    rng = np.random.default_rng() if rng is None else rng
    p_one = law[..., 1]
    acc = np.empty((trials, 2), dtype=bool)
    for t in range(trials):
        y = rng.integers(0, 2, size=(n, 2))
        for branch in range(2):
            x = rng.integers(0, 2, size=n)
            a = rng.random(n) < p_one[y[:, 0], y[:, 1], x]
            correct = np.count_nonzero(a == y[np.arange(n), x].astype(bool))
            acc[t, branch] = correct >= theta * n
    return NoGoResult(single, single * single, float(np.mean(acc.all(axis=1))),
                      float(acc[:, 0].mean()), float(acc[:, 1].mean()), trials)
