"""The money scheme: shared keys, minting, verification and transcripts.

Key rounds are pairs (y0, y1).  An honest round carries one of the four
Wiesner states and is verified by asking for one of the two bits, chosen by a
random challenge x; the note is accepted when the count of correct answers
reaches ``theta * n``.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

import numpy as np

from . import qcore
from .qcore import QubitState

FORMAT = "sdi-cash/1"


class ProtocolError(Exception):
    """Base class for protocol rule violations."""


class DuplicateSerial(ProtocolError):
    pass


class UnknownSerial(ProtocolError):
    pass


class NoteConsumed(ProtocolError):
    pass


class AssumptionViolation(ProtocolError):
    """A note exceeds what the semi-device-independent model admits (extra registers, entanglement)."""


# --- keys and carriers --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SecretKey:
    """Per-round bit pairs (y0, y1), stored as an (n, 2) uint8 array."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.array(self.bits, dtype=np.uint8)
        if b.ndim != 2 or b.shape[1] != 2 or b.shape[0] < 1:
            raise ValueError("key must be a non-empty list of bit pairs")
        if np.any(b > 1):
            raise ValueError("key entries must be bits")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def n(self) -> int:
        return self.bits.shape[0]

    @property
    def y0(self) -> np.ndarray:
        return self.bits[:, 0]

    @property
    def y1(self) -> np.ndarray:
        return self.bits[:, 1]

    @property
    def rounds(self) -> list[tuple[int, int]]:
        return [(int(a), int(b)) for a, b in self.bits]

    def __len__(self):
        return self.n

    def __eq__(self, other):
        return isinstance(other, SecretKey) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())

    def to_dict(self, serial: Optional[str] = None) -> dict:
        d = {"format": FORMAT, "type": "key", "rounds": self.bits.tolist()}
        if serial is not None:
            d["serial"] = serial
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SecretKey":
        _check_format(d, "key")
        return cls(np.array(d["rounds"], dtype=np.int64))


def generate_key(n: int, rng: np.random.Generator) -> SecretKey:
    """2n independent uniform bits."""
    if n < 1:
        raise ValueError("key length must be at least 1")
    return SecretKey(rng.integers(0, 2, size=(n, 2), dtype=np.uint8))


@dataclass(frozen=True)
class RoundCarrier:
    state: QubitState
    hidden: Optional[int] = None
    partner: Optional[qcore.TwoQubitPureState] = None

    @property
    def qubit_only(self) -> bool:
        return self.hidden is None and self.partner is None


_HONEST_STATES = {
    (0, 0): qcore.KET0,
    (0, 1): qcore.KET_MINUS,
    (1, 0): qcore.KET_PLUS,
    (1, 1): qcore.KET1,
}
_HONEST_CARRIERS = {k: RoundCarrier(s) for k, s in _HONEST_STATES.items()}


def honest_source(y0: int, y1: int) -> RoundCarrier:
    """Wiesner encoding: 00 -> |0>, 01 -> |->, 10 -> |+>, 11 -> |1>."""
    return _HONEST_CARRIERS[(int(y0), int(y1))]


def wiesner_basis_value(y0, y1):
    """(basis, value) of the Wiesner state for a key pair: basis = y0 xor y1, value = y1.

    Basis 0 is {|0>, |1>}, basis 1 is {|+>, |->}.  Works elementwise on arrays.
    """
    return np.bitwise_xor(y0, y1), y1


SourceStrategy = Callable[[int, int], RoundCarrier]


# --- banknotes ----------------------------------------------------------------


@dataclass(eq=False)
class Banknote:
    """A serial number plus one carrier per key round.  Verification destroys it."""

    serial: str
    rounds: tuple
    consumed: bool = False
    _n: int = field(init=False, repr=False)
    _bloch: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.rounds = tuple(self.rounds)
        self._n = len(self.rounds)

    @property
    def n(self) -> int:
        return self._n

    def __len__(self):
        return self._n

    @property
    def bloch(self) -> np.ndarray:
        """(n, 3) array of the carried qubits' Bloch vectors."""
        if self.consumed:
            raise NoteConsumed(f"banknote {self.serial} was destroyed by verification")
        if self._bloch is None:
            self._bloch = np.array([c.state.bloch for c in self.rounds], dtype=float).reshape(-1, 3)
        return self._bloch

    @property
    def hidden(self) -> Optional[np.ndarray]:
        if all(c.hidden is None for c in self.rounds):
            return None
        return np.array([-1 if c.hidden is None else c.hidden for c in self.rounds])

    @property
    def qubit_only(self) -> bool:
        return all(c.qubit_only for c in self.rounds)

    def destroy(self):
        self.consumed = True
        self.rounds = ()
        self._bloch = None

    def to_dict(self) -> dict:
        if any(c.partner is not None for c in self.rounds):
            raise ValueError("notes entangled with an external partner cannot be serialized")
        return {
            "format": FORMAT,
            "type": "banknote",
            "serial": self.serial,
            "n": self.n,
            "consumed": self.consumed,
            "rounds": [
                {"bloch": [round(float(v), 15) for v in c.state.bloch], "hidden": c.hidden}
                for c in self.rounds
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Banknote":
        _check_format(d, "banknote")
        rounds = [
            RoundCarrier(qcore.bloch_to_state(r["bloch"]), r.get("hidden"))
            for r in d["rounds"]
        ]
        note = cls(d["serial"], rounds)
        if d.get("consumed"):
            note.destroy()
            note._n = int(d.get("n", 0))
        return note


# --- bank ---------------------------------------------------------------------


@dataclass
class _Entry:
    key: SecretKey
    consumed: set = field(default_factory=set)
    challenges: dict = field(default_factory=dict)


class BankRegistry:
    """Shared classical memory of the k branches.

    Every branch reads the same key for a serial.  Consumption and the cached
    verification challenge are per branch, since branches do not talk to each
    other while verifying.  All mutation goes through one lock.
    """

    def __init__(self, k: int = 1, master_seed: Optional[int] = None):
        if k < 1:
            raise ValueError("a bank needs at least one branch")
        self.k = k
        self.master_seed = master_seed
        self._entries: dict[str, _Entry] = {}
        self._lock = threading.Lock()

    def __contains__(self, serial):
        return serial in self._entries

    def serials(self) -> list[str]:
        return list(self._entries)

    def register(self, serial: str, key: SecretKey):
        with self._lock:
            if serial in self._entries:
                raise DuplicateSerial(f"serial {serial!r} already issued")
            self._entries[serial] = _Entry(key)

    def issue(self, serial: str, n: int) -> SecretKey:
        """Derive the key for ``serial`` from the master seed, so every branch can regenerate it."""
        if self.master_seed is None:
            raise ValueError("issue() needs a registry built with master_seed")
        key = generate_key(n, np.random.default_rng(derive_seed(self.master_seed, serial)))
        self.register(serial, key)
        return key

    def key(self, serial: str) -> SecretKey:
        try:
            return self._entries[serial].key
        except KeyError:
            raise UnknownSerial(f"no key for serial {serial!r}") from None

    def _check_branch(self, branch: int):
        if not 0 <= branch < self.k:
            raise ValueError(f"branch {branch} outside 0..{self.k - 1}")

    def challenge(self, serial: str, branch: int, n: int, rng: np.random.Generator):
        """Fresh uniform challenge, or the one cached from this branch's earlier attempt.

        Returns (challenge, replayed).
        """
        self._check_branch(branch)
        with self._lock:
            entry = self._entries.get(serial)
            if entry is None:
                raise UnknownSerial(f"no key for serial {serial!r}")
            cached = entry.challenges.get(branch)
            if cached is not None:
                return cached, True
            x = rng.integers(0, 2, size=n, dtype=np.uint8)
            x.setflags(write=False)
            entry.challenges[branch] = x
            return x, False

    def mark_consumed(self, serial: str, branch: int):
        with self._lock:
            self._entries[serial].consumed.add(branch)

    def consumed_at(self, serial: str, branch: int) -> bool:
        return branch in self._entries[serial].consumed


def derive_seed(master_seed: int, serial: str) -> np.random.SeedSequence:
    digest = hashlib.sha256(serial.encode()).digest()
    return np.random.SeedSequence(master_seed, spawn_key=(int.from_bytes(digest[:8], "little"),))


def mint(source: SourceStrategy, key: SecretKey, serial: str,
         registry: Optional[BankRegistry] = None) -> Banknote:
    """Run the (possibly malicious) source once per round on that round's key bits only."""
    if registry is not None:
        if serial not in registry:
            registry.register(serial, key)
        elif registry.key(serial) != key:
            raise DuplicateSerial(f"serial {serial!r} is bound to a different key")
    codes = key.bits[:, 0].astype(int) * 2 + key.bits[:, 1]
    cache = {}
    rounds = []
    for c in codes.tolist():
        carrier = cache.get(c)
        if carrier is None or carrier.partner is not None:
            carrier = source(c >> 1, c & 1)
            cache[c] = carrier
        rounds.append(carrier)
    return Banknote(serial, rounds)


# --- transcripts ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Transcript:
    """Rows (y0, y1, x, a), one per round."""

    data: np.ndarray

    def __post_init__(self):
        d = np.array(self.data, dtype=np.uint8).reshape(-1, 4)
        if np.any(d > 1):
            raise ValueError("transcript entries must be bits")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @classmethod
    def from_columns(cls, y0, y1, x, a) -> "Transcript":
        return cls(np.column_stack([y0, y1, x, a]))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def rounds(self) -> list[tuple[int, int, int, int]]:
        return [tuple(int(v) for v in row) for row in self.data]

    def __eq__(self, other):
        return isinstance(other, Transcript) and np.array_equal(self.data, other.data)

    def to_dict(self) -> dict:
        return {"format": FORMAT, "type": "transcript", "rounds": self.data.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Transcript":
        _check_format(d, "transcript")
        return cls(np.array(d["rounds"], dtype=np.int64))


def correct_answers(y0, y1, x, a) -> np.ndarray:
    """Boolean mask a == y_x, elementwise."""
    y0, y1, x, a = (np.asarray(v) for v in (y0, y1, x, a))
    return a == np.where(x == 0, y0, y1)


def acceptance_statistic(t: Transcript) -> int:
    """X_A: number of rounds with a = y_x."""
    d = t.data
    return int(np.count_nonzero(correct_answers(d[:, 0], d[:, 1], d[:, 2], d[:, 3])))


@dataclass(frozen=True)
class VerificationResult:
    accepted: bool
    guess_count: int
    threshold_count: float
    n: int
    replayed: bool = False

    @property
    def rate(self) -> float:
        return self.guess_count / self.n


def judge(guess_count: int, n: int, theta: float, replayed: bool = False) -> VerificationResult:
    """Acceptance rule: guess_count >= theta * n, compared without rounding."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    threshold = theta * n
    return VerificationResult(guess_count >= threshold, guess_count, threshold, n, replayed)


# --- terminals and liars ----------------------------------------------------------

# Corrected honest pairing: x = 0 measures (sz - sx)/sqrt2, x = 1 measures (sz + sx)/sqrt2.
HONEST_DIRECTIONS = np.array([[-1.0, 0.0, 1.0], [1.0, 0.0, 1.0]]) / np.sqrt(2)
HONEST_OBSERVABLES = tuple(qcore.observable_from_direction(d) for d in HONEST_DIRECTIONS)


class TerminalStrategy(Protocol):
    def __call__(self, note: Banknote, challenge: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray: ...


def honest_terminal(carrier: RoundCarrier, x: int, rng: np.random.Generator) -> int:
    """Measure one round: outcome +1 -> a = 0, -1 -> a = 1."""
    outcome = qcore.sample_outcome(carrier.state, HONEST_OBSERVABLES[int(x)].povm(), rng)
    return 0 if outcome == +1 else 1


def honest_terminal_vectorized(note: Banknote, challenge: np.ndarray,
                               rng: np.random.Generator) -> np.ndarray:
    """Whole-note version of :func:`honest_terminal`; one uniform per round."""
    p_zero = qcore.plus_probability(note.bloch, HONEST_DIRECTIONS[np.asarray(challenge, dtype=int)])
    return (rng.random(note.n) >= p_zero).astype(np.uint8)


def z_readout_terminal(note: Banknote, challenge: np.ndarray,
                       rng: np.random.Generator) -> np.ndarray:
    """Ignore the challenge, read the qubit in the computational basis."""
    p_zero = qcore.plus_probability(note.bloch, np.array([0.0, 0.0, 1.0]))
    return (rng.random(note.n) >= p_zero).astype(np.uint8)


def wiesner_measure(note: Banknote, basis: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Measure each round in basis 0 = Z or 1 = X; returns the bit value (|0>,|+> -> 0)."""
    dirs = np.where(np.asarray(basis)[:, None] == 0, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0])
    p_zero = qcore.plus_probability(note.bloch, dirs)
    return (rng.random(note.n) >= p_zero).astype(np.uint8)


LyingStrategy = Callable[[np.ndarray, np.ndarray, np.random.Generator], np.ndarray]


def identity_liar(x, a, rng):
    return np.asarray(a, dtype=np.uint8)


def flip_liar(x, a, rng):
    return (1 - np.asarray(a, dtype=np.uint8)).astype(np.uint8)


def echo_challenge_liar(x, a, rng):
    return np.asarray(x, dtype=np.uint8).copy()


LIARS = {"identity": identity_liar, "flip": flip_liar, "echo_x": echo_challenge_liar}


# --- verification ---------------------------------------------------------------


def _prepare(note: Banknote, registry: BankRegistry, branch: int, rng, require_qubits=True):
    if note.consumed:
        raise NoteConsumed(f"banknote {note.serial} was already verified")
    key = registry.key(note.serial)
    if note.n != key.n:
        raise ValueError(f"note has {note.n} rounds, key has {key.n}")
    if require_qubits and not note.qubit_only:
        raise AssumptionViolation(
            f"banknote {note.serial} carries registers beyond one qubit per round; "
            "the semi-device-independent verifier does not admit it"
        )
    x, replayed = registry.challenge(note.serial, branch, key.n, rng)
    return key, x, replayed


def _finish(note, registry, branch, key, x, answers, theta, replayed):
    transcript = Transcript.from_columns(key.y0, key.y1, x, answers)
    result = judge(acceptance_statistic(transcript), key.n, theta, replayed)
    note.destroy()
    registry.mark_consumed(note.serial, branch)
    return result, transcript


def verify_at_bank(note: Banknote, registry: BankRegistry, branch: int,
                   terminal: TerminalStrategy, theta: float,
                   rng: np.random.Generator) -> tuple[VerificationResult, Transcript]:
    """Branch feeds challenges to the terminal and counts a == y_x.

    A second attempt at the same branch for the same serial reuses the cached
    challenge string.  The note is destroyed either way.
    """
    key, x, replayed = _prepare(note, registry, branch, rng)
    a = np.asarray(terminal(note, x, rng), dtype=np.uint8)
    return _finish(note, registry, branch, key, x, a, theta, replayed)


def verify_at_distance(note: Banknote, registry: BankRegistry, branch: int,
                       terminal: TerminalStrategy, liar: LyingStrategy, theta: float,
                       rng: np.random.Generator) -> tuple[VerificationResult, Transcript]:
    """Like :func:`verify_at_bank`, but the holder reports a' = liar(x, a) over a classical channel."""
    key, x, replayed = _prepare(note, registry, branch, rng)
    a = np.asarray(terminal(note, x, rng), dtype=np.uint8)
    reported = np.asarray(liar(x, a, rng), dtype=np.uint8)
    return _finish(note, registry, branch, key, x, reported, theta, replayed)


def verify_wiesner(note: Banknote, registry: BankRegistry, branch: int, theta: float,
                   rng: np.random.Generator) -> tuple[VerificationResult, Transcript]:
    """Basis-aware verifier: the bank measures each round in basis y0^y1 and expects y1.

    No dimension bound is enforced here; this is the setting in which the
    hidden-register attack works.  The transcript stores x = basis, a = outcome
    against (y0, y1) = (basis-expected bit, value) so counting a == y_x is exact.
    """
    key, _, replayed = _prepare(note, registry, branch, rng, require_qubits=False)
    basis, value = wiesner_basis_value(key.y0, key.y1)
    outcome = wiesner_measure(note, basis, rng)
    count = int(np.count_nonzero(outcome == value))
    result = judge(count, key.n, theta, replayed)
    transcript = Transcript.from_columns(basis, value, np.ones(key.n, np.uint8), outcome)
    note.destroy()
    registry.mark_consumed(note.serial, branch)
    return result, transcript


def verify_basis_revealing(note: Banknote, registry: BankRegistry, branch: int,
                           terminal: TerminalStrategy, theta: float,
                           rng: np.random.Generator) -> tuple[VerificationResult, Transcript]:
    """Classical-verification Wiesner variant: the terminal is told the basis and must return the value."""
    key, _, replayed = _prepare(note, registry, branch, rng, require_qubits=False)
    basis, value = wiesner_basis_value(key.y0, key.y1)
    a = np.asarray(terminal(note, basis, rng), dtype=np.uint8)
    count = int(np.count_nonzero(a == value))
    result = judge(count, key.n, theta, replayed)
    transcript = Transcript.from_columns(basis, value, np.ones(key.n, np.uint8), a)
    note.destroy()
    registry.mark_consumed(note.serial, branch)
    return result, transcript


def basis_terminal(note: Banknote, basis: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Terminal for the basis-revealing verifier: measure in the announced basis."""
    return wiesner_measure(note, basis, rng)


# --- json ---------------------------------------------------------------------


def _check_format(d: dict, kind: str):
    if d.get("format") != FORMAT:
        raise ValueError(f"expected format {FORMAT!r}, got {d.get('format')!r}")
    if d.get("type") != kind:
        raise ValueError(f"expected a {kind} document, got {d.get('type')!r}")


def dumps(obj, **kw) -> str:
    return json.dumps(obj.to_dict(), **kw)
