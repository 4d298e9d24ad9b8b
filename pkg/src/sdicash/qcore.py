"""Exact single-qubit simulation: states, observables, POVMs and the Born rule.

Also holds the small amount of two-qubit machinery (Bell pairs, local Paulis,
Bell-basis measurement) that superdense-coding attacks need.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

ATOL = 1e-12

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)


def _hermitian(m: np.ndarray, atol: float = ATOL) -> bool:
    return bool(np.allclose(m, m.conj().T, atol=atol, rtol=0))


def _psd(m: np.ndarray, atol: float = ATOL) -> bool:
    return bool(np.linalg.eigvalsh((m + m.conj().T) / 2).min() >= -atol)


@dataclass(frozen=True, eq=False)
class QubitState:
    """A 2x2 density matrix. Validated on construction; immutable afterwards."""

    matrix: np.ndarray
    bloch: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError(f"qubit state must be 2x2, got shape {m.shape}")
        if not _hermitian(m):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1) > ATOL:
            raise ValueError(f"density matrix trace is {np.trace(m).real:.3g}, not 1")
        if not _psd(m):
            raise ValueError("density matrix has a negative eigenvalue")
        m.setflags(write=False)
        r = np.array([np.trace(m @ p).real for p in PAULIS])
        r.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "bloch", r)

    @property
    def purity(self) -> float:
        return float(np.trace(self.matrix @ self.matrix).real)

    def is_pure(self, atol: float = 1e-9) -> bool:
        return abs(self.purity - 1.0) <= atol

    def __repr__(self):
        x, y, z = self.bloch
        return f"QubitState(bloch=({x:.6g}, {y:.6g}, {z:.6g}))"


def bloch_to_state(r: Sequence[float]) -> QubitState:
    """Return (I + r.sigma)/2 for a Bloch vector with |r| <= 1."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3,):
        raise ValueError("Bloch vector must have 3 components")
    if np.linalg.norm(r) > 1 + ATOL:
        raise ValueError(f"unphysical Bloch vector, |r| = {np.linalg.norm(r):.6g} > 1")
    return QubitState((I2 + sum(c * p for c, p in zip(r, PAULIS))) / 2)


def pure_state(ket: Sequence[complex]) -> QubitState:
    psi = np.asarray(ket, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return QubitState(np.outer(psi, psi.conj()))


KET0 = pure_state([1, 0])
KET1 = pure_state([0, 1])
KET_PLUS = pure_state([1, 1])
KET_MINUS = pure_state([1, -1])
MAXIMALLY_MIXED = QubitState(I2 / 2)


@dataclass(frozen=True, eq=False)
class Povm:
    """Generalized measurement: PSD elements summing to identity, one per label."""

    elements: tuple
    labels: tuple

    def __post_init__(self):
        elems = tuple(np.array(e, dtype=complex) for e in self.elements)
        labels = tuple(self.labels)
        if len(elems) != len(labels) or len(set(labels)) != len(labels):
            raise ValueError("POVM needs exactly one distinct label per element")
        for e in elems:
            if e.shape != (2, 2):
                raise ValueError("POVM elements must be 2x2")
            if not _hermitian(e) or not _psd(e):
                raise ValueError("POVM element is not positive semidefinite")
            e.setflags(write=False)
        if not np.allclose(sum(elems), I2, atol=ATOL, rtol=0):
            raise ValueError("POVM elements do not sum to identity")
        object.__setattr__(self, "elements", elems)
        object.__setattr__(self, "labels", labels)

    def element(self, outcome: Hashable) -> np.ndarray:
        try:
            return self.elements[self.labels.index(outcome)]
        except ValueError:
            raise KeyError(f"unknown outcome label {outcome!r}") from None

    @classmethod
    def computational(cls) -> "Povm":
        return cls((KET0.matrix, KET1.matrix), (0, 1))


@dataclass(frozen=True, eq=False)
class Observable:
    """A +/-1 valued qubit observable with its spectral projectors precomputed."""

    matrix: np.ndarray
    projectors: dict = field(init=False, repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (2, 2) or not _hermitian(m):
            raise ValueError("observable must be a 2x2 Hermitian matrix")
        vals, vecs = np.linalg.eigh(m)
        if not np.allclose(vals, [-1.0, 1.0], atol=ATOL, rtol=0):
            raise ValueError(f"observable eigenvalues {vals} are not {{-1, +1}}")
        proj = {
            -1: np.outer(vecs[:, 0], vecs[:, 0].conj()),
            +1: np.outer(vecs[:, 1], vecs[:, 1].conj()),
        }
        for p in proj.values():
            p.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "projectors", proj)

    def povm(self) -> Povm:
        """Two-outcome POVM labelled by eigenvalue, +1 first."""
        return Povm((self.projectors[+1], self.projectors[-1]), (+1, -1))


def observable_from_direction(n: Sequence[float]) -> Observable:
    """The observable n.sigma for a unit vector n."""
    n = np.asarray(n, dtype=float)
    if n.shape != (3,) or abs(np.linalg.norm(n) - 1) > 1e-9:
        raise ValueError("measurement direction must be a unit 3-vector")
    return Observable(sum(c * p for c, p in zip(n, PAULIS)))


def born(state: QubitState, povm: Povm, outcome: Hashable) -> float:
    """Tr(rho E_outcome), clamped to [0, 1]."""
    p = np.trace(state.matrix @ povm.element(outcome)).real
    return float(min(1.0, max(0.0, p)))


def born_distribution(state: QubitState, povm: Povm) -> np.ndarray:
    p = np.array([np.trace(state.matrix @ e).real for e in povm.elements])
    return np.clip(p, 0.0, 1.0)


def sample_outcome(state: QubitState, povm: Povm, rng: np.random.Generator):
    """Draw one outcome label; consumes exactly one uniform from ``rng``."""
    cdf = np.cumsum(born_distribution(state, povm))
    u = rng.random() * cdf[-1]
    idx = int(np.searchsorted(cdf, u, side="right"))
    return povm.labels[min(idx, len(povm.labels) - 1)]


def plus_probability(bloch: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Vectorized P(+1) for rows of Bloch vectors measured along rows of directions."""
    p = (1.0 + np.einsum("...i,...i->...", bloch, direction)) / 2.0
    return np.clip(p, 0.0, 1.0)


# --- two qubits -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TwoQubitPureState:
    """Unit vector in C^2 (x) C^2, basis order |00>, |01>, |10>, |11>."""

    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex)
        if a.shape != (4,):
            raise ValueError("two-qubit state needs 4 amplitudes")
        if abs(np.linalg.norm(a) - 1) > ATOL:
            raise ValueError("two-qubit state is not normalized")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    def reduced_first(self) -> QubitState:
        psi = self.amplitudes.reshape(2, 2)
        return QubitState(psi @ psi.conj().T)

    def apply_first(self, op: np.ndarray) -> "TwoQubitPureState":
        return TwoQubitPureState(np.kron(op, I2) @ self.amplitudes)


_S2 = 1 / np.sqrt(2)
SINGLET = TwoQubitPureState(np.array([0, 1, -1, 0]) * _S2)

# Pauli applied to the sender's half for each key pair (y0, y1).
ENCODING_PAULI = {
    (0, 0): I2,
    (0, 1): SIGMA_Z,
    (1, 0): SIGMA_X,
    (1, 1): SIGMA_X @ SIGMA_Z,
}

# Bell basis written out explicitly, labelled by the pair it decodes to.
# P (x) I acting on the singlet gives: I -> psi-, Z -> psi+, X -> phi-, XZ -> phi+ (up to phase).
BELL_BASIS = {
    (0, 0): np.array([0, 1, -1, 0]) * _S2,
    (0, 1): np.array([0, 1, 1, 0]) * _S2,
    (1, 0): np.array([1, 0, 0, -1]) * _S2,
    (1, 1): np.array([1, 0, 0, 1]) * _S2,
}


def bell_pair() -> TwoQubitPureState:
    return SINGLET


def encode_pair(y0: int, y1: int) -> TwoQubitPureState:
    return SINGLET.apply_first(ENCODING_PAULI[(int(y0), int(y1))])


def bell_probabilities(state: TwoQubitPureState) -> dict:
    return {
        label: float(min(1.0, abs(np.vdot(vec, state.amplitudes)) ** 2))
        for label, vec in BELL_BASIS.items()
    }


def bell_measure(state: TwoQubitPureState, rng: np.random.Generator | None = None) -> tuple:
    probs = bell_probabilities(state)
    labels = list(probs)
    if rng is None:
        return max(labels, key=probs.get)
    weights = np.array([probs[l] for l in labels])
    return labels[int(rng.choice(4, p=weights / weights.sum()))]


def singlet_encode_decode(y0: int, y1: int, rng: np.random.Generator | None = None) -> tuple:
    """Superdense coding round trip: Pauli-encode (y0, y1) on a singlet half, Bell-measure."""
    return bell_measure(encode_pair(y0, y1), rng)
