"""Dense pure-state simulator for up to 8 qubits.

Qubit 0 is the leftmost ket symbol (big-endian). Single-qubit measurements
take an angle ``theta`` and project onto

    |theta_0> =  cos(theta/2)|0> + sin(theta/2)|1>
    |theta_1> = -sin(theta/2)|0> + cos(theta/2)|1>

so ``theta = 0`` is the computational basis.

Bell states: B1 = (|00>+|11>)/sqrt2, B2 = (|00>-|11>)/sqrt2,
B3 = (|01>+|10>)/sqrt2, B4 = (|01>-|10>)/sqrt2. Only B1 and B3 are named in
the source material; B2/B4 are taken to be the usual phase-flipped partners.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Iterable, Iterator

import numpy as np

MAX_QUBITS = 8
NORM_TOL = 1e-9
ZERO_TOL = 1e-12

_S = 1 / np.sqrt(2)


class BellOutcome(IntEnum):
    B1 = 1
    B2 = 2
    B3 = 3
    B4 = 4


BELL_VECTORS = {
    BellOutcome.B1: np.array([_S, 0, 0, _S], dtype=complex),
    BellOutcome.B2: np.array([_S, 0, 0, -_S], dtype=complex),
    BellOutcome.B3: np.array([0, _S, _S, 0], dtype=complex),
    BellOutcome.B4: np.array([0, _S, -_S, 0], dtype=complex),
}


@dataclass(frozen=True, eq=False)
class PureState:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if not 1 <= self.num_qubits <= MAX_QUBITS:
            raise ValueError(f"num_qubits must be in [1, {MAX_QUBITS}], got {self.num_qubits}")
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != 2**self.num_qubits:
            raise ValueError("amplitude vector length must be 2**num_qubits")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm^2 = {norm})")
        amps = amps.copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_kets(cls, kets: dict[str, complex]) -> "PureState":
        n = len(next(iter(kets)))
        amps = np.zeros(2**n, dtype=complex)
        for label, amp in kets.items():
            amps[int(label, 2)] = amp
        return cls(n, amps / np.linalg.norm(amps))

    @classmethod
    def basis_state(cls, bits: str) -> "PureState":
        return cls.from_kets({bits: 1.0})

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape([2] * self.num_qubits)

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amplitudes, self.amplitudes).real))

    def kron(self, other: "PureState") -> "PureState":
        return PureState(self.num_qubits + other.num_qubits, np.kron(self.amplitudes, other.amplitudes))

    def support(self) -> dict[str, complex]:
        """Nonzero amplitudes keyed by ket label."""
        out = {}
        for idx in np.flatnonzero(np.abs(self.amplitudes) > ZERO_TOL):
            out[format(idx, f"0{self.num_qubits}b")] = complex(self.amplitudes[idx])
        return out

    def allclose(self, other: "PureState", atol: float = 1e-9) -> bool:
        return self.num_qubits == other.num_qubits and np.allclose(
            self.amplitudes, other.amplitudes, atol=atol
        )


def bell_state(which: BellOutcome) -> PureState:
    return PureState(2, BELL_VECTORS[BellOutcome(which)])


def prepare_ghz_type() -> PureState:
    """(|B1,0> + |B3,1>)/sqrt2 with qubit order (A, B, M)."""
    b1 = BELL_VECTORS[BellOutcome.B1]
    b3 = BELL_VECTORS[BellOutcome.B3]
    amps = (np.kron(b1, [1, 0]) + np.kron(b3, [0, 1])) * _S
    return PureState(3, amps)


def _check_index(state: PureState, index: int) -> None:
    if not 0 <= index < state.num_qubits:
        raise IndexError(f"qubit index {index} out of range for {state.num_qubits}-qubit state")


def _basis_rows(angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    # row k is <theta_k|
    return np.array([[c, s], [-s, c]], dtype=complex)


def _apply_1q(tensor: np.ndarray, op: np.ndarray, index: int) -> np.ndarray:
    out = np.tensordot(op, tensor, axes=([1], [index]))
    return np.moveaxis(out, 0, index)


def outcome_probabilities(state: PureState, index: int, angle: float = 0.0) -> np.ndarray:
    _check_index(state, index)
    rotated = _apply_1q(state.tensor(), _basis_rows(angle), index)
    other = tuple(k for k in range(state.num_qubits) if k != index)
    probs = np.sum(np.abs(rotated) ** 2, axis=other)
    if abs(probs.sum() - 1.0) > NORM_TOL:
        raise RuntimeError("outcome probabilities do not sum to 1")
    return probs


def measure_qubit(
    state: PureState, index: int, angle: float, rng: np.random.Generator
) -> tuple[int, PureState]:
    """Projective measurement of one qubit at ``angle``.

    The collapsed qubit is left in the measured eigenstate ``|theta_k>``.
    """
    probs = outcome_probabilities(state, index, angle)
    outcome = int(rng.random() < probs[1])
    rows = _basis_rows(angle)
    projector = np.outer(rows[outcome].conj(), rows[outcome])
    collapsed = _apply_1q(state.tensor(), projector, index).reshape(-1)
    collapsed = collapsed / np.sqrt(probs[outcome])
    return outcome, PureState(state.num_qubits, collapsed)


def apply_x(state: PureState, index: int) -> PureState:
    """Bit flip on one qubit."""
    _check_index(state, index)
    flipped = np.flip(state.tensor(), axis=index).reshape(-1)
    return PureState(state.num_qubits, flipped)


def _pair_view(state: PureState, i: int, j: int) -> np.ndarray:
    """Amplitudes with axes (i, j) moved to the front, shape (4, rest)."""
    t = np.moveaxis(state.tensor(), (i, j), (0, 1))
    return t.reshape(4, -1)


def _from_pair_view(view: np.ndarray, state: PureState, i: int, j: int) -> PureState:
    n = state.num_qubits
    t = view.reshape([2, 2] + [2] * (n - 2))
    t = np.moveaxis(t, (0, 1), (i, j))
    return PureState(n, t.reshape(-1))


def bell_probabilities(state: PureState, i: int, j: int) -> dict[BellOutcome, float]:
    _check_index(state, i)
    _check_index(state, j)
    if i == j:
        raise IndexError("bell_measure needs two distinct qubits")
    view = _pair_view(state, i, j)
    probs = {}
    for k, vec in BELL_VECTORS.items():
        proj = vec.conj() @ view
        p = float(np.vdot(proj, proj).real)
        probs[k] = 0.0 if p < ZERO_TOL else p
    if abs(sum(probs.values()) - 1.0) > NORM_TOL:
        raise RuntimeError("Bell outcome probabilities do not sum to 1")
    return probs


def bell_measure(
    state: PureState, i: int, j: int, rng: np.random.Generator
) -> tuple[BellOutcome, PureState]:
    """Project qubits ``(i, j)`` onto the Bell basis."""
    probs = bell_probabilities(state, i, j)
    keys = list(probs)
    weights = np.array([probs[k] for k in keys])
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(weights), u * weights.sum(), side="right"))
    outcome = keys[min(idx, len(keys) - 1)]
    vec = BELL_VECTORS[outcome]
    view = _pair_view(state, i, j)
    rest = (vec.conj() @ view) / np.sqrt(probs[outcome])
    collapsed = np.outer(vec, rest)
    return outcome, _from_pair_view(collapsed, state, i, j)


# CHSH settings: Alice {0, pi/2}, Bob {pi/4, -pi/4}; the last term is subtracted.
CHSH_ALICE = (0.0, np.pi / 2)
CHSH_BOB = (np.pi / 4, -np.pi / 4)
CHSH_SIGNS = {(0, 0): 1, (0, 1): 1, (1, 0): 1, (1, 1): -1}


def joint_probabilities(state: PureState, i: int, j: int, angle_i: float, angle_j: float) -> np.ndarray:
    """2x2 table of outcome probabilities for measuring qubits i and j."""
    t = _apply_1q(state.tensor(), _basis_rows(angle_i), i)
    t = _apply_1q(t, _basis_rows(angle_j), j)
    t = np.moveaxis(t, (i, j), (0, 1)).reshape(4, -1)
    return np.sum(np.abs(t) ** 2, axis=1).reshape(2, 2)


# two-qubit fast path: row 2*a+b of the matrix is <theta_a| (x) <phi_b|
_CHSH_PAIR = {
    (x, y): np.kron(_basis_rows(CHSH_ALICE[x]), _basis_rows(CHSH_BOB[y])) for x in (0, 1) for y in (0, 1)
}


class ChshTally:
    """Accumulates +/-1 correlators for the four CHSH setting pairs."""

    def __init__(self):
        self.sums = np.zeros((2, 2))
        self.counts = np.zeros((2, 2), dtype=int)

    def add(self, a_setting: int, b_setting: int, a_bit: int, b_bit: int) -> None:
        self.sums[a_setting, b_setting] += 1 if a_bit == b_bit else -1
        self.counts[a_setting, b_setting] += 1

    def value(self) -> float:
        if np.any(self.counts == 0):
            raise ValueError("every CHSH setting pair needs at least one trial")
        corr = self.sums / self.counts
        return float(sum(sign * corr[k] for k, sign in CHSH_SIGNS.items()))

    @property
    def trials(self) -> int:
        return int(self.counts.sum())


def sample_chsh_trial(
    tally: ChshTally, state: PureState, i: int, j: int, rng: np.random.Generator
) -> None:
    a_set = int(rng.integers(0, 2))
    b_set = int(rng.integers(0, 2))
    if state.num_qubits == 2 and (i, j) == (0, 1):
        probs = np.abs(_CHSH_PAIR[a_set, b_set] @ state.amplitudes) ** 2
    else:
        probs = joint_probabilities(state, i, j, CHSH_ALICE[a_set], CHSH_BOB[b_set]).reshape(-1)
    k = int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side="right"))
    k = min(k, 3)
    tally.add(a_set, b_set, k >> 1, k & 1)


def chsh_estimate(
    pair_source: Callable[[], PureState] | Iterable[PureState],
    trials: int,
    rng: np.random.Generator,
) -> float:
    """Empirical CHSH S value over ``trials`` two-qubit states.

    ``pair_source`` is either a zero-argument callable or an iterable of
    2-qubit states; each trial uses one state with a uniformly random
    setting pair.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if callable(pair_source):
        it: Iterator[PureState] = (pair_source() for _ in iter(int, 1))
    else:
        it = iter(pair_source)
    tally = ChshTally()
    for _ in range(trials):
        state = next(it)
        if state.num_qubits != 2:
            raise ValueError("chsh_estimate expects 2-qubit states")
        sample_chsh_trial(tally, state, 0, 1, rng)
    return tally.value()
