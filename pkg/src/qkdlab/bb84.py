"""Idealized two-basis (BB84) qubit model.

Bases are labelled X = 0 and Y = 1; bit values use the coding |+> = 1 and
|-> = 0. Measurement follows the basis-match rule: a matching basis returns
the prepared bit, a mismatched basis returns a fair coin and collapses the
qubit into the measured eigenstate.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class Basis(IntEnum):
    X = 0
    Y = 1

    def complement(self) -> "Basis":
        return Basis(1 - self)

    @property
    def symbol(self) -> str:
        return self.name


class Bit(IntEnum):
    MINUS = 0
    PLUS = 1

    def __xor__(self, other):  # type: ignore[override]
        return Bit(int(self) ^ int(other))


@dataclass(frozen=True)
class Qubit:
    basis: Basis
    bit: Bit


def prepare(basis: int, bit: int) -> Qubit:
    return Qubit(Basis(basis), Bit(bit))


def measure(q: Qubit, basis: int, rng: np.random.Generator) -> tuple[Bit, Qubit]:
    """Measure ``q`` in ``basis``.

    Returns the outcome and the post-measurement qubit, which is what an
    intercept/resend party forwards.
    """
    basis = Basis(basis)
    if basis == q.basis:
        return q.bit, q
    outcome = Bit(int(rng.integers(0, 2)))
    return outcome, Qubit(basis, outcome)


def measure_many(
    state_basis: np.ndarray,
    state_bit: np.ndarray,
    basis: np.ndarray,
    coins: np.ndarray,
) -> np.ndarray:
    """Vectorized basis-match rule.

    ``coins`` supplies the fair-coin outcome used wherever the bases differ,
    so the caller controls stream consumption. Returns the outcome bits; the
    collapsed state is ``(basis, outcome)``.
    """
    return np.where(state_basis == basis, state_bit, coins).astype(np.int8)


def random_bits(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.integers(0, 2, size=size, dtype=np.int8)
