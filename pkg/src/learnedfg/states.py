"""Symbol alphabets and the length-l state window used as trellis node.

A state is the tuple of the last ``memory`` symbol positions, oldest first.
Its integer index puts the newest symbol in the least-significant digit, so
the shift to a successor state is ``(index * q + s) % q**memory``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class Alphabet:
    symbols: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(float(s) for s in self.symbols))
        if len(self.symbols) < 2:
            raise DomainError("alphabet needs at least two symbols")
        if len(set(self.symbols)) != len(self.symbols):
            raise DomainError(f"alphabet symbols are not distinct: {self.symbols}")

    def __len__(self):
        return len(self.symbols)

    @property
    def size(self) -> int:
        return len(self.symbols)

    def values(self, positions) -> np.ndarray:
        """Map symbol positions to their real values."""
        return np.asarray(self.symbols)[np.asarray(positions, dtype=np.int64)]

    def positions(self, values) -> np.ndarray:
        """Inverse of :meth:`values`; raises on values not in the alphabet."""
        values = np.asarray(values, dtype=float)
        table = np.asarray(self.symbols)
        match = values[..., None] == table
        if not match.any(axis=-1).all():
            raise DomainError("value not in alphabet")
        return match.argmax(axis=-1)


BPSK = Alphabet((-1.0, 1.0))
OOK = Alphabet((0.0, 1.0))


def index_of(state: Sequence[int], alphabet: Alphabet) -> int:
    q = alphabet.size
    value = 0
    for digit in state:
        value = value * q + int(digit)
    return value


def vector_of(index: int, memory: int, alphabet: Alphabet) -> tuple[int, ...]:
    q = alphabet.size
    if memory < 1:
        raise DomainError(f"memory must be >= 1, got {memory}")
    if not 0 <= index < q**memory:
        raise DomainError(f"state index {index} outside [0, {q**memory})")
    digits = []
    for _ in range(memory):
        index, d = divmod(index, q)
        digits.append(d)
    return tuple(reversed(digits))


def shift_successor(prev: Sequence[int], new_symbol: int) -> tuple[int, ...]:
    return tuple(prev[1:]) + (int(new_symbol),)


def shift_consistent(prev: Sequence[int], cur: Sequence[int]) -> bool:
    """True when ``cur`` is ``prev`` shifted by one new symbol."""
    return tuple(prev[1:]) == tuple(cur[:-1])


@dataclass(frozen=True)
class StateSpace:
    """Enumeration of all ``q**memory`` windows with precomputed trellis tables."""

    alphabet: Alphabet
    memory: int

    def __post_init__(self):
        if int(self.memory) < 1:
            raise DomainError(f"memory must be >= 1, got {self.memory}")

    @property
    def q(self) -> int:
        return self.alphabet.size

    @property
    def n_states(self) -> int:
        return self.q**self.memory

    def index_of(self, state: Sequence[int]) -> int:
        if len(state) != self.memory or any(not 0 <= d < self.q for d in state):
            raise DomainError(f"invalid state {tuple(state)}")
        return index_of(state, self.alphabet)

    def vector_of(self, index: int) -> tuple[int, ...]:
        return vector_of(index, self.memory, self.alphabet)

    def successor(self, prev: int, s: int) -> int:
        return (prev * self.q + s) % self.n_states

    @cached_property
    def successors(self) -> np.ndarray:
        """``(n_states, q)`` array: successor index for each new symbol."""
        prev = np.arange(self.n_states)[:, None]
        return (prev * self.q + np.arange(self.q)[None, :]) % self.n_states

    @cached_property
    def predecessors(self) -> np.ndarray:
        """``(n_states, q)`` array: predecessors of each state, by oldest digit."""
        cur = np.arange(self.n_states)[:, None]
        return cur // self.q + np.arange(self.q)[None, :] * (self.n_states // self.q)

    @cached_property
    def newest(self) -> np.ndarray:
        """Newest symbol position of each state."""
        return np.arange(self.n_states) % self.q

    @cached_property
    def digits(self) -> np.ndarray:
        """``(n_states, memory)`` symbol positions, oldest first."""
        return np.array([self.vector_of(i) for i in range(self.n_states)], dtype=np.int64)

    def window_values(self) -> np.ndarray:
        """``(n_states, memory)`` symbol values, oldest first."""
        return self.alphabet.values(self.digits)

    def state_sequence(self, symbols, initial: int = 0) -> np.ndarray:
        """State index at each time for a symbol-position sequence.

        ``initial`` is the state before the first symbol (all-zero preamble
        by default).
        """
        symbols = np.asarray(symbols, dtype=np.int64)
        padded = np.concatenate([np.asarray(self.vector_of(int(initial)), dtype=np.int64), symbols])
        out = np.zeros(len(symbols), dtype=np.int64)
        for j in range(self.memory):
            out += padded[self.memory - j : self.memory - j + len(symbols)] * self.q**j
        return out
