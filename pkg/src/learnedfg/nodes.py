"""Function nodes f(y, cur, prev) of a stationary Markov factor graph.

Every node factors as ``emission(y, cur) * P(newest(cur) | prev)`` on
shift-consistent pairs and is zero elsewhere.  Decoders only consume the
vectorized :meth:`FunctionNode.log_emission` matrix and the transition
table; the scalar :meth:`FunctionNode.evaluate` path is kept separate so the
brute-force oracles do not share code with the recursions they check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .errors import ConfigError, DomainError
from .states import BPSK, OOK, Alphabet, StateSpace, shift_consistent

PRIOR_FLOOR = 1e-12
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class TransitionTable:
    """Row ``prev`` holds P(next symbol = s | state = prev) for each s."""

    probs: np.ndarray
    prior: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        prior = np.array(self.prior, dtype=float)
        if probs.ndim != 2 or prior.shape != (probs.shape[0],):
            raise ConfigError(f"transition table shapes disagree: {probs.shape} vs {prior.shape}")
        if (probs < 0).any() or (probs > 1).any() or not np.allclose(probs.sum(axis=1), 1.0, atol=1e-9):
            raise ConfigError("transition rows must be probability vectors")
        if (prior < 0).any() or abs(prior.sum() - 1.0) > 1e-9:
            raise ConfigError("state prior must be a probability vector")
        probs.setflags(write=False)
        prior.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "prior", prior)

    @classmethod
    def uniform(cls, space: StateSpace) -> "TransitionTable":
        return cls(np.full((space.n_states, space.q), 1.0 / space.q),
                   np.full(space.n_states, 1.0 / space.n_states))

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    def matrix(self) -> np.ndarray:
        """Full ``(n_states, n_states)`` matrix P(cur | prev), zero off the shift graph."""
        n, q = self.probs.shape
        out = np.zeros((n, n))
        succ = (np.arange(n)[:, None] * q + np.arange(q)[None, :]) % n
        np.put_along_axis(out, succ, self.probs, axis=1)
        return out

    def to_dict(self) -> dict:
        return {"probs": self.probs.tolist(), "prior": self.prior.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "TransitionTable":
        return cls(np.asarray(doc["probs"], dtype=float), np.asarray(doc["prior"], dtype=float))


def estimate_transitions(labels, memory: int, alphabet: Alphabet) -> TransitionTable:
    """Histogram estimate of the symbol transition law from a labeled sequence.

    ``labels`` are symbol positions.  States never followed by a symbol get a
    uniform row.  The prior is the empirical frequency of each full window.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise DomainError("cannot estimate transitions from an empty sequence")
    if labels.size <= memory:
        raise DomainError(f"need more than {memory} labels, got {labels.size}")
    space = StateSpace(alphabet, memory)
    q, n = space.q, space.n_states
    if labels.min() < 0 or labels.max() >= q:
        raise DomainError("label outside alphabet")

    windows = np.zeros(labels.size - memory + 1, dtype=np.int64)
    for j in range(memory):
        windows = windows * q + labels[j : labels.size - memory + 1 + j]
    # windows[k] ends at label k + memory - 1 and is followed by labels[k + memory]
    counts = np.zeros((n, q))
    np.add.at(counts, (windows[:-1], labels[memory:]), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    probs = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 1.0 / q)
    prior = np.bincount(windows, minlength=n) / windows.size
    return TransitionTable(probs, prior)


def transition_nmse(table: TransitionTable, true_probs) -> float:
    """Mean squared error over the full state-transition matrix.

    The average runs over all ``n_states**2`` entries of P(cur | prev),
    shift-inconsistent zeros included.
    """
    n, q = table.probs.shape
    truth = TransitionTable(np.broadcast_to(np.asarray(true_probs, dtype=float), (n, q)),
                            np.full(n, 1.0 / n))
    return float(np.mean((table.matrix() - truth.matrix()) ** 2))


@dataclass(frozen=True)
class ChannelModel:
    kind: str  # "gaussian" or "poisson"
    taps: tuple[float, ...]
    snr: float  # linear SNR rho

    def __post_init__(self):
        if self.kind not in ("gaussian", "poisson"):
            raise ConfigError(f"unknown channel kind {self.kind!r}")
        object.__setattr__(self, "taps", tuple(float(h) for h in self.taps))
        if len(self.taps) < 1:
            raise ConfigError("channel needs at least one tap")
        if self.snr < 0:
            raise ConfigError("snr must be nonnegative")

    @property
    def memory(self) -> int:
        return len(self.taps)

    @property
    def alphabet(self) -> Alphabet:
        return BPSK if self.kind == "gaussian" else OOK

    def noiseless_output(self, window_values) -> np.ndarray:
        """sqrt(rho) * sum_tau h_tau s_{i-tau+1} for windows given oldest first."""
        w = np.asarray(window_values, dtype=float)
        return math.sqrt(self.snr) * (w @ np.asarray(self.taps[::-1]))


class FunctionNode:
    """Base class; subclasses supply :meth:`log_emission` and :meth:`_scalar_log_emission`."""

    space: StateSpace
    transitions: TransitionTable

    def log_emission(self, observations) -> np.ndarray:
        """``(t, n_states)`` log observation weights, one row per time index."""
        raise NotImplementedError

    def emission(self, observations) -> np.ndarray:
        return np.exp(self.log_emission(observations))

    def log_transition_matrix(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.transitions.matrix())

    def log_evaluate(self, y, cur: int, prev: int) -> float:
        prev_v, cur_v = self.space.vector_of(prev), self.space.vector_of(cur)
        if not shift_consistent(prev_v, cur_v):
            return -math.inf
        p = float(self.transitions.probs[prev, cur_v[-1]])
        if p == 0.0:
            return -math.inf
        return self._scalar_log_emission(y, cur_v) + math.log(p)

    def evaluate(self, y, cur: int, prev: int) -> float:
        return math.exp(self.log_evaluate(y, cur, prev))

    def _scalar_log_emission(self, y, cur_window: tuple[int, ...]) -> float:
        raise NotImplementedError


def _check_real(observations) -> np.ndarray:
    ys = np.asarray(observations, dtype=float).reshape(-1)
    if not np.isfinite(ys).all():
        raise DomainError("observations must be finite reals")
    return ys


def _check_counts(observations) -> np.ndarray:
    ys = np.asarray(observations, dtype=float).reshape(-1)
    if not np.isfinite(ys).all() or (ys < 0).any() or (ys != np.round(ys)).any():
        raise DomainError("Poisson observations must be nonnegative integers")
    return ys


class GaussianNode(FunctionNode):
    """Unit-variance Gaussian emission around the noiseless ISI output."""

    def __init__(self, model: ChannelModel, transitions: Optional[TransitionTable] = None):
        if model.kind != "gaussian":
            raise ConfigError("GaussianNode needs a gaussian channel model")
        self.model = model
        self.space = StateSpace(model.alphabet, model.memory)
        self.transitions = transitions or TransitionTable.uniform(self.space)
        self.means = model.noiseless_output(self.space.window_values())

    def log_emission(self, observations):
        ys = _check_real(observations)
        return -0.5 * _LOG_2PI - 0.5 * (ys[:, None] - self.means[None, :]) ** 2

    def _scalar_log_emission(self, y, cur_window):
        y = float(y)
        if not math.isfinite(y):
            raise DomainError("observation must be a finite real")
        values = self.space.alphabet.symbols
        mean = math.sqrt(self.model.snr) * sum(
            h * values[cur_window[-1 - k]] for k, h in enumerate(self.model.taps))
        return -0.5 * _LOG_2PI - 0.5 * (y - mean) ** 2


class PoissonNode(FunctionNode):
    """Poisson emission with rate sqrt(rho) * (h * s) + 1, clamped at zero."""

    def __init__(self, model: ChannelModel, transitions: Optional[TransitionTable] = None):
        if model.kind != "poisson":
            raise ConfigError("PoissonNode needs a poisson channel model")
        self.model = model
        self.space = StateSpace(model.alphabet, model.memory)
        self.transitions = transitions or TransitionTable.uniform(self.space)
        # Corrupted taps can push the rate negative; only mismatched models hit this.
        self.rates = np.maximum(model.noiseless_output(self.space.window_values()) + 1.0, 0.0)

    def log_emission(self, observations):
        ys = _check_counts(observations)[:, None]
        lam = self.rates[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = ys * np.log(lam) - lam - gammaln(ys + 1.0)
        # rate 0: pmf is 1 at y = 0 and 0 elsewhere
        zero = np.broadcast_to(lam == 0.0, out.shape)
        return np.where(zero, np.where(ys == 0, 0.0, -np.inf), out)

    def _scalar_log_emission(self, y, cur_window):
        y = float(y)
        if not math.isfinite(y) or y < 0 or y != int(y):
            raise DomainError(f"Poisson observation must be a nonnegative integer, got {y}")
        values = self.space.alphabet.symbols
        lam = math.sqrt(self.model.snr) * sum(
            h * values[cur_window[-1 - k]] for k, h in enumerate(self.model.taps)) + 1.0
        lam = max(lam, 0.0)
        if lam == 0.0:
            return 0.0 if y == 0 else -math.inf
        return y * math.log(lam) - lam - math.lgamma(y + 1.0)


class TabularNode(FunctionNode):
    """Discrete observations with an explicit ``(n_obs, n_states)`` emission table."""

    def __init__(self, space: StateSpace, table, transitions: Optional[TransitionTable] = None):
        table = np.array(table, dtype=float)
        if table.ndim != 2 or table.shape[1] != space.n_states:
            raise ConfigError(f"emission table must have {space.n_states} columns")
        if (table < 0).any():
            raise ConfigError("emission table entries must be nonnegative")
        table.setflags(write=False)
        self.space = space
        self.table = table
        self.transitions = transitions or TransitionTable.uniform(space)

    def _obs_index(self, observations) -> np.ndarray:
        ys = np.asarray(observations).reshape(-1)
        idx = ys.astype(np.int64)
        if (idx != ys).any() or (idx < 0).any() or (idx >= self.table.shape[0]).any():
            raise DomainError("observation is not a valid table row")
        return idx

    def log_emission(self, observations):
        with np.errstate(divide="ignore"):
            return np.log(self.table[self._obs_index(observations)])

    def _scalar_log_emission(self, y, cur_window):
        row = int(self._obs_index([y])[0])
        w = float(self.table[row, self.space.index_of(cur_window)])
        return math.log(w) if w > 0 else -math.inf


class LearnedNode(FunctionNode):
    """Classifier posterior divided by the state prior, times the transition law.

    The marginal density of y is replaced by 1; the decoders are invariant to
    that per-time-index scale.
    """

    def __init__(self, classifier, transitions: TransitionTable, alphabet: Alphabet, memory: int):
        self.space = StateSpace(alphabet, memory)
        if classifier.n_outputs != self.space.n_states:
            raise ConfigError(
                f"classifier has {classifier.n_outputs} outputs, state space has {self.space.n_states}")
        if transitions.n_states != self.space.n_states:
            raise ConfigError("transition table does not match the state space")
        self.classifier = classifier
        self.transitions = transitions
        self._log_prior = np.log(np.maximum(transitions.prior, PRIOR_FLOOR))

    def log_emission(self, observations):
        ys = _check_real(observations)
        return self.classifier.log_proba(ys[:, None]) - self._log_prior[None, :]

    def _scalar_log_emission(self, y, cur_window):
        from .neural import mlp_forward

        p = mlp_forward(self.classifier, [float(y)])[self.space.index_of(cur_window)]
        return math.log(p) - math.log(max(float(self.transitions.prior[self.space.index_of(cur_window)]),
                                          PRIOR_FLOOR))


def exact_gaussian_node(model: ChannelModel, transitions: Optional[TransitionTable] = None) -> GaussianNode:
    return GaussianNode(model, transitions)


def exact_poisson_node(model: ChannelModel, transitions: Optional[TransitionTable] = None) -> PoissonNode:
    return PoissonNode(model, transitions)


def exact_node(model: ChannelModel, transitions: Optional[TransitionTable] = None) -> FunctionNode:
    if model.kind == "gaussian":
        return GaussianNode(model, transitions)
    return PoissonNode(model, transitions)


def learned_node(classifier, transitions: TransitionTable, alphabet: Alphabet, memory: int) -> LearnedNode:
    return LearnedNode(classifier, transitions, alphabet, memory)


class ScaledNode(FunctionNode):
    """Multiplies a node by a positive constant per time index (test hook)."""

    def __init__(self, node: FunctionNode, scales):
        scales = np.asarray(scales, dtype=float)
        if (scales <= 0).any():
            raise DomainError("scales must be positive")
        self.node = node
        self.space = node.space
        self.transitions = node.transitions
        self._log_scales = np.log(scales)

    def log_emission(self, observations):
        base = self.node.log_emission(observations)
        if base.shape[0] != self._log_scales.size:
            raise DomainError("one scale per observation required")
        return base + self._log_scales[:, None]


@dataclass
class CountingNode(FunctionNode):
    """Delegating wrapper that counts per-state node evaluations.

    ``evaluations`` grows by ``n_states`` for every observation the wrapped
    node is evaluated on; ``seen`` keeps a copy of every input it was handed.
    """

    node: FunctionNode
    evaluations: int = 0
    seen: list = field(default_factory=list)

    def __post_init__(self):
        self.space = self.node.space
        self.transitions = self.node.transitions

    def log_emission(self, observations):
        ys = np.array(observations, copy=True)
        self.seen.append(ys)
        out = self.node.log_emission(ys)
        self.evaluations += out.shape[0] * out.shape[1]
        return out

    def _scalar_log_emission(self, y, cur_window):
        self.evaluations += 1
        return self.node._scalar_log_emission(y, cur_window)
