"""Message passing over the stationary trellis.

``sp_map_decode`` runs the forward/backward sum-product recursions and takes
per-symbol MAP decisions; ``viterbi_decode`` and ``viterbi_streaming`` find
the minimum ``-log f`` path.  Both consume a node only through
``log_emission`` and its transition table.  The brute-force functions
enumerate every sequence and exist to check the recursions on tiny inputs.
"""
from __future__ import annotations

import itertools
from collections import deque
from typing import Iterable, Iterator, NamedTuple, Optional

import numpy as np

from .errors import DomainError, EnumerationTooLarge, InferenceError
from .nodes import FunctionNode

ENUMERATION_LIMIT = 2**20


class SpResult(NamedTuple):
    symbols: np.ndarray  # decided symbol positions, length t
    posteriors: np.ndarray  # (t, q) per-symbol posteriors


def _initial(node: FunctionNode, initial) -> np.ndarray:
    n = node.space.n_states
    if initial is None:
        return np.full(n, 1.0 / n)
    if np.isscalar(initial):
        p = np.zeros(n)
        p[int(initial)] = 1.0
        return p
    p = np.asarray(initial, dtype=float)
    if p.shape != (n,) or (p < 0).any() or p.sum() <= 0:
        raise DomainError("initial distribution must be a nonnegative vector over states")
    return p / p.sum()


def _symbol_matrix(node: FunctionNode) -> np.ndarray:
    """``(n_states, q)`` indicator of each state's newest symbol."""
    space = node.space
    return (space.newest[:, None] == np.arange(space.q)[None, :]).astype(float)


def sp_map_decode(node: FunctionNode, observations, initial=None) -> SpResult:
    """Per-symbol MAP estimates by forward/backward message passing.

    ``initial`` is the distribution of the state before the first
    observation: None for uniform, a state index for a known preamble, or a
    probability vector.  Messages are renormalized at every step.
    """
    ys = np.asarray(observations)
    if ys.size < 1:
        raise DomainError("need at least one observation")
    log_e = node.log_emission(ys)
    peak = log_e.max(axis=1, keepdims=True)
    if not np.isfinite(peak).all():
        raise InferenceError("an observation has zero weight under every state")
    emis = np.exp(log_e - peak)  # per-step scale, leaves decisions unchanged
    trans = node.transitions.matrix()
    t, n = emis.shape

    fwd = np.empty((t, n))
    a = _initial(node, initial)
    for i in range(t):
        a = (a @ trans) * emis[i]
        total = a.sum()
        if total <= 0:
            raise InferenceError(f"forward message vanished at index {i}")
        a = a / total
        fwd[i] = a

    bwd = np.empty((t, n))
    b = np.full(n, 1.0 / n)
    bwd[t - 1] = b
    for i in range(t - 2, -1, -1):
        b = trans @ (emis[i + 1] * b)
        b = b / b.sum()
        bwd[i] = b

    joint = fwd * bwd
    joint /= joint.sum(axis=1, keepdims=True)
    post = joint @ _symbol_matrix(node)
    post /= post.sum(axis=1, keepdims=True)
    return SpResult(post.argmax(axis=1), post)


class _ViterbiStep:
    """Add-compare-select over the ``q`` predecessors of each state."""

    def __init__(self, node: FunctionNode, initial):
        space = node.space
        self.pred = space.predecessors
        log_t = node.log_transition_matrix()
        self.log_trans = log_t[self.pred, np.arange(space.n_states)[:, None]]
        p0 = _initial(node, initial)
        with np.errstate(divide="ignore"):
            self.cost = -np.log(p0)
        self.newest = space.newest
        self.node = node

    def __call__(self, log_e_row: np.ndarray) -> np.ndarray:
        cand = self.cost[self.pred] - self.log_trans  # (n, q): cost of arriving from each predecessor
        k = cand.argmin(axis=1)  # first minimum, i.e. lowest predecessor index
        rows = np.arange(cand.shape[0])
        with np.errstate(invalid="ignore"):
            cost = cand[rows, k] - log_e_row
        cost = np.where(np.isnan(cost), np.inf, cost)
        best = cost.min()
        if not np.isfinite(best):
            raise InferenceError("every state path has zero likelihood")
        self.cost = cost - best
        return self.pred[rows, k]


def viterbi_decode(node: FunctionNode, observations, initial=None) -> np.ndarray:
    """Maximum-likelihood symbol sequence; ties go to the lowest state index."""
    ys = np.asarray(observations)
    if ys.size < 1:
        raise DomainError("need at least one observation")
    log_e = node.log_emission(ys)
    step = _ViterbiStep(node, initial)
    t = log_e.shape[0]
    back = np.empty((t, node.space.n_states), dtype=np.int64)
    for i in range(t):
        back[i] = step(log_e[i])
    s = int(step.cost.argmin())
    states = np.empty(t, dtype=np.int64)
    for i in range(t - 1, -1, -1):
        states[i] = s
        s = back[i, s]
    return step.newest[states]


def viterbi_streaming(node: FunctionNode, observations: Iterable, delay: Optional[int] = None,
                      initial=None) -> Iterator[int]:
    """Fixed-delay Viterbi: yields the decision for index i after reading i + delay.

    Decisions come from the best partial path at that moment, so they may
    differ from the batch maximum-likelihood sequence.  Only the last
    ``delay`` back-pointer arrays are kept.  The tail is flushed from the
    final best path when the input ends.
    """
    d = node.space.memory if delay is None else int(delay)
    if d < 1:
        raise DomainError(f"delay must be >= 1, got {d}")
    step = _ViterbiStep(node, initial)
    back: deque = deque(maxlen=d)
    consumed = 0
    for y in observations:
        back.append(step(node.log_emission([y])[0]))
        consumed += 1
        if consumed > d:
            s = int(step.cost.argmin())
            for ptr in reversed(back):
                s = ptr[s]
            yield int(step.newest[s])
    if consumed == 0:
        return
    k = min(d, consumed)
    s = int(step.cost.argmin())
    tail = [s]
    for ptr in list(reversed(back))[: k - 1]:
        s = int(ptr[s])
        tail.append(s)
    for s in reversed(tail):
        yield int(step.newest[s])


# ------------------------------------------------------------------- oracles


def _enumerate(node: FunctionNode, observations, initial):
    """Log weight of every (initial window, s_1..s_t) sequence, via scalar evaluate."""
    ys = list(np.asarray(observations).reshape(-1))
    space = node.space
    t, q, l, n = len(ys), space.q, space.memory, space.n_states
    if t < 1:
        raise DomainError("need at least one observation")
    if q ** (t + l) > ENUMERATION_LIMIT:
        raise EnumerationTooLarge(f"{q}**{t + l} sequences exceed the enumeration limit")
    log_f = np.array([[[node.log_evaluate(y, cur, prev) for cur in range(n)] for prev in range(n)]
                      for y in ys])
    with np.errstate(divide="ignore"):
        log_init = np.log(_initial(node, initial))

    digits = np.array(list(itertools.product(range(q), repeat=t + l)), dtype=np.int64)
    weights = q ** np.arange(l - 1, -1, -1)
    states = np.stack([digits[:, i : i + l] @ weights for i in range(t + 1)], axis=1)
    total = log_init[states[:, 0]].copy()
    for i in range(t):
        total += log_f[i, states[:, i], states[:, i + 1]]
    return digits[:, l:], total


def brute_force_map(node: FunctionNode, observations, initial=None) -> np.ndarray:
    """``(t, q)`` exact per-symbol posteriors by exhaustive summation."""
    symbols, log_w = _enumerate(node, observations, initial)
    if not np.isfinite(log_w.max()):
        raise InferenceError("every sequence has zero weight")
    w = np.exp(log_w - log_w.max())
    q = node.space.q
    post = np.stack([np.bincount(symbols[:, i], weights=w, minlength=q) for i in range(symbols.shape[1])])
    return post / post.sum(axis=1, keepdims=True)


def brute_force_ml(node: FunctionNode, observations, initial=None) -> np.ndarray:
    """Symbol sequence maximizing the summed log node weights."""
    symbols, log_w = _enumerate(node, observations, initial)
    if not np.isfinite(log_w.max()):
        raise InferenceError("every sequence has zero weight")
    return symbols[int(log_w.argmax())]
