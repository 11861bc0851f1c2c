"""Decision-directed retraining of a learned function node, one coded block at a time."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from . import coding
from .errors import ConfigError, InferenceError
from .inference import sp_map_decode, viterbi_decode
from .neural import MlpModel, TrainSpec, fit
from .nodes import CountingNode, LearnedNode, TransitionTable, estimate_transitions
from .states import Alphabet, StateSpace

BLOCK_SYMBOLS = coding.N * 8


@dataclass(frozen=True)
class AdaptationPolicy:
    epochs: int = 50
    learning_rate: float = 0.002
    batch_size: int = 27
    shuffle_seed: int = 0


@dataclass(frozen=True)
class LearnedState:
    """Everything a learned node is built from; replaced wholesale on retraining."""

    classifier: MlpModel
    transitions: TransitionTable
    alphabet: Alphabet
    memory: int
    updates: int = 0

    def node(self) -> LearnedNode:
        return LearnedNode(self.classifier, self.transitions, self.alphabet, self.memory)


class Truth(NamedTuple):
    """Ground truth for scoring only; never handed to a decoder."""

    symbols: np.ndarray  # transmitted symbol positions (2040)
    data: bytes  # transmitted RS data field (223 bytes)


@dataclass
class BlockMetrics:
    block: int
    crc_ok: bool
    retrained: bool
    failed: bool
    node_evals: int
    symbol_errors: Optional[int] = None
    symbols: int = BLOCK_SYMBOLS
    bit_errors: Optional[int] = None
    bits: int = coding.K * 8


class BlockOutcome(NamedTuple):
    bits: np.ndarray  # decoded RS data-field bits (1784)
    crc_ok: bool
    state: LearnedState
    metrics: BlockMetrics


def decode_symbols(node, observations, decoder: str = "sp", initial=0) -> np.ndarray:
    if decoder == "sp":
        return sp_map_decode(node, observations, initial=initial).symbols
    if decoder == "viterbi":
        return viterbi_decode(node, observations, initial=initial)
    raise ConfigError(f"unknown decoder {decoder!r}")


def score_block(decided: np.ndarray, data_bits: np.ndarray, truth: Truth) -> tuple[int, int]:
    """(symbol errors, data-field bit errors) against the transmitted block."""
    sym_err = int(np.count_nonzero(np.asarray(decided) != truth.symbols))
    bit_err = int(np.count_nonzero(data_bits != coding.unpack_bits(truth.data)))
    return sym_err, bit_err


def retrain(state: LearnedState, observations, postulated: np.ndarray, policy: AdaptationPolicy,
            seed: int = 0) -> LearnedState:
    """Warm-start the classifier (fresh Adam moments) on a postulated block."""
    space = StateSpace(state.alphabet, state.memory)
    labels = space.state_sequence(postulated)
    spec = TrainSpec(policy.learning_rate, policy.epochs, policy.batch_size, seed)
    classifier, _ = fit(state.classifier, np.asarray(observations, dtype=float), labels, spec, refit_stats=False)
    transitions = estimate_transitions(postulated, state.memory, state.alphabet)
    return replace(state, classifier=classifier, transitions=transitions, updates=state.updates + 1)


def process_block(state: LearnedState, observations, decoder: str = "sp",
                  policy: AdaptationPolicy = AdaptationPolicy(), block: int = 0,
                  truth: Optional[Truth] = None) -> BlockOutcome:
    """Decode one block, check it, and retrain on the re-encoded block if the CRC passes.

    On CRC failure, or when the decoder finds the evidence impossible, the
    returned state is the input state unchanged.
    """
    observations = np.asarray(observations, dtype=float)
    if observations.size != BLOCK_SYMBOLS:
        raise ConfigError(f"a block holds {BLOCK_SYMBOLS} observations, got {observations.size}")
    node = CountingNode(state.node())
    try:
        decided = decode_symbols(node, observations, decoder)
        failed = False
    except InferenceError:
        decided = np.zeros(BLOCK_SYMBOLS, dtype=np.int64)
        failed = True

    result = coding.decode_block(coding.pack_bits(decided))
    bits = coding.unpack_bits(result.data)
    crc_ok = bool(result.crc_ok) and not failed
    new_state = state
    if crc_ok:
        postulated = coding.unpack_bits(coding.rs_encode(result.data))
        seed = policy.shuffle_seed * 1_000_003 + block
        new_state = retrain(state, observations, postulated, policy, seed=seed)

    metrics = BlockMetrics(block=block, crc_ok=crc_ok, retrained=crc_ok, failed=failed,
                           node_evals=node.evaluations)
    if truth is not None:
        metrics.symbol_errors, metrics.bit_errors = score_block(decided, bits, truth)
    return BlockOutcome(bits, crc_ok, new_state, metrics)
