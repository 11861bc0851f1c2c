"""Learned factor graphs for finite-memory channel equalization."""
from .states import BPSK, OOK, Alphabet, StateSpace
from .nodes import (ChannelModel, FunctionNode, TransitionTable, estimate_transitions, exact_node,
                    learned_node)
from .inference import brute_force_map, brute_force_ml, sp_map_decode, viterbi_decode, viterbi_streaming
from .neural import MlpModel, TrainSpec, default_classifier, fit, load_model, save_model
from .config import ExperimentConfig, parse_config
from .errors import ConfigError, DomainError, InferenceError, ModelParseError

__version__ = "0.1.0"

__all__ = [
    "Alphabet", "BPSK", "ChannelModel", "ConfigError", "DomainError", "ExperimentConfig", "FunctionNode",
    "InferenceError", "MlpModel", "ModelParseError", "OOK", "StateSpace", "TrainSpec", "TransitionTable",
    "brute_force_map", "brute_force_ml", "default_classifier", "estimate_transitions", "exact_node", "fit",
    "learned_node", "load_model", "parse_config", "save_model", "sp_map_decode", "viterbi_decode",
    "viterbi_streaming",
]
