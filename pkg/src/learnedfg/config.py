"""Experiment configuration: YAML in, validated dataclass out, YAML back.

Keys left out of a file take the defaults below; channel-dependent defaults
(SNR grid, CSI corruption fraction) are resolved once at parse time so the
echoed configuration is complete.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .errors import ConfigError

CHANNELS = ("gaussian", "poisson")
MODES = ("perfect_csi", "csi_uncertainty", "blockwise")
SWEEP_DETECTORS = ("exact_sp", "learned_sp", "learned_viterbi", "mismatched_sp")
BLOCKWISE_DETECTORS = ("exact_sp_instant", "exact_sp_initial", "learned_sp_initial",
                       "learned_sp_joint", "learned_sp_online")

DEFAULT_SNR = {
    "gaussian": [float(v) for v in range(-2, 11, 2)],
    "poisson": [float(v) for v in range(10, 27, 2)],
}
DEFAULT_CSI_FRACTION = {"gaussian": 0.10, "poisson": 0.08}


def _default_gammas() -> list[float]:
    return [float(g) for g in np.linspace(0.1, 2.0, 20)]


@dataclass
class ExperimentConfig:
    channel: str
    mode: str
    snr_db: Optional[list] = None
    gammas: list = field(default_factory=_default_gammas)
    memory: int = 4
    train_size: int = 5000
    test_symbols: int = 100_000
    seed: int = 0
    detectors: Optional[list] = None
    learning_rate: float = 0.01
    epochs: int = 100
    batch_size: int = 27
    csi_fraction: Optional[float] = None
    csi_training: str = "per_sample"
    blocks: int = 200
    block_gamma: float = 0.2
    periods: list = field(default_factory=lambda: [51, 39, 33, 21])
    joint_blocks: list = field(default_factory=lambda: [3 * k for k in range(1, 11)])
    joint_size: int = 5000
    retrain_epochs: int = 50
    retrain_learning_rate: float = 0.002
    decoder: str = "sp"
    workers: int = 1
    record_wall_time: bool = False

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ConfigError(f"channel: expected one of {CHANNELS}, got {self.channel!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode: expected one of {MODES}, got {self.mode!r}")
        if self.snr_db is None:
            self.snr_db = list(DEFAULT_SNR[self.channel])
        if self.csi_fraction is None:
            self.csi_fraction = DEFAULT_CSI_FRACTION[self.channel]
        if self.detectors is None:
            if self.mode == "blockwise":
                self.detectors = list(BLOCKWISE_DETECTORS)
            elif self.mode == "csi_uncertainty":
                self.detectors = list(SWEEP_DETECTORS)
            else:
                self.detectors = ["exact_sp", "learned_sp", "learned_viterbi"]
        self.snr_db = [float(v) for v in self.snr_db]
        self.gammas = [float(v) for v in self.gammas]
        self.validate()

    def validate(self):
        allowed = BLOCKWISE_DETECTORS if self.mode == "blockwise" else SWEEP_DETECTORS
        for d in self.detectors:
            if d not in allowed:
                raise ConfigError(f"detectors: {d!r} not valid in mode {self.mode!r}")
        counts = ("memory", "train_size", "test_symbols", "epochs", "batch_size", "blocks",
                  "joint_size", "retrain_epochs", "workers")
        for name in counts:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name}: must be a positive integer, got {value!r}")
        for name in ("learning_rate", "retrain_learning_rate", "block_gamma"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name}: must be positive")
        if not self.snr_db:
            raise ConfigError("snr_db: grid is empty")
        if not self.gammas or any(g <= 0 for g in self.gammas):
            raise ConfigError("gammas: values must be positive")
        if self.csi_fraction < 0:
            raise ConfigError("csi_fraction: must be nonnegative")
        if self.csi_training not in ("per_sample", "shared"):
            raise ConfigError("csi_training: expected 'per_sample' or 'shared'")
        if self.decoder not in ("sp", "viterbi"):
            raise ConfigError("decoder: expected 'sp' or 'viterbi'")
        if self.mode == "blockwise" and len(self.periods) != self.memory:
            raise ConfigError("periods: need one period per channel tap")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = sorted(set(doc) - _FIELDS)
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
    for required in ("channel", "mode"):
        if required not in doc:
            raise ConfigError(f"missing required key {required!r}")
    try:
        return ExperimentConfig(**doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(path) -> ExperimentConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(doc or {})


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False, default_flow_style=None)
