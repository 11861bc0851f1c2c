"""Command-line entry point: ``learnedfg {train,sweep,blockwise,decode}``.

Exit status is 0 on success, 1 for configuration or input errors and 2 for
failures while running.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .adaptation import decode_symbols
from .channels import snr_from_db, tap_profile
from .config import ExperimentConfig, config_from_dict, parse_config
from .errors import ConfigError, DomainError, InferenceError, ModelParseError
from .neural import TrainSpec, load_model, save_model
from .nodes import LearnedNode
from .rng import rng_stream
from .states import StateSpace

log = logging.getLogger("learnedfg")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _load_config(args, mode=None) -> ExperimentConfig:
    config = parse_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    if mode == "sweep" and config.mode == "blockwise":
        raise ConfigError("mode: 'blockwise' configurations run with the blockwise subcommand")
    if mode == "blockwise" and config.mode != "blockwise":
        raise ConfigError(f"mode: the blockwise subcommand needs mode 'blockwise', got {config.mode!r}")
    if overrides:
        config = config_from_dict({**config.to_dict(), **overrides})
    return config


def cmd_sweep(args) -> int:
    config = _load_config(args, mode="sweep")
    rows = harness.run_ser_sweep(config)
    _write(rows, args.output, config)
    return EXIT_OK


def cmd_blockwise(args) -> int:
    config = _load_config(args, mode="blockwise")
    rows = harness.run_blockwise(config)
    _write(rows, args.output, config)
    return EXIT_OK


def _write(rows, output, config):
    if output is None or output == "-":
        sys.stdout.write(harness.format_csv(rows, config))
    else:
        harness.emit_csv(rows, output, config)
        log.info("wrote %d rows to %s", len(rows), output)


def cmd_train(args) -> int:
    config = _load_config(args)
    gamma = args.gamma if args.gamma is not None else config.gammas[0]
    snr_db = args.snr_db if args.snr_db is not None else config.snr_db[0]
    if gamma <= 0:
        raise ConfigError("gamma: must be positive")
    taps = tap_profile(gamma, config.memory)
    y, positions, _ = harness.make_training_set(config.channel, taps, snr_from_db(snr_db), config.train_size,
                                                rng_stream(config.seed, "cli-train"), config.memory)
    spec = TrainSpec(config.learning_rate, config.epochs, config.batch_size, shuffle_seed=config.seed)
    state = harness.train_learned_node(config.channel, y, positions, config.memory, spec, seed=config.seed)
    space = StateSpace(state.alphabet, state.memory)
    save_model(args.output, state.classifier, state.transitions, space, spec)
    log.info("saved model trained at gamma=%g, %g dB to %s", gamma, snr_db, args.output)
    return EXIT_OK


def _read_observations(path) -> np.ndarray:
    path = Path(path)
    try:
        if path.suffix == ".npy":
            return np.load(path).astype(float).reshape(-1)
        return np.loadtxt(path, dtype=float, ndmin=1).reshape(-1)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{path}: cannot read observations: {exc}") from exc


def cmd_decode(args) -> int:
    mf = load_model(args.model)
    if mf.transitions is None or mf.space is None:
        raise ModelParseError("model file has no transition table or state space")
    node = LearnedNode(mf.model, mf.transitions, mf.space.alphabet, mf.space.memory)
    obs = _read_observations(args.input)
    positions = decode_symbols(node, obs, args.decoder)
    values = mf.space.alphabet.values(positions)
    text = "\n".join(str(int(v)) for v in values) + "\n"
    if args.output is None or args.output == "-":
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="learnedfg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, workers=True):
        p.add_argument("--config", required=True, help="YAML experiment configuration")
        p.add_argument("--output", "-o", default=None, help="output path (default: stdout)")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
        if workers:
            p.add_argument("--workers", type=int, default=None, help="number of worker processes")

    p = sub.add_parser("sweep", help="SER versus SNR over a set of channels")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("blockwise", help="coded BER over a blockwise-varying channel")
    common(p)
    p.set_defaults(func=cmd_blockwise)

    p = sub.add_parser("train", help="train one learned function node and save it")
    common(p, workers=False)
    p.add_argument("--gamma", type=float, default=None, help="tap decay (default: first configured)")
    p.add_argument("--snr-db", type=float, default=None, help="SNR in dB (default: first configured)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", help="decode an observation file with a saved model")
    p.add_argument("--model", required=True, help="model file written by 'train'")
    p.add_argument("--input", "-i", required=True, help="observations, one per line or .npy")
    p.add_argument("--output", "-o", default=None, help="decoded symbols (default: stdout)")
    p.add_argument("--decoder", choices=("sp", "viterbi"), default="sp")
    p.set_defaults(func=cmd_decode)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors count as configuration errors
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "train" and args.output is None:
        print("learnedfg: error: train needs --output for the model file", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, ModelParseError, DomainError) as exc:
        print(f"learnedfg: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InferenceError, RuntimeError, OSError, ValueError) as exc:
        print(f"learnedfg: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
