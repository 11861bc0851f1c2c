"""SER-vs-SNR sweeps and the blockwise-stationary coded experiment.

Every grid point is an independent job that draws from its own named
random streams, so results do not depend on the worker count or the order
jobs finish in.  Rows are merged by key before they are written.
"""
from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import coding
from .adaptation import AdaptationPolicy, LearnedState, Truth, decode_symbols, process_block, score_block
from .channels import BlockwiseSchedule, corrupt_csi, snr_from_db, tap_profile, transmit
from .config import ExperimentConfig, dump_config
from .neural import TrainSpec, default_classifier, fit
from .nodes import ChannelModel, CountingNode, estimate_transitions, exact_node
from .rng import rng_stream
from .states import StateSpace

log = logging.getLogger(__name__)


@dataclass
class MetricRow:
    detector: str
    channel: str
    mode: str
    snr_db: float
    gamma: str = ""  # a value, or "mean" for rows aggregated over gamma
    block: str = ""  # a block index, or "all"
    symbol_errors: int = 0
    symbols: int = 0
    ser: float = 0.0
    bit_errors: str = ""
    bits: str = ""
    ber: str = ""
    crc_pass: str = ""
    node_evals: int = 0
    wall_time: float = 0.0


CSV_COLUMNS = [f.name for f in fields(MetricRow)]


def _row(detector, config, snr_db, *, gamma="", block="", symbol_errors, symbols, node_evals,
         bit_errors=None, bits=None, crc_pass=None, wall_time=0.0) -> MetricRow:
    row = MetricRow(detector, config.channel, config.mode, float(snr_db), str(gamma), str(block),
                    int(symbol_errors), int(symbols), symbol_errors / symbols if symbols else 0.0,
                    node_evals=int(node_evals), wall_time=float(wall_time) if config.record_wall_time else 0.0)
    if bits is not None:
        row.bit_errors, row.bits = str(int(bit_errors)), str(int(bits))
        row.ber = repr(bit_errors / bits)
    if crc_pass is not None:
        row.crc_pass = str(crc_pass)
    return row


# ------------------------------------------------------------ shared pieces


def random_symbols(rng: np.random.Generator, n: int, q: int = 2) -> np.ndarray:
    return rng.integers(0, q, size=n)


def make_training_set(kind: str, taps, snr: float, n: int, rng: np.random.Generator, memory: int):
    """Uniform i.i.d. symbols through the channel; labels are state indices."""
    model = ChannelModel(kind, tuple(np.asarray(taps).reshape(-1, memory)[0]), snr)
    space = StateSpace(model.alphabet, memory)
    positions = random_symbols(rng, n, space.q)
    y = transmit(kind, model.alphabet.values(positions), taps, snr, rng)
    return y, positions, space.state_sequence(positions)


def train_learned_node(kind: str, y, positions, memory: int, spec: TrainSpec, seed: int) -> LearnedState:
    space = StateSpace(ChannelModel(kind, (1.0,) * memory, 1.0).alphabet, memory)
    labels = space.state_sequence(positions)
    classifier, losses = fit(default_classifier(space.n_states, seed=seed), y, labels, spec)
    log.debug("trained node: final loss %.4f", losses[-1])
    transitions = estimate_transitions(positions, memory, space.alphabet)
    return LearnedState(classifier, transitions, space.alphabet, memory)


def _decode_count(node, y, decoder: str):
    counted = CountingNode(node)
    t0 = time.perf_counter()
    out = decode_symbols(counted, y, decoder)
    return out, counted.evaluations, time.perf_counter() - t0


# ------------------------------------------------------------------- sweeps


def _sweep_job(config: ExperimentConfig, gi: int, si: int) -> list[MetricRow]:
    gamma, snr_db = config.gammas[gi], config.snr_db[si]
    kind, l = config.channel, config.memory
    rho = snr_from_db(snr_db)
    taps = tap_profile(gamma, l)
    key = (gi, si)
    uncertain = config.mode == "csi_uncertainty"

    csi_rng = rng_stream(config.seed, "csi", *key)
    est_taps = corrupt_csi(taps, config.csi_fraction, csi_rng) if uncertain else taps
    if uncertain and config.csi_training == "per_sample":
        train_taps = corrupt_csi(taps, config.csi_fraction, csi_rng, size=config.train_size)
    else:
        train_taps = est_taps

    wanted = set(config.detectors)
    learned = None
    if wanted & {"learned_sp", "learned_viterbi"}:
        y_tr, pos_tr, _ = make_training_set(kind, train_taps, rho, config.train_size,
                                            rng_stream(config.seed, "train", *key), l)
        spec = TrainSpec(config.learning_rate, config.epochs, config.batch_size,
                         shuffle_seed=int(rng_stream(config.seed, "shuffle", *key).integers(2**31)))
        learned = train_learned_node(kind, y_tr, pos_tr, l, spec, seed=config.seed).node()

    test_rng = rng_stream(config.seed, "test", *key)
    true_model = ChannelModel(kind, tuple(taps), rho)
    positions = random_symbols(test_rng, config.test_symbols, true_model.alphabet.size)
    y = transmit(kind, true_model.alphabet.values(positions), taps, rho, test_rng)

    detectors = {
        "exact_sp": (lambda: exact_node(true_model), "sp"),
        "mismatched_sp": (lambda: exact_node(ChannelModel(kind, tuple(est_taps), rho)), "sp"),
        "learned_sp": (lambda: learned, "sp"),
        "learned_viterbi": (lambda: learned, "viterbi"),
    }
    rows = []
    for name in config.detectors:
        build, decoder = detectors[name]
        decided, evals, wall = _decode_count(build(), y, decoder)
        errors = int(np.count_nonzero(decided != positions))
        rows.append(_row(name, config, snr_db, gamma=repr(gamma), symbol_errors=errors,
                         symbols=positions.size, node_evals=evals, wall_time=wall))
    return rows


def _run_jobs(fn, config: ExperimentConfig, keys: list):
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = {k: pool.submit(fn, config, *k) for k in keys}
            return {k: f.result() for k, f in futures.items()}
    return {k: fn(config, *k) for k in keys}


def run_ser_sweep(config: ExperimentConfig) -> list[MetricRow]:
    """Per-(gamma, SNR) rows, then per-SNR rows aggregated over gamma."""
    if config.mode not in ("perfect_csi", "csi_uncertainty"):
        raise ValueError(f"sweep needs mode perfect_csi or csi_uncertainty, got {config.mode!r}")
    keys = [(gi, si) for si in range(len(config.snr_db)) for gi in range(len(config.gammas))]
    results = _run_jobs(_sweep_job, config, keys)
    rows = [r for k in keys for r in results[k]]
    for snr_db in config.snr_db:
        for name in config.detectors:
            group = [r for r in rows if r.detector == name and r.snr_db == snr_db and r.gamma != "mean"]
            rows.append(_row(name, config, snr_db, gamma="mean",
                             symbol_errors=sum(r.symbol_errors for r in group),
                             symbols=sum(r.symbols for r in group),
                             node_evals=sum(r.node_evals for r in group),
                             wall_time=sum(r.wall_time for r in group)))
    return rows


# ---------------------------------------------------------------- blockwise


def _block_bits(node, y: np.ndarray, decoder: str, truth: Truth):
    decided, evals, wall = _decode_count(node, y, decoder)
    result = coding.decode_block(coding.pack_bits(decided))
    bits = coding.unpack_bits(result.data)
    sym_err, bit_err = score_block(decided, bits, truth)
    return sym_err, bit_err, bool(result.crc_ok), evals, wall


def _blockwise_job(config: ExperimentConfig, si: int) -> list[MetricRow]:
    snr_db = config.snr_db[si]
    kind, l = config.channel, config.memory
    rho = snr_from_db(snr_db)
    schedule = BlockwiseSchedule(config.block_gamma, tuple(config.periods), coding.N * 8)
    tspec = lambda name: TrainSpec(config.learning_rate, config.epochs, config.batch_size,
                                   shuffle_seed=int(rng_stream(config.seed, name, si).integers(2**31)))
    wanted = set(config.detectors)

    initial_state = joint_state = None
    if wanted & {"learned_sp_initial", "learned_sp_online"}:
        y0, p0, _ = make_training_set(kind, schedule.taps(0), rho, config.train_size,
                                      rng_stream(config.seed, "train-initial", si), l)
        initial_state = train_learned_node(kind, y0, p0, l, tspec("shuffle-initial"), seed=config.seed)
    if "learned_sp_joint" in wanted:
        per = config.joint_size // len(config.joint_blocks)
        ys, ps = [], []
        for j in config.joint_blocks:
            yj, pj, _ = make_training_set(kind, schedule.taps(j), rho, per,
                                          rng_stream(config.seed, "train-joint", si, j), l)
            ys.append(yj)
            ps.append(pj)
        joint_state = _train_segments(kind, ys, ps, l, tspec("shuffle-joint"), config.seed)

    policy = AdaptationPolicy(config.retrain_epochs, config.retrain_learning_rate, config.batch_size,
                              shuffle_seed=int(rng_stream(config.seed, "shuffle-online", si).integers(2**31)))
    online = initial_state
    alphabet = ChannelModel(kind, (1.0,) * l, 1.0).alphabet
    per_block = {name: [] for name in config.detectors}
    for j in range(config.blocks):
        rng = rng_stream(config.seed, "block", si, j)
        payload = rng.integers(0, 256, size=coding.PAYLOAD, dtype=np.uint8).tobytes()
        codeword = coding.encode_block(payload)
        positions = coding.unpack_bits(codeword)
        taps = schedule.taps(j)
        y = transmit(kind, alphabet.values(positions), taps, rho, rng)
        truth = Truth(positions, codeword[: coding.K])

        fixed_nodes = {
            "exact_sp_instant": lambda: exact_node(ChannelModel(kind, tuple(taps), rho)),
            "exact_sp_initial": lambda: exact_node(ChannelModel(kind, tuple(schedule.taps(0)), rho)),
            "learned_sp_initial": lambda: initial_state.node(),
            "learned_sp_joint": lambda: joint_state.node(),
        }
        for name in config.detectors:
            if name == "learned_sp_online":
                t0 = time.perf_counter()
                out = process_block(online, y, decoder=config.decoder, policy=policy, block=j, truth=truth)
                online = out.state
                m = out.metrics
                per_block[name].append((j, m.symbol_errors, m.bit_errors, m.crc_ok, m.node_evals,
                                        time.perf_counter() - t0))
            else:
                sym_err, bit_err, crc_ok, evals, wall = _block_bits(fixed_nodes[name](), y, config.decoder, truth)
                per_block[name].append((j, sym_err, bit_err, crc_ok, evals, wall))

    rows = []
    for name in config.detectors:
        entries = per_block[name]
        for j, sym_err, bit_err, crc_ok, evals, wall in entries:
            rows.append(_row(name, config, snr_db, block=j, symbol_errors=sym_err, symbols=coding.N * 8,
                             bit_errors=bit_err, bits=coding.K * 8, crc_pass=int(crc_ok),
                             node_evals=evals, wall_time=wall))
        rows.append(_row(name, config, snr_db, block="all",
                         symbol_errors=sum(e[1] for e in entries), symbols=coding.N * 8 * len(entries),
                         bit_errors=sum(e[2] for e in entries), bits=coding.K * 8 * len(entries),
                         crc_pass=sum(int(e[3]) for e in entries), node_evals=sum(e[4] for e in entries),
                         wall_time=sum(e[5] for e in entries)))
    return rows


def _train_segments(kind, ys, ps, memory, spec, seed) -> LearnedState:
    """Train one node on several independently transmitted segments."""
    space = StateSpace(ChannelModel(kind, (1.0,) * memory, 1.0).alphabet, memory)
    labels = np.concatenate([space.state_sequence(p) for p in ps])
    classifier, _ = fit(default_classifier(space.n_states, seed=seed), np.concatenate(ys), labels, spec)
    transitions = estimate_transitions(np.concatenate(ps), memory, space.alphabet)
    return LearnedState(classifier, transitions, space.alphabet, memory)


def run_blockwise(config: ExperimentConfig) -> list[MetricRow]:
    if config.mode != "blockwise":
        raise ValueError(f"blockwise run needs mode 'blockwise', got {config.mode!r}")
    keys = [(si,) for si in range(len(config.snr_db))]
    results = _run_jobs(_blockwise_job, config, keys)
    return [r for k in keys for r in results[k]]


# ---------------------------------------------------------------------- csv


def format_csv(rows: list[MetricRow], config: Optional[ExperimentConfig] = None) -> str:
    buf = io.StringIO()
    if config is not None:
        for line in dump_config(config).splitlines():
            buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        d = asdict(row)
        writer.writerow([repr(d[c]) if isinstance(d[c], float) else d[c] for c in CSV_COLUMNS])
    return buf.getvalue()


def emit_csv(rows: list[MetricRow], path, config: Optional[ExperimentConfig] = None) -> None:
    Path(path).write_text(format_csv(rows, config))


def read_csv(path) -> list[dict]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def aggregate(rows: list[MetricRow], **match) -> dict:
    """Map detector -> row for the rows whose fields equal ``match``."""
    out = {}
    for r in rows:
        if all(getattr(r, k) == v for k, v in match.items()):
            out[r.detector] = r
    return out
