"""Finite-memory Gaussian and Poisson ISI channels.

Every transmission is preceded by ``l - 1`` copies of alphabet element 0
(-1 for BPSK, 0 for on-off keying), so the first outputs see a known
pre-history.  Taps may be a single ``(l,)`` vector or one ``(t, l)`` row per
output, the latter used when each training sample sees a different
corrupted channel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .rng import poisson, rng_stream, standard_normal  # noqa: F401  (rng_stream re-exported)

__all__ = [
    "BlockwiseSchedule",
    "corrupt_csi",
    "noiseless_output",
    "rng_stream",
    "snr_from_db",
    "tap_profile",
    "transmit",
    "transmit_gaussian",
    "transmit_poisson",
]


def snr_from_db(db: float) -> float:
    return 10.0 ** (db / 10.0)


def tap_profile(gamma: float, memory: int = 4) -> np.ndarray:
    """h_tau = exp(-gamma * (tau - 1)), tau = 1..memory."""
    return np.exp(-gamma * np.arange(memory))


@dataclass(frozen=True)
class BlockwiseSchedule:
    """Periodic per-block tap variation around a fixed decay profile."""

    gamma: float = 0.2
    periods: tuple[int, ...] = (51, 39, 33, 21)
    block_length: int = 2040

    @property
    def memory(self) -> int:
        return len(self.periods)

    def taps(self, block: int) -> np.ndarray:
        p = np.asarray(self.periods, dtype=float)
        return tap_profile(self.gamma, self.memory) * (0.8 + 0.2 * np.cos(2.0 * np.pi * block / p))


def noiseless_output(symbols, taps, snr: float, preamble: float) -> np.ndarray:
    """sqrt(rho) * sum_tau h_tau s_{i-tau+1} for every output index."""
    s = np.asarray(symbols, dtype=float)
    taps = np.asarray(taps, dtype=float)
    l = taps.shape[-1]
    padded = np.concatenate([np.full(l - 1, float(preamble)), s])
    # row i holds (s_i, s_{i-1}, ..., s_{i-l+1})
    windows = sliding_window_view(padded, l)[:, ::-1]
    return math.sqrt(snr) * np.sum(windows * taps, axis=-1)


def transmit_gaussian(symbols, taps, snr: float, rng: np.random.Generator, noiseless: bool = False) -> np.ndarray:
    """BPSK symbols (+-1) through the Gaussian ISI channel with unit noise variance."""
    mean = noiseless_output(symbols, taps, snr, preamble=-1.0)
    if noiseless:
        return mean
    return mean + standard_normal(rng, mean.shape)


def transmit_poisson(symbols, taps, snr: float, rng: np.random.Generator) -> np.ndarray:
    """On-off symbols (0/1) through the Poisson channel with dark rate 1.

    Rates are clamped at zero, which only matters for corrupted taps.
    """
    lam = np.maximum(noiseless_output(symbols, taps, snr, preamble=0.0) + 1.0, 0.0)
    return poisson(rng, lam).astype(float)


def transmit(kind: str, symbols, taps, snr: float, rng: np.random.Generator) -> np.ndarray:
    if kind == "gaussian":
        return transmit_gaussian(symbols, taps, snr, rng)
    if kind == "poisson":
        return transmit_poisson(symbols, taps, snr, rng)
    raise ValueError(f"unknown channel kind {kind!r}")


def corrupt_csi(taps, fraction: float, rng: np.random.Generator, size=None) -> np.ndarray:
    """Add zero-mean Gaussian errors whose variance is ``fraction * |h_tau|``.

    With ``size`` the result has shape ``(size, l)``: one independent
    corruption per row.
    """
    taps = np.asarray(taps, dtype=float)
    shape = taps.shape if size is None else (int(size),) + taps.shape
    return taps + np.sqrt(fraction * np.abs(taps)) * standard_normal(rng, shape)
