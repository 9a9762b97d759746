"""Bit-exact model of the windowed shift-accumulate-shift preprocessor.

Each trace channel is cut into equal non-overlapping windows starting at
`start_sample` (trailing remainder samples are dropped).  Every sample is
arithmetically right-shifted by `shift_m`, the window is summed, and the
sum is right-shifted by `shift_n`.  All shifts use floor (sign-propagating)
semantics, matching synthesized two's-complement hardware.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, FeatureOverflowError

ADC_BITS = 14
MAX_WORD_WIDTH = 16


@dataclass(frozen=True)
class IntegratorConfig:
    start_sample: int
    num_windows: int
    shift_m: int
    shift_n: int

    def validate(self, T: int) -> None:
        if not (0 <= self.start_sample < T):
            raise ConfigurationError(f"start_sample {self.start_sample} outside [0, {T})")
        if self.num_windows < 1:
            raise ConfigurationError("num_windows must be >= 1")
        if self.shift_m < 0 or self.shift_n < 0:
            raise ConfigurationError("shifts must be non-negative")
        if window_length(self, T) < 1:
            raise ConfigurationError(
                f"window length is 0 for start={self.start_sample}, "
                f"num_windows={self.num_windows}, T={T}"
            )


@dataclass(frozen=True)
class FeatureVector:
    """Integrator output: I then Q feature per window, window-major."""

    words: tuple[int, ...]
    word_width: int


def window_length(cfg: IntegratorConfig, T: int) -> int:
    return (T - cfg.start_sample) // cfg.num_windows


def tree_depth(n_inputs: int) -> int:
    """Pipeline depth of a balanced adder tree over n_inputs operands."""
    if n_inputs <= 0:
        raise ConfigurationError("adder tree needs at least one input")
    return math.ceil(math.log2(n_inputs)) if n_inputs > 1 else 0


def integrator_cycles(cfg: IntegratorConfig, T: int) -> int:
    """Cycles spent in one (I or Q) adder tree; the trees run in parallel."""
    cfg.validate(T)
    return tree_depth(window_length(cfg, T))


def feature_word_width(cfg: IntegratorConfig, T: int) -> int:
    """Container width of one feature word, clamped to [1, 16].

    Worst-case growth: 14-bit input loses shift_m bits, gains one bit per
    adder-tree level, loses shift_n bits.
    """
    cfg.validate(T)
    width = ADC_BITS - cfg.shift_m + tree_depth(window_length(cfg, T)) - cfg.shift_n
    return max(1, min(MAX_WORD_WIDTH, width))


def _window_features(channel: np.ndarray, cfg: IntegratorConfig, T: int) -> np.ndarray:
    """(..., num_windows) int64 feature values for one channel."""
    L = window_length(cfg, T)
    used = channel[..., cfg.start_sample:cfg.start_sample + cfg.num_windows * L]
    shifted = used.astype(np.int64) >> cfg.shift_m  # arithmetic on signed ints
    sums = shifted.reshape(*used.shape[:-1], cfg.num_windows, L).sum(axis=-1)
    return sums >> cfg.shift_n


def integrate_batch(i: np.ndarray, q: np.ndarray, cfg: IntegratorConfig) -> tuple[np.ndarray, int]:
    """Features for (n, T) sample arrays -> ((n, 2*num_windows) int64, word_width).

    Word order per record: I feature then Q feature for window 0, then
    window 1, etc.  Raises FeatureOverflowError if any word does not fit
    its container width.
    """
    T = i.shape[-1]
    cfg.validate(T)
    fi = _window_features(i, cfg, T)
    fq = _window_features(q, cfg, T)
    words = np.stack([fi, fq], axis=-1).reshape(*fi.shape[:-1], 2 * cfg.num_windows)
    ww = feature_word_width(cfg, T)
    lo, hi = -(1 << (ww - 1)), (1 << (ww - 1)) - 1
    if words.min() < lo or words.max() > hi:
        bad = int(words[(words < lo) | (words > hi)][0])
        raise FeatureOverflowError(
            f"feature value {bad} does not fit {ww}-bit word (range [{lo}, {hi}])"
        )
    return words, ww


def integrate(i_samples, q_samples, cfg: IntegratorConfig) -> FeatureVector:
    """Single-trace convenience wrapper around integrate_batch."""
    i = np.asarray(i_samples)[None, :]
    q = np.asarray(q_samples)[None, :]
    words, ww = integrate_batch(i, q, cfg)
    return FeatureVector(words=tuple(int(w) for w in words[0]), word_width=ww)


def flatten_to_bits(words: np.ndarray, word_width: int) -> np.ndarray:
    """Two's-complement bit-flattening, LSB-first per word.

    (n, W) int words -> (n, W*word_width) uint8 bits.  Bit k of word j
    lands at column j*word_width + k.
    """
    u = words.astype(np.int64) & ((1 << word_width) - 1)
    shifts = np.arange(word_width, dtype=np.int64)
    bits = (u[..., None] >> shifts) & 1
    return bits.reshape(*words.shape[:-1], words.shape[-1] * word_width).astype(np.uint8)
