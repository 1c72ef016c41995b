"""Radix spike-train encoding.

An activation level q in [0, 2^T - 1] is carried as a train of T binary
spikes, most significant time step first: a spike at time step t weighs
2^(T-1-t).  Decoding is therefore a Horner fold, acc <- (acc << 1) + bit,
which is also how partial sums are merged across time steps downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError

# Cap on T keeps every accumulator comfortably inside int64 even for
# VGG-scale fan-in (partial sums are kept at full integer precision).
MAX_TIME_STEPS = 16


@dataclass(frozen=True)
class EncodingConfig:
    """Spike-train length T; time step 0 is the earliest (most significant)."""

    T: int

    def __post_init__(self):
        if not isinstance(self.T, int) or not 1 <= self.T <= MAX_TIME_STEPS:
            raise ConfigError(
                f"spike train length must be an integer in [1, {MAX_TIME_STEPS}], got {self.T}"
            )

    @property
    def max_level(self) -> int:
        return (1 << self.T) - 1


def quantize_activation(x: float, cfg: EncodingConfig, mode: str = "round") -> int:
    """Map a real activation in [0, 1] to an integer level in [0, 2^T - 1].

    Default rounding is half-away-from-zero on the (2^T - 1) scale; pass
    mode="truncate" for floor quantization.
    """
    if not np.isfinite(x) or x < 0.0 or x > 1.0:
        raise ConfigError(f"activation {x!r} outside [0, 1]")
    scaled = x * cfg.max_level
    if mode == "round":
        q = int(np.floor(scaled + 0.5))
    elif mode == "truncate":
        q = int(np.floor(scaled))
    else:
        raise ConfigError(f"unknown quantization mode {mode!r}")
    return min(q, cfg.max_level)


def quantize_activations(x: np.ndarray, cfg: EncodingConfig, mode: str = "round") -> np.ndarray:
    """Vector form of quantize_activation; returns an int64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or arr.min(initial=0.0) < 0.0 or arr.max(initial=0.0) > 1.0:
        raise ConfigError("activations outside [0, 1]")
    scaled = arr * cfg.max_level
    if mode == "round":
        q = np.floor(scaled + 0.5).astype(np.int64)
    elif mode == "truncate":
        q = np.floor(scaled).astype(np.int64)
    else:
        raise ConfigError(f"unknown quantization mode {mode!r}")
    return np.minimum(q, cfg.max_level)


def encode_radix(q: int, cfg: EncodingConfig) -> np.ndarray:
    """T-digit binary expansion of a level, most significant bit first."""
    if q < 0 or q > cfg.max_level:
        raise ConfigError(f"level {q} outside [0, {cfg.max_level}] for T={cfg.T}")
    return np.array([(q >> (cfg.T - 1 - t)) & 1 for t in range(cfg.T)], dtype=np.uint8)


def decode_radix(bits: Sequence[int]) -> int:
    """Inverse of encode_radix: sum of bits[t] * 2^(len-1-t)."""
    acc = 0
    for b in bits:
        b = int(b)
        if b not in (0, 1):
            raise ConfigError(f"spike train contains non-binary value {b}")
        acc = (acc << 1) + b
    return acc


def horner_accumulate(partials: Sequence[int]) -> int:
    """Fold acc <- (acc << 1) + p over the sequence, acc starting at 0.

    Equals sum of partials[t] * 2^(L-1-t) for L = len(partials).
    """
    if len(partials) == 0:
        raise ConfigError("horner_accumulate needs at least one partial")
    acc = 0
    for p in partials:
        acc = (acc << 1) + int(p)
    return acc


def encode_planes(levels: np.ndarray, cfg: EncodingConfig) -> np.ndarray:
    """Expand an integer level tensor into T binary bit planes (axis 0)."""
    lv = np.asarray(levels, dtype=np.int64)
    if lv.size and (lv.min() < 0 or lv.max() > cfg.max_level):
        raise ConfigError(f"levels outside [0, {cfg.max_level}] for T={cfg.T}")
    return np.stack(
        [((lv >> (cfg.T - 1 - t)) & 1).astype(np.uint8) for t in range(cfg.T)], axis=0
    )


def decode_planes(planes: np.ndarray) -> np.ndarray:
    """Collapse bit planes (axis 0) back to integer levels via the Horner fold."""
    acc = np.zeros(planes.shape[1:], dtype=np.int64)
    for t in range(planes.shape[0]):
        acc = (acc << 1) + planes[t].astype(np.int64)
    return acc
