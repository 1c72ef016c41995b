"""Ping-pong activation buffers, flatten transfer and weight-fetch costs.

Activations always stay on chip, held as spike bits: the footprint of a
layer output is T bit planes times its element count.  Two buffer pairs
exist, one for 2-D feature maps and one for flattened vectors; every
layer reads one half of a pair and writes the other, and the flatten
boundary moves the last 2-D output into the 1-D ping half.  Weights may
live on chip (free fetches) or in DRAM, charged once per layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encoding import EncodingConfig
from .errors import ConfigError, SimulatorError
from .netmodel import ConvLayerSpec, FlattenSpec, NetworkSpec, PoolLayerSpec


@dataclass(frozen=True)
class MemoryMode:
    kind: str  # "on_chip" or "off_chip"
    dram_latency_cycles: int = 0
    dram_bytes_per_cycle: int = 1

    def __post_init__(self):
        if self.kind not in ("on_chip", "off_chip"):
            raise ConfigError(f"memory mode must be on_chip or off_chip, got {self.kind!r}")
        if self.kind == "off_chip" and (
            self.dram_latency_cycles <= 0 or self.dram_bytes_per_cycle <= 0
        ):
            raise ConfigError("off-chip mode needs positive DRAM latency and bandwidth")


def weight_fetch_cycles(mode: MemoryMode, layer_param_bytes: int) -> int:
    """DRAM fetch charged once per layer before compute; zero when on chip."""
    if layer_param_bytes < 0:
        raise ConfigError(f"negative parameter byte count {layer_param_bytes}")
    if mode.kind == "on_chip":
        return 0
    return mode.dram_latency_cycles + math.ceil(
        layer_param_bytes / mode.dram_bytes_per_cycle
    )


def activation_footprint_bits(shape: tuple[int, ...], cfg: EncodingConfig) -> int:
    return cfg.T * int(np.prod(shape))


@dataclass(frozen=True)
class BufferPlacement:
    layer_index: int
    kind: str
    reads: str
    writes: str


@dataclass(frozen=True)
class BufferPlan:
    buf2d_bits: int
    buf1d_bits: int
    placements: tuple[BufferPlacement, ...]

    def to_dict(self) -> dict:
        return {
            "buf2d_bits": self.buf2d_bits,
            "buf2d_kilobytes": round(self.buf2d_bits / 8192, 3),
            "buf1d_bits": self.buf1d_bits,
            "buf1d_kilobytes": round(self.buf1d_bits / 8192, 3),
            "placements": [
                {
                    "layer": p.layer_index,
                    "kind": p.kind,
                    "reads": p.reads,
                    "writes": p.writes,
                }
                for p in self.placements
            ],
        }


def plan_buffers(spec: NetworkSpec, cfg: EncodingConfig) -> BufferPlan:
    """Size each buffer pair to the largest tensor it ever holds and assign
    alternating ping/pong halves to every layer.

    The network input counts toward the 2-D pair.  The final layer's raw
    logits are planned at the same T-bits-per-value footprint as any other
    activation, which keeps the plan uniform.
    """
    h, w, c = spec.input_hwc
    buf2d = activation_footprint_bits((c, h, w), cfg)
    buf1d = 0
    slot2d = 0  # input lives in the 2-D ping half
    slot1d = None
    names2d = ("2d:ping", "2d:pong")
    names1d = ("1d:ping", "1d:pong")
    placements = []
    for idx, layer in enumerate(spec.layers):
        out_shape = spec.io_shapes[idx][1]
        if isinstance(layer, (ConvLayerSpec, PoolLayerSpec)):
            buf2d = max(buf2d, activation_footprint_bits(out_shape, cfg))
            placements.append(BufferPlacement(idx, layer.kind,
                                              names2d[slot2d], names2d[1 - slot2d]))
            slot2d = 1 - slot2d
        elif isinstance(layer, FlattenSpec):
            buf1d = max(buf1d, activation_footprint_bits(out_shape, cfg))
            placements.append(BufferPlacement(idx, layer.kind, names2d[slot2d], names1d[0]))
            slot1d = 0
        else:
            buf1d = max(buf1d, activation_footprint_bits(out_shape, cfg))
            placements.append(BufferPlacement(idx, layer.kind,
                                              names1d[slot1d], names1d[1 - slot1d]))
            slot1d = 1 - slot1d
    return BufferPlan(buf2d_bits=buf2d, buf1d_bits=buf1d, placements=tuple(placements))


def flatten_transfer(planes: np.ndarray) -> np.ndarray:
    """Reorder (T, C, H, W) spike planes into (T, C*H*W): channel-major,
    then row, then column, within every time step."""
    if planes.ndim != 4:
        raise ConfigError(f"flatten expects (T, C, H, W) planes, got shape {planes.shape}")
    return planes.reshape(planes.shape[0], -1)


class ActivationStore:
    """Run-time ping-pong state; checks capacity on every store, enforces
    the single-flatten protocol and hands each layer the exact planes the
    previous layer wrote."""

    def __init__(self, plan: BufferPlan, cfg: EncodingConfig):
        self.plan = plan
        self.cfg = cfg
        self._slots: dict[str, np.ndarray | None] = {
            "2d:ping": None, "2d:pong": None, "1d:ping": None, "1d:pong": None,
        }
        self._current: str | None = None
        self._flattened = False

    def _capacity(self, name: str) -> int:
        return self.plan.buf2d_bits if name.startswith("2d") else self.plan.buf1d_bits

    def _store(self, name: str, planes: np.ndarray):
        bits = int(np.prod(planes.shape))
        if bits > self._capacity(name):
            raise SimulatorError(
                f"store of {bits} bits overflows {name} ({self._capacity(name)} bits planned)"
            )
        self._slots[name] = planes
        self._current = name

    def put_input(self, planes: np.ndarray):
        self._store("2d:ping", planes)

    def read_current(self) -> np.ndarray:
        if self._current is None or self._slots[self._current] is None:
            raise SimulatorError("no activation stored yet")
        return self._slots[self._current]

    def write_output(self, layer_index: int, planes: np.ndarray):
        placement = self.plan.placements[layer_index]
        if placement.reads != self._current:
            raise SimulatorError(
                f"layer {layer_index} reads {placement.reads} but current data "
                f"sits in {self._current}"
            )
        self._store(placement.writes, planes)

    def flatten(self, layer_index: int) -> np.ndarray:
        if self._flattened:
            raise SimulatorError("flatten transfer invoked twice")
        planes = self.read_current()
        if planes.ndim != 4:
            raise SimulatorError("flatten transfer before the last 2-D layer completed")
        flat = flatten_transfer(planes)
        self.write_output(layer_index, flat)
        self._flattened = True
        return flat
