"""Cycle-annotated functional models of the processing units.

A convolution unit is an X-by-Y adder array fed from a row-wide input
shift register.  Adder column x taps register position stride*x, so
after k shifts it reads source position stride*x + k; each adder row y
walks its kernel row value-by-value in step with the shifts, adding the
kernel value only where the tapped spike bit is 1.  Row results stream
down the Y = K_r pipelined rows, so a full pass over one bit plane and
one input channel costs

    rows_out * (K_c + row_fetch_cycles) + K_c * (K_r - 1)

cycles, the second term being the pipeline fill.  Requantized output
rows are written back once per pass at output_write_cycles per row.
Cycle counts never depend on spike values, only on shapes.

Geometry must admit a layer without tiling: X >= W_out and Y >= K_r
(or Y >= window for pooling).  When X fits several copies of W_out,
that many output channels share the unit in a single pass.

The closed-form bookkeeping is validated against the step-by-step
micro-simulator at the bottom of this module, which shifts an actual
register and counts cycles one at a time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .encoding import EncodingConfig, encode_planes
from .errors import CapacityError, ConfigError, StreamOrderError
from .netmodel import ConvLayerSpec, LinearLayerSpec, PoolLayerSpec


@dataclass(frozen=True)
class UnitGeometry:
    """Adder-array shape: x parallel output columns, y kernel rows."""

    x: int
    y: int

    def __post_init__(self):
        if self.x < 1 or self.y < 1:
            raise ConfigError(f"unit geometry must be at least 1x1, got {self}")


@dataclass(frozen=True)
class CostModelParams:
    row_fetch_cycles: int = 1
    output_write_cycles: int = 1
    linear_parallel_outputs: int = 32

    def __post_init__(self):
        if self.row_fetch_cycles < 0 or self.output_write_cycles < 0:
            raise ConfigError(f"cycle costs must be non-negative: {self}")
        if self.linear_parallel_outputs < 1:
            raise ConfigError(f"linear_parallel_outputs must be >= 1: {self}")


@dataclass(frozen=True)
class PartialRecord:
    """Row sums for one (time step, input channel) pair of a unit pass."""

    t: int
    in_ch: int
    sums: np.ndarray


@dataclass(frozen=True)
class Epilogue:
    """Per-layer output-logic behaviour after the Horner fold."""

    cfg: EncodingConfig
    apply_relu: bool = True
    requant_shift: int = 0
    final: bool = False


def min_register_width(active_cols: int, stride: int, k_c: int) -> int:
    """Shortest input row that keeps every tap in range for all shifts."""
    return stride * (active_cols - 1) + k_c


def channels_per_pass(geom: UnitGeometry, w_out: int, k_r: int, what: str) -> int:
    """Output channels sharing the array in one pass; raises if the layer
    cannot run untiled."""
    if geom.x < w_out or geom.y < k_r:
        raise CapacityError(
            f"{what} needs X >= {w_out} and Y >= {k_r}, unit provides "
            f"X={geom.x}, Y={geom.y} (tiling unsupported)"
        )
    return geom.x // w_out


def conv_pass_cycles(layer: ConvLayerSpec, h_out: int, T: int, cost: CostModelParams) -> int:
    """Cycles for one output-channel pass: all T planes, all input channels."""
    per_plane = h_out * (layer.k_c + cost.row_fetch_cycles) + layer.k_c * (layer.k_r - 1)
    return T * layer.in_channels * per_plane + h_out * cost.output_write_cycles


def _tap_accumulate(plane: np.ndarray, kernel_yx: np.ndarray, stride: int, pad: int,
                    h_out: int, w_out: int) -> np.ndarray:
    """Sum kernel taps over one bit plane without materializing padding.

    plane is (H_in, W_in) binary, kernel_yx is (C, K_r, K_c).  Out-of-range
    taps read zero.  Returns (C, h_out, w_out) int64.
    """
    h_in, w_in = plane.shape
    k_r, k_c = kernel_yx.shape[1:]
    sums = np.zeros((kernel_yx.shape[0], h_out, w_out), dtype=np.int64)
    row_base = np.arange(h_out) * stride - pad
    col_base = np.arange(w_out) * stride - pad
    for y in range(k_r):
        rows = row_base + y
        rmask = (rows >= 0) & (rows < h_in)
        if not rmask.any():
            continue
        for k in range(k_c):
            cols = col_base + k
            cmask = (cols >= 0) & (cols < w_in)
            if not cmask.any():
                continue
            bits = plane[np.ix_(rows[rmask], cols[cmask])].astype(np.int64)
            block = kernel_yx[:, y, k, None, None] * bits[None, :, :]
            sums[np.ix_(np.arange(sums.shape[0]), np.flatnonzero(rmask),
                        np.flatnonzero(cmask))] += block
    return sums


def conv_unit_run(
    geom: UnitGeometry,
    layer: ConvLayerSpec,
    spikes: np.ndarray,
    kernels: np.ndarray,
    cost: CostModelParams,
) -> tuple[list[PartialRecord], int]:
    """Run one convolution unit over its share of output channels.

    spikes is (T, C_in, H_in, W_in) binary; kernels is (C_share, C_in,
    K_r, K_c) signed.  Emits the partial-sum stream time-step major with
    input channels complete per step, plus the pass-accurate cycle count.
    """
    T, c_in, h_in, w_in = spikes.shape
    if c_in != layer.in_channels:
        raise ConfigError(f"spikes carry {c_in} channels, layer expects {layer.in_channels}")
    if kernels.ndim != 4 or kernels.shape[1:] != (layer.in_channels, layer.k_r, layer.k_c):
        raise ConfigError(f"kernel shape {kernels.shape} does not match layer {layer}")
    h_out, w_out = layer.out_hw(h_in, w_in)
    pack = channels_per_pass(geom, w_out, layer.k_r, f"conv {layer.k_r}x{layer.k_c}")

    k64 = kernels.astype(np.int64)
    stream: list[PartialRecord] = []
    for t in range(T):
        for c in range(c_in):
            sums = _tap_accumulate(spikes[t, c], k64[:, c], layer.stride, layer.pad,
                                   h_out, w_out)
            stream.append(PartialRecord(t=t, in_ch=c, sums=sums))

    passes = math.ceil(kernels.shape[0] / pack)
    cycles = passes * conv_pass_cycles(layer, h_out, T, cost)
    return stream, cycles


def output_logic_accumulate(stream: Iterable[PartialRecord], epilogue: Epilogue) -> np.ndarray:
    """Merge a partial-sum stream across input channels and time steps.

    Sums within each time step, Horner-shifts between steps, then applies
    the epilogue: ReLU, right shift, clamp to [0, 2^T - 1] and re-encoding
    to spike planes.  A final-layer epilogue returns raw accumulators.
    """
    records = list(stream)
    if not records:
        raise StreamOrderError("empty partial-sum stream")
    channels = sorted({r.in_ch for r in records if r.t == 0})
    T = epilogue.cfg.T
    expected = [(t, c) for t in range(T) for c in channels]
    got = [(r.t, r.in_ch) for r in records]
    if got != expected:
        raise StreamOrderError(
            f"stream must be time-step major with input channels complete per step; "
            f"got {got[:8]}..., expected {expected[:8]}..."
        )

    acc = np.zeros_like(records[0].sums)
    pos = 0
    for _t in range(T):
        step = np.zeros_like(acc)
        for _c in channels:
            step = step + records[pos].sums
            pos += 1
        acc = (acc << 1) + step

    if epilogue.final:
        return acc
    if epilogue.apply_relu:
        acc = np.maximum(acc, 0)
    levels = np.clip(acc >> epilogue.requant_shift, 0, epilogue.cfg.max_level)
    return encode_planes(levels, epilogue.cfg)


def pool_unit_run(
    geom: UnitGeometry,
    layer: PoolLayerSpec,
    spikes: np.ndarray,
    cost: CostModelParams,
) -> tuple[np.ndarray, int]:
    """Average pooling on spike planes: window sums per plane, Horner fold
    across time steps, then the divisor shift.  No kernel values, so the
    schedule matches a convolution with K_c = window."""
    T, c, h_in, w_in = spikes.shape
    h_out, w_out = layer.out_hw(h_in, w_in)
    pack = channels_per_pass(geom, w_out, layer.window, f"pool {layer.window}x{layer.window}")

    ones = np.ones((1, layer.window, layer.window), dtype=np.int64)
    acc = np.zeros((c, h_out, w_out), dtype=np.int64)
    for t in range(T):
        step = np.stack([
            _tap_accumulate(spikes[t, ch], ones, layer.stride, 0, h_out, w_out)[0]
            for ch in range(c)
        ])
        acc = (acc << 1) + step
    cfg = EncodingConfig(T)
    levels = np.clip(acc >> layer.divisor_shift, 0, cfg.max_level)
    planes = encode_planes(levels, cfg)

    per_plane = h_out * (layer.window + cost.row_fetch_cycles) \
        + layer.window * (layer.window - 1)
    per_pass = T * per_plane + h_out * cost.output_write_cycles
    cycles = math.ceil(c / pack) * per_pass
    return planes, cycles


def linear_unit_run(
    layer: LinearLayerSpec,
    spikes: np.ndarray,
    weights: np.ndarray,
    cost: CostModelParams,
    epilogue: Epilogue,
) -> tuple[np.ndarray, int]:
    """Fully-connected unit: one weight fetched per accumulate, P outputs
    in parallel, so cycles = T * in_features * ceil(out / P).  Returns
    output spike planes, or raw logits for a final-layer epilogue."""
    T, n = spikes.shape
    if n != layer.in_features:
        raise ConfigError(f"spikes carry {n} features, layer expects {layer.in_features}")
    if weights.shape != (layer.out_features, layer.in_features):
        raise ConfigError(f"weight shape {weights.shape} does not match layer {layer}")
    w64 = weights.astype(np.int64)
    stream = [
        PartialRecord(t=t, in_ch=0, sums=w64 @ spikes[t].astype(np.int64))
        for t in range(T)
    ]
    out = output_logic_accumulate(stream, epilogue)
    cycles = T * layer.in_features * math.ceil(
        layer.out_features / cost.linear_parallel_outputs
    )
    return out, cycles


# --- step-by-step micro-simulator ----------------------------------------


def microsim_tap_trace(active_cols: int, stride: int, shifts: int) -> list[list[int]]:
    """Shift an index-tagged register and record which source position each
    fixed tap (at stride*x) sees after every shift."""
    width = min_register_width(active_cols, stride, shifts)
    register = list(range(width))
    trace = []
    for _k in range(shifts):
        trace.append([register[stride * x] for x in range(active_cols)])
        register = register[1:] + [-1]  # -1 marks data shifted in past the row end
    return trace


def microsim_conv_plane(
    plane: np.ndarray,
    kernel: np.ndarray,
    stride: int,
    pad: int,
    cost: CostModelParams,
) -> tuple[np.ndarray, int]:
    """Literal shift-and-accumulate walk over one bit plane with one 2-D
    kernel, counting cycles step by step.  Small cases only; used to
    validate the closed-form bookkeeping and the tap positions."""
    h_in, w_in = plane.shape
    k_r, k_c = kernel.shape
    h_out = (h_in + 2 * pad - k_r) // stride + 1
    w_out = (w_in + 2 * pad - k_c) // stride + 1
    sums = np.zeros((h_out, w_out), dtype=np.int64)

    cycles = k_c * (k_r - 1)  # pipeline fill: each extra adder row delays by K_c
    for i in range(h_out):
        cycles += cost.row_fetch_cycles
        for k in range(k_c):
            cycles += 1
            for y in range(k_r):
                r = i * stride + y - pad
                if not 0 <= r < h_in:
                    continue
                for x in range(w_out):
                    q = stride * x + k - pad  # tap stride*x after k shifts
                    if 0 <= q < w_in and plane[r, q]:
                        sums[i, x] += int(kernel[y, k])
    return sums, cycles


def microsim_pool_plane(
    plane: np.ndarray, window: int, stride: int, cost: CostModelParams
) -> tuple[np.ndarray, int]:
    """Pool twin of microsim_conv_plane: all-ones kernel, no padding."""
    kernel = np.ones((window, window), dtype=np.int64)
    return microsim_conv_plane(plane, kernel, stride, 0, cost)
