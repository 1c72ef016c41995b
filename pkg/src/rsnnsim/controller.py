"""Layer-by-layer execution of a network on the accelerator model.

The controller walks the layer list in order.  Convolution layers split
their output channels into as many groups as fit one adder array side by
side and deal the groups round-robin over the available convolution
units; the units run concurrently, so the layer costs as many cycles as
the busiest unit.  Pooling and linear layers run on single, shared
units.  Weight fetches are charged per layer before its compute.
Functional results are bit-exact regardless of unit count or memory
mode, and cycle counts never depend on the data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import oracle
from .encoding import EncodingConfig, encode_planes, quantize_activations
from .errors import ConfigError, SimulatorError
from .memsys import ActivationStore, MemoryMode, plan_buffers, weight_fetch_cycles
from .netmodel import (
    ConvLayerSpec,
    FlattenSpec,
    LinearLayerSpec,
    NetworkSpec,
    PoolLayerSpec,
    QuantizedParams,
)
from .report import CycleReport, LayerCycles
from .simunits import (
    CostModelParams,
    Epilogue,
    UnitGeometry,
    channels_per_pass,
    conv_unit_run,
    linear_unit_run,
    output_logic_accumulate,
    pool_unit_run,
)


@dataclass(frozen=True)
class AcceleratorConfig:
    encoding: EncodingConfig = EncodingConfig(4)
    conv_units: int = 1
    conv_geom: UnitGeometry = UnitGeometry(30, 5)
    pool_geom: UnitGeometry = UnitGeometry(14, 2)
    memory: MemoryMode = MemoryMode("on_chip")
    cost: CostModelParams = CostModelParams()
    clock_mhz: float = 100.0

    def __post_init__(self):
        if self.conv_units < 1:
            raise ConfigError(f"conv_units must be >= 1, got {self.conv_units}")
        if self.clock_mhz <= 0:
            raise ConfigError(f"clock_mhz must be positive, got {self.clock_mhz}")


_CONFIG_KEYS = {
    "T", "conv_units", "conv_xy", "pool_xy", "memory_mode",
    "dram_latency_cycles", "dram_bytes_per_cycle", "row_fetch_cycles",
    "output_write_cycles", "linear_parallel_outputs", "clock_mhz",
}


def parse_accelerator_config(text: str) -> AcceleratorConfig:
    """Key = value lines, '#' comments; unknown keys are rejected."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        values[key] = val

    def geti(key, default):
        try:
            return int(values[key]) if key in values else default
        except ValueError:
            raise ConfigError(f"config key {key}: bad integer {values[key]!r}") from None

    def getxy(key, default):
        if key not in values:
            return default
        parts = values[key].replace("x", ",").split(",")
        try:
            x, y = (int(p) for p in parts)
        except ValueError:
            raise ConfigError(f"config key {key}: expected X,Y, got {values[key]!r}") from None
        return UnitGeometry(x, y)

    mode_kind = values.get("memory_mode", "on_chip")
    memory = MemoryMode(
        kind=mode_kind,
        dram_latency_cycles=geti("dram_latency_cycles", 100) if mode_kind == "off_chip" else 0,
        dram_bytes_per_cycle=geti("dram_bytes_per_cycle", 4) if mode_kind == "off_chip" else 1,
    )
    try:
        clock = float(values.get("clock_mhz", 100.0))
    except ValueError:
        raise ConfigError(f"config key clock_mhz: bad number {values['clock_mhz']!r}") from None
    return AcceleratorConfig(
        encoding=EncodingConfig(geti("T", 4)),
        conv_units=geti("conv_units", 1),
        conv_geom=getxy("conv_xy", UnitGeometry(30, 5)),
        pool_geom=getxy("pool_xy", UnitGeometry(14, 2)),
        memory=memory,
        cost=CostModelParams(
            row_fetch_cycles=geti("row_fetch_cycles", 1),
            output_write_cycles=geti("output_write_cycles", 1),
            linear_parallel_outputs=geti("linear_parallel_outputs", 32),
        ),
        clock_mhz=clock,
    )


def load_accelerator_config(path: str | Path) -> AcceleratorConfig:
    return parse_accelerator_config(Path(path).read_text())


@dataclass(frozen=True)
class InferenceResult:
    predicted: int
    logits: np.ndarray
    report: CycleReport


def _image_to_chw(image: np.ndarray, spec: NetworkSpec) -> np.ndarray:
    h, w, c = spec.input_hwc
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.shape != (h, w, c):
        raise ConfigError(f"image shape {arr.shape} does not match network input {(h, w, c)}")
    return np.moveaxis(arr, 2, 0)


def image_to_levels(image: np.ndarray, spec: NetworkSpec, enc: EncodingConfig) -> np.ndarray:
    """Quantize a [0, 1] image into (C, H, W) activation levels."""
    return quantize_activations(_image_to_chw(image, spec), enc)


def _deal_channel_groups(n_channels: int, pack: int, units: int) -> list[np.ndarray]:
    """Chunk output channels into per-pass groups, then deal the groups
    round-robin so every unit ends up with at most ceil(groups / units)."""
    groups = [np.arange(g * pack, min((g + 1) * pack, n_channels))
              for g in range(math.ceil(n_channels / pack))]
    shares = [np.concatenate(groups[u::units]) for u in range(units) if groups[u::units]]
    return shares


def run_inference(
    spec: NetworkSpec,
    params: QuantizedParams,
    image: np.ndarray,
    accel: AcceleratorConfig,
) -> InferenceResult:
    params.validate_against(spec)
    enc = accel.encoding
    levels = quantize_activations(_image_to_chw(image, spec), enc)
    planes = encode_planes(levels, enc)

    plan = plan_buffers(spec, enc)
    store = ActivationStore(plan, enc)
    store.put_input(planes)

    layer_rows: list[LayerCycles] = []
    logits = None
    last = len(spec.layers) - 1
    for idx, layer in enumerate(spec.layers):
        final = idx == last
        fetch = 0
        if isinstance(layer, ConvLayerSpec):
            kernels = params.tensors[idx]
            fetch = weight_fetch_cycles(accel.memory, kernels.size)
            spikes = store.read_current()
            _, h_out, w_out = spec.io_shapes[idx][1]
            pack = channels_per_pass(accel.conv_geom, w_out, layer.k_r,
                                     f"layer {idx} conv")
            shares = _deal_channel_groups(layer.out_channels, pack, accel.conv_units)
            epilogue = Epilogue(cfg=enc, apply_relu=layer.apply_relu,
                                requant_shift=layer.requant_shift)
            out = np.zeros((enc.T, layer.out_channels, h_out, w_out), dtype=np.uint8)
            compute = 0
            for share in shares:
                stream, cycles = conv_unit_run(
                    accel.conv_geom, layer, spikes, kernels[share], accel.cost
                )
                out[:, share] = output_logic_accumulate(stream, epilogue)
                compute = max(compute, cycles)
            store.write_output(idx, out)
        elif isinstance(layer, PoolLayerSpec):
            out, compute = pool_unit_run(accel.pool_geom, layer,
                                         store.read_current(), accel.cost)
            store.write_output(idx, out)
        elif isinstance(layer, FlattenSpec):
            store.flatten(idx)
            compute = 0
        elif isinstance(layer, LinearLayerSpec):
            weights = params.tensors[idx]
            fetch = weight_fetch_cycles(accel.memory, weights.size)
            epilogue = Epilogue(cfg=enc, apply_relu=layer.apply_relu,
                                requant_shift=layer.requant_shift, final=final)
            out, compute = linear_unit_run(layer, store.read_current(),
                                           weights, accel.cost, epilogue)
            if final:
                logits = out
            else:
                store.write_output(idx, out)
        else:
            raise ConfigError(f"layer {idx}: unsupported layer {layer!r}")
        layer_rows.append(LayerCycles(
            index=idx, kind=layer.kind, detail=spec.layer_label(idx),
            compute_cycles=int(compute), weight_fetch_cycles=int(fetch),
        ))

    report = CycleReport(layers=tuple(layer_rows), clock_mhz=accel.clock_mhz,
                         buffer_plan=plan)
    return InferenceResult(predicted=int(np.argmax(logits)), logits=logits, report=report)


def calibrate_requant(
    spec: NetworkSpec,
    params: QuantizedParams,
    samples: list[np.ndarray],
    enc: EncodingConfig,
) -> dict[int, int]:
    """Pick, per conv/linear layer, the smallest right shift that keeps every
    post-ReLU accumulator within [0, 2^T - 1] over the calibration inputs.

    Runs on the integer reference model layer by layer: shifts chosen for
    earlier layers feed the activations used to calibrate later ones.
    The final layer keeps shift 0 since it emits raw logits.
    """
    if not samples:
        raise ConfigError("calibration needs at least one sample input")
    params.validate_against(spec)
    acts = [quantize_activations(_image_to_chw(s, spec), enc) for s in samples]
    shifts: dict[int, int] = {}
    last = len(spec.layers) - 1
    for idx, layer in enumerate(spec.layers):
        if isinstance(layer, ConvLayerSpec) or (
            isinstance(layer, LinearLayerSpec) and idx != last
        ):
            if isinstance(layer, ConvLayerSpec):
                raw = [oracle.ref_conv2d(a, params.tensors[idx], layer.stride, layer.pad)
                       for a in acts]
            else:
                raw = [oracle.ref_linear(a, params.tensors[idx]) for a in acts]
            if layer.apply_relu:
                raw = [np.maximum(r, 0) for r in raw]
            peak = max(max(0, int(r.max())) for r in raw)
            shift = 0
            while (peak >> shift) > enc.max_level:
                shift += 1
            shifts[idx] = shift
            acts = [np.clip(r >> shift, 0, enc.max_level) for r in raw]
        elif isinstance(layer, PoolLayerSpec):
            acts = [oracle.ref_avgpool(a, layer.window, layer.stride, layer.divisor_shift)
                    for a in acts]
        elif isinstance(layer, FlattenSpec):
            acts = [a.reshape(-1) for a in acts]
        else:  # final linear
            shifts[idx] = 0
    return shifts


def apply_requant_shifts(spec: NetworkSpec, shifts: dict[int, int]) -> NetworkSpec:
    layers = list(spec.layers)
    for idx, shift in shifts.items():
        if isinstance(layers[idx], (ConvLayerSpec, LinearLayerSpec)):
            layers[idx] = replace(layers[idx], requant_shift=shift)
    return NetworkSpec(input_hwc=spec.input_hwc, layers=tuple(layers))


def sweep_time_steps(
    spec: NetworkSpec,
    params: QuantizedParams,
    image: np.ndarray,
    accel: AcceleratorConfig,
    t_list: list[int],
) -> dict:
    """Latency trend over spike-train lengths; cycle counts must be affine
    in T, which is checked on uniformly spaced sweeps."""
    if not t_list or sorted(t_list) != list(t_list) or len(set(t_list)) != len(t_list):
        raise ConfigError("t_list must be non-empty and strictly ascending")
    rows = []
    for t in t_list:
        cfg = replace(accel, encoding=EncodingConfig(t))
        result = run_inference(spec, params, image, cfg)
        rows.append({
            "T": t,
            "total_cycles": result.report.total_cycles,
            "latency_us": round(result.report.latency_us, 6),
        })
    cycles = [r["total_cycles"] for r in rows]
    increments = [b - a for a, b in zip(cycles, cycles[1:])]
    spacing = {b - a for a, b in zip(t_list, t_list[1:])}
    if len(t_list) >= 3 and len(spacing) == 1:
        second = [b - a for a, b in zip(increments, increments[1:])]
        if any(second):
            raise SimulatorError(f"cycle counts are not affine in T: increments {increments}")
    return {
        "kind": "sweep_t",
        "conv_units": accel.conv_units,
        "rows": rows,
        "cycle_increments": increments,
    }


def sweep_conv_units(
    spec: NetworkSpec,
    params: QuantizedParams,
    image: np.ndarray,
    accel: AcceleratorConfig,
    u_list: list[int],
) -> dict:
    """Latency trend over convolution-unit counts.  Latency must be monotone
    non-increasing, and any doubling must speed up by strictly less than 2x
    while non-convolution or memory cycles are nonzero."""
    if not u_list or sorted(u_list) != list(u_list) or len(set(u_list)) != len(u_list):
        raise ConfigError("u_list must be non-empty and strictly ascending")
    rows = []
    reports = []
    for u in u_list:
        cfg = replace(accel, conv_units=u)
        result = run_inference(spec, params, image, cfg)
        reports.append(result.report)
        rows.append({
            "conv_units": u,
            "total_cycles": result.report.total_cycles,
            "latency_us": round(result.report.latency_us, 6),
        })
    base = rows[0]["total_cycles"]
    for row in rows:
        row["speedup_vs_baseline"] = round(base / row["total_cycles"], 4)
    cycles = [r["total_cycles"] for r in rows]
    if any(b > a for a, b in zip(cycles, cycles[1:])):
        raise SimulatorError(f"latency increased with more conv units: {cycles}")
    for i, u in enumerate(u_list):
        for j, u2 in enumerate(u_list):
            if u2 == 2 * u:
                fixed = sum(
                    l.total_cycles for l in reports[i].layers if l.kind != "conv"
                ) + sum(l.weight_fetch_cycles for l in reports[i].layers)
                if fixed > 0 and cycles[i] / cycles[j] >= 2.0:
                    raise SimulatorError(
                        f"doubling {u}->{u2} sped up by {cycles[i] / cycles[j]:.3f}x "
                        f"despite {fixed} fixed cycles"
                    )
    return {"kind": "sweep_units", "time_steps": accel.encoding.T, "rows": rows}


def evaluate(
    spec: NetworkSpec,
    params: QuantizedParams,
    images: np.ndarray,
    labels: np.ndarray,
    accel: AcceleratorConfig,
    limit: int | None = None,
) -> dict:
    n = len(images) if limit is None else min(limit, len(images))
    if n < 1:
        raise ConfigError("evaluation needs at least one dataset item")
    correct = 0
    report = None
    for i in range(n):
        result = run_inference(spec, params, images[i], accel)
        report = result.report
        if result.predicted == int(labels[i]):
            correct += 1
    return {
        "kind": "evaluate",
        "items": n,
        "correct": correct,
        "accuracy": round(correct / n, 6),
        "cycle_report": report.to_dict(),
    }
