"""Network description, shape inference and quantized-parameter storage.

Two equivalent network notations are accepted:

  compact   "32x32x1 - 6C5 - P2 - 16C5 - P2 - 120C5 - L120 - L84 - L10"
            nCk = conv with n output channels and a k x k kernel,
            Pk / kP = average pool with a k x k window and stride k,
            Ln or a bare integer n = linear layer with n outputs.

  verbose   line-based key=value blocks; this is also the serialization
            target because it carries strides, padding and requant shifts:

            input 32x32x1
            conv out=6 kernel=5x5 stride=1 pad=0 shift=0 relu=true
            pool window=2 stride=2 shift=2
            flatten
            linear out=120 shift=0 relu=true

Parameter files are little-endian binary: magic "RSNN", version u16,
layer count u16, then per layer: layer index u16, bit width u8, rank u8,
dims u32 each, values as signed 8-bit integers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path
import struct

import numpy as np

from .errors import ConfigError, DataFormatError

PARAM_MAGIC = b"RSNN"
PARAM_VERSION = 1


@dataclass(frozen=True)
class ConvLayerSpec:
    in_channels: int
    out_channels: int
    k_r: int
    k_c: int
    stride: int = 1
    pad: int = 0
    requant_shift: int = 0
    apply_relu: bool = True

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.k_r, self.k_c, self.stride) < 1:
            raise ConfigError(f"invalid conv geometry: {self}")
        if self.pad < 0 or self.requant_shift < 0:
            raise ConfigError(f"invalid conv pad/shift: {self}")

    @property
    def kind(self) -> str:
        return "conv"

    @property
    def param_shape(self) -> tuple[int, ...]:
        return (self.out_channels, self.in_channels, self.k_r, self.k_c)

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        ho = (h + 2 * self.pad - self.k_r) // self.stride + 1
        wo = (w + 2 * self.pad - self.k_c) // self.stride + 1
        return ho, wo


@dataclass(frozen=True)
class PoolLayerSpec:
    window: int
    stride: int
    divisor_shift: int

    def __post_init__(self):
        if self.window < 1 or self.stride < 1 or self.divisor_shift < 0:
            raise ConfigError(f"invalid pool geometry: {self}")
        if self.window * self.window != 1 << self.divisor_shift:
            raise ConfigError(
                f"pool window {self.window} squared must equal 2^divisor_shift "
                f"(got shift {self.divisor_shift})"
            )

    @property
    def kind(self) -> str:
        return "pool"

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        ho = (h - self.window) // self.stride + 1
        wo = (w - self.window) // self.stride + 1
        return ho, wo


@dataclass(frozen=True)
class FlattenSpec:
    @property
    def kind(self) -> str:
        return "flatten"


@dataclass(frozen=True)
class LinearLayerSpec:
    in_features: int
    out_features: int
    requant_shift: int = 0
    apply_relu: bool = True

    def __post_init__(self):
        if self.in_features < 1 or self.out_features < 1 or self.requant_shift < 0:
            raise ConfigError(f"invalid linear geometry: {self}")

    @property
    def kind(self) -> str:
        return "linear"

    @property
    def param_shape(self) -> tuple[int, ...]:
        return (self.out_features, self.in_features)


LayerSpec = ConvLayerSpec | PoolLayerSpec | FlattenSpec | LinearLayerSpec


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layer list with fully inferred per-layer shapes.

    2-D shapes are (channels, height, width); 1-D shapes are (features,).
    The network must end with a linear layer and contain exactly one
    flatten, placed after the last 2-D layer.
    """

    input_hwc: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]
    io_shapes: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "io_shapes", tuple(self._infer_shapes()))

    def _infer_shapes(self):
        h, w, c = self.input_hwc
        if min(h, w, c) < 1:
            raise ConfigError(f"invalid input shape {self.input_hwc}")
        if not self.layers or not isinstance(self.layers[-1], LinearLayerSpec):
            raise ConfigError("network must end with a linear layer")
        if sum(isinstance(l, FlattenSpec) for l in self.layers) != 1:
            raise ConfigError("network must contain exactly one flatten")

        shape: tuple[int, ...] = (c, h, w)
        io = []
        flattened = False
        for idx, layer in enumerate(self.layers):
            if isinstance(layer, ConvLayerSpec):
                if flattened:
                    raise ConfigError(f"layer {idx}: conv after flatten")
                if layer.in_channels != shape[0]:
                    raise ConfigError(
                        f"layer {idx}: conv expects {layer.in_channels} input channels, "
                        f"previous layer provides {shape[0]}"
                    )
                ho, wo = layer.out_hw(shape[1], shape[2])
                if ho < 1 or wo < 1:
                    raise ConfigError(
                        f"layer {idx}: conv output collapses to {ho}x{wo} "
                        f"from input {shape[1]}x{shape[2]}"
                    )
                out = (layer.out_channels, ho, wo)
            elif isinstance(layer, PoolLayerSpec):
                if flattened:
                    raise ConfigError(f"layer {idx}: pool after flatten")
                ho, wo = layer.out_hw(shape[1], shape[2])
                if ho < 1 or wo < 1:
                    raise ConfigError(f"layer {idx}: pool output collapses to {ho}x{wo}")
                out = (shape[0], ho, wo)
            elif isinstance(layer, FlattenSpec):
                if flattened:
                    raise ConfigError(f"layer {idx}: repeated flatten")
                flattened = True
                out = (int(np.prod(shape)),)
            elif isinstance(layer, LinearLayerSpec):
                if not flattened:
                    raise ConfigError(f"layer {idx}: linear before flatten")
                if layer.in_features != shape[0]:
                    raise ConfigError(
                        f"layer {idx}: linear expects {layer.in_features} inputs, "
                        f"previous layer provides {shape[0]}"
                    )
                out = (layer.out_features,)
            else:
                raise ConfigError(f"layer {idx}: unknown layer type {layer!r}")
            io.append((shape, out))
            shape = out
        return io

    @property
    def l_c(self) -> int:
        return sum(isinstance(l, ConvLayerSpec) for l in self.layers)

    @property
    def l_l(self) -> int:
        return sum(isinstance(l, LinearLayerSpec) for l in self.layers)

    @property
    def parameterized_indices(self) -> tuple[int, ...]:
        return tuple(
            i for i, l in enumerate(self.layers)
            if isinstance(l, (ConvLayerSpec, LinearLayerSpec))
        )

    def layer_label(self, idx: int) -> str:
        layer = self.layers[idx]
        if isinstance(layer, ConvLayerSpec):
            return f"{layer.out_channels}C{layer.k_r}x{layer.k_c}"
        if isinstance(layer, PoolLayerSpec):
            return f"P{layer.window}"
        if isinstance(layer, FlattenSpec):
            return "flatten"
        return f"L{layer.out_features}"


# --- parsing -------------------------------------------------------------

_INPUT_RE = re.compile(r"^(\d+)x(\d+)(?:x(\d+))?$")
_CONV_RE = re.compile(r"^(\d+)C(\d+)$")
_POOL_RE = re.compile(r"^(?:P(\d+)|(\d+)P)$")
_LINEAR_RE = re.compile(r"^(?:L(\d+)|(\d+))$")


def _pool_shift(window: int, where: str) -> int:
    shift = (window * window).bit_length() - 1
    if 1 << shift != window * window:
        raise ConfigError(f"{where}: pool window {window} squared is not a power of two")
    return shift


def parse_network(text: str) -> NetworkSpec:
    """Parse a network document in compact or verbose notation."""
    stripped = [
        ln.strip() for ln in text.splitlines()
        if ln.strip() and not ln.strip().startswith("#")
    ]
    if not stripped:
        raise ConfigError("empty network document")
    if stripped[0].split()[0] == "input":
        return _parse_verbose(stripped)
    return _parse_compact(" ".join(stripped))


def _parse_compact(line: str) -> NetworkSpec:
    tokens = [tok for tok in re.split(r"\s*-+\s*", line.strip()) if tok]
    if len(tokens) < 2:
        raise ConfigError(f"compact network needs an input and at least one layer: {line!r}")
    m = _INPUT_RE.match(tokens[0])
    if not m:
        raise ConfigError(f"bad input token {tokens[0]!r}, expected HxW or HxWxC")
    h, w = int(m.group(1)), int(m.group(2))
    c = int(m.group(3)) if m.group(3) else 1

    layers: list[LayerSpec] = []
    shape: tuple[int, ...] = (c, h, w)
    flattened = False
    for pos, tok in enumerate(tokens[1:], start=1):
        if m := _CONV_RE.match(tok):
            n, k = int(m.group(1)), int(m.group(2))
            layers.append(ConvLayerSpec(in_channels=shape[0], out_channels=n, k_r=k, k_c=k))
            ho, wo = layers[-1].out_hw(shape[1], shape[2])
            if ho < 1 or wo < 1:
                raise ConfigError(
                    f"layer {tok!r}: conv collapses a {shape[1]}x{shape[2]} input"
                )
            shape = (n, ho, wo)
        elif m := _POOL_RE.match(tok):
            k = int(m.group(1) or m.group(2))
            layers.append(PoolLayerSpec(window=k, stride=k, divisor_shift=_pool_shift(k, tok)))
            ho, wo = layers[-1].out_hw(shape[1], shape[2])
            if ho < 1 or wo < 1:
                raise ConfigError(
                    f"layer {tok!r}: pool collapses a {shape[1]}x{shape[2]} input"
                )
            shape = (shape[0], ho, wo)
        elif m := _LINEAR_RE.match(tok):
            n = int(m.group(1) or m.group(2))
            if not flattened:
                layers.append(FlattenSpec())
                shape = (int(np.prod(shape)),)
                flattened = True
            layers.append(LinearLayerSpec(in_features=shape[0], out_features=n))
            shape = (n,)
        else:
            raise ConfigError(f"token {pos} ({tok!r}) is not a recognized layer")
    if layers and isinstance(layers[-1], LinearLayerSpec):
        layers[-1] = replace(layers[-1], apply_relu=False)
    return NetworkSpec(input_hwc=(h, w, c), layers=tuple(layers))


_TRUE = {"true", "1", "yes"}
_FALSE = {"false", "0", "no"}


def _kv_fields(parts: list[str], where: str) -> dict[str, str]:
    out = {}
    for p in parts:
        if "=" not in p:
            raise ConfigError(f"{where}: expected key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k] = v
    return out


def _get_bool(fields: dict, key: str, default: bool, where: str) -> bool:
    raw = fields.pop(key, None)
    if raw is None:
        return default
    if raw.lower() in _TRUE:
        return True
    if raw.lower() in _FALSE:
        return False
    raise ConfigError(f"{where}: bad boolean {key}={raw!r}")


def _get_int(fields: dict, key: str, default, where: str) -> int:
    raw = fields.pop(key, None)
    if raw is None:
        if default is None:
            raise ConfigError(f"{where}: missing required field {key}")
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{where}: bad integer {key}={raw!r}") from None


def _parse_verbose(lines: list[str]) -> NetworkSpec:
    head = lines[0].split()
    if len(head) != 2:
        raise ConfigError(f"line 1: expected 'input HxWxC', got {lines[0]!r}")
    m = _INPUT_RE.match(head[1])
    if not m:
        raise ConfigError(f"line 1: bad input shape {head[1]!r}")
    h, w = int(m.group(1)), int(m.group(2))
    c = int(m.group(3)) if m.group(3) else 1

    layers: list[LayerSpec] = []
    shape: tuple[int, ...] = (c, h, w)
    flattened = False
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        kind, fields = parts[0], _kv_fields(parts[1:], f"line {lineno}")
        where = f"line {lineno} ({kind})"
        if kind == "conv":
            out_ch = _get_int(fields, "out", None, where)
            kern = fields.pop("kernel", None)
            if kern is None:
                raise ConfigError(f"{where}: missing required field kernel")
            km = re.match(r"^(\d+)(?:x(\d+))?$", kern)
            if not km:
                raise ConfigError(f"{where}: bad kernel {kern!r}")
            k_r = int(km.group(1))
            k_c = int(km.group(2)) if km.group(2) else k_r
            layer = ConvLayerSpec(
                in_channels=shape[0],
                out_channels=out_ch,
                k_r=k_r,
                k_c=k_c,
                stride=_get_int(fields, "stride", 1, where),
                pad=_get_int(fields, "pad", 0, where),
                requant_shift=_get_int(fields, "shift", 0, where),
                apply_relu=_get_bool(fields, "relu", True, where),
            )
            ho, wo = layer.out_hw(shape[1], shape[2])
            if ho < 1 or wo < 1:
                raise ConfigError(f"{where}: conv collapses a {shape[1]}x{shape[2]} input")
            shape = (out_ch, ho, wo)
        elif kind == "pool":
            window = _get_int(fields, "window", None, where)
            layer = PoolLayerSpec(
                window=window,
                stride=_get_int(fields, "stride", window, where),
                divisor_shift=_get_int(fields, "shift", _pool_shift(window, where), where),
            )
            ho, wo = layer.out_hw(shape[1], shape[2])
            if ho < 1 or wo < 1:
                raise ConfigError(f"{where}: pool collapses a {shape[1]}x{shape[2]} input")
            shape = (shape[0], ho, wo)
        elif kind == "flatten":
            layer = FlattenSpec()
            shape = (int(np.prod(shape)),)
            flattened = True
        elif kind == "linear":
            if not flattened:
                layers.append(FlattenSpec())
                shape = (int(np.prod(shape)),)
                flattened = True
            layer = LinearLayerSpec(
                in_features=shape[0],
                out_features=_get_int(fields, "out", None, where),
                requant_shift=_get_int(fields, "shift", 0, where),
                apply_relu=_get_bool(fields, "relu", True, where),
            )
            shape = (layer.out_features,)
        else:
            raise ConfigError(f"line {lineno}: unknown layer kind {kind!r}")
        if fields:
            raise ConfigError(f"{where}: unknown fields {sorted(fields)}")
        layers.append(layer)
    return NetworkSpec(input_hwc=(h, w, c), layers=tuple(layers))


def network_to_text(spec: NetworkSpec) -> str:
    """Serialize to the verbose notation (lossless, reparses to an equal spec)."""
    h, w, c = spec.input_hwc
    lines = [f"input {h}x{w}x{c}"]
    for layer in spec.layers:
        if isinstance(layer, ConvLayerSpec):
            lines.append(
                f"conv out={layer.out_channels} kernel={layer.k_r}x{layer.k_c} "
                f"stride={layer.stride} pad={layer.pad} shift={layer.requant_shift} "
                f"relu={'true' if layer.apply_relu else 'false'}"
            )
        elif isinstance(layer, PoolLayerSpec):
            lines.append(
                f"pool window={layer.window} stride={layer.stride} shift={layer.divisor_shift}"
            )
        elif isinstance(layer, FlattenSpec):
            lines.append("flatten")
        else:
            lines.append(
                f"linear out={layer.out_features} shift={layer.requant_shift} "
                f"relu={'true' if layer.apply_relu else 'false'}"
            )
    return "\n".join(lines) + "\n"


# --- quantized parameters ------------------------------------------------


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize_weights(w: np.ndarray, weight_bits: int, scale: float) -> np.ndarray:
    """Symmetric quantization: clamp(round(w / scale)) to the signed range."""
    if not 2 <= weight_bits <= 8:
        raise ConfigError(f"weight bit width must be in [2, 8], got {weight_bits}")
    if scale <= 0:
        raise ConfigError(f"scale must be positive, got {scale}")
    arr = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DataFormatError("weights contain non-finite values")
    lo, hi = -(1 << (weight_bits - 1)), (1 << (weight_bits - 1)) - 1
    return np.clip(_round_half_away(arr / scale), lo, hi).astype(np.int8)


@dataclass(frozen=True)
class QuantizedParams:
    """Signed-integer tensors keyed by layer index; shared bit width."""

    weight_bits: int
    tensors: dict[int, np.ndarray]

    def __post_init__(self):
        lo, hi = -(1 << (self.weight_bits - 1)), (1 << (self.weight_bits - 1)) - 1
        for idx, tensor in self.tensors.items():
            if tensor.size and (tensor.min() < lo or tensor.max() > hi):
                raise DataFormatError(
                    f"layer {idx}: values outside [{lo}, {hi}] for {self.weight_bits}-bit weights"
                )

    def validate_against(self, spec: NetworkSpec):
        expected = set(spec.parameterized_indices)
        if set(self.tensors) != expected:
            raise ConfigError(
                f"parameter layer indices {sorted(self.tensors)} do not match "
                f"the network's parameterized layers {sorted(expected)}"
            )
        for idx in expected:
            want = spec.layers[idx].param_shape
            got = self.tensors[idx].shape
            if got != want:
                raise ConfigError(f"layer {idx}: parameter shape {got}, expected {want}")


def random_params(spec: NetworkSpec, weight_bits: int, rng: np.random.Generator) -> QuantizedParams:
    lo, hi = -(1 << (weight_bits - 1)), (1 << (weight_bits - 1)) - 1
    tensors = {
        idx: rng.integers(lo, hi + 1, size=spec.layers[idx].param_shape, dtype=np.int64).astype(np.int8)
        for idx in spec.parameterized_indices
    }
    return QuantizedParams(weight_bits=weight_bits, tensors=tensors)


def save_params(params: QuantizedParams, path: str | Path):
    blob = bytearray()
    blob += PARAM_MAGIC
    blob += struct.pack("<HH", PARAM_VERSION, len(params.tensors))
    for idx in sorted(params.tensors):
        tensor = params.tensors[idx]
        blob += struct.pack("<HBB", idx, params.weight_bits, tensor.ndim)
        blob += struct.pack(f"<{tensor.ndim}I", *tensor.shape)
        blob += tensor.astype(np.int8).tobytes(order="C")
    Path(path).write_bytes(bytes(blob))


def load_params(path: str | Path, spec: NetworkSpec | None = None) -> QuantizedParams:
    data = Path(path).read_bytes()
    view = memoryview(data)

    def take(n: int, what: str) -> memoryview:
        nonlocal view
        if len(view) < n:
            raise DataFormatError(f"truncated parameter file while reading {what}")
        chunk, view = view[:n], view[n:]
        return chunk

    if bytes(take(4, "magic")) != PARAM_MAGIC:
        raise DataFormatError("bad magic, not a parameter file")
    version, count = struct.unpack("<HH", take(4, "header"))
    if version != PARAM_VERSION:
        raise DataFormatError(f"unsupported parameter file version {version}")

    tensors: dict[int, np.ndarray] = {}
    weight_bits = None
    for _ in range(count):
        idx, b_w, rank = struct.unpack("<HBB", take(4, "layer header"))
        if not 2 <= b_w <= 8:
            raise DataFormatError(f"layer {idx}: bad weight bit width {b_w}")
        if weight_bits is None:
            weight_bits = b_w
        elif weight_bits != b_w:
            raise DataFormatError("mixed weight bit widths in one parameter file")
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        size = int(np.prod(dims)) if rank else 0
        if min(dims, default=0) < 1:
            raise DataFormatError(f"layer {idx}: non-positive dimension in {dims}")
        raw = take(size, f"layer {idx} values")
        if idx in tensors:
            raise DataFormatError(f"duplicate layer index {idx}")
        tensors[idx] = np.frombuffer(raw, dtype=np.int8).reshape(dims).copy()
    if len(view) != 0:
        raise DataFormatError(f"{len(view)} trailing bytes after last layer")
    if weight_bits is None:
        raise DataFormatError("parameter file declares zero layers")

    params = QuantizedParams(weight_bits=weight_bits, tensors=tensors)
    if spec is not None:
        params.validate_against(spec)
    return params
