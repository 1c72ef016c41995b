"""Brute-force quantized-integer reference inference.

Ground truth for the accelerator model: plain integer arithmetic over
decoded activation levels, no dataflow or cycle modelling.  Convolution
walks every output position explicitly; padding is materialized.  All
arithmetic is int64.
"""

from __future__ import annotations

import numpy as np

from .encoding import EncodingConfig
from .errors import ConfigError
from .netmodel import (
    ConvLayerSpec,
    FlattenSpec,
    LinearLayerSpec,
    NetworkSpec,
    PoolLayerSpec,
    QuantizedParams,
)


def ref_conv2d(act: np.ndarray, kernel: np.ndarray, stride: int = 1, pad: int = 0) -> np.ndarray:
    act = np.asarray(act, dtype=np.int64)
    kernel = np.asarray(kernel, dtype=np.int64)
    if act.ndim != 3 or kernel.ndim != 4 or kernel.shape[1] != act.shape[0]:
        raise ConfigError(
            f"conv shape mismatch: activations {act.shape}, kernel {kernel.shape}"
        )
    _, h, w = act.shape
    out_ch, _, k_r, k_c = kernel.shape
    h_out = (h + 2 * pad - k_r) // stride + 1
    w_out = (w + 2 * pad - k_c) // stride + 1
    if h_out < 1 or w_out < 1:
        raise ConfigError(f"conv output collapses: {h}x{w} with kernel {k_r}x{k_c}")
    padded = np.pad(act, ((0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((out_ch, h_out, w_out), dtype=np.int64)
    for o in range(out_ch):
        for i in range(h_out):
            for j in range(w_out):
                window = padded[:, i * stride:i * stride + k_r, j * stride:j * stride + k_c]
                out[o, i, j] = int(np.sum(window * kernel[o]))
    return out


def ref_avgpool(act: np.ndarray, window: int, stride: int, divisor_shift: int) -> np.ndarray:
    act = np.asarray(act, dtype=np.int64)
    if window * window != 1 << divisor_shift:
        raise ConfigError(f"window {window} squared must equal 2^{divisor_shift}")
    c, h, w = act.shape
    h_out = (h - window) // stride + 1
    w_out = (w - window) // stride + 1
    out = np.zeros((c, h_out, w_out), dtype=np.int64)
    for ch in range(c):
        for i in range(h_out):
            for j in range(w_out):
                total = int(np.sum(act[ch, i * stride:i * stride + window,
                                       j * stride:j * stride + window]))
                out[ch, i, j] = total >> divisor_shift
    return out


def ref_linear(act: np.ndarray, weights: np.ndarray) -> np.ndarray:
    act = np.asarray(act, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.int64)
    if act.ndim != 1 or weights.ndim != 2 or weights.shape[1] != act.shape[0]:
        raise ConfigError(f"linear shape mismatch: input {act.shape}, weights {weights.shape}")
    out = np.zeros(weights.shape[0], dtype=np.int64)
    for o in range(weights.shape[0]):
        out[o] = int(np.sum(weights[o] * act))
    return out


def _epilogue(acc: np.ndarray, apply_relu: bool, shift: int, max_level: int) -> np.ndarray:
    if apply_relu:
        acc = np.maximum(acc, 0)
    return np.clip(acc >> shift, 0, max_level)


def ref_forward(
    spec: NetworkSpec,
    params: QuantizedParams,
    input_levels: np.ndarray,
    cfg: EncodingConfig,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Run the whole network on integer activation levels.

    Every non-final layer is followed by its epilogue (optional ReLU,
    right shift, clamp to [0, 2^T - 1]).  The final layer returns raw
    accumulators as logits.  Returns (logits, per-layer outputs).
    """
    params.validate_against(spec)
    cur = np.asarray(input_levels, dtype=np.int64)
    if cur.size and (cur.min() < 0 or cur.max() > cfg.max_level):
        raise ConfigError(f"input levels outside [0, {cfg.max_level}]")
    per_layer: list[np.ndarray] = []
    last = len(spec.layers) - 1
    for idx, layer in enumerate(spec.layers):
        if isinstance(layer, ConvLayerSpec):
            acc = ref_conv2d(cur, params.tensors[idx], layer.stride, layer.pad)
            cur = _epilogue(acc, layer.apply_relu, layer.requant_shift, cfg.max_level)
        elif isinstance(layer, PoolLayerSpec):
            cur = ref_avgpool(cur, layer.window, layer.stride, layer.divisor_shift)
        elif isinstance(layer, FlattenSpec):
            cur = cur.reshape(-1)  # channel-major, then row, then column
        elif isinstance(layer, LinearLayerSpec):
            acc = ref_linear(cur, params.tensors[idx])
            if idx == last:
                cur = acc
            else:
                cur = _epilogue(acc, layer.apply_relu, layer.requant_shift, cfg.max_level)
        per_layer.append(cur)
    return per_layer[-1], per_layer
