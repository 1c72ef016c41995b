"""Shared generators for randomized property tests."""

import numpy as np

from rsnnsim.netmodel import (
    ConvLayerSpec,
    FlattenSpec,
    LinearLayerSpec,
    NetworkSpec,
    PoolLayerSpec,
    random_params,
)


def random_network(rng: np.random.Generator, max_conv: int = 4) -> NetworkSpec:
    """Small random conv/pool/linear stack that fits a 64-wide adder array."""
    h = w = int(rng.integers(6, 13))
    c = int(rng.integers(1, 4))
    layers = []
    cur = (c, h, w)
    for _ in range(int(rng.integers(1, max_conv + 1))):
        choices = [k for k in (3, 5) if cur[1] >= k and cur[2] >= k]
        if not choices:
            break
        k = int(rng.choice(choices))
        pad = int(rng.integers(0, 2))
        conv = ConvLayerSpec(
            in_channels=cur[0],
            out_channels=int(rng.integers(1, 7)),
            k_r=k,
            k_c=k,
            stride=1,
            pad=pad,
            requant_shift=int(rng.integers(0, 4)),
            apply_relu=bool(rng.integers(0, 2)),
        )
        ho, wo = conv.out_hw(cur[1], cur[2])
        layers.append(conv)
        cur = (conv.out_channels, ho, wo)
        if rng.random() < 0.4 and cur[1] >= 2 and cur[2] >= 2:
            pool = PoolLayerSpec(window=2, stride=2, divisor_shift=2)
            ho, wo = pool.out_hw(cur[1], cur[2])
            layers.append(pool)
            cur = (cur[0], ho, wo)
    layers.append(FlattenSpec())
    feats = int(np.prod(cur))
    for _ in range(int(rng.integers(0, 2))):
        out = int(rng.integers(4, 13))
        layers.append(LinearLayerSpec(in_features=feats, out_features=out,
                                      requant_shift=int(rng.integers(0, 4))))
        feats = out
    layers.append(LinearLayerSpec(in_features=feats,
                                  out_features=int(rng.integers(2, 11))))
    return NetworkSpec(input_hwc=(h, w, c), layers=tuple(layers))


def random_case(rng: np.random.Generator, weight_bits: int = 3):
    """(spec, params, image) triple for end-to-end runs."""
    spec = random_network(rng)
    params = random_params(spec, weight_bits, rng)
    h, w, c = spec.input_hwc
    image = rng.random((h, w) if c == 1 else (h, w, c))
    return spec, params, image
