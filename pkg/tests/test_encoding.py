import numpy as np
import pytest

from rsnnsim.encoding import (
    EncodingConfig,
    decode_planes,
    decode_radix,
    encode_planes,
    encode_radix,
    horner_accumulate,
    quantize_activation,
    quantize_activations,
)
from rsnnsim.errors import ConfigError


class TestQuantize:
    def test_max(self):
        assert quantize_activation(1.0, EncodingConfig(3)) == 7

    def test_zero(self):
        assert quantize_activation(0.0, EncodingConfig(3)) == 0

    def test_rounding(self):
        # round(0.34 * 7) = round(2.38) = 2
        assert quantize_activation(0.34, EncodingConfig(3)) == 2

    def test_half_away_from_zero(self):
        # 0.5 * 7 = 3.5 rounds up, not to even
        assert quantize_activation(0.5, EncodingConfig(3)) == 4

    def test_truncate_mode(self):
        assert quantize_activation(0.34, EncodingConfig(3), mode="truncate") == 2
        assert quantize_activation(0.5, EncodingConfig(3), mode="truncate") == 3

    @pytest.mark.parametrize("bad", [-0.1, 1.1, float("nan"), float("inf")])
    def test_domain_error(self, bad):
        with pytest.raises(ConfigError):
            quantize_activation(bad, EncodingConfig(3))

    def test_monotone(self):
        for T in range(1, 9):
            cfg = EncodingConfig(T)
            levels = [quantize_activation(x, cfg) for x in np.linspace(0, 1, 517)]
            assert all(b >= a for a, b in zip(levels, levels[1:]))

    def test_vector_matches_scalar(self):
        cfg = EncodingConfig(5)
        xs = np.linspace(0, 1, 101)
        vec = quantize_activations(xs, cfg)
        assert vec.tolist() == [quantize_activation(float(x), cfg) for x in xs]


class TestEncodeDecode:
    def test_examples(self):
        assert encode_radix(5, EncodingConfig(3)).tolist() == [1, 0, 1]
        assert encode_radix(0, EncodingConfig(3)).tolist() == [0, 0, 0]
        assert encode_radix(7, EncodingConfig(3)).tolist() == [1, 1, 1]

    def test_decode_examples(self):
        assert decode_radix([1, 0, 1]) == 5
        assert decode_radix([0, 0, 0]) == 0
        assert decode_radix([1, 1, 1, 1]) == 15

    def test_range_error(self):
        with pytest.raises(ConfigError):
            encode_radix(8, EncodingConfig(3))
        with pytest.raises(ConfigError):
            encode_radix(-1, EncodingConfig(3))

    def test_non_binary_rejected(self):
        with pytest.raises(ConfigError):
            decode_radix([1, 2, 0])

    def test_round_trip_exhaustive(self):
        for T in range(1, 13):
            cfg = EncodingConfig(T)
            for q in range(1 << T):
                assert decode_radix(encode_radix(q, cfg)) == q

    def test_bad_train_length_config(self):
        with pytest.raises(ConfigError):
            EncodingConfig(0)
        with pytest.raises(ConfigError):
            EncodingConfig(17)


class TestHorner:
    def test_examples(self):
        assert horner_accumulate([3, 1, 2]) == 16
        assert horner_accumulate([0, 0, 0]) == 0
        assert horner_accumulate([-2, 4]) == 0

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            horner_accumulate([])

    def test_weighted_sum_identity_exhaustive(self):
        for length in (1, 2, 3):
            for combo in np.ndindex(*([5] * length)):
                seq = [v - 2 for v in combo]
                want = sum(p * (1 << (length - 1 - t)) for t, p in enumerate(seq))
                assert horner_accumulate(seq) == want

    def test_weighted_sum_identity_random(self):
        rng = np.random.default_rng(2024)
        for _ in range(500):
            length = int(rng.integers(1, 24))
            seq = rng.integers(-10**6, 10**6, size=length)
            want = sum(int(p) * (1 << (length - 1 - t)) for t, p in enumerate(seq))
            assert horner_accumulate(seq) == want


class TestPlanes:
    def test_planes_round_trip(self):
        rng = np.random.default_rng(5)
        for T in (1, 3, 6, 10):
            cfg = EncodingConfig(T)
            levels = rng.integers(0, cfg.max_level + 1, size=(3, 4, 5))
            planes = encode_planes(levels, cfg)
            assert planes.shape == (T, 3, 4, 5)
            assert set(np.unique(planes)).issubset({0, 1})
            assert np.array_equal(decode_planes(planes), levels)

    def test_planes_range_check(self):
        with pytest.raises(ConfigError):
            encode_planes(np.array([8]), EncodingConfig(3))

    def test_bit_plane_linearity(self):
        # the keystone: any integer dot product distributes over bit planes
        # with radix weights, sum_t 2^(T-1-t) D(plane_t) = D(decoded levels)
        rng = np.random.default_rng(77)
        for _ in range(200):
            T = int(rng.integers(1, 9))
            cfg = EncodingConfig(T)
            n = int(rng.integers(1, 40))
            levels = rng.integers(0, cfg.max_level + 1, size=n)
            weights = rng.integers(-4, 4, size=n)
            planes = encode_planes(levels, cfg)
            per_plane = [int(weights @ planes[t].astype(np.int64)) for t in range(T)]
            assert horner_accumulate(per_plane) == int(weights @ levels)
