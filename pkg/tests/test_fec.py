import numpy as np
import pytest

from ce_ofdma import fec
from ce_ofdma.errors import ConfigurationError, DimensionError


def test_none_loopback(rng):
    bits = rng.integers(0, 2, 1000).astype(np.uint8)
    llr = 1.0 - 2.0 * fec.fec_encode(bits)
    np.testing.assert_array_equal(fec.fec_decode(llr), bits)


def test_conv_impulse_response():
    codec = fec.get_codec("conv-r12")
    out = codec.encode(np.array([1], dtype=np.uint8))
    # generators 133 and 171 (octal) read MSB first, interleaved
    g1 = [int(c) for c in format(0o133, "07b")]
    g2 = [int(c) for c in format(0o171, "07b")]
    np.testing.assert_array_equal(out, np.column_stack([g1, g2]).ravel())
    assert codec.coded_length(1) == out.size == 14


def test_conv_linearity(rng):
    codec = fec.get_codec("conv-r12")
    a, b = rng.integers(0, 2, (2, 64)).astype(np.uint8)
    np.testing.assert_array_equal(codec.encode(a ^ b), codec.encode(a) ^ codec.encode(b))


def test_conv_noiseless_million_bits():
    codec = fec.get_codec("conv-r12")
    bits = np.random.default_rng(0).integers(0, 2, (2000, 500)).astype(np.uint8)
    decoded = codec.decode(1.0 - 2.0 * codec.encode(bits))
    assert np.count_nonzero(decoded != bits) == 0


def test_conv_awgn_near_union_bound():
    codec = fec.get_codec("conv-r12")
    rng = np.random.default_rng(1)
    # enough errors at 3.5 dB for a stable estimate (about 160 per run)
    ebn0_db = 3.5
    bits = rng.integers(0, 2, (4000, 500)).astype(np.uint8)
    x = 1.0 - 2.0 * codec.encode(bits)
    # unit-energy coded BPSK: Es = R Eb
    sigma = np.sqrt(1 / (2 * codec.rate * 10 ** (ebn0_db / 10)))
    ber = np.mean(codec.decode(x + sigma * rng.standard_normal(x.shape)) != bits)
    assert fec.conv_union_bound(ebn0_db + 0.3) <= ber <= fec.conv_union_bound(ebn0_db - 0.3)


def test_conv_length_checks():
    codec = fec.get_codec("conv-r12")
    with pytest.raises(DimensionError):
        codec.decode(np.ones(13))
    with pytest.raises(DimensionError):
        codec.decode(np.ones(10))
    with pytest.raises(ConfigurationError):
        fec.ConvCodec(generators=(0o400, 0o171))


def test_unknown_codec():
    with pytest.raises(ConfigurationError, match="unknown codec"):
        fec.get_codec("ldpc")


def test_union_bound_decreasing():
    ub = fec.conv_union_bound(np.arange(2.0, 8.0, 0.5))
    assert np.all(np.diff(ub) < 0)
