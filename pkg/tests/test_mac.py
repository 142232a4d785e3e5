import math

import numpy as np
import pytest

from ce_ofdma import estimation as est
from ce_ofdma import mac
from ce_ofdma.errors import CapacityError, ConfigurationError, CrcError, DimensionError, \
    IndeterminateSpectrumError
from ce_ofdma.experiments import ce_symbol_energy
from ce_ofdma.waveform import qpsk_symbols, synthesize_block


# ---------------------------------------------------------------- allocation

def test_slma_single_user():
    rmap = mac.slma_allocate(["a"])
    assert [i for _, i in rmap.symbols_of("a")] == list(range(1, 14))
    assert rmap.symbol_users[0][mac.PILOT_SYMBOL] is None


def test_slma_four_users_disjoint():
    rmap = mac.slma_allocate([0, 1, 2, 3])
    sets = [set(rmap.symbols_of(u)) for u in range(4)]
    for i in range(4):
        for j in range(i + 1, 4):
            assert not sets[i] & sets[j]
    covered = sorted(s for sym in sets for _, s in sym)
    assert covered == list(range(1, 14))


def test_slma_capacity():
    with pytest.raises(CapacityError):
        mac.slma_allocate(list(range(14)))
    assert len(mac.slma_allocate(list(range(14)), slots=2).symbols_of(13)) == 1
    with pytest.raises(ConfigurationError):
        mac.slma_allocate([1, 1])


@pytest.mark.parametrize("n, expected", [(24, 1), (23, 0), (13104, 546)])
def test_blma_segments(n, expected):
    assert mac.blma_segment(n) == expected


def test_blma_allocation():
    rmap = mac.blma_allocate(["a", "b", "c"], 24 * 8)
    assert [len(rmap.segments_of(u)) for u in "abc"] == [3, 3, 2]
    assert rmap.bit_ranges_of("c") == [(144, 168), (168, 192)]
    with pytest.raises(CapacityError):
        mac.blma_allocate(["a", "b"], 24)
    with pytest.raises(CapacityError):
        mac.blma_allocate(["a"], 48, demands=[3])
    assert mac.ResourceMap.from_dict(rmap.to_dict()) == rmap


@pytest.mark.parametrize("n_seg, bits", [(1, 0), (8, 6), (275, 16)])
def test_field_size(n_seg, bits):
    assert mac.bitdomain_field_size(n_seg) == bits


def test_field_size_formula_exhaustive():
    for n in range(1, 1025):
        codes = n * (n + 1) // 2
        size = mac.bitdomain_field_size(n)
        assert (1 << size) >= codes
        assert size == 0 or (1 << (size - 1)) < codes


def test_riv_bijection():
    for n in range(1, 65):
        seen = set()
        for start in range(n):
            for length in range(1, n - start + 1):
                riv = mac.riv_encode(start, length, n)
                assert mac.riv_decode(riv, n) == (start, length)
                seen.add(riv)
        assert seen == set(range(n * (n + 1) // 2))


# ----------------------------------------------------------------------- DCI

def random_message(rng, fmt, config):
    rnti = int(rng.integers(0, 1 << 16))
    mcs = int(rng.integers(0, 8))
    if fmt == 0:
        return mac.DciMessage(0, int(rng.integers(0, 1 << config.slot_offset_bits)), mcs, rnti,
                              num_slots=int(rng.integers(1, 1 + (1 << config.num_slots_bits))),
                              symbol_index=int(rng.integers(0, 1 << config.symbol_index_bits)))
    start = int(rng.integers(0, config.n_segments))
    length = int(rng.integers(1, config.n_segments - start + 1))
    return mac.DciMessage(1, int(rng.integers(0, 4)), mcs, rnti, bsi_start=start, bsi_len=length)


@pytest.mark.parametrize("fmt", [0, 1])
def test_dci_round_trip(fmt):
    rng = np.random.default_rng(fmt)
    config = mac.DciConfig(n_segments=546)
    for _ in range(10_000):
        msg = random_message(rng, fmt, config)
        bits = mac.encode_dci(msg, config)
        assert mac.decode_dci(bits, fmt, config, rnti=msg.crc_rnti) == msg


def test_format1_time_field():
    msg = mac.DciMessage(1, 3, 0, 0x1234, bsi_start=0, bsi_len=1)
    bits = mac.encode_dci(msg)
    assert "".join(map(str, bits[:2])) == "11"
    assert bits.size == mac.DciConfig().total_bits(1) == 2 + 6 + 3 + 16


@pytest.mark.parametrize("fmt", [0, 1])
def test_single_bit_errors_detected(fmt):
    rng = np.random.default_rng(10 + fmt)
    config = mac.DciConfig()
    for _ in range(50):
        msg = random_message(rng, fmt, config)
        bits = mac.encode_dci(msg, config)
        for i in range(bits.size):
            flipped = bits.copy()
            flipped[i] ^= 1
            with pytest.raises(CrcError):
                mac.decode_dci(flipped, fmt, config, rnti=msg.crc_rnti)


def test_dci_errors():
    with pytest.raises(ConfigurationError):
        mac.encode_dci(mac.DciMessage(0, 4, 0, 1, num_slots=1, symbol_index=0))
    with pytest.raises(ConfigurationError):
        mac.encode_dci(mac.DciMessage(1, 0, 0, 1, bsi_start=7, bsi_len=2))
    with pytest.raises(ConfigurationError):
        mac.encode_dci(mac.DciMessage(0, 0, 0, 1 << 16, num_slots=1, symbol_index=0))
    with pytest.raises(DimensionError):
        mac.decode_dci(np.zeros(5), 0)


def test_crc16_check_value():
    # CRC-16/XMODEM of ASCII "123456789"
    bits = [int(b) for ch in b"123456789" for b in format(ch, "08b")]
    assert mac.crc16(bits) == 0x31C3


# ---------------------------------------------------------------- classifier

@pytest.fixture(scope="module")
def ce_spectra(table_cfg, optimized_filter):
    rng = np.random.default_rng(3)
    lam = est.effective_response(optimized_filter, table_cfg)
    blocks = [est.demap(synthesize_block(qpsk_symbols(rng, 256), optimized_filter,
                                         table_cfg).freq_signal, table_cfg)
              for _ in range(1000)]
    return np.array(blocks), ce_symbol_energy(lam, 256)


def accuracy(ce_spectra, snr_db, rng):
    y, es = ce_spectra
    var = es / 10 ** (snr_db / 10)

    def noise():
        return math.sqrt(var / 2) * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))

    # legacy PDCCH: flat QPSK over the same bins at matched per-bin power
    legacy = qpsk_symbols(rng, y.size).reshape(y.shape) * math.sqrt(es / 6) + noise()
    ce_ok = np.mean([mac.classify_pdcch(z, 256, var).label == "ce" for z in y + noise()])
    legacy_ok = np.mean([mac.classify_pdcch(z, 256, var).label == "legacy" for z in legacy])
    return ce_ok, legacy_ok


def test_classifier_ce_at_0db(ce_spectra):
    ce_ok, legacy_ok = accuracy(ce_spectra, 0.0, np.random.default_rng(1))
    assert ce_ok >= 0.99
    assert legacy_ok >= 0.99


def test_classifier_accuracy_monotone(ce_spectra):
    rng = np.random.default_rng(2)
    acc = [np.mean(accuracy(ce_spectra, s, rng)) for s in (-10, -5, 0, 5)]
    assert all(b >= a - 0.005 for a, b in zip(acc, acc[1:]))


def test_classifier_flat_and_noise(rng):
    flat = qpsk_symbols(rng, 768)
    d = mac.classify_pdcch(flat, 256)
    assert d.label == "legacy" and abs(d.ratio_db) < 1.0
    for _ in range(500):
        noise = rng.standard_normal(768) + 1j * rng.standard_normal(768)
        d = mac.classify_pdcch(noise, 256, noise_var=2.0)
        assert d.label == "legacy" and d.low_confidence
        assert mac.classify_pdcch(noise, 256).low_confidence


def test_classifier_noiseless_ce(table_cfg, optimized_filter, rng):
    y = est.demap(synthesize_block(qpsk_symbols(rng, 256), optimized_filter,
                                   table_cfg).freq_signal, table_cfg)
    d = mac.classify_pdcch(y, 256)
    assert d.label == "ce" and d.ratio_db > 10


def test_classifier_errors():
    with pytest.raises(IndeterminateSpectrumError):
        mac.classify_pdcch(np.zeros(768), 256)
    with pytest.raises(DimensionError):
        mac.classify_pdcch(np.ones(100), 256)
    with pytest.raises(ConfigurationError):
        mac.classify_pdcch(np.ones(768), 3)
