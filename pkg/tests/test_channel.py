import json
import math

import numpy as np
import pytest

from ce_ofdma import channel as chn
from ce_ofdma.config import WaveformConfig
from ce_ofdma.errors import ConfigurationError, DimensionError, DomainError
from ce_ofdma.transforms import dft, idft
from ce_ofdma.waveform import add_cp


@pytest.fixture(scope="module")
def tiny_cfg():
    return WaveformConfig(n_subcarriers=64, n_complex_symbols=4)


def rayleigh_profile():
    return chn.TapProfile.from_dict({"name": "one", "taps": [{"delay_norm": 0, "power_db": 0}]})


def test_single_tap_is_flat(tiny_cfg):
    rng = np.random.default_rng(0)
    power = []
    for _ in range(20_000):
        c = chn.sample_tdl(rayleigh_profile(), 0.0, tiny_cfg, rng)
        np.testing.assert_allclose(c.freq_response, c.gains[0])
        power.append(abs(c.gains[0]) ** 2)
    assert abs(np.mean(power) - 1) < 0.03


def test_two_path_ripple_matches_formula(table_cfg):
    tau = 1 / (table_cfg.n_subcarriers * table_cfg.subcarrier_spacing_hz * 2)
    gains = np.array([1.0, 1.0]) / math.sqrt(2)
    c = chn.realization([0.0, tau], gains, table_cfg)
    i = np.arange(table_cfg.n_subcarriers)
    direct = gains[0] + gains[1] * np.exp(-2j * np.pi * i * table_cfg.subcarrier_spacing_hz * tau)
    np.testing.assert_allclose(c.freq_response, direct, atol=1e-12)
    assert np.ptp(np.abs(c.freq_response)) > 0.5


def test_tap_correlation_monte_carlo(tiny_cfg):
    profile = chn.load_profile("ntn_tdl_d")
    rng = np.random.default_rng(1)
    n = 100_000
    g = np.array([chn.sample_tdl(profile, 1e-9, tiny_cfg, rng).gains
                  for _ in range(n)])
    cov = g.T @ g.conj() / n
    rho = profile.powers
    np.testing.assert_allclose(np.real(np.diag(cov)), rho, rtol=0.02)
    off = np.abs(cov - np.diag(np.diag(cov)))
    assert off.max() < 0.02 * rho.max()


def test_awgn_profile(table_cfg):
    c = chn.sample_tdl(chn.load_profile("awgn"), 37e-9, table_cfg, np.random.default_rng(0))
    np.testing.assert_array_equal(c.freq_response, np.ones(table_cfg.n_subcarriers))


def test_profile_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        chn.TapProfile.from_dict({"taps": []})
    with pytest.raises(ConfigurationError):
        chn.TapProfile.from_dict({"taps": [{"delay_norm": 1, "power_db": 0},
                                           {"delay_norm": 0.5, "power_db": 0}]})
    with pytest.raises(ConfigurationError):
        chn.load_profile("no_such_profile")
    path = tmp_path / "p.json"
    profile = chn.load_profile("ntn_tdl_d")
    path.write_text(json.dumps(profile.to_dict()))
    assert chn.load_profile(str(path)) == profile


def test_tdl_d_realization_invariants(table_cfg):
    profile = chn.load_profile("ntn_tdl_d")
    c = chn.sample_tdl(profile, 37e-9, table_cfg, np.random.default_rng(5))
    assert np.all(np.diff(c.delays) > 0) and c.delays[0] >= 0
    assert c.delays.max() < table_cfg.cp_len * table_cfg.sample_period
    assert c.powers.sum() == pytest.approx(1.0)
    i = np.arange(table_cfg.n_subcarriers)
    direct = np.exp(-2j * np.pi * np.outer(i * table_cfg.subcarrier_spacing_hz, c.delays)) @ c.gains
    np.testing.assert_allclose(c.freq_response, direct, atol=1e-12)


def test_delay_beyond_cp_rejected(table_cfg):
    with pytest.raises(ConfigurationError):
        chn.realization([0.0, 257 * table_cfg.sample_period], [1, 1], table_cfg)
    with pytest.raises(DomainError):
        chn.realization([-1e-9], [1], table_cfg)


def test_identity_channel(rng, table_cfg):
    p = rng.standard_normal(4096) + 1j * rng.standard_normal(4096)
    y = chn.apply_channel(p, chn.flat_channel(table_cfg), chn.NoiseModel(0.0))
    np.testing.assert_array_equal(y, p)


def test_diagonal_model(rng, table_cfg):
    p = rng.standard_normal(4096) + 1j * rng.standard_normal(4096)
    c = chn.sample_tdl(chn.load_profile("ntn_tdl_d"), 37e-9, table_cfg, rng)
    y = chn.apply_channel(p, c)
    np.testing.assert_allclose(y / p, c.freq_response, rtol=1e-12)


def test_multi_user_sum(rng, table_cfg):
    ps = [rng.standard_normal(4096) + 0j for _ in range(2)]
    cs = [chn.sample_tdl(chn.load_profile("ntn_tdl_d"), 37e-9, table_cfg, rng) for _ in range(2)]
    y = chn.apply_channel(ps, cs)
    np.testing.assert_allclose(y, cs[0].freq_response * ps[0] + cs[1].freq_response * ps[1])
    with pytest.raises(DimensionError):
        chn.apply_channel(ps, cs[:1])
    with pytest.raises(DimensionError):
        chn.apply_channel(np.ones(10), cs[0])


def test_time_domain_cross_check(rng):
    cfg = WaveformConfig(n_subcarriers=256, n_complex_symbols=16)
    ts = cfg.sample_period
    c = chn.realization(np.array([0, 3, 7, 15]) * ts,
                        rng.standard_normal(4) + 1j * rng.standard_normal(4), cfg)
    p = rng.standard_normal(256) + 1j * rng.standard_normal(256)
    tx = add_cp(idft(p), cfg.cp_len)
    rx = chn.convolve_time(tx, c, cfg)
    y = dft(rx[cfg.cp_len:])
    np.testing.assert_allclose(y, chn.apply_channel(p, c), atol=1e-9)


def test_noise_calibration():
    z = chn.NoiseModel(0.7).sample(1_000_000, np.random.default_rng(3))
    assert np.mean(np.abs(z) ** 2) == pytest.approx(0.7, rel=0.01)
    assert abs(np.mean(z.real ** 2) - np.mean(z.imag ** 2)) < 0.01
    with pytest.raises(DomainError):
        chn.NoiseModel(-1.0)


def test_esn0_bookkeeping():
    assert chn.noise_variance(2.0, 0.0) == 2.0
    assert chn.noise_variance(15.92, 10.0) == pytest.approx(1.592)
    assert chn.noise_variance(1.0, -3.0) == pytest.approx(10 ** 0.3)


def test_guard_band_noise_estimate(rng, table_cfg, optimized_filter):
    from ce_ofdma.waveform import qpsk_symbols, synthesize_block
    p = synthesize_block(qpsk_symbols(rng, 256), optimized_filter, table_cfg).freq_signal
    y = chn.apply_channel(p, chn.flat_channel(table_cfg), chn.NoiseModel(0.5), rng)
    assert chn.guard_band_noise_variance(y, table_cfg) == pytest.approx(0.5, rel=0.05)


def test_realization_determinism(table_cfg):
    profile = chn.load_profile("ntn_tdl_d")
    a = chn.sample_tdl(profile, 37e-9, table_cfg, np.random.default_rng(11))
    b = chn.sample_tdl(profile, 37e-9, table_cfg, np.random.default_rng(11))
    np.testing.assert_array_equal(a.freq_response, b.freq_response)
