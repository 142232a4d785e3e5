import math

import numpy as np
import pytest

from ce_ofdma import channel as chn
from ce_ofdma import estimation as est
from ce_ofdma.config import WaveformConfig
from ce_ofdma.errors import ConfigurationError, NumericalError, SingularityError
from ce_ofdma.experiments import build_pilot, ce_symbol_energy
from ce_ofdma.transforms import dft, idft
from ce_ofdma.waveform import fdtp_apply

DF = 120e3


# ------------------------------------------------------------------ demap

def test_demap_contiguous():
    cfg = WaveformConfig(n_subcarriers=64, n_complex_symbols=4, user_anchors=(6,))
    y = np.arange(64)
    np.testing.assert_array_equal(est.demap(y, cfg), np.arange(12))


def test_demap_wraps():
    cfg = WaveformConfig(n_subcarriers=64, n_complex_symbols=4, user_anchors=(0,))
    y = np.arange(64)
    np.testing.assert_array_equal(est.demap(y, cfg), np.r_[58:64, 0:6])


def test_remap_demap_identity(rng, table_cfg):
    y = rng.standard_normal(768) + 1j * rng.standard_normal(768)
    np.testing.assert_array_equal(est.demap(est.remap(y, table_cfg), table_cfg), y)


# --------------------------------------------------------------------- LS

def test_ls_noiseless_and_identity(rng):
    xi = rng.standard_normal(24) + 1j * rng.standard_normal(24)
    x = rng.choice([-1.0, 1.0], 24) + 1j * rng.standard_normal(24)
    np.testing.assert_allclose(est.ls_estimate(x * xi, x), xi, atol=1e-14)
    np.testing.assert_array_equal(est.ls_estimate(xi, np.ones(24)), xi)
    dense = np.linalg.solve(np.diag(x), x * xi)
    np.testing.assert_allclose(est.ls_estimate(x * xi, x), dense, atol=1e-12)


def test_ls_zero_pilot():
    with pytest.raises(SingularityError):
        est.ls_estimate(np.ones(4), np.array([1, 0, 1, 1]))


# -------------------------------------------------------------------- PDP

def test_pdp_single_tap_spike():
    n, q = 96, 5
    xi = np.exp(-2j * np.pi * np.arange(n) * q / n)
    w = est.delay_window(n, cp_window_len=10, guard=2)
    r = est.pdp_estimate(xi, np.ones(n), 0.0, w)
    expected = np.zeros(n)
    expected[q] = n
    np.testing.assert_allclose(r, expected, atol=1e-10)


def test_pdp_noise_residue():
    # with the expected debias term, pure noise leaves E[max(E - 1, 0)] = 1/e
    rng = np.random.default_rng(8)
    n, sig2 = 256, 2.0
    w = np.ones(n)
    acc = np.zeros(n)
    trials = 2000
    for _ in range(trials):
        z = chn.NoiseModel(sig2).sample(n, rng)
        acc += est.pdp_estimate(z, np.ones(n), sig2, w, debias="expected")
    assert np.mean(acc / trials) == pytest.approx(sig2 / math.e, rel=0.03)


def test_pdp_window_transparency(rng):
    n = 64
    xi = np.exp(-2j * np.pi * np.arange(n) * 3 / n) * (1 + 0.5j)
    x = rng.choice([-1.0, 1.0], n)
    with_window = est.pdp_estimate(xi, x, 0.1, np.ones(n))
    manual = np.maximum(np.abs(idft(xi)) ** 2 - 0.1 * np.abs(idft(1 / x)) ** 2, 0)
    np.testing.assert_allclose(with_window, manual, atol=1e-14)
    assert np.all(with_window >= 0)


# ------------------------------------------------------------------ DPMCE

def test_dpmce_noiseless_is_windowed_inverse(rng):
    n = 96
    h = est.steering_vector(n, np.array([0.0, 3 / (n * DF)]), DF) @ np.array([1.0, 0.4j])
    w = est.delay_window(n, cp_window_len=8, guard=0)
    # flat filter: the channel lies inside the window, so nothing is lost
    lam = np.full(n, 2.0)
    pdp = est.pdp_estimate(lam * h, np.ones(n), 0.0, w)
    np.testing.assert_allclose(est.dpmce(lam * h, pdp, 0.0, lam, w), h, atol=1e-12)
    # general filter: Lambda^{-1} applied to the windowed LS estimate
    lam = 1 + 0.3 * rng.standard_normal(n)
    xi = lam * h
    pdp = est.pdp_estimate(xi, np.ones(n), 0.0, w)
    expected = dft(w * idft(xi)) / lam
    np.testing.assert_allclose(est.dpmce(xi, pdp, 0.0, lam, w), expected, atol=1e-12)


def test_dpmce_zero_pdp(rng):
    xi = rng.standard_normal(32) + 0j
    out = est.dpmce(xi, np.zeros(32), 0.5, np.ones(32))
    np.testing.assert_array_equal(out, np.zeros(32))


def test_dpmce_zero_filter():
    with pytest.raises(SingularityError):
        est.dpmce(np.ones(8), np.ones(8), 0.1, np.zeros(8))


# ---------------------------------------------------------- spatial smooth

def test_hankel_by_hand():
    np.testing.assert_array_equal(est.spatial_smooth(np.array([1, 2, 3, 4]), 2, 3),
                                  [[1, 2, 3], [2, 3, 4]])
    with pytest.raises(ConfigurationError):
        est.spatial_smooth(np.arange(4), 2, 2)


@pytest.mark.parametrize("q", [1, 2, 4])
def test_hankel_rank(q):
    n = 64
    delays = np.arange(q) * 5 / (n * DF)
    h = est.steering_vector(n, delays, DF) @ np.exp(1j * np.arange(q))
    sv = np.linalg.svd(est.spatial_smooth(h, 33, 32), compute_uv=False)
    assert np.sum(sv > 1e-9 * sv[0]) == q


# -------------------------------------------------------------------- MDL

def test_mdl_examples():
    sv = np.array([5.0, 3.0, 0, 0, 0, 0, 0, 0])
    assert est.mdl_order(sv, 8, 9) == 2
    assert est.mdl_order(np.ones(8), 8, 9) == 0
    assert est.mdl_order(sv, 8, 9, max_paths=1) == 1
    with pytest.raises(ConfigurationError):
        est.mdl_order([1.0], 1, 1)


@pytest.fixture(scope="module")
def tdl_setup(table_cfg, optimized_filter):
    full = optimized_filter.user_response(table_cfg)
    lam = est.effective_response(optimized_filter, table_cfg)
    pilot = build_pilot({"kind": "optimized", "budget": 200_000, "seed": 1}, 256)
    x = pilot.freq_diag(1)
    xbar = est.demap(fdtp_apply(pilot.gdft_out, full, table_cfg), table_cfg)
    return lam, x, xbar, chn.load_profile("ntn_tdl_d")


def _order_hits(table_cfg, tdl_setup, snr, draws=200):
    lam, x, xbar, profile = tdl_setup
    rng = np.random.default_rng(0)
    sig2 = chn.noise_variance(ce_symbol_energy(lam, 256), snr)
    hits = 0
    for _ in range(draws):
        c = chn.sample_tdl(profile, 37e-9, table_cfg, rng)
        h = c.occupied(table_cfg)
        y = h * xbar + chn.NoiseModel(sig2).sample(h.shape, rng)
        hits += est.epmce(y, x, lam, sig2, table_cfg).order == profile.n_taps
    return hits / draws


def test_mdl_order_tdl_high_snr(table_cfg, tdl_setup):
    assert _order_hits(table_cfg, tdl_setup, 20.0) >= 0.9


@pytest.mark.xfail(strict=True, reason="the -16.8 dB tap fades below the noise eigenvalue "
                                       "in about 40% of draws at 10 dB (measured ~52% hits)")
def test_mdl_order_tdl_10db(table_cfg, tdl_setup):
    assert _order_hits(table_cfg, tdl_setup, 10.0) >= 0.9


# ----------------------------------------------------------------- ESPRIT

def test_esprit_dc_path():
    h = np.full(64, 0.7 + 0.1j)
    hs = est.spatial_smooth(h, 33, 32)
    np.testing.assert_allclose(est.esprit_delays(hs, 1, DF), [0.0], atol=1e-18)


def test_esprit_two_paths_exact():
    n = 768
    delays = np.array([10e-9, 50e-9])
    h = est.steering_vector(n, delays, DF) @ np.array([1.0, 0.5 - 0.2j])
    k1, l1 = est.EstimatorConfig().split(n)
    tau = est.esprit_delays(est.spatial_smooth(h, k1, l1), 2, DF)
    assert np.max(np.abs(tau - delays)) < 1e-12


def test_esprit_aliasing():
    n = 64
    h = est.steering_vector(n, np.array([1 / DF + 10e-9]), DF)[:, 0]
    tau = est.esprit_delays(est.spatial_smooth(h, 33, 32), 1, DF)
    assert tau[0] == pytest.approx(10e-9, abs=1e-15)


def test_esprit_order_bound():
    with pytest.raises(ConfigurationError):
        est.esprit_delays(np.ones((3, 4)), 3, DF)


# --------------------------------------------------------------- LS gains

def test_ls_gains_exact(rng):
    n = 96
    delays = np.array([0.0, 13e-9, 70e-9])
    alpha = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    h = est.steering_vector(n, delays, DF) @ alpha
    got = est.ls_gains(h, delays, DF)
    np.testing.assert_allclose(got, alpha, atol=1e-10)
    b = est.steering_vector(n, delays, DF)
    assert np.linalg.norm(h - b @ got) < 1e-9
    np.testing.assert_allclose(est.ls_gains(3j * h, delays, DF), 3j * alpha, atol=1e-9)
    single = est.ls_gains(est.steering_vector(n, [5e-9], DF)[:, 0] * 2, [5e-9], DF)
    np.testing.assert_allclose(single, [2.0], atol=1e-12)


def test_ls_gains_duplicate_delays():
    h = np.ones(16, dtype=complex)
    with pytest.raises(NumericalError):
        est.ls_gains(h, np.array([5e-9, 5e-9]), DF)


# ------------------------------------------------------------------ LMMSE

def _small_case(rng, n=24, q=2):
    delays = np.sort(rng.uniform(0, 400e-9, q))
    alpha = (rng.standard_normal(q) + 1j * rng.standard_normal(q)) / math.sqrt(2)
    h = est.steering_vector(n, delays, DF) @ alpha
    xbar = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return delays, alpha, h, xbar


def test_lmmse_reduced_equals_dense(rng):
    for _ in range(20):
        delays, alpha, h, xbar = _small_case(rng)
        sig2 = 0.3
        y = xbar * h + chn.NoiseModel(sig2).sample(24, rng)
        fast = est.lmmse_channel(y, xbar, delays, alpha, sig2, DF)
        dense = est.lmmse_dense(y, xbar, est.correlation_from_paths(24, delays, alpha, DF), sig2)
        assert np.linalg.norm(fast - dense) <= 1e-9 * np.linalg.norm(dense)


def test_lmmse_noiseless_limit(rng):
    delays, alpha, h, xbar = _small_case(rng)
    got = est.lmmse_channel(xbar * h, xbar, delays, alpha, 1e-14, DF)
    np.testing.assert_allclose(got, h, atol=1e-9)


def test_lmmse_zero_gain(rng):
    delays, alpha, h, xbar = _small_case(rng)
    with pytest.raises(SingularityError):
        est.lmmse_channel(h, xbar, delays, np.array([1.0, 0.0]), 0.1, DF)


# ----------------------------------------------------------------- EPMCE

def test_estimator_config_validation():
    with pytest.raises(ConfigurationError):
        est.EstimatorConfig(k1=4)
    with pytest.raises(ConfigurationError):
        est.EstimatorConfig(k1=4, l1=4).split(10)
    with pytest.raises(ConfigurationError):
        est.EstimatorConfig(debias="other")
    assert est.EstimatorConfig().split(768) == (385, 384)


def test_epmce_deterministic_and_consistent(table_cfg, tdl_setup):
    lam, x, xbar, profile = tdl_setup
    runs = []
    for _ in range(2):
        rng = np.random.default_rng(21)
        c = chn.sample_tdl(profile, 37e-9, table_cfg, rng)
        y = c.occupied(table_cfg) * xbar + chn.NoiseModel(0.5).sample(768, rng)
        runs.append(est.epmce(y, x, lam, 0.5, table_cfg))
    a, b = runs
    for name in ("equiv_ls", "pdp", "denoised", "delays", "gains", "final"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert np.all(a.pdp >= 0)
    assert a.order <= 32
    w = a.extras["window"]
    bin_s = 1 / (DF * w.size)
    assert np.all(a.delays >= -np.argmin(w[::-1]) * bin_s)
    assert np.all(a.delays <= np.argmin(w) * bin_s)


def test_epmce_high_snr_accuracy(table_cfg, tdl_setup):
    lam, x, xbar, profile = tdl_setup
    rng = np.random.default_rng(2)
    c = chn.sample_tdl(profile, 37e-9, table_cfg, rng)
    h = c.occupied(table_cfg)
    y = h * xbar + chn.NoiseModel(1e-6).sample(768, rng)
    e = est.epmce(y, x, lam, 1e-6, table_cfg)
    assert est.nmse(e.final, h) < 1e-3
    assert e.order == profile.n_taps
