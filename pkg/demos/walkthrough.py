"""One block through the CE-OFDMA uplink, printed step by step.

Run with ``python demos/walkthrough.py``.
"""

import numpy as np

from ce_ofdma import channel as chn
from ce_ofdma import equalizer as eq
from ce_ofdma import estimation as est
from ce_ofdma import pilots
from ce_ofdma.config import WaveformConfig
from ce_ofdma.experiments import build_filter, ce_symbol_energy
from ce_ofdma.waveform import envelope_ratio, papr_db, qpsk_symbols, synthesize_block

SNR_DB = 8.0

rng = np.random.default_rng(2024)
cfg = WaveformConfig()
filt = build_filter({"kind": "optimized-ce"}, cfg)
lam = est.effective_response(filt, cfg)
es = ce_symbol_energy(lam, cfg.n_complex_symbols)
sig2 = chn.noise_variance(es, SNR_DB)
print(f"N_c={cfg.n_subcarriers} N_d={cfg.n_complex_symbols} Phi={cfg.sampling_factor}")

# transmit: pilot block then one data block
d_bar = qpsk_symbols(rng, cfg.n_complex_symbols)
data = synthesize_block(d_bar, filt, cfg)
print(f"data block PAPR {papr_db(data.body):.2e} dB, envelope ratio {envelope_ratio(data.body):.12f}")

pilot = pilots.random_pilot(cfg.n_complex_symbols, rng)
x = pilot.freq_diag(1)

# one NTN-TDL-D draw shared by both blocks
c = chn.sample_tdl(chn.load_profile("ntn_tdl_d"), 37e-9, cfg, rng)
h = c.occupied(cfg)
noise = chn.NoiseModel(sig2)

y_pilot = h * lam * x + noise.sample(h.shape, rng)
e = est.epmce(y_pilot, x, lam, sig2, cfg)
for name, h_hat in (("LS", e.ls), ("DPMCE", e.denoised), ("EPMCE", e.final)):
    print(f"{name:6s} NMSE {10 * np.log10(est.nmse(h_hat, h)):7.2f} dB")
print(f"ESPRIT order {e.order}, delays (ns) {np.round(e.delays * 1e9, 2)}")

y = est.demap(chn.apply_channel(data.freq_signal, c, noise, rng), cfg)
for label, h_used in (("perfect CSI", h), ("EPMCE CSI", e.final)):
    d_hat, llr, rho = eq.ce_receive(y, h_used, lam, sig2, cfg)
    hard = np.sign(d_hat.real) + 1j * np.sign(d_hat.imag)
    errors = np.count_nonzero(hard.real != d_bar.real) + np.count_nonzero(hard.imag != d_bar.imag)
    print(f"{label}: {errors} bit errors of {2 * d_bar.size}, mean reliability {rho.mean():.3f}")
