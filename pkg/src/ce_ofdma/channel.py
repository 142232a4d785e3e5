"""Block-fading tapped-delay-line channels and the frequency-domain link model."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DimensionError, DomainError

NTN_TDL_D = "ntn_tdl_d"


@dataclass(frozen=True)
class TapProfile:
    """Normalised tap table: delays in units of the delay spread."""

    name: str
    delays_norm: tuple[float, ...]
    powers_db: tuple[float, ...]
    rice_k_db: tuple[float | None, ...]

    def __post_init__(self):
        n = len(self.delays_norm)
        if n == 0:
            raise ConfigurationError("channel profile has no taps")
        if len(self.powers_db) != n or len(self.rice_k_db) != n:
            raise ConfigurationError("profile columns have different lengths")
        if any(d < 0 for d in self.delays_norm):
            raise ConfigurationError("tap delays must be non-negative")
        if any(b <= a for a, b in zip(self.delays_norm, self.delays_norm[1:])):
            raise ConfigurationError("tap delays must be strictly increasing")

    @property
    def n_taps(self):
        return len(self.delays_norm)

    @property
    def powers(self):
        """Linear tap powers normalised to unit sum."""
        p = 10.0 ** (np.asarray(self.powers_db) / 10.0)
        return p / p.sum()

    @classmethod
    def from_dict(cls, data):
        try:
            taps = data["taps"]
            return cls(name=str(data.get("name", "custom")),
                       delays_norm=tuple(float(t["delay_norm"]) for t in taps),
                       powers_db=tuple(float(t["power_db"]) for t in taps),
                       rice_k_db=tuple(None if t.get("rice_k_db") is None
                                       else float(t["rice_k_db"]) for t in taps))
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed channel profile: {exc}") from exc

    def to_dict(self):
        taps = []
        for d, p, k in zip(self.delays_norm, self.powers_db, self.rice_k_db):
            tap = {"delay_norm": d, "power_db": p}
            if k is not None:
                tap["rice_k_db"] = k
            taps.append(tap)
        return {"name": self.name, "taps": taps}


def load_profile(source=NTN_TDL_D):
    """Load a profile by bundled name (``"ntn_tdl_d"``, ``"awgn"``) or JSON path."""
    if source == "awgn":
        return awgn_profile()
    if isinstance(source, dict):
        return TapProfile.from_dict(source)
    path = Path(str(source))
    if path.suffix == ".json" and path.exists():
        text = path.read_text()
    else:
        try:
            text = resources.files("ce_ofdma.data").joinpath(f"{source}.json").read_text()
        except FileNotFoundError as exc:
            raise ConfigurationError(f"unknown channel profile {source!r}") from exc
    return TapProfile.from_dict(json.loads(text))


def awgn_profile():
    """Single deterministic unit tap at zero delay."""
    return TapProfile("awgn", (0.0,), (0.0,), (math.inf,))


def steering_vector(n, delay, subcarrier_spacing, start=0):
    """``b_n(tau) = exp(-j 2 pi (start + i) df tau)`` for ``i = 0..n-1``."""
    i = start + np.arange(n)
    return np.exp(-2j * np.pi * subcarrier_spacing * np.multiply.outer(i, np.asarray(delay, float)))


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """One block-fading draw and its sampled frequency response ``h_bar``."""

    delays: np.ndarray
    powers: np.ndarray
    gains: np.ndarray
    freq_response: np.ndarray

    @property
    def n_paths(self):
        return self.delays.size

    def occupied(self, cfg, user=0):
        """``h``: the response on ``Gamma_k`` in demapping order."""
        return self.freq_response[cfg.occupied_indices(user)]

    def path_gains_on(self, cfg, user=0):
        """Gains referenced to the first occupied subcarrier, so that
        ``occupied(cfg, user) == B_tau @ gains`` for non-wrapping bands."""
        start = cfg.anchor(user) - cfg.occupied_width // 2
        return self.gains * np.exp(-2j * np.pi * start * cfg.subcarrier_spacing_hz * self.delays)


def realization(delays, gains, cfg, powers=None):
    """Build a realization from explicit delays (s) and complex gains."""
    delays = np.atleast_1d(np.asarray(delays, dtype=float))
    gains = np.atleast_1d(np.asarray(gains, dtype=complex))
    if delays.shape != gains.shape:
        raise DimensionError("delays and gains differ in length")
    if np.any(delays < 0):
        raise DomainError("delays must be non-negative")
    max_delay = cfg.cp_len * cfg.sample_period
    if delays.size and delays.max() >= max_delay and cfg.cp_len > 0:
        raise ConfigurationError(
            f"max delay {delays.max():.3e} s is not shorter than the CP ({max_delay:.3e} s)")
    if powers is None:
        powers = np.abs(gains) ** 2
    h = steering_vector(cfg.n_subcarriers, delays, cfg.subcarrier_spacing_hz) @ gains
    return ChannelRealization(delays=delays, powers=np.asarray(powers, dtype=float),
                              gains=gains, freq_response=h)


def sample_tdl(profile, delay_spread, cfg, rng, rice_factor_db=None):
    """Draw one realization of a tapped-delay-line profile.

    Parameters
    ----------
    profile : TapProfile
    delay_spread : float
        Scaling of the normalised delays in seconds (37 ns for NTN-TDL-D).
    cfg : WaveformConfig
    rng : numpy.random.Generator
    rice_factor_db : float, optional
        Overrides the K-factor of every Ricean tap.

    Notes
    -----
    A tap with K-factor ``K`` has gain ``sqrt(rho) (sqrt(K/(K+1)) e^{j phi} +
    sqrt(1/(K+1)) w)`` with uniform ``phi`` and ``w ~ CN(0, 1)``, so that
    ``E|alpha|^2 = rho``; ``K = inf`` gives a deterministic unit-phase tap.
    """
    if delay_spread < 0:
        raise DomainError("delay spread must be non-negative")
    rho = profile.powers
    n = profile.n_taps
    w = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0)
    phase = rng.uniform(0, 2 * np.pi, n)
    gains = np.empty(n, dtype=complex)
    for q in range(n):
        k_db = profile.rice_k_db[q] if rice_factor_db is None or profile.rice_k_db[q] is None \
            else rice_factor_db
        if k_db is None:
            gains[q] = w[q]
        elif math.isinf(k_db) and k_db > 0:
            gains[q] = 1.0
        else:
            k = 10.0 ** (k_db / 10.0)
            gains[q] = math.sqrt(k / (k + 1)) * np.exp(1j * phase[q]) + math.sqrt(1 / (k + 1)) * w[q]
    gains *= np.sqrt(rho)
    delays = np.asarray(profile.delays_norm) * delay_spread
    return realization(delays, gains, cfg, powers=rho)


def flat_channel(cfg, gain=1.0):
    """Identity (or scalar) channel."""
    return realization([0.0], [gain], cfg, powers=[1.0])


@dataclass(frozen=True)
class NoiseModel:
    """Circular complex AWGN of ``variance`` per subcarrier (= per time sample)."""

    variance: float
    seed: int | None = None

    def __post_init__(self):
        if not self.variance >= 0:
            raise DomainError("noise variance must be non-negative")

    def sample(self, shape, rng=None):
        rng = rng if rng is not None else np.random.default_rng(self.seed)
        if self.variance == 0:
            return np.zeros(shape, dtype=complex)
        scale = math.sqrt(self.variance / 2.0)
        return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def noise_variance(symbol_energy, es_n0_db):
    """``sigma_z^2 = E_s / 10^(EsN0/10)``."""
    if symbol_energy < 0:
        raise DomainError("symbol energy must be non-negative")
    return symbol_energy / 10.0 ** (es_n0_db / 10.0)


def apply_channel(signals, channels, noise=None, rng=None):
    """``y = sum_k h_bar_k * p_k + z`` on all ``N_c`` subcarriers.

    ``signals`` and ``channels`` are a single frequency-domain block and
    realization, or equal-length sequences of them (one per user).
    """
    if isinstance(channels, ChannelRealization):
        signals, channels = [signals], [channels]
    if len(signals) != len(channels):
        raise DimensionError("one channel per transmitted signal is required")
    y = None
    for p, chan in zip(signals, channels):
        p = np.asarray(p)
        if p.shape != chan.freq_response.shape:
            raise DimensionError(
                f"signal length {p.shape} does not match channel {chan.freq_response.shape}")
        term = chan.freq_response * p
        y = term if y is None else y + term
    if noise is not None and noise.variance > 0:
        y = y + noise.sample(y.shape, rng)
    return y


def convolve_time(signal_with_cp, chan, cfg):
    """Linear convolution with integer-sample taps (oracle for the diagonal model).

    Every delay must be a multiple of the sample period.
    """
    ts = cfg.sample_period
    lags = chan.delays / ts
    if np.any(np.abs(lags - np.round(lags)) > 1e-6):
        raise DomainError("time-domain convolution needs integer-sample delays")
    lags = np.round(lags).astype(int)
    x = np.asarray(signal_with_cp)
    out = np.zeros(x.size + lags.max(), dtype=complex)
    for lag, g in zip(lags, chan.gains):
        out[lag:lag + x.size] += g * x
    return out[:x.size]


def guard_band_noise_variance(y_full, cfg):
    """Noise variance from subcarriers outside every user's occupied band."""
    mask = np.ones(cfg.n_subcarriers, dtype=bool)
    for k in range(cfg.n_users):
        mask[cfg.occupied_indices(k)] = False
    # keep clear of the filters' residual side lobes near each band
    guard = cfg.n_complex_symbols
    for k in range(cfg.n_users):
        idx = cfg.anchor(k) + np.arange(-cfg.occupied_width // 2 - guard,
                                        cfg.occupied_width // 2 + guard)
        mask[idx % cfg.n_subcarriers] = False
    if not mask.any():
        raise DomainError("no guard subcarriers left for noise estimation")
    return float(np.mean(np.abs(np.asarray(y_full)[mask]) ** 2))
