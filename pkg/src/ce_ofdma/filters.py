"""Constant-envelope (CE) and near-CE pulse-shaping filters.

A CE filter is fully described by the phase vector ``theta`` of length
``Phi/4 - 1``; every such vector gives taps satisfying
``g(n)**2 + g(Phi/2 - n)**2 == 1``, which is what keeps the OQAM envelope
constant for +/-1 real symbols.  Filters are stored at baseband (real,
symmetric taps centred on sample 0) and modulated onto a user's main-lobe
centre on demand by :meth:`ShapingFilter.user_response`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigurationError, DimensionError, DomainError, OptimizationError
from .transforms import signed_index

CE_KINDS = ("half-sine", "optimized-ce", "ce")
KINDS = CE_KINDS + ("nce",)


@dataclass(frozen=True, eq=False)
class ShapingFilter:
    """Pulse-shaping filter in both domains.

    Attributes
    ----------
    theta : ndarray, shape (Phi/4 - 1,)
        Phase parameters in radians.
    time_taps : ndarray, shape (N_c,)
        Real baseband taps ``g``; negative indices wrap to the tail.
    freq_response : ndarray, shape (N_c,)
        ``sqrt(N_c) * W g`` at baseband (real up to rounding).
    kind : str
        One of ``half-sine``, ``optimized-ce``, ``ce`` or ``nce``.
    gaussian_bw : float or None
        ``B_w * T`` of the Gaussian cascade for ``nce`` filters.
    metadata : dict
        Free-form provenance (objective values, optimizer status...).
    """

    theta: np.ndarray
    time_taps: np.ndarray
    freq_response: np.ndarray
    kind: str
    gaussian_bw: float | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown filter kind {self.kind!r}")
        if self.time_taps.shape != self.freq_response.shape:
            raise DimensionError("taps and response lengths differ")

    @property
    def n_subcarriers(self):
        return self.time_taps.size

    @property
    def sampling_factor(self):
        return 4 * (self.theta.size + 1)

    @property
    def is_constant_envelope(self):
        return self.kind in CE_KINDS

    def user_response(self, cfg, user=0):
        """Frequency response ``lambda_bar_k`` moved onto user ``k``'s main lobe."""
        check_compatible(self, cfg)
        nc = self.n_subcarriers
        u = signed_index(nc)
        taps = self.time_taps * np.exp(2j * np.pi * cfg.filter_center(user) * u / nc)
        return np.fft.fft(taps)

    def occupied_response(self, cfg, user=0):
        """``lambda_k``: the user response restricted to ``Gamma_k``."""
        return self.user_response(cfg, user)[cfg.occupied_indices(user)]


def check_compatible(filt, cfg):
    if filt.n_subcarriers != cfg.n_subcarriers:
        raise ConfigurationError(
            f"filter built for N_c={filt.n_subcarriers}, config has {cfg.n_subcarriers}")
    if filt.sampling_factor != cfg.sampling_factor:
        raise ConfigurationError(
            f"filter built for Phi={filt.sampling_factor}, config has {cfg.sampling_factor}")


def _n_free(phi):
    if phi < 4 or phi % 4:
        raise ConfigurationError(f"sampling factor {phi} must be a positive multiple of 4")
    return phi // 4 - 1


def ce_taps(theta, phi):
    """Positive half ``g(0), ..., g(Phi/2 - 1)`` of the CE pulse."""
    theta = np.asarray(theta, dtype=float)
    if theta.size != _n_free(phi):
        raise DimensionError(f"theta must have length {phi // 4 - 1}, got {theta.size}")
    quarter = phi // 4
    half = np.empty(phi // 2)
    half[0] = 1.0
    half[1:quarter] = np.cos(theta)
    half[quarter] = math.sqrt(2.0) / 2.0
    # n = Phi/4 + 1 .. Phi/2 - 1 uses theta(Phi/2 - n), i.e. theta reversed
    half[quarter + 1:] = np.sin(theta[::-1])
    return half


def _wrap_symmetric(half, n_subcarriers):
    if half.size > n_subcarriers // 2:
        raise ConfigurationError("pulse longer than half a block")
    g = np.zeros(n_subcarriers)
    g[:half.size] = half
    g[n_subcarriers - half.size + 1:] = half[:0:-1]
    return g


def build_from_theta(theta, cfg=None, *, n_subcarriers=None, sampling_factor=None,
                     kind="ce"):
    """Assemble a CE filter from its phase parameters.

    Either pass a :class:`WaveformConfig` or both ``n_subcarriers`` and
    ``sampling_factor``.
    """
    nc, phi = _dims(cfg, n_subcarriers, sampling_factor)
    theta = np.asarray(theta, dtype=float).copy()
    g = _wrap_symmetric(ce_taps(theta, phi), nc)
    return ShapingFilter(theta=theta, time_taps=g, freq_response=np.fft.fft(g), kind=kind)


def _dims(cfg, n_subcarriers, sampling_factor):
    if cfg is not None:
        return cfg.n_subcarriers, cfg.sampling_factor
    if n_subcarriers is None or sampling_factor is None:
        raise ConfigurationError("need a config or explicit n_subcarriers/sampling_factor")
    if n_subcarriers % sampling_factor:
        raise ConfigurationError("N_c must be a multiple of Phi")
    return int(n_subcarriers), int(sampling_factor)


def half_sine_theta(phi):
    return np.pi * np.arange(1, _n_free(phi) + 1) / phi


def half_sine(phi, n_subcarriers=None, cfg=None):
    """MSK-style half-sine pulse ``cos(pi n / Phi)`` on ``|n| < Phi/2``."""
    if cfg is not None:
        phi, n_subcarriers = cfg.sampling_factor, cfg.n_subcarriers
    if n_subcarriers is None:
        n_subcarriers = 4096
    return build_from_theta(half_sine_theta(phi), n_subcarriers=n_subcarriers,
                            sampling_factor=phi, kind="half-sine")


def stopband_energy(filt, occupied_width):
    """One-sided stop-band energy ``sum_{i=Nbar/2}^{N_c/2} |lambda(i)|^2``.

    The baseband response of a real symmetric pulse is even, so the
    two-sided stop-band energy is twice this value minus the Nyquist bin.
    """
    nc = filt.n_subcarriers
    if occupied_width % 2 or not 0 < occupied_width < nc:
        raise ConfigurationError(f"occupied width {occupied_width} must be even and < N_c")
    band = filt.freq_response[occupied_width // 2: nc // 2 + 1]
    return float(np.sum(np.abs(band) ** 2))


def _theta_objective(theta, nc, phi, occupied_width):
    g = _wrap_symmetric(ce_taps(theta, phi), nc)
    lam = np.fft.rfft(g)
    return float(np.sum(np.abs(lam[occupied_width // 2:]) ** 2))


@dataclass(frozen=True)
class OptimizerOptions:
    """Nelder-Mead settings for :func:`optimize_ce_filter`."""

    initial_step: float = 0.05
    xatol: float = 1e-8
    max_iter: int = 5000


def optimize_ce_filter(cfg, occupied_width=None, options=None):
    """Minimise the stop-band energy over ``theta`` with Nelder-Mead.

    Starts from the half-sine phases with an axis-aligned simplex of edge
    ``options.initial_step``.  Deterministic for fixed inputs.
    """
    options = options or OptimizerOptions()
    nc, phi = cfg.n_subcarriers, cfg.sampling_factor
    nbar = cfg.occupied_width if occupied_width is None else int(occupied_width)
    n = _n_free(phi)
    if n < 1:
        raise ConfigurationError("Phi must be at least 8 to leave a free phase")
    theta0 = half_sine_theta(phi)

    def objective(theta):
        value = _theta_objective(theta, nc, phi, nbar)
        if not math.isfinite(value):
            raise OptimizationError(f"non-finite stop-band energy at theta={theta}")
        return value

    simplex = np.vstack([theta0, theta0 + options.initial_step * np.eye(n)])
    res = minimize(objective, theta0, method="Nelder-Mead",
                   options={"initial_simplex": simplex, "xatol": options.xatol,
                            "fatol": np.inf, "maxiter": options.max_iter,
                            "maxfev": 10 * options.max_iter})
    start = objective(theta0)
    best = res.x if res.fun <= start else theta0
    filt = build_from_theta(best, cfg, kind="optimized-ce")
    meta = {"objective": float(min(res.fun, start)), "initial_objective": start,
            "iterations": int(res.nit), "converged": bool(res.success),
            "occupied_width": nbar}
    return replace(filt, metadata=meta)


def gaussian_lowpass(bw_t, cfg, anchor):
    """Gaussian window ``b(i) = exp(-ln2 / (8 (pi B_w)^2) * omega(i)^2)``.

    ``omega(i) = 2 pi (((i - anchor + N_c/2) mod N_c) / N_c - 1/2)`` is the
    radian frequency relative to ``anchor``, wrapped to ``[-pi, pi)``; the
    3 dB bandwidth ``B_w = bw_t / Phi`` cycles per sample, i.e. ``b**2`` is
    one half at ``bw_t * N_d`` bins from the anchor.  ``anchor`` may be a
    half-integer.
    """
    if not bw_t > 0:
        raise DomainError("B_w * T must be positive")
    nc = cfg.n_subcarriers
    bw = bw_t / cfg.sampling_factor
    rel = np.mod(np.arange(nc) - anchor + nc / 2, nc) / nc - 0.5
    omega = 2 * np.pi * rel
    return np.exp(-math.log(2) / (8 * (np.pi * bw) ** 2) * omega ** 2)


def nce_filter(ce, gaussian):
    """Cascade a CE filter with a frequency-domain window (``lambda * b``).

    ``gaussian`` must be the window at baseband (anchor 0) so the cascade can
    be re-centred per user like any other filter.
    """
    gaussian = np.asarray(gaussian)
    if gaussian.shape != ce.freq_response.shape:
        raise DimensionError("window and filter lengths differ")
    lam = ce.freq_response * gaussian
    taps = np.fft.ifft(lam)
    if np.max(np.abs(taps.imag)) <= 1e-12 * np.max(np.abs(taps)):
        taps = taps.real
    meta = dict(ce.metadata, base_kind=ce.kind)
    return ShapingFilter(theta=ce.theta.copy(), time_taps=taps, freq_response=lam,
                         kind="nce", gaussian_bw=None, metadata=meta)


def build_nce(ce, cfg, bw_t=1.0):
    """NCE filter: ``ce`` cascaded with a baseband Gaussian of ``B_w T = bw_t``."""
    filt = nce_filter(ce, gaussian_lowpass(bw_t, cfg, anchor=0))
    return replace(filt, gaussian_bw=float(bw_t))


def sidelobe_level(filt, occupied_width):
    """Peak stop-band power minus peak pass-band power of ``|lambda|^2``, in dB.

    The pass band is ``|i| < Nbar/2`` around baseband.  Returns ``-inf`` when
    the stop band is exactly empty.
    """
    power = np.abs(filt.freq_response) ** 2
    if not np.any(power > 0):
        raise DomainError("all-zero filter response")
    rel = np.abs(signed_index(filt.n_subcarriers))
    passband = power[rel < occupied_width // 2]
    stopband = power[rel >= occupied_width // 2]
    peak_pass = passband.max() if passband.size else 0.0
    peak_stop = stopband.max() if stopband.size else 0.0
    if peak_pass <= 0:
        raise DomainError("pass band carries no energy")
    if peak_stop == 0:
        return -math.inf
    return float(10 * np.log10(peak_stop / peak_pass))


def lemma_residual(filt):
    """Max deviation of ``g(n)^2 + g(Phi/2 - n)^2`` from 1 over ``0 <= n < Phi/2``."""
    half = filt.sampling_factor // 2
    g = np.real(filt.time_taps)
    n = np.arange(half)
    return float(np.max(np.abs(g[n] ** 2 + g[half - n] ** 2 - 1.0)))
