"""CE-CP-OFDMA transmitter and the CP-OFDM / DFT-s-OFDM baselines.

The CE block is built on the CP-OFDMA-compatible path::

    d_bar --Theta, N_d-DFT--> q_bar --prep--> q --FDTP--> p --IDFT, CP--> chi

where ``q = W_2Nd Theta_2Nd d`` is the GDFT of the real OQAM stream
``d = [Re d_bar(0), Im d_bar(0), Re d_bar(1), ...]`` and the FDTP step
cyclically shifts ``q`` by ``a'_k``, repeats it ``Phi/2`` times and applies
the user's filter response with gain ``j^k sqrt(2/Phi)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import WaveformConfig, default_anchors  # noqa: F401  (re-export)
from .errors import ConfigurationError, DimensionError, DomainError
from .filters import ShapingFilter, check_compatible
from .transforms import dft, half_sample_ramp, idft, reverse


@dataclass(frozen=True, eq=False)
class SymbolBlock:
    """Every intermediate of one synthesized CE block."""

    complex_symbols: np.ndarray  # d_bar, (N_d,)
    real_symbols: np.ndarray  # d, (2 N_d,)
    effective_info: np.ndarray  # s, (N_d,)
    gdft_out: np.ndarray  # q, (2 N_d,)
    freq_signal: np.ndarray  # p, (N_c,)
    time_signal: np.ndarray  # chi with CP, (N_c + cp_len,)

    @property
    def body(self):
        """Time signal without the cyclic prefix."""
        return self.time_signal[self.time_signal.size - self.freq_signal.size:]


def oqam_split(complex_symbols):
    """Interleave real and imaginary parts: ``d(2m) = Re, d(2m+1) = Im``."""
    x = np.asarray(complex_symbols)
    if x.ndim != 1:
        raise DimensionError("expected a 1-D symbol vector")
    d = np.empty(2 * x.size)
    d[0::2] = x.real
    d[1::2] = x.imag
    return d


def oqam_merge(real_symbols):
    """Inverse of :func:`oqam_split`."""
    d = np.asarray(real_symbols)
    if d.ndim != 1 or d.size % 2:
        raise DimensionError("real symbol vector must have even length")
    return d[0::2] + 1j * d[1::2]


def gdft(real_symbols):
    """``q = W_2N Theta_2N d`` for a real vector ``d`` of length 2N."""
    d = np.asarray(real_symbols)
    if np.iscomplexobj(d):
        if np.any(d.imag != 0):
            raise DomainError("GDFT input must be real-valued")
        d = d.real
    if d.ndim != 1 or d.size % 2:
        raise DimensionError("GDFT input must be a 1-D vector of even length")
    return dft(half_sample_ramp(d.size) * d)


def inverse_gdft(q):
    """``Theta^H W^H q`` (real part kept when ``q`` is conjugate-symmetric)."""
    q = np.asarray(q)
    return np.conj(half_sample_ramp(q.size)) * idft(q)


def precode(complex_symbols):
    """``q_bar = W_Nd Theta_Nd d_bar`` (phase rotation plus N_d-point DFT)."""
    x = np.asarray(complex_symbols, dtype=complex)
    return dft(half_sample_ramp(x.size) * x)


def prep(half_spectrum):
    """Map ``q_bar`` to the GDFT output ``q`` of the interleaved real stream.

    Implements ``[[I, I], [I, -I]] diag(I, -j e^{-j pi/(2N)} Theta_N)
    (1/(2 sqrt 2)) [[I, J], [I, -J]] [q_bar; conj(q_bar)]``.
    """
    qb = np.asarray(half_spectrum, dtype=complex)
    if qb.ndim != 1:
        raise DimensionError("prep expects a 1-D vector")
    n = qb.size
    mirrored = reverse(np.conj(qb))
    upper = qb + mirrored
    lower = (-1j * np.exp(-1j * np.pi / (2 * n)) * half_sample_ramp(n)) * (qb - mirrored)
    scale = 1.0 / (2.0 * math.sqrt(2.0))
    return scale * np.concatenate([upper + lower, upper - lower])


def unprep(q):
    """Inverse of :func:`prep`: recover ``q_bar`` from a GDFT output.

    The input is first projected onto the conjugate-symmetric set with
    ``(q + J q*)/2``, which leaves an exact GDFT output unchanged.
    """
    q = np.asarray(q, dtype=complex)
    if q.ndim != 1 or q.size % 2:
        raise DimensionError("unprep expects a vector of even length")
    n = q.size // 2
    q = 0.5 * (q + reverse(np.conj(q)))
    top, bottom = q[:n], q[n:]
    rot = 1j * np.exp(1j * np.pi / (2 * n)) * np.conj(half_sample_ramp(n))
    return ((top + bottom) + rot * (top - bottom)) / math.sqrt(2.0)


def conjugate_extend(s):
    """``q = [s; J conj(s)]``."""
    s = np.asarray(s)
    return np.concatenate([s, reverse(np.conj(s))])


def fdtp_apply(q, filt, cfg, user=0):
    """``p = j^k sqrt(2/Phi) Lambda_bar_k E S_k q``.

    ``filt`` is a :class:`ShapingFilter` or an already user-centred response
    vector of length N_c.
    """
    q = np.asarray(q)
    nd2 = 2 * cfg.n_complex_symbols
    if q.shape != (nd2,):
        raise DimensionError(f"q must have length {nd2}, got {q.shape}")
    response = _response(filt, cfg, user)
    shifted = np.roll(q, cfg.shift_index(user) % nd2)
    extended = np.tile(shifted, cfg.sampling_factor // 2)
    gain = (1j ** user) * math.sqrt(2.0 / cfg.sampling_factor)
    return gain * response * extended


def _response(filt, cfg, user):
    if isinstance(filt, ShapingFilter):
        return filt.user_response(cfg, user)
    response = np.asarray(filt)
    if response.shape != (cfg.n_subcarriers,):
        raise DimensionError(f"filter response must have length {cfg.n_subcarriers}")
    return response


def add_cp(body, cp_len):
    body = np.asarray(body)
    if cp_len == 0:
        return body.copy()
    return np.concatenate([body[..., -cp_len:], body], axis=-1)


def remove_cp(signal, cfg):
    return np.asarray(signal)[..., cfg.cp_len:cfg.cp_len + cfg.n_subcarriers]


def synthesize_block(complex_symbols, filt, cfg, user=0):
    """Generate one CE-CP-OFDMA block through the compatible structure."""
    if isinstance(filt, ShapingFilter):
        check_compatible(filt, cfg)
    d_bar = np.asarray(complex_symbols, dtype=complex)
    if d_bar.shape != (cfg.n_complex_symbols,):
        raise DimensionError(
            f"expected {cfg.n_complex_symbols} complex symbols, got {d_bar.shape}")
    q = prep(precode(d_bar))
    return _finish(d_bar, oqam_split(d_bar), q, filt, cfg, user)


def synthesize_from_gdft(q, filt, cfg, user=0):
    """Block from a prescribed GDFT-domain vector ``q`` (e.g. an ideal pilot).

    ``q`` should be conjugate-symmetric; the time-domain symbols are recovered
    through the inverse GDFT and need not be +/-1.
    """
    q = np.asarray(q, dtype=complex)
    d = inverse_gdft(q).real
    return _finish(oqam_merge(d), d, q, filt, cfg, user)


def _finish(d_bar, d, q, filt, cfg, user):
    p = fdtp_apply(q, filt, cfg, user)
    chi = idft(p)
    return SymbolBlock(complex_symbols=d_bar, real_symbols=d,
                       effective_info=q[:cfg.n_complex_symbols].copy(), gdft_out=q,
                       freq_signal=p, time_signal=add_cp(chi, cfg.cp_len))


def direct_block(real_symbols, filt, cfg, user=0):
    """Reference CE synthesis ``j^k G_k M_k Omega_k d`` by circular convolution.

    Independent of the DFT path: the modulated pulse is circularly convolved
    with the zero-stuffed, frequency-modulated OQAM stream in the time domain.
    """
    d = np.asarray(real_symbols, dtype=float)
    nc, phi, nd = cfg.n_subcarriers, cfg.sampling_factor, cfg.n_complex_symbols
    if d.shape != (2 * nd,):
        raise DimensionError("expected 2 N_d real symbols")
    m = np.arange(2 * nd)
    omega = np.exp(1j * np.pi * m * cfg.shift_index(user) / nd) * half_sample_ramp(2 * nd)
    stuffed = np.zeros(nc, dtype=complex)
    stuffed[m * phi // 2] = omega * d
    g = modulated_taps(filt, cfg, user)
    out = np.zeros(nc, dtype=complex)
    for k in np.flatnonzero(np.abs(g) > 0):
        out += g[k] * np.roll(stuffed, k)
    return (1j ** user) * out


def modulated_taps(filt, cfg, user=0):
    """Time-domain taps ``g_k`` of the user-centred filter."""
    from .transforms import signed_index

    nc = cfg.n_subcarriers
    return filt.time_taps * np.exp(2j * np.pi * cfg.filter_center(user) * signed_index(nc) / nc)


def qpsk_symbols(rng, n, amplitude=1.0):
    """Random QPSK symbols ``amplitude * (+/-1 +/- j)``."""
    bits = rng.integers(0, 2, size=(2, n))
    return amplitude * ((1 - 2 * bits[0]) + 1j * (1 - 2 * bits[1]))


BASELINE_KINDS = ("cp-ofdm", "dft-s-ofdm")


def raised_cosine_window(offsets, width, rolloff, kind="rc"):
    """Frequency window over bin offsets from the band centre.

    Flat for ``|nu| <= (1 - rolloff) width / 2`` and a cosine taper to zero at
    ``(1 + rolloff) width / 2``.  ``kind="rrc"`` returns the square root.
    """
    nu = np.abs(np.asarray(offsets, dtype=float))
    if rolloff == 0:
        w = (nu < width / 2).astype(float)
    else:
        lo, hi = (1 - rolloff) * width / 2, (1 + rolloff) * width / 2
        w = np.where(nu <= lo, 1.0,
                     np.where(nu >= hi, 0.0,
                              0.5 * (1 + np.cos(np.pi * (nu - lo) / (rolloff * width)))))
    if kind == "rrc":
        return np.sqrt(w)
    if kind != "rc":
        raise ConfigurationError(f"unknown window kind {kind!r}")
    return w


def baseline_layout(kind, rolloff, cfg, user=0, window="rrc"):
    """Subcarriers, source symbol bins and weights of a baseline block.

    Returns ``(bins, source, weights)``: bin ``bins[i]`` carries
    ``weights[i] * spread[source[i]]``.
    """
    if kind not in BASELINE_KINDS:
        raise ConfigurationError(f"unsupported baseline {kind!r}")
    if rolloff < 0 or rolloff > 1:
        raise ConfigurationError("roll-off must lie in [0, 1]")
    if kind == "cp-ofdm" and rolloff:
        raise ConfigurationError("CP-OFDM has no roll-off")
    nd, nc = cfg.n_complex_symbols, cfg.n_subcarriers
    half = int(math.ceil((1 + rolloff) * nd / 2))
    offsets = np.arange(-half, half)
    if kind == "dft-s-ofdm" and rolloff:
        weights = raised_cosine_window(offsets + 0.5, nd, rolloff, window)
    else:
        offsets = offsets[(offsets >= -nd // 2) & (offsets < nd // 2)]
        weights = np.ones(offsets.size)
    return (cfg.anchor(user) + offsets) % nc, offsets % nd, weights


def baseline_symbol_energy(kind, rolloff, cfg, window="rrc", amplitude=1.0):
    """Block energy per complex symbol for unit-component QPSK."""
    _, _, w = baseline_layout(kind, rolloff, cfg, 0, window)
    return 2.0 * amplitude ** 2 * float(np.sum(w ** 2)) / cfg.n_complex_symbols


def baseline_spectrum(kind, rolloff, complex_symbols, cfg, user=0, window="rrc"):
    """Frequency-domain block ``p`` of a CP-OFDM or DFT-s-OFDM baseline.

    Both are centred on the user's anchor.  DFT-s-OFDM spreads with a unitary
    N_d-point DFT; a nonzero ``rolloff`` cyclically extends the spread
    spectrum over ``(1 + rolloff) N_d`` bins and tapers it with a raised-cosine
    window.  CP-OFDM maps the symbols onto N_d subcarriers directly.
    """
    bins, source, weights = baseline_layout(kind, rolloff, cfg, user, window)
    x = np.asarray(complex_symbols, dtype=complex)
    nd = cfg.n_complex_symbols
    if x.shape != (nd,):
        raise DimensionError(f"expected {nd} complex symbols")
    spread = x if kind == "cp-ofdm" else dft(x)
    p = np.zeros(cfg.n_subcarriers, dtype=complex)
    p[bins] = spread[source] * weights
    return p


def synthesize_baseline(kind, rolloff, complex_symbols, cfg, user=0, window="rrc"):
    """Time signal (with CP) of a CP-OFDM or DFT-s-OFDM block."""
    p = baseline_spectrum(kind, rolloff, complex_symbols, cfg, user, window)
    return add_cp(idft(p), cfg.cp_len)


def envelope_ratio(signal):
    """``max |x| / min |x|`` (1 for a constant-envelope signal)."""
    mag = np.abs(np.asarray(signal))
    return float(mag.max() / mag.min())


def oversample(body, factor):
    """Band-limited interpolation by zero-padding the spectrum tail.

    Bins keep their ``[0, N_c)`` frequency meaning, so every ``factor``-th
    output sample equals the input sample.
    """
    body = np.asarray(body)
    if factor == 1:
        return body
    n = body.shape[-1]
    spec = np.fft.fft(body, axis=-1)
    padded = np.zeros(body.shape[:-1] + (factor * n,), dtype=complex)
    padded[..., :n] = spec
    return np.fft.ifft(padded, axis=-1) * factor


def papr_db(body, oversampling=1):
    """Per-block PAPR ``max|x|^2 / mean|x|^2`` in dB along the last axis."""
    x = oversample(np.asarray(body), oversampling)
    power = np.abs(x) ** 2
    return 10 * np.log10(power.max(axis=-1) / power.mean(axis=-1))


def papr_ccdf(blocks, thresholds_db, oversampling=1, cfg=None):
    """Empirical CCDF ``P(PAPR > threshold)`` over a list of blocks.

    ``blocks`` are CP-free bodies, or full signals when ``cfg`` is given (the
    CP is stripped first).  Returns ``(thresholds, ccdf, paprs)``.
    """
    arr = np.asarray(blocks)
    if arr.size == 0:
        raise DomainError("no blocks supplied")
    if arr.ndim == 1:
        arr = arr[None, :]
    if cfg is not None:
        arr = remove_cp(arr, cfg)
    paprs = papr_db(arr, oversampling)
    thresholds = np.asarray(thresholds_db, dtype=float)
    ccdf = (paprs[None, :] > thresholds[:, None]).mean(axis=1)
    return thresholds, ccdf, paprs


def papr_at(paprs, probability):
    """PAPR level exceeded with the given probability (empirical quantile)."""
    paprs = np.asarray(paprs, dtype=float)
    if paprs.size == 0:
        raise DomainError("no PAPR samples")
    if not 0 < probability < 1:
        raise DomainError("probability must lie in (0, 1)")
    return float(np.quantile(paprs, 1.0 - probability))
