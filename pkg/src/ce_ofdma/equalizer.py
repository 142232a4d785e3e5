"""MRC-aided LMMSE equalization, postprocessing and soft demodulation."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError
from .transforms import half_sample_ramp, idft, reverse
from .waveform import conjugate_extend, oqam_split, unprep

LLR_CLIP = 40.0


def _bands(v, n_bands, nd):
    v = np.asarray(v)
    if v.shape[-1] != n_bands * nd:
        raise DimensionError(f"expected {n_bands} sub-bands of {nd} entries, got {v.shape[-1]}")
    return v.reshape(v.shape[:-1] + (n_bands, nd))


def is_conjugate_band(m, lobe_order):
    """Sub-band ``m`` carries ``J s*`` when ``m - Bbar`` is odd."""
    return (m - lobe_order) % 2 == 1


def mrc_combine(y, channel, response, lobe_order):
    """Maximum-ratio combining of the ``2 Bbar + 1`` replicas of ``s``.

    Returns ``(r, b)`` with ``r = sum_m conj(a_m) r_m`` and
    ``b = sum_m |a_m|^2`` where conjugate bands use ``r_m = J y_m*`` and
    ``a_m = J conj(h_m lambda_m)``.
    """
    n_bands = 2 * lobe_order + 1
    y = np.asarray(y)
    if y.shape[-1] % n_bands:
        raise DimensionError("occupied band is not a whole number of sub-bands")
    nd = y.shape[-1] // n_bands
    a = np.asarray(channel) * np.asarray(response)
    if a.shape[-1] != y.shape[-1]:
        raise DimensionError("channel/filter length differs from the received band")
    yb, ab = _bands(y, n_bands, nd), _bands(np.broadcast_to(a, y.shape), n_bands, nd)
    r = np.zeros(y.shape[:-1] + (nd,), dtype=complex)
    b = np.zeros(y.shape[:-1] + (nd,))
    for m in range(n_bands):
        ym, am = yb[..., m, :], ab[..., m, :]
        if is_conjugate_band(m, lobe_order):
            ym, am = reverse(np.conj(ym)), reverse(np.conj(am))
        r += np.conj(am) * ym
        b += np.abs(am) ** 2
    return r, b


def lmmse_equalize(r, b, noise_var):
    """Per-entry LMMSE ``s_lm = r / (b + sigma^2)``, ``rho = b / (b + sigma^2)``.

    Entries with ``b + sigma^2 == 0`` are erased (``s_lm = 0``, ``rho = 0``).
    """
    r = np.asarray(r, dtype=complex)
    b = np.asarray(b, dtype=float)
    if np.any(b < 0):
        raise DimensionError("combined gain must be non-negative")
    den = b + noise_var
    ok = den > 0
    s = np.zeros_like(r)
    rho = np.zeros_like(b)
    np.divide(r, den, out=s, where=ok)
    np.divide(b, den, out=rho, where=ok)
    return s, rho


def postprocess(s_lm, rho):
    """Recover ``d_bar`` from the equalized ``s`` (inverse Prep, Theta^H, IDFT).

    The result is divided by the mean reliability; a zero mean reliability
    erases the block (all zeros).
    """
    s_lm = np.asarray(s_lm)
    scale = float(np.mean(rho))
    qbar = unprep(conjugate_extend(s_lm))
    d_bar = np.conj(half_sample_ramp(qbar.size)) * idft(qbar)
    if scale == 0:
        return np.zeros_like(d_bar)
    return d_bar / scale


def effective_noise_variance(rho):
    """Per-real-symbol noise variance after :func:`postprocess`.

    ``(mean(rho (1 - rho)) + var(rho)) / mean(rho)^2``: the LMMSE residual
    plus the self-interference from a non-uniform reliability profile.
    """
    rho = np.asarray(rho, dtype=float)
    mean = rho.mean()
    if mean == 0:
        return np.inf
    return float((np.mean(rho * (1 - rho)) + np.var(rho)) / mean ** 2)


def soft_demod(symbols, noise_var, amplitude=1.0):
    """Bit LLRs of QPSK symbols ``amplitude * (+/-1 +/- j)``.

    Returns ``[LLR(Re 0), LLR(Im 0), LLR(Re 1), ...]`` with the convention
    ``LLR > 0`` for bit 0 (symbol component ``+amplitude``); ``noise_var``
    is per real component and may be per symbol.  Clamped to ``+/-40``.
    """
    symbols = np.asarray(symbols)
    comps = oqam_split(symbols) if symbols.ndim == 1 else _split_rows(symbols)
    var = np.asarray(noise_var, dtype=float)
    if var.ndim and var.shape[-1] == symbols.shape[-1]:
        var = np.repeat(var, 2, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        llr = np.where(var > 0, 2 * amplitude * comps / var, np.sign(comps) * np.inf)
    llr = np.nan_to_num(llr, nan=0.0)
    return np.clip(llr, -LLR_CLIP, LLR_CLIP)


def _split_rows(x):
    out = np.empty(x.shape[:-1] + (2 * x.shape[-1],))
    out[..., 0::2] = x.real
    out[..., 1::2] = x.imag
    return out


def hard_bits(llr):
    """Bit decisions: 0 for ``LLR >= 0``."""
    return (np.asarray(llr) < 0).astype(np.uint8)


def bits_to_qpsk(bits, amplitude=1.0):
    """Map bit pairs ``(b_re, b_im)`` to ``amplitude * ((1-2b_re) + j (1-2b_im))``."""
    bits = np.asarray(bits)
    if bits.shape[-1] % 2:
        raise DimensionError("need an even number of bits")
    comps = 1.0 - 2.0 * bits
    return amplitude * (comps[..., 0::2] + 1j * comps[..., 1::2])


def ce_receive(y, channel, response, noise_var, cfg):
    """Full CE receiver on a demapped block: MRC, LMMSE, postprocess, LLRs.

    Returns ``(d_bar_hat, llr, rho)``.
    """
    r, b = mrc_combine(y, channel, response, cfg.lobe_halfwidth_order)
    s, rho = lmmse_equalize(r, b, noise_var)
    d_hat = postprocess(s, rho)
    return d_hat, soft_demod(d_hat, effective_noise_variance(rho)), rho


def combine_replicas(y_full, channel_full, weights, indices, nd):
    """MRC of a spread spectrum whose bins ``indices`` carry symbol bins ``indices % nd``.

    Used by the DFT-s-OFDM baseline, whose excess band repeats the spread
    symbols.  Returns ``(r, b)`` on ``nd`` bins.
    """
    a = np.asarray(channel_full)[indices[0]] * weights
    y = np.asarray(y_full)[indices[0]]
    r = np.zeros(nd, dtype=complex)
    b = np.zeros(nd)
    np.add.at(r, indices[1], np.conj(a) * y)
    np.add.at(b, indices[1], np.abs(a) ** 2)
    return r, b


def baseline_receive(y_full, channel_full, kind, rolloff, noise_var, cfg, user=0,
                     window="rrc", amplitude=1.0):
    """Receiver of the CP-OFDM / DFT-s-OFDM baselines for unit-component QPSK.

    CP-OFDM gets per-subcarrier matched filtering; DFT-s-OFDM combines the
    excess-band replicas, applies MMSE frequency-domain equalization and
    despreads.  Returns ``(d_hat, llr)``.
    """
    from .waveform import baseline_layout

    bins, source, weights = baseline_layout(kind, rolloff, cfg, user, window)
    nd = cfg.n_complex_symbols
    r, b = combine_replicas(y_full, channel_full, amplitude * weights, (bins, source), nd)
    if kind == "cp-ofdm":
        with np.errstate(divide="ignore", invalid="ignore"):
            d_hat = np.where(b > 0, r / np.where(b > 0, b, 1), 0)
            var = np.where(b > 0, noise_var / (2 * np.where(b > 0, b, 1)), np.inf)
        return d_hat, soft_demod(d_hat, var)
    # symbols carry energy 2 per bin, hence sigma^2 / 2 in the LMMSE denominator
    s, rho = lmmse_equalize(r, b, noise_var / 2)
    scale = rho.mean()
    d_hat = idft(s) / scale if scale > 0 else np.zeros(nd, dtype=complex)
    return d_hat, soft_demod(d_hat, effective_noise_variance(rho))
