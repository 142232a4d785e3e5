"""Multi-stage channel estimation: LS, DFT-domain denoising, ESPRIT, LMMSE.

Received pilot model on the occupied band ``Gamma`` (length ``Nbar``)::

    y = X Lambda h + z

with ``X = diag(x)`` the pilot's frequency-domain pattern, ``Lambda`` the
transmit filter (including the ``j^k sqrt(2/Phi)`` gain) and ``h`` the
channel.  :func:`epmce` chains every stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import steering_vector
from .errors import ConfigurationError, DimensionError, NumericalError, SingularityError
from .transforms import dft, idft

EIG_FLOOR = 1e-300


def demap(y_full, cfg, user=0):
    """``y(m) = y_full(M^{-1}(m))`` over the user's occupied set (wraps)."""
    y_full = np.asarray(y_full)
    if y_full.shape[-1] != cfg.n_subcarriers:
        raise DimensionError(f"expected {cfg.n_subcarriers} subcarriers")
    return y_full[..., cfg.occupied_indices(user)]


def remap(y, cfg, user=0):
    """Place an occupied-band vector back on the ``N_c`` grid (zeros elsewhere)."""
    out = np.zeros(cfg.n_subcarriers, dtype=complex)
    out[cfg.occupied_indices(user)] = y
    return out


def effective_response(filt, cfg, user=0):
    """``Lambda`` on ``Gamma_k`` including the transmit gain ``j^k sqrt(2/Phi)``."""
    gain = (1j ** user) * math.sqrt(2.0 / cfg.sampling_factor)
    return gain * filt.occupied_response(cfg, user)


@dataclass(frozen=True)
class EstimatorConfig:
    """Tuning of :func:`epmce`.

    Attributes
    ----------
    k1, l1 : int or None
        Spatial-smoothing split; ``None`` picks the balanced split of the
        ESPRIT aperture (``k1 + l1 = aperture + 1``).
    max_paths : int
        Cap on the MDL order.
    cp_window_len : int or None
        Delay-domain window length in bins from delay 0; defaults to the CP
        duration, ``ceil(cp_len * Nbar / N_c)``.
    window_guard : int or None
        Extra bins kept at negative delays (the filter taps at ``n < 0``
        wrap to the end of the delay axis); defaults to the filter half
        length ``ceil(Phi/2 * Nbar / N_c) + 1``.
    gain_floor : float
        Bins where ``|lambda| < gain_floor * max|lambda|`` are excluded from
        the ``Lambda^{-1}`` inversion (set to zero in ``h_dft``).
    esprit_floor_db : float or None
        ESPRIT and the LS gain fit run on the contiguous run of bins whose
        ``|lambda|^2`` lies within this many dB of the peak; ``None`` uses
        every bin that survived ``gain_floor``.
    debias : {"literal", "expected"}
        PDP noise term: ``sigma^2 |W^H X^{-1} 1|^2`` or its expectation
        ``sigma^2 mean(1/|x|^2)``.
    order_floor_db : float or None
        The MDL order is taken from the Hankel matrix of the LS channel
        ``Lambda^{-1} xi_ls`` over the run within this many dB of the filter
        peak, where the noise is close to white.  ``None`` applies MDL to
        the ESPRIT matrix itself.
    merge_tolerance : float
        ESPRIT delays closer than this fraction of a delay bin are merged.
    """

    k1: int | None = None
    l1: int | None = None
    max_paths: int = 32
    cp_window_len: int | None = None
    window_guard: int | None = None
    gain_floor: float = 1e-6
    esprit_floor_db: float | None = -20.0
    debias: str = "literal"
    order_floor_db: float | None = -10.0
    merge_tolerance: float = 0.05

    def __post_init__(self):
        if self.max_paths < 1:
            raise ConfigurationError("max_paths must be at least 1")
        if (self.k1 is None) != (self.l1 is None):
            raise ConfigurationError("set both k1 and l1 or neither")
        if self.debias not in ("literal", "expected"):
            raise ConfigurationError(f"unknown debias mode {self.debias!r}")
        if not 0 <= self.gain_floor < 1:
            raise ConfigurationError("gain_floor must lie in [0, 1)")

    def split(self, aperture):
        """``(K1, L1)`` for an ESPRIT aperture of ``aperture`` bins."""
        if self.k1 is not None:
            k1, l1 = self.k1, self.l1
            if k1 + l1 != aperture + 1:
                raise ConfigurationError(
                    f"k1 + l1 = {k1 + l1} but the aperture needs {aperture + 1}")
        else:
            k1 = (aperture + 2) // 2
            l1 = aperture + 1 - k1
        if min(k1 - 1, l1) < 1:
            raise ConfigurationError("aperture too small for spatial smoothing")
        return k1, l1


@dataclass(frozen=True, eq=False)
class ChannelEstimate:
    """Every intermediate of the EPMCE pipeline."""

    equiv_ls: np.ndarray
    pdp: np.ndarray
    denoised: np.ndarray
    delays: np.ndarray
    gains: np.ndarray
    final: np.ndarray
    order: int
    extras: dict = field(default_factory=dict)

    @property
    def ls(self):
        return self.extras["h_ls"]


def ls_estimate(y, pilot_diag):
    """``xi_ls = X^{-1} y``."""
    y = np.asarray(y)
    x = np.asarray(pilot_diag)
    if y.shape != x.shape:
        raise DimensionError("received vector and pilot differ in length")
    if np.any(x == 0):
        raise SingularityError("pilot has a zero frequency-domain entry")
    return y / x


def delay_window(nbar, cfg=None, cp_window_len=None, guard=None):
    """Rectangular delay-domain window ``w_rec`` over ``[-guard, cp_window_len)``."""
    if cp_window_len is None:
        if cfg is None:
            raise ConfigurationError("need cfg or an explicit window length")
        cp_window_len = math.ceil(cfg.cp_len * nbar / cfg.n_subcarriers)
    if guard is None:
        guard = 0 if cfg is None else math.ceil(cfg.sampling_factor / 2 * nbar / cfg.n_subcarriers) + 1
    if cp_window_len + guard > nbar:
        raise ConfigurationError("delay window longer than the occupied band")
    w = np.zeros(nbar)
    w[:cp_window_len] = 1.0
    if guard:
        w[-guard:] = 1.0
    return w


def pdp_estimate(xi_ls, pilot_diag, noise_var, window, debias="literal"):
    """``r_tau = ReLU(w_rec * (|W^H xi_ls|^2 - sigma^2 |W^H X^{-1} 1|^2))``."""
    xi_ls = np.asarray(xi_ls)
    window = np.asarray(window, dtype=float)
    if window.shape != xi_ls.shape:
        raise DimensionError("window length differs from the band")
    inv = 1.0 / np.asarray(pilot_diag)
    if debias == "literal":
        noise = noise_var * np.abs(idft(inv)) ** 2
    else:
        noise = noise_var * np.mean(np.abs(inv) ** 2)
    return np.maximum(window * (np.abs(idft(xi_ls)) ** 2 - noise), 0.0)


def wiener_weights(pdp, noise_var, window=None):
    """Delay-domain weights ``r / (r + sigma^2)`` (the window itself when noiseless)."""
    pdp = np.asarray(pdp, dtype=float)
    if noise_var == 0:
        return (pdp > 0).astype(float) if window is None else np.asarray(window, dtype=float)
    return pdp / (pdp + noise_var)


def invert_filter(xi, response, gain_floor=1e-6):
    """``Lambda^{-1} xi`` with bins below the gain floor set to zero."""
    lam = np.asarray(response)
    mag = np.abs(lam)
    if not np.any(mag > 0):
        raise SingularityError("filter response is identically zero")
    usable = mag >= gain_floor * mag.max()
    if gain_floor == 0 and np.any(mag == 0):
        raise SingularityError("filter response has an exact zero on the band")
    out = np.zeros(np.broadcast_shapes(np.shape(xi), lam.shape), dtype=complex)
    out[..., usable] = np.asarray(xi)[..., usable] / lam[usable]
    return out


def dpmce(xi_ls, pdp, noise_var, response, window=None, gain_floor=1e-6):
    """DFT-domain denoising then filter inversion: ``h_dft = Lambda^{-1} W R (R + s I)^{-1} W^H xi``."""
    weights = wiener_weights(pdp, noise_var, window)
    xi_dft = dft(weights * idft(xi_ls))
    return invert_filter(xi_dft, response, gain_floor)


def spatial_smooth(h, k1, l1):
    """Hankel matrix ``H_s[:, l] = h[l : l + k1]``, shape ``(k1, l1)``."""
    h = np.asarray(h)
    if k1 < 1 or l1 < 1 or k1 + l1 != h.size + 1:
        raise ConfigurationError(f"k1 + l1 must equal {h.size + 1}")
    idx = np.arange(k1)[:, None] + np.arange(l1)[None, :]
    return h[idx]


def mdl_order(singular_values, k1, l1, max_paths=None):
    """Minimum-description-length model order from ``H_s`` singular values.

    Uses the eigenvalues ``s^2 / L1`` of the sample covariance; only the
    ``min(K1, L1)`` structurally nonzero eigenvalues enter the criterion.
    """
    sv = np.sort(np.asarray(singular_values, dtype=float))[::-1]
    if sv.size < 2:
        raise ConfigurationError("MDL needs at least two singular values")
    p = min(k1, l1, sv.size)
    lam = np.maximum(sv[:p] ** 2 / l1, EIG_FLOOR)
    cap = p - 1 if max_paths is None else min(max_paths, p - 1)
    best_q, best = 0, math.inf
    for q in range(cap + 1):
        tail = lam[q:]
        geo = np.exp(np.mean(np.log(tail)))
        arith = np.mean(tail)
        ratio = min(geo / arith, 1.0)
        score = -l1 * (p - q) * math.log(ratio) + 0.5 * q * (2 * p - q) * math.log(l1)
        if score < best - 1e-9 * abs(best if math.isfinite(best) else 1.0):
            best_q, best = q, score
    return best_q


def esprit_delays(hs, order, subcarrier_spacing):
    """Delays from the rotational invariance of the signal subspace.

    Eigenvalues of ``U1^+ U2`` are projected onto the unit circle; delays
    are returned in ``[0, 1/df)``, sorted ascending.
    """
    hs = np.asarray(hs)
    k1, l1 = hs.shape
    if order < 1:
        return np.zeros(0)
    if order > min(k1 - 1, l1):
        raise ConfigurationError(
            f"order {order} violates the uniqueness bound min(K1-1, L1) = {min(k1 - 1, l1)}")
    u = np.linalg.svd(hs, full_matrices=False)[0][:, :order]
    psi = np.linalg.lstsq(u[:-1], u[1:], rcond=None)[0]
    phi = np.linalg.eigvals(psi)
    if not np.all(np.isfinite(phi)) or np.any(phi == 0):
        raise NumericalError("ESPRIT eigenproblem returned degenerate generators")
    phi = phi / np.abs(phi)
    period = 1.0 / subcarrier_spacing
    tau = np.mod(-np.angle(phi) / (2 * np.pi * subcarrier_spacing), period)
    tau[np.isclose(tau, period, rtol=0, atol=1e-15 * period)] = 0.0
    return np.sort(tau)


def ls_gains(h, delays, subcarrier_spacing, weights=None, start=0):
    """``alpha = B_tau^+ h`` (optionally row-weighted); ``start`` offsets the rows."""
    h = np.asarray(h)
    if np.size(delays) == 0:
        return np.zeros(0, dtype=complex)
    b = steering_vector(h.size, np.asarray(delays, dtype=float), subcarrier_spacing, start)
    if b.ndim == 1:
        b = b[:, None]
    if weights is not None:
        w = np.sqrt(np.asarray(weights, dtype=float))
        b, h = b * w[:, None], h * w
    sv = np.linalg.svd(b, compute_uv=False)
    if sv.size == 0 or sv[-1] <= 1e-10 * sv[0]:
        raise NumericalError("steering matrix is rank deficient (coincident delays)")
    return np.linalg.lstsq(b, h, rcond=None)[0]


def lmmse_channel(y, equiv_pilot, delays, gains, noise_var, subcarrier_spacing):
    """Reduced-dimension LMMSE (Woodbury form), a ``Q x Q`` solve.

    ``h = B (B^H |Xbar|^2 B + sigma^2 diag(|alpha|^2)^{-1})^{-1} B^H Xbar^H y``.
    """
    y = np.asarray(y)
    xbar = np.asarray(equiv_pilot)
    if y.shape != xbar.shape:
        raise DimensionError("received vector and equivalent pilot differ in length")
    power = np.abs(np.asarray(gains)) ** 2
    if power.size == 0:
        return np.zeros_like(y, dtype=complex)
    if np.any(power == 0):
        raise SingularityError("a path gain is exactly zero")
    b = steering_vector(y.size, np.asarray(delays, dtype=float), subcarrier_spacing)
    if b.ndim == 1:
        b = b[:, None]
    gram = (b.conj().T * np.abs(xbar) ** 2) @ b + noise_var * np.diag(1.0 / power)
    rhs = b.conj().T @ (np.conj(xbar) * y)
    return b @ np.linalg.solve(gram, rhs)


def lmmse_dense(y, equiv_pilot, correlation, noise_var):
    """Full-dimension LMMSE ``R (R + sigma^2 (Xbar Xbar^H)^{-1})^{-1} Xbar^{-1} y`` (oracle)."""
    xbar = np.asarray(equiv_pilot)
    if np.any(xbar == 0):
        raise SingularityError("equivalent pilot has a zero entry")
    r = np.asarray(correlation)
    a = r + noise_var * np.diag(1.0 / np.abs(xbar) ** 2)
    return r @ np.linalg.solve(a, np.asarray(y) / xbar)


def correlation_from_paths(n, delays, gains, subcarrier_spacing):
    """``R_h = B diag(|alpha|^2) B^H``."""
    b = steering_vector(n, np.asarray(delays, dtype=float), subcarrier_spacing)
    if b.ndim == 1:
        b = b[:, None]
    return (b * np.abs(np.asarray(gains)) ** 2) @ b.conj().T


def trusted_run(response, floor_db):
    """Slice of the longest contiguous run with ``|lambda|^2`` within ``floor_db`` of the peak."""
    power = np.abs(np.asarray(response)) ** 2
    if floor_db is None:
        ok = power > 0
    else:
        ok = power >= power.max() * 10.0 ** (floor_db / 10.0)
    best, start = (0, 0), None
    for i, flag in enumerate(np.append(ok, False)):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if i - start > best[1] - best[0]:
                best = (start, i)
            start = None
    return slice(*best)


def nmse(estimate, truth):
    """``||h_hat - h||^2 / ||h||^2``."""
    truth = np.asarray(truth)
    return float(np.sum(np.abs(np.asarray(estimate) - truth) ** 2) / np.sum(np.abs(truth) ** 2))


def epmce(y, pilot_diag, response, noise_var, cfg, options=None):
    """Staged estimator: LS, PDP, DPMCE, spatial-smoothing ESPRIT, LMMSE.

    Parameters
    ----------
    y : ndarray, shape (Nbar,)
        Demapped pilot block.
    pilot_diag : ndarray, shape (Nbar,)
        Pilot pattern ``x`` on the occupied band.
    response : ndarray, shape (Nbar,)
        Effective filter ``lambda`` (see :func:`effective_response`).
    noise_var : float
    cfg : WaveformConfig
    options : EstimatorConfig, optional

    Returns
    -------
    ChannelEstimate
        ``extras`` carries ``h_ls`` (LS channel ``Lambda^{-1} xi_ls``),
        ``window`` and the ESPRIT ``aperture`` slice.
    """
    opts = options or EstimatorConfig()
    y = np.asarray(y)
    nbar = y.size
    if nbar != cfg.occupied_width:
        raise DimensionError(f"expected {cfg.occupied_width} occupied subcarriers")
    df = cfg.subcarrier_spacing_hz
    xi_ls = ls_estimate(y, pilot_diag)
    window = delay_window(nbar, cfg, opts.cp_window_len, opts.window_guard)
    pdp = pdp_estimate(xi_ls, pilot_diag, noise_var, window, opts.debias)
    h_dft = dpmce(xi_ls, pdp, noise_var, response, window, opts.gain_floor)

    h_ls = invert_filter(xi_ls, response, opts.gain_floor)
    aperture = trusted_run(response, opts.esprit_floor_db)
    seg = h_dft[aperture]
    k1, l1 = opts.split(seg.size)
    hs = spatial_smooth(seg, k1, l1)
    if opts.order_floor_db is None:
        sv = np.linalg.svd(hs, compute_uv=False)
        order = mdl_order(sv, k1, l1, min(opts.max_paths, k1 - 1, l1))
    else:
        order_seg = h_ls[trusted_run(response, opts.order_floor_db)]
        ok1, ol1 = opts.split(order_seg.size) if opts.k1 is None else (k1, l1)
        sv = np.linalg.svd(spatial_smooth(order_seg, ok1, ol1), compute_uv=False)
        order = mdl_order(sv, ok1, ol1, min(opts.max_paths, k1 - 1, l1))
    if order == 0 or not np.any(seg):
        delays = np.zeros(0)
        gains = np.zeros(0, dtype=complex)
        final = np.zeros(nbar, dtype=complex)
    else:
        delays = esprit_delays(hs, order, df)
        tol = opts.merge_tolerance
        while True:
            delays = _merge_close(delays, tol / (seg.size * df), 1.0 / df)
            delays = _signed_delays(delays, window, df)
            try:
                gains = ls_gains(seg, delays, df, start=aperture.start)
                break
            except NumericalError:
                if tol >= 1.0:
                    raise
                tol = min(1.0, 4 * tol)
        gains = np.where(gains == 0, np.finfo(float).tiny, gains)
        final = lmmse_channel(y, np.asarray(response) * np.asarray(pilot_diag), delays,
                              gains, noise_var, df)
    return ChannelEstimate(equiv_ls=xi_ls, pdp=pdp, denoised=h_dft, delays=delays,
                           gains=gains, final=final, order=int(order),
                           extras={"h_ls": h_ls, "window": window, "aperture": aperture,
                                   "singular_values": sv})


def _signed_delays(delays, window, subcarrier_spacing):
    """Map delays in the window's negative guard to ``tau - 1/df``.

    The steering vectors are periodic in ``tau`` with period ``1/df``, so
    this only changes how a path just before delay 0 is reported.
    """
    period = 1.0 / subcarrier_spacing
    guard = int(np.argmin(window[::-1])) if window[-1] else 0
    wrap = delays >= period * (1 - guard / window.size)
    return np.sort(np.where(wrap, delays - period, delays))


def _merge_close(delays, tol, period):
    """Drop delays within ``tol`` of a kept one (keeps the steering matrix full rank)."""
    kept = []
    for t in np.sort(delays):
        if all(min(abs(t - k), period - abs(t - k)) > tol for k in kept):
            kept.append(t)
    return np.asarray(kept)


def perfect_csi(chan, cfg, user=0):
    """True occupied-band channel (genie)."""
    return chan.occupied(cfg, user)
