"""Dimensional parameters of a CE-CP-OFDMA link."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class WaveformConfig:
    """All block dimensions and the subcarrier allocation.

    ``user_anchors`` holds the integer centre index ``a_k`` of each user's
    occupied band.  The shift integer of the frequency-domain cyclic shift is
    ``a'_k = a_k - N_d/2``, so the band ``[a'_k, a'_k + N_d)`` carries ``s``
    and the main lobe is centred half a bin below ``a_k`` (see
    :meth:`filter_center`).  Defaults follow the Table-I setup
    (N_c = 4096, N_d = 256, 120 kHz).
    """

    n_subcarriers: int = 4096
    n_complex_symbols: int = 256
    lobe_halfwidth_order: int = 1
    cp_len: int | None = None
    subcarrier_spacing_hz: float = 120e3
    user_anchors: tuple[int, ...] | None = None

    def __post_init__(self):
        nc, nd = self.n_subcarriers, self.n_complex_symbols
        if nc <= 0 or nd <= 0:
            raise ConfigurationError("n_subcarriers and n_complex_symbols must be positive")
        if nc % nd:
            raise ConfigurationError(f"N_c={nc} is not a multiple of N_d={nd}")
        phi = nc // nd
        if phi % 4:
            raise ConfigurationError(f"sampling factor {phi} is not divisible by 4")
        if nd % 2:
            raise ConfigurationError("only even N_d is supported")
        if self.lobe_halfwidth_order < 0:
            raise ConfigurationError("lobe_halfwidth_order must be non-negative")
        if self.occupied_width > nc:
            raise ConfigurationError(
                f"occupied width {self.occupied_width} exceeds N_c={nc}")
        if self.subcarrier_spacing_hz <= 0:
            raise ConfigurationError("subcarrier spacing must be positive")
        cp = nc // 16 if self.cp_len is None else int(self.cp_len)
        if not 0 <= cp < nc:
            raise ConfigurationError(f"cp_len={cp} out of range")
        object.__setattr__(self, "cp_len", cp)

        anchors = self.user_anchors
        if anchors is None:
            anchors = default_anchors(nc, self.occupied_width, 1)
        anchors = tuple(int(a) % nc for a in anchors)
        if not anchors:
            raise ConfigurationError("at least one user anchor is required")
        nbar = self.occupied_width
        for i, a in enumerate(anchors):
            for b in anchors[i + 1:]:
                gap = (a - b) % nc
                if min(gap, nc - gap) < nbar:
                    raise ConfigurationError(
                        f"anchors {a} and {b} closer than occupied width {nbar}")
        object.__setattr__(self, "user_anchors", anchors)

    @classmethod
    def for_users(cls, n_users, **kwargs):
        """Config with ``n_users`` adjacent bands centred in the spectrum."""
        probe = cls(**kwargs)
        anchors = default_anchors(probe.n_subcarriers, probe.occupied_width, n_users)
        return cls(user_anchors=anchors, **kwargs)

    @property
    def sampling_factor(self):
        return self.n_subcarriers // self.n_complex_symbols

    @property
    def occupied_width(self):
        return (2 * self.lobe_halfwidth_order + 1) * self.n_complex_symbols

    @property
    def n_users(self):
        return len(self.user_anchors)

    @property
    def center_index(self):
        return self.user_anchors[0]

    @property
    def sample_period(self):
        return 1.0 / (self.n_subcarriers * self.subcarrier_spacing_hz)

    @property
    def symbol_period(self):
        """Complex-symbol interval ``T = Phi * T_s``."""
        return self.sampling_factor * self.sample_period

    def anchor(self, user=0):
        return self.user_anchors[user]

    def shift_index(self, user=0):
        """Shift integer ``a'_k`` of the frequency-domain cyclic shift."""
        return self.user_anchors[user] - self.n_complex_symbols // 2

    def filter_center(self, user=0):
        """Main-lobe centre (half-integer bin) where the shaping filter sits."""
        return self.user_anchors[user] - 0.5

    def normalized_frequency(self, user=0):
        """Normalised carrier ``f_k`` of the user's OQAM stream."""
        return self.filter_center(user) / self.n_subcarriers

    def occupied_indices(self, user=0):
        """Subcarrier set ``Gamma_k`` in demapping order (wraps modulo N_c)."""
        nbar = self.occupied_width
        start = self.user_anchors[user] - nbar // 2
        return (start + np.arange(nbar)) % self.n_subcarriers


def default_anchors(n_subcarriers, occupied_width, n_users):
    """Adjacent, non-wrapping bands centred in ``[0, N_c)``."""
    total = n_users * occupied_width
    if total > n_subcarriers:
        raise ConfigurationError(
            f"{n_users} users of width {occupied_width} do not fit in {n_subcarriers}")
    start = (n_subcarriers - total) // 2
    return tuple(start + k * occupied_width + occupied_width // 2 for k in range(n_users))
