"""Unitary DFT helpers and the half-sample phase ramp used by the GDFT."""

import numpy as np


def dft(x, axis=-1):
    """Unitary DFT, ``W x`` with ``W[m, n] = exp(-2j*pi*m*n/N)/sqrt(N)``."""
    return np.fft.fft(x, axis=axis, norm="ortho")


def idft(x, axis=-1):
    """Unitary inverse DFT, ``W^H x``."""
    return np.fft.ifft(x, axis=axis, norm="ortho")


def dft_matrix(n):
    """Dense unitary DFT matrix; for oracles and small problems only."""
    idx = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n) / np.sqrt(n)


def half_sample_ramp(n):
    """Diagonal of the phase ramp ``Theta_n``: ``exp(-j*pi*k/n)``, k = 0..n-1.

    ``Theta_{2N}`` turns the 2N-point DFT into the GDFT that evaluates the
    spectrum half a bin off the grid.
    """
    return np.exp(-1j * np.pi * np.arange(n) / n)


def reverse(x, axis=-1):
    """Apply the exchange matrix ``J`` (index reversal)."""
    return np.flip(x, axis=axis)


def signed_index(n):
    """Indices 0..n-1 mapped to [-n/2, n/2) (negative half wraps to the tail)."""
    idx = np.arange(n)
    return np.where(idx < n // 2, idx, idx - n)


def circ(first_column):
    """Dense circulant matrix with the given first column."""
    c = np.asarray(first_column)
    n = c.size
    rows = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return c[rows]
