"""Binary pilot design for frequency-domain flatness.

A pilot is a length-``2 N_d`` sequence of +/-1 real symbols sent through the
ordinary CE transmitter, so it keeps the constant envelope.  Its pattern on
the occupied band repeats ``s`` and ``J s*`` (the first ``N_d`` GDFT bins
and their conjugate mirror), and the flatness objective
``sum_i (|s(i)|^2 - 1)^2`` drives ``X X^H`` towards the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError, DomainError
from .transforms import half_sample_ramp, reverse
from .waveform import conjugate_extend, gdft, inverse_gdft


@dataclass(frozen=True, eq=False)
class PilotSequence:
    """Pilot in both domains.

    ``bits`` is ``None`` for the non-binary ideal pilot, whose real
    time-domain symbols are kept in ``real_symbols``.
    """

    bits: np.ndarray | None
    real_symbols: np.ndarray
    gdft_out: np.ndarray
    objective: float
    metadata: dict = field(default_factory=dict)

    @property
    def n_complex_symbols(self):
        return self.gdft_out.size // 2

    @property
    def effective_info(self):
        return self.gdft_out[:self.n_complex_symbols]

    @property
    def is_binary(self):
        return self.bits is not None

    def freq_diag(self, lobe_order=1):
        """Pattern ``x`` on the occupied band (``2 Bbar + 1`` sub-bands)."""
        return pilot_pattern(self.gdft_out, lobe_order)

    def min_power(self):
        return float(np.min(np.abs(self.effective_info) ** 2))


def pilot_pattern(q, lobe_order=1):
    """``x_m = s`` when ``m - Bbar`` is even, else ``J s*``."""
    q = np.asarray(q)
    nd = q.size // 2
    s, mirrored = q[:nd], reverse(np.conj(q[:nd]))
    return np.concatenate([s if (m - lobe_order) % 2 == 0 else mirrored
                           for m in range(2 * lobe_order + 1)])


def _check_bits(bits):
    bits = np.asarray(bits)
    if bits.ndim < 1 or bits.shape[-1] % 2:
        raise DimensionError("pilot length must be even")
    if not np.all((bits == 1) | (bits == -1)):
        raise DomainError("pilot entries must be +1 or -1")
    return bits


def _gdft_rows(n2):
    """First ``N_d`` rows of the GDFT matrix (``N_d x 2N_d``)."""
    nd = n2 // 2
    i = np.arange(nd)[:, None]
    n = np.arange(n2)[None, :]
    return np.exp(-2j * np.pi * i * n / n2) * half_sample_ramp(n2)[None, :] / np.sqrt(n2)


def _spectrum(bits):
    """First ``N_d`` GDFT bins for a batch of sequences (last axis)."""
    b = np.asarray(bits, dtype=float)
    n2 = b.shape[-1]
    full = np.fft.fft(b * half_sample_ramp(n2), axis=-1, norm="ortho")
    return full[..., :n2 // 2]


def flatness_objective(bits):
    """``sum_{i<N_d} (|[W~ d]_i|^2 - 1)^2``.

    The Frobenius form ``||X X^H - I||_F^2`` over the occupied band counts
    every ``|s(i)|^2`` exactly ``2 Bbar + 1`` times, so it equals this value
    times ``2 Bbar + 1``.
    """
    bits = _check_bits(bits)
    s = _spectrum(bits)
    return np.sum((np.abs(s) ** 2 - 1.0) ** 2, axis=-1)


def from_bits(bits, objective=None, **metadata):
    bits = _check_bits(bits).astype(np.int8)
    q = gdft(bits.astype(float))
    obj = float(flatness_objective(bits)) if objective is None else float(objective)
    return PilotSequence(bits=bits, real_symbols=bits.astype(float), gdft_out=q,
                         objective=obj, metadata=metadata)


def random_pilot(n_complex_symbols, rng):
    """Uniformly random +/-1 pilot."""
    bits = rng.choice(np.array([-1, 1], dtype=np.int8), size=2 * n_complex_symbols)
    return from_bits(bits, kind="random")


def ideal_pilot(n_complex_symbols, rng):
    """Unit-modulus, random-phase ``s``; flat but not constant-envelope in time."""
    s = np.exp(2j * np.pi * rng.random(n_complex_symbols))
    q = conjugate_extend(s)
    d = inverse_gdft(q).real
    return PilotSequence(bits=None, real_symbols=d, gdft_out=q, objective=0.0,
                         metadata={"kind": "ideal"})


@dataclass(frozen=True)
class PilotSearchOptions:
    """Settings of :func:`optimize_pilot`.

    ``budget`` counts proposed moves over the whole population.
    """

    budget: int = 1_000_000
    population: int = 32
    double_flip_prob: float = 0.5
    guard: float = 0.1

    def __post_init__(self):
        if self.budget < 0:
            raise ConfigurationError("budget must be non-negative")
        if self.population < 1:
            raise ConfigurationError("population must be positive")
        if not 0 <= self.double_flip_prob <= 1:
            raise ConfigurationError("double_flip_prob must lie in [0, 1]")


def optimize_pilot(n_complex_symbols, seed=0, options=None, budget=None):
    """Population bit-flip hill climbing with elitism.

    Every member proposes a single or double flip per round and keeps it if
    its ``(guard violation, objective)`` pair improves lexicographically;
    the guard asks for ``min |s(i)|^2 >= options.guard``.  The returned
    pilot is the best member seen, so the result can only improve with the
    budget for a fixed seed.
    """
    opts = options or PilotSearchOptions()
    if budget is not None:
        opts = PilotSearchOptions(budget=budget, population=opts.population,
                                  double_flip_prob=opts.double_flip_prob, guard=opts.guard)
    nd = int(n_complex_symbols)
    if nd < 1:
        raise ConfigurationError("need at least one complex symbol")
    n2 = 2 * nd
    rng = np.random.default_rng(seed)
    pop = rng.choice(np.array([-1.0, 1.0]), size=(opts.population, n2))
    spec = _spectrum(pop)
    cols = _gdft_rows(n2).T  # (2N_d, N_d): column n of W~ restricted to rows < N_d
    obj, bad = _score(spec, opts.guard)
    best_i = _argbest(obj, bad)
    best = (bad[best_i], obj[best_i], pop[best_i].copy())
    initial = float(obj[best_i])
    rows = np.arange(opts.population)
    rounds = opts.budget // opts.population
    for _ in range(rounds):
        i1 = rng.integers(0, n2, opts.population)
        i2 = rng.integers(0, n2, opts.population)
        double = (rng.random(opts.population) < opts.double_flip_prob) & (i1 != i2)
        delta = -2.0 * pop[rows, i1][:, None] * cols[i1]
        delta += np.where(double[:, None], -2.0 * pop[rows, i2][:, None] * cols[i2], 0.0)
        cand = spec + delta
        c_obj, c_bad = _score(cand, opts.guard)
        accept = (c_bad < bad) | ((c_bad == bad) & (c_obj < obj))
        if np.any(accept):
            a = np.flatnonzero(accept)
            pop[a, i1[a]] *= -1
            d = a[double[a]]
            pop[d, i2[d]] *= -1
            spec[a] = cand[a]
            obj[a], bad[a] = c_obj[a], c_bad[a]
            j = _argbest(obj, bad)
            if (bad[j], obj[j]) < best[:2]:
                best = (bad[j], obj[j], pop[j].copy())
    bits = best[2].astype(np.int8)
    exact = float(flatness_objective(bits))
    return from_bits(bits, objective=exact, kind="optimized", seed=seed, budget=opts.budget,
                     population=opts.population, initial_objective=initial,
                     guard_satisfied=bool(best[0] == 0))


def _score(spec, guard):
    power = np.abs(spec) ** 2
    obj = np.sum((power - 1.0) ** 2, axis=-1)
    bad = np.maximum(guard - power.min(axis=-1), 0.0)
    return obj, bad


def _argbest(obj, bad):
    return int(np.lexsort((obj, bad))[0])
