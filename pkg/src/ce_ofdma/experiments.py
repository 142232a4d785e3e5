"""Monte-Carlo experiment harness: PAPR/CCDF, channel-estimation NMSE and BER.

Every experiment is driven by an :class:`ExperimentConfig`.  Monte-Carlo
points are independent tasks with their own RNG stream derived from
``(seed, series index, point index)``; results are gathered in task order,
so the output does not depend on the number of worker processes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from . import channel as chn
from . import estimation as est
from . import filters as flt
from . import pilots as plt_
from . import serialization as ser
from .config import WaveformConfig
from .equalizer import baseline_receive, bits_to_qpsk, ce_receive
from .errors import ConfigurationError
from .fec import get_codec
from .waveform import (baseline_spectrum, baseline_symbol_energy, fdtp_apply, papr_at,
                       papr_db, precode, prep, qpsk_symbols, synthesize_baseline,
                       synthesize_block)

WORKERS_ENV = "CE_LAB_WORKERS"
EXPERIMENTS = ("papr", "nmse", "ber")
CSI_MODES = ("perfect", "epmce", "dpmce", "ls")
DEFAULT_PAPR_WAVEFORMS = ("ce", "nce", "dft-s-ofdm:0", "dft-s-ofdm:0.25", "dft-s-ofdm:1",
                          "cp-ofdm")


class PrecisionWarning(UserWarning):
    """Too few Monte-Carlo samples for the requested precision."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that defines a run; see ``README.md`` for the file format.

    ``filter`` is ``{"kind": "optimized-ce" | "half-sine" | "nce", "bw_t": 1.0}``
    or ``{"file": "filter.json"}``; ``pilot`` is ``{"kind": "optimized" |
    "random" | "ideal", "budget": ..., "seed": ...}`` or ``{"file": ...}``;
    ``channel`` is ``{"profile": name or path, "delay_spread": s,
    "rice_k_db": None}``.  ``series`` lists partial overrides, one BER curve
    each.
    """

    experiment: str = "ber"
    waveform: str = "ce"
    rolloff: float = 0.0
    window: str = "rrc"
    filter: dict = field(default_factory=lambda: {"kind": "optimized-ce"})
    pilot: dict = field(default_factory=lambda: {"kind": "optimized", "budget": 1_000_000,
                                                 "seed": 1})
    channel: dict = field(default_factory=lambda: {"profile": "awgn"})
    estimator: dict = field(default_factory=dict)
    seed: int = 0
    esn0_db: tuple = (0.0,)
    n_blocks: int = 1000
    fec: str = "none"
    metrics: tuple = ()
    output: str | None = None
    n_subcarriers: int = 4096
    n_complex_symbols: int = 256
    lobe_order: int = 1
    subcarrier_spacing_hz: float = 120e3
    cp_len: int | None = None
    n_users: int = 1
    csi: str = "perfect"
    power_offset_db: float = 0.0
    blocks_per_slot: int = 13
    series: tuple = ()
    label: str | None = None
    papr_waveforms: tuple = DEFAULT_PAPR_WAVEFORMS
    papr_grid: tuple = (0.0, 14.0, 0.05)
    ccdf_depth: float = 1e-3
    oversampling: int = 1
    estimators: tuple = ("ls", "dpmce", "epmce")
    pilots: tuple = ("ideal", "random", "optimized")
    workers: int = 1

    def __post_init__(self):
        for name in ("esn0_db", "metrics", "series", "papr_waveforms", "papr_grid",
                     "estimators", "pilots"):
            value = getattr(self, name)
            if isinstance(value, (list, tuple)):
                object.__setattr__(self, name, tuple(
                    dict(v) if isinstance(v, dict) else v for v in value))
            elif isinstance(value, (int, float)) and name == "esn0_db":
                object.__setattr__(self, name, (float(value),))
        self.validate()

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"experiment must be one of {EXPERIMENTS}")
        if not self.esn0_db or not all(math.isfinite(float(v)) for v in self.esn0_db):
            raise ConfigurationError("E_s/N_0 grid must be non-empty and finite")
        if self.n_blocks < 1:
            raise ConfigurationError("n_blocks must be positive")
        if self.experiment == "ber" and self.n_blocks < 100:
            raise ConfigurationError("BER points need at least 100 blocks")
        if self.csi not in CSI_MODES:
            raise ConfigurationError(f"csi must be one of {CSI_MODES}")
        if self.n_users < 1 or self.blocks_per_slot < 1:
            raise ConfigurationError("n_users and blocks_per_slot must be positive")
        if self.oversampling < 1:
            raise ConfigurationError("oversampling must be a positive integer")
        if len(self.papr_grid) != 3 or self.papr_grid[2] <= 0:
            raise ConfigurationError("papr_grid is (start, stop, step) with step > 0")
        if not 0 < self.ccdf_depth < 1:
            raise ConfigurationError("ccdf_depth must lie in (0, 1)")
        for e in self.estimators:
            if e not in ("ls", "dpmce", "epmce"):
                raise ConfigurationError(f"unknown estimator {e!r}")
        for p in self.pilots:
            if p not in ("ideal", "random", "optimized"):
                raise ConfigurationError(f"unknown pilot kind {p!r}")
        get_codec(self.fec)
        self.waveform_config()

    # ------------------------------------------------------------ helpers

    @classmethod
    def from_mapping(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"no such config file: {path}")
        text = path.read_text()
        try:
            if path.suffix == ".toml":
                try:
                    import tomllib
                except ModuleNotFoundError:  # Python < 3.11
                    import tomli as tomllib
                data = tomllib.loads(text)
            else:
                data = json.loads(text)
        except ValueError as exc:
            raise ConfigurationError(f"{path}: cannot parse ({exc})") from exc
        return cls.from_mapping(data)

    def to_dict(self):
        return ser._jsonable(dataclasses.asdict(self))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @property
    def config_hash(self):
        """Short digest of everything that affects the numbers."""
        data = self.to_dict()
        for k in ("output", "workers", "metrics"):
            data.pop(k, None)
        blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha1(blob).hexdigest()[:12]

    def waveform_config(self, n_users=None):
        kwargs = dict(n_subcarriers=self.n_subcarriers, n_complex_symbols=self.n_complex_symbols,
                      lobe_halfwidth_order=self.lobe_order, cp_len=self.cp_len,
                      subcarrier_spacing_hz=self.subcarrier_spacing_hz)
        return WaveformConfig.for_users(n_users or self.n_users, **kwargs)

    def resolved_workers(self):
        env = os.environ.get(WORKERS_ENV)
        if env:
            try:
                n = int(env)
            except ValueError:
                raise ConfigurationError(f"{WORKERS_ENV} must be an integer") from None
        else:
            n = int(self.workers)
        if n < 1:
            raise ConfigurationError("worker count must be positive")
        return n


@dataclass(frozen=True)
class MetricRecord:
    """One point of one curve."""

    metric: str
    series: str
    x: float
    y: float
    ci_half_width: float
    seed: int
    config_hash: str
    n: int = 0
    extra: dict = field(default_factory=dict)

    def row(self):
        out = {"metric": self.metric, "series": self.series, "x": self.x, "y": self.y,
               "ci_half_width": self.ci_half_width, "n": self.n, "seed": self.seed,
               "config_hash": self.config_hash}
        out.update(self.extra)
        return out


@dataclass
class ExperimentResult:
    """Records plus the CSV layout used to write them."""

    config: ExperimentConfig
    records: list
    columns: dict  # CSV column name -> record row key
    summary: dict = field(default_factory=dict)

    def series(self, name):
        recs = [r for r in self.records if r.series == name]
        return np.array([r.x for r in recs]), np.array([r.y for r in recs])

    def rows(self):
        return [{col: r.row().get(key, "") for col, key in self.columns.items()}
                for r in self.records]

    def write(self, out_dir=None):
        """Write ``<experiment>.csv`` and ``manifest.json``; returns the CSV path."""
        out_dir = Path(out_dir or self.config.output or ".")
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = ser.write_records_csv(out_dir / f"{self.config.experiment}.csv", self.rows(),
                                         list(self.columns))
        manifest = {"experiment": self.config.experiment, "config": self.config.to_dict(),
                    "config_hash": self.config.config_hash, "seed": self.config.seed,
                    "csv": csv_path.name, "columns": list(self.columns),
                    "summary": self.summary}
        ser.write_json(out_dir / "manifest.json", manifest)
        return csv_path


# ------------------------------------------------------------ shared setup

def point_rng(seed, *indices):
    """Independent, reproducible stream for one Monte-Carlo task."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, indices)]))


@lru_cache(maxsize=16)
def _ce_filter_cached(nc, nd, lobe, spacing):
    cfg = WaveformConfig(n_subcarriers=nc, n_complex_symbols=nd, lobe_halfwidth_order=lobe,
                         subcarrier_spacing_hz=spacing)
    return flt.optimize_ce_filter(cfg)


def build_filter(spec, cfg, kind=None):
    """Resolve a filter spec; ``kind`` overrides ``spec["kind"]``."""
    spec = dict(spec or {})
    if "file" in spec and kind is None:
        filt = ser.load_filter(spec["file"])
        flt.check_compatible(filt, cfg)
        return filt
    kind = kind or spec.get("kind", "optimized-ce")
    base_kind = spec.get("base", "optimized-ce")
    if kind == "half-sine" or (kind == "nce" and base_kind == "half-sine"):
        base = flt.half_sine(cfg.sampling_factor, cfg=cfg)
    elif kind in ("optimized-ce", "nce", "ce"):
        base = _ce_filter_cached(cfg.n_subcarriers, cfg.n_complex_symbols,
                                 cfg.lobe_halfwidth_order, cfg.subcarrier_spacing_hz)
    else:
        raise ConfigurationError(f"unknown filter kind {kind!r}")
    if kind == "nce":
        return flt.build_nce(base, cfg, float(spec.get("bw_t", 1.0)))
    return base


@lru_cache(maxsize=8)
def _optimized_pilot_cached(nd, seed, budget):
    return plt_.optimize_pilot(nd, seed=seed, budget=budget)


def build_pilot(spec, nd, rng=None, kind=None):
    """Resolve a pilot spec; random and ideal pilots are drawn from ``rng``."""
    spec = dict(spec or {})
    if "file" in spec and kind in (None, "optimized"):
        pilot = ser.load_pilot(spec["file"])
        if pilot.n_complex_symbols != nd:
            raise ConfigurationError("pilot file length does not match N_d")
        return pilot
    kind = kind or spec.get("kind", "optimized")
    if kind == "optimized":
        return _optimized_pilot_cached(nd, int(spec.get("seed", 1)),
                                       int(spec.get("budget", 1_000_000)))
    if rng is None:
        raise ConfigurationError(f"{kind} pilots need a random generator")
    if kind == "random":
        return plt_.random_pilot(nd, rng)
    if kind == "ideal":
        return plt_.ideal_pilot(nd, rng)
    raise ConfigurationError(f"unknown pilot kind {kind!r}")


def estimator_options(cfg):
    try:
        return est.EstimatorConfig(**cfg.estimator)
    except TypeError as exc:
        raise ConfigurationError(f"bad estimator options: {exc}") from exc


def ce_symbol_energy(response_occ, nd, amplitude=1.0):
    """Block energy on the occupied band per complex symbol."""
    return amplitude ** 2 * float(np.sum(np.abs(response_occ) ** 2)) / nd


def _channel(cfg_exp, wcfg, rng):
    spec = dict(cfg_exp.channel or {})
    profile = chn.load_profile(spec.get("profile", "awgn"))
    return chn.sample_tdl(profile, float(spec.get("delay_spread", 37e-9)), wcfg, rng,
                          spec.get("rice_k_db"))


def _run_tasks(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def wilson_interval(errors, trials, confidence=0.95):
    if trials <= 0:
        return 0.0, 1.0
    ci = binomtest(int(errors), int(trials)).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


def snr_at_ber(esn0_db, ber, target):
    """Interpolate (log-BER, linear dB) the first crossing of ``target``.

    Returns ``nan`` when the curve never crosses it.
    """
    x = np.asarray(esn0_db, dtype=float)
    y = np.asarray(ber, dtype=float)
    order = np.argsort(x)
    x, y = x[order], y[order]
    for i in range(len(x) - 1):
        if y[i] >= target >= y[i + 1] and y[i] > 0 and y[i + 1] > 0:
            ly0, ly1, lt = np.log10(y[i]), np.log10(y[i + 1]), np.log10(target)
            if ly0 == ly1:
                return float(x[i])
            return float(x[i] + (lt - ly0) * (x[i + 1] - x[i]) / (ly1 - ly0))
    return float("nan")


# ------------------------------------------------------------------- PAPR

def _parse_waveform(label):
    if label in ("ce", "nce", "cp-ofdm"):
        return label, 0.0
    if label.startswith("dft-s-ofdm"):
        _, _, g = label.partition(":")
        return "dft-s-ofdm", float(g or 0.0)
    raise ConfigurationError(f"unknown waveform {label!r}")


def papr_samples(label, cfg_exp, wcfg, n_blocks, rng):
    """Per-block PAPR (dB) of ``n_blocks`` random QPSK blocks."""
    kind, rolloff = _parse_waveform(label)
    out = np.empty(n_blocks)
    nd = wcfg.n_complex_symbols
    if kind in ("ce", "nce"):
        spec = dict(cfg_exp.filter)
        ce_kind = spec.get("kind", "optimized-ce")
        ce_kind = "optimized-ce" if ce_kind == "nce" else ce_kind
        filt = build_filter(spec, wcfg, kind=ce_kind if kind == "ce" else "nce")
        response = filt.user_response(wcfg)
        for i in range(n_blocks):
            p = fdtp_apply(prep(precode(qpsk_symbols(rng, nd))), response, wcfg)
            out[i] = papr_db(np.fft.ifft(p), cfg_exp.oversampling)
    else:
        for i in range(n_blocks):
            p = baseline_spectrum(kind, rolloff, qpsk_symbols(rng, nd), wcfg,
                                  window=cfg_exp.window)
            out[i] = papr_db(np.fft.ifft(p), cfg_exp.oversampling)
    return out


def _papr_task(task):
    cfg_exp, label, index = task
    wcfg = cfg_exp.waveform_config(1)
    return papr_samples(label, cfg_exp, wcfg, cfg_exp.n_blocks, point_rng(cfg_exp.seed, index))


def run_papr(cfg):
    """CCDF of the block PAPR for every waveform in ``cfg.papr_waveforms``.

    CSV columns: ``papr_db, ccdf, ci_half_width, waveform``.  The summary
    holds the PAPR at ``ccdf_depth`` for each waveform.
    """
    if cfg.n_blocks * cfg.ccdf_depth < 10:
        warnings.warn(f"{cfg.n_blocks} blocks give fewer than 10 exceedances at CCDF "
                      f"{cfg.ccdf_depth:g}", PrecisionWarning, stacklevel=2)
    start, stop, step = cfg.papr_grid
    grid = np.round(np.arange(start, stop + step / 2, step), 10)
    tasks = [(cfg, label, i) for i, label in enumerate(cfg.papr_waveforms)]
    results = _run_tasks(_papr_task, tasks, cfg.resolved_workers())
    records, summary = [], {}
    for label, paprs in zip(cfg.papr_waveforms, results):
        n = paprs.size
        ccdf = (paprs[None, :] > grid[:, None]).mean(axis=1)
        half = 1.96 * np.sqrt(ccdf * (1 - ccdf) / n)
        records += [MetricRecord("ccdf", label, float(x), float(y), float(h), cfg.seed,
                                 cfg.config_hash, n) for x, y, h in zip(grid, ccdf, half)]
        summary[label] = {"papr_at_depth_db": papr_at(paprs, cfg.ccdf_depth),
                          "depth": cfg.ccdf_depth, "blocks": n}
    return ExperimentResult(cfg, records, {"papr_db": "x", "ccdf": "y",
                                           "ci_half_width": "ci_half_width",
                                           "waveform": "series", "n": "n", "seed": "seed",
                                           "config_hash": "config_hash"}, summary)


# ------------------------------------------------------------------- NMSE

def _pilot_band(pilot, filt_response_full, wcfg):
    """Transmitted pilot on the occupied band and its pattern ``x``."""
    p = fdtp_apply(pilot.gdft_out, filt_response_full, wcfg)
    return est.demap(p, wcfg), pilot.freq_diag(wcfg.lobe_halfwidth_order)


def _nmse_task(task):
    cfg, pilot_kind, snr, series_i, point_i = task
    rng = point_rng(cfg.seed, series_i, point_i)
    wcfg = cfg.waveform_config(1)
    filt = build_filter(cfg.filter, wcfg)
    full = filt.user_response(wcfg)
    lam = est.effective_response(filt, wcfg)
    sig2 = chn.noise_variance(ce_symbol_energy(lam, wcfg.n_complex_symbols), snr)
    opts = estimator_options(cfg)
    fixed = build_pilot(cfg.pilot, wcfg.n_complex_symbols) if pilot_kind == "optimized" else None
    sums = {e: 0.0 for e in cfg.estimators}
    sq = {e: 0.0 for e in cfg.estimators}
    for _ in range(cfg.n_blocks):
        pilot = fixed or build_pilot(cfg.pilot, wcfg.n_complex_symbols, rng, kind=pilot_kind)
        xbar, x = _pilot_band(pilot, full, wcfg)
        chan = _channel(cfg, wcfg, rng)
        h = chan.occupied(wcfg)
        y = h * xbar + chn.NoiseModel(sig2).sample(h.shape, rng)
        e = est.epmce(y, x, lam, sig2, wcfg, opts)
        values = {"ls": e.ls, "dpmce": e.denoised, "epmce": e.final}
        for name in cfg.estimators:
            v = est.nmse(values[name], h)
            sums[name] += v
            sq[name] += v * v
    n = cfg.n_blocks
    out = {}
    for name in cfg.estimators:
        mean = sums[name] / n
        sd = math.sqrt(max(sq[name] / n - mean ** 2, 0.0))
        out[name] = (mean, 1.96 * sd / math.sqrt(n))
    return out


def run_nmse(cfg):
    """Linear-average NMSE (dB) per estimator x pilot over the E_s/N_0 grid.

    CSV columns: ``esn0_db, nmse_db, ci_half_width_db, estimator, pilot``.
    """
    tasks = [(cfg, pk, float(snr), si, pi) for si, pk in enumerate(cfg.pilots)
             for pi, snr in enumerate(cfg.esn0_db)]
    results = _run_tasks(_nmse_task, tasks, cfg.resolved_workers())
    records = []
    for (_, pk, snr, _, _), res in zip(tasks, results):
        for name in cfg.estimators:
            mean, half = res[name]
            db = 10 * math.log10(mean)
            half_db = 10 / math.log(10) * half / mean
            records.append(MetricRecord("nmse", f"{name}/{pk}", snr, db, half_db, cfg.seed,
                                        cfg.config_hash, cfg.n_blocks,
                                        {"estimator": name, "pilot": pk}))
    summary = {}
    for r in records:
        summary.setdefault(r.series, {})[repr(r.x)] = r.y
    return ExperimentResult(cfg, records, {"esn0_db": "x", "nmse_db": "y",
                                           "ci_half_width_db": "ci_half_width",
                                           "estimator": "estimator", "pilot": "pilot",
                                           "n": "n", "seed": "seed",
                                           "config_hash": "config_hash"}, summary)


# -------------------------------------------------------------------- BER

def _ber_task(task):
    """Errors and bit count of one series at one E_s/N_0 point.

    Each slot is one pilot block followed by ``blocks_per_slot`` data
    blocks sharing one channel draw per user; every user's bits count.
    Series at the same point see the same channels, bits and noise.
    """
    cfg, snr, _, point_i = task
    # common random numbers across series: channels, data and data noise come
    # from one stream per point, pilot noise from a second one
    rng = point_rng(cfg.seed, point_i)
    pilot_rng = point_rng(cfg.seed, point_i, 1)
    wcfg = cfg.waveform_config()
    nd = wcfg.n_complex_symbols
    codec = get_codec(cfg.fec)
    amp = 10.0 ** (cfg.power_offset_db / 20.0)
    is_ce = cfg.waveform == "ce"
    if is_ce:
        filt = build_filter(cfg.filter, wcfg)
        fulls = [filt.user_response(wcfg, k) for k in range(wcfg.n_users)]
        lams = [est.effective_response(filt, wcfg, k) for k in range(wcfg.n_users)]
        es = ce_symbol_energy(lams[0], nd)
        if cfg.csi != "perfect":
            pilot = build_pilot(cfg.pilot, nd)
            x = pilot.freq_diag(wcfg.lobe_halfwidth_order)
            opts = estimator_options(cfg)
    else:
        kind, rolloff = _parse_waveform(cfg.waveform)
        if kind not in ("cp-ofdm", "dft-s-ofdm"):
            raise ConfigurationError(f"unsupported BER waveform {cfg.waveform!r}")
        if cfg.csi != "perfect":
            raise ConfigurationError("baseline receivers use perfect CSI only")
        rolloff = cfg.rolloff if cfg.waveform == "dft-s-ofdm" else rolloff
        es = baseline_symbol_energy(kind, rolloff, wcfg, cfg.window)
    sig2 = chn.noise_variance(es, snr)
    noise = chn.NoiseModel(sig2)
    bits_per_block = 2 * nd
    n_slots = math.ceil(cfg.n_blocks / cfg.blocks_per_slot)
    errors = total = 0
    for slot in range(n_slots):
        n_data = min(cfg.blocks_per_slot, cfg.n_blocks - slot * cfg.blocks_per_slot)
        n_info = codec.info_length(n_data * bits_per_block)
        if n_info < 1:
            raise ConfigurationError("slot too short for the code tail")
        chans = [_channel(cfg, wcfg, rng) for _ in range(wcfg.n_users)]
        estimates = [c.occupied(wcfg, k) for k, c in enumerate(chans)]
        if is_ce and cfg.csi != "perfect":
            p_sum = [amp * fdtp_apply(pilot.gdft_out, fulls[k], wcfg, k)
                     for k in range(wcfg.n_users)]
            y_full = chn.apply_channel(p_sum, chans, noise, pilot_rng)
            for k in range(wcfg.n_users):
                e = est.epmce(est.demap(y_full, wcfg, k), x, amp * lams[k], sig2, wcfg, opts)
                estimates[k] = {"epmce": e.final, "dpmce": e.denoised, "ls": e.ls}[cfg.csi]
        info = rng.integers(0, 2, size=(wcfg.n_users, n_info), dtype=np.uint8)
        coded = np.stack([codec.encode(b) for b in info]).reshape(wcfg.n_users, n_data,
                                                                 bits_per_block)
        llrs = np.empty((wcfg.n_users, n_data, bits_per_block))
        for t in range(n_data):
            syms = [bits_to_qpsk(coded[k, t]) for k in range(wcfg.n_users)]
            if is_ce:
                tx = [amp * fdtp_apply(prep(precode(s)), fulls[k], wcfg, k)
                      for k, s in enumerate(syms)]
            else:
                tx = [amp * baseline_spectrum(kind, rolloff, s, wcfg, k, cfg.window)
                      for k, s in enumerate(syms)]
            y_full = chn.apply_channel(tx, chans, noise, rng)
            for k in range(wcfg.n_users):
                if is_ce:
                    _, llr, _ = ce_receive(est.demap(y_full, wcfg, k), estimates[k],
                                           amp * lams[k], sig2, wcfg)
                else:
                    _, llr = baseline_receive(y_full, chans[k].freq_response, kind, rolloff,
                                              sig2, wcfg, k, cfg.window, amp)
                llrs[k, t] = llr
        for k in range(wcfg.n_users):
            decoded = codec.decode(llrs[k].ravel())
            errors += int(np.sum(decoded != info[k]))
            total += n_info
    return errors, total


def _series_configs(cfg):
    if not cfg.series:
        return [cfg]
    out = []
    for override in cfg.series:
        override = dict(override)
        if "series" in override:
            raise ConfigurationError("series overrides cannot nest")
        out.append(ExperimentConfig.from_mapping({**cfg.to_dict(), **override, "series": ()}))
    return out


def series_label(cfg):
    if cfg.label:
        return cfg.label
    wf = cfg.waveform if cfg.waveform != "dft-s-ofdm" else f"dft-s-ofdm:{cfg.rolloff:g}"
    parts = [wf, cfg.csi, f"U{cfg.n_users}"]
    if cfg.power_offset_db:
        parts.append(f"{cfg.power_offset_db:+g}dB")
    if cfg.fec != "none":
        parts.append(cfg.fec)
    return "/".join(parts)


def run_ber(cfg):
    """BER versus E_s/N_0 with Wilson 95% intervals, one curve per series.

    Zero observed errors report the interval's upper end and set
    ``flag = "upper-bound"`` rather than a BER of 0.
    """
    configs = _series_configs(cfg)
    tasks = [(c, float(snr), si, pi) for si, c in enumerate(configs)
             for pi, snr in enumerate(c.esn0_db)]
    results = _run_tasks(_ber_task, tasks, cfg.resolved_workers())
    records = []
    for (c, snr, _, _), (errs, bits) in zip(tasks, results):
        lo, hi = wilson_interval(errs, bits)
        ber, flag = (errs / bits, "") if errs else (hi, "upper-bound")
        records.append(MetricRecord("ber", series_label(c), snr, ber, (hi - lo) / 2, cfg.seed,
                                    cfg.config_hash, bits,
                                    {"errors": errs, "ci_low": lo, "ci_high": hi,
                                     "flag": flag}))
    summary = {}
    for label in dict.fromkeys(r.series for r in records):
        xs = [r.x for r in records if r.series == label and not r.extra["flag"]]
        ys = [r.y for r in records if r.series == label and not r.extra["flag"]]
        summary[label] = {f"esn0_at_{t:g}": snr_at_ber(xs, ys, t) for t in (1e-3, 1e-4)}
    return ExperimentResult(cfg, records, {"esn0_db": "x", "ber": "y", "ci_low": "ci_low",
                                           "ci_high": "ci_high", "errors": "errors",
                                           "bits": "n", "series": "series", "flag": "flag",
                                           "seed": "seed", "config_hash": "config_hash"},
                            summary)


def run(cfg):
    return {"papr": run_papr, "nmse": run_nmse, "ber": run_ber}[cfg.experiment](cfg)


def measured_symbol_energy(label, cfg, n_blocks=200, seed=0, filter_spec=None):
    """Average block energy on the band per complex symbol, measured on random blocks."""
    wcfg = cfg if isinstance(cfg, WaveformConfig) else cfg.waveform_config(1)
    rng = point_rng(seed)
    kind, rolloff = _parse_waveform(label)
    nd = wcfg.n_complex_symbols
    total = 0.0
    if kind in ("ce", "nce"):
        filt = build_filter(filter_spec or {"kind": "optimized-ce"}, wcfg,
                            kind=None if kind == "ce" else "nce")
    for _ in range(n_blocks):
        d = qpsk_symbols(rng, nd)
        if kind in ("ce", "nce"):
            p = synthesize_block(d, filt, wcfg).freq_signal
            total += np.sum(np.abs(p[wcfg.occupied_indices()]) ** 2)
        else:
            body = synthesize_baseline(kind, rolloff, d, wcfg, window="rrc")[wcfg.cp_len:]
            total += np.sum(np.abs(np.fft.fft(body, norm="ortho")) ** 2)
    return total / (n_blocks * nd)
