"""File formats: filter/pilot JSON, complex binaries and debugging CSV.

Complex binary layout
---------------------
``<name>.bin`` holds little-endian float64 pairs ``re, im`` back to back;
``<name>.json`` next to it holds the header::

    {"n_subcarriers": ..., "n_complex_symbols": ..., "cp_len": ...,
     "length": <complex samples>, "dtype": "<f8", "layout": "interleaved"}
"""

from __future__ import annotations

import csv
import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DimensionError
from .config import WaveformConfig
from .filters import CE_KINDS, build_from_theta, build_nce
from .pilots import from_bits

FILTER_FORMAT = "ce-ofdma/filter/1"
PILOT_FORMAT = "ce-ofdma/pilot/1"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigurationError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc


# ------------------------------------------------------------------ filters

def filter_to_dict(filt, cfg=None):
    taps = np.real_if_close(filt.time_taps, tol=1000)
    out = {"format": FILTER_FORMAT, "kind": filt.kind, "theta": filt.theta,
           "n_subcarriers": filt.n_subcarriers, "sampling_factor": filt.sampling_factor,
           "gaussian_bw": filt.gaussian_bw, "metadata": filt.metadata}
    if np.iscomplexobj(taps):
        out["taps_re"], out["taps_im"] = taps.real, taps.imag
    else:
        out["taps"] = taps
    if cfg is not None:
        out["config"] = {"n_subcarriers": cfg.n_subcarriers,
                         "n_complex_symbols": cfg.n_complex_symbols,
                         "lobe_halfwidth_order": cfg.lobe_halfwidth_order}
    return out


def filter_from_dict(data, check=True):
    """Rebuild a filter from its phases; stored taps are checked, not trusted."""
    try:
        kind, theta = data["kind"], np.asarray(data["theta"], dtype=float)
        nc, phi = int(data["n_subcarriers"]), int(data["sampling_factor"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"malformed filter file: {exc}") from exc
    base_kind = data.get("metadata", {}).get("base_kind", "ce") if kind == "nce" else kind
    filt = build_from_theta(theta, n_subcarriers=nc, sampling_factor=phi,
                            kind=base_kind if base_kind in CE_KINDS else "ce")
    if kind == "nce":
        bw = data.get("gaussian_bw")
        if bw is None:
            raise ConfigurationError("NCE filter file lacks gaussian_bw")
        cfg = WaveformConfig(n_subcarriers=nc, n_complex_symbols=nc // phi,
                             lobe_halfwidth_order=0)
        filt = build_nce(filt, cfg, float(bw))
    filt = replace(filt, metadata=dict(data.get("metadata", {})))
    if check:
        stored = np.asarray(data["taps"]) if "taps" in data else \
            np.asarray(data["taps_re"]) + 1j * np.asarray(data["taps_im"])
        if stored.shape != filt.time_taps.shape:
            raise DimensionError("stored taps have the wrong length")
        err = np.max(np.abs(stored - filt.time_taps))
        if err > 1e-9 * max(1.0, np.max(np.abs(stored))):
            raise ConfigurationError(f"stored taps disagree with theta (max error {err:.2e})")
    return filt


def save_filter(path, filt, cfg=None):
    return write_json(path, filter_to_dict(filt, cfg))


def load_filter(path):
    return filter_from_dict(read_json(path))


# ------------------------------------------------------------------- pilots

def pilot_to_dict(pilot):
    if pilot.bits is None:
        raise ConfigurationError("only binary pilots have a file format")
    return {"format": PILOT_FORMAT, "bits": pilot.bits.astype(int), "objective": pilot.objective,
            "n_complex_symbols": pilot.n_complex_symbols, "metadata": pilot.metadata}


def pilot_from_dict(data):
    try:
        bits = np.asarray(data["bits"], dtype=int)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"malformed pilot file: {exc}") from exc
    return from_bits(bits, **dict(data.get("metadata", {})))


def save_pilot(path, pilot):
    return write_json(path, pilot_to_dict(pilot))


def load_pilot(path):
    return pilot_from_dict(read_json(path))


# ------------------------------------------------------------ complex binary

def write_complex_binary(path, samples, cfg=None, **header):
    """Write ``samples`` as interleaved little-endian float64 plus a JSON header."""
    path = Path(path).with_suffix(".bin")
    path.parent.mkdir(parents=True, exist_ok=True)
    z = np.asarray(samples, dtype=complex).ravel()
    inter = np.empty(2 * z.size, dtype="<f8")
    inter[0::2], inter[1::2] = z.real, z.imag
    path.write_bytes(inter.tobytes())
    head = {"length": int(z.size), "dtype": "<f8", "layout": "interleaved"}
    if cfg is not None:
        head.update(n_subcarriers=cfg.n_subcarriers, n_complex_symbols=cfg.n_complex_symbols,
                    cp_len=cfg.cp_len)
    head.update(header)
    write_json(path.with_suffix(".json"), head)
    return path


def read_complex_binary(path):
    """Return ``(samples, header)``."""
    path = Path(path).with_suffix(".bin")
    head = read_json(path.with_suffix(".json"))
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    if raw.size != 2 * head["length"]:
        raise DimensionError(f"{path}: expected {head['length']} samples, found {raw.size / 2}")
    return raw[0::2] + 1j * raw[1::2], head


# ---------------------------------------------------------------------- CSV

def write_vector_csv(path, values, rho=None):
    """Rows ``index, re, im, rho`` (``rho`` empty when not given)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = np.asarray(values, dtype=complex).ravel()
    rho = None if rho is None else np.asarray(rho, dtype=float).ravel()
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "re", "im", "rho"])
        for i, v in enumerate(values):
            r = "" if rho is None or i >= rho.size else repr(float(rho[i]))
            w.writerow([i, repr(float(v.real)), repr(float(v.imag)), r])
    return path


def write_records_csv(path, rows, columns):
    """Long-form CSV of dict rows in a fixed column order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore",
                           lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k, "")) for k in columns})
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v

