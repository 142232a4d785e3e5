"""``ce-ofdma-lab`` command-line front end.

Exit codes: 0 success, 1 DCI CRC failure, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import channel as chn
from . import estimation as est
from . import mac
from . import serialization as ser
from .config import WaveformConfig
from .equalizer import ce_receive, hard_bits
from .errors import ConfigurationError, CrcError, NumericalError
from .experiments import ExperimentConfig, build_filter, build_pilot, ce_symbol_energy, run
from .filters import build_nce, half_sine, optimize_ce_filter, sidelobe_level, stopband_energy
from .pilots import optimize_pilot
from .waveform import fdtp_apply, precode, prep, qpsk_symbols

EXIT_OK, EXIT_CRC, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def _write_or_print(data, out):
    if out:
        path = ser.write_json(out, data)
        print(f"wrote {path}")
    else:
        print(json.dumps(ser._jsonable(data), indent=2, sort_keys=True))


def cmd_optimize_filter(args):
    cfg = WaveformConfig(n_subcarriers=args.nc, n_complex_symbols=args.nc // args.phi,
                         lobe_halfwidth_order=args.bbar)
    if args.nd is not None and args.nd != cfg.n_complex_symbols:
        raise ConfigurationError(f"--nd {args.nd} disagrees with --nc/--phi")
    filt = half_sine(args.phi, cfg=cfg) if args.kind == "half-sine" else optimize_ce_filter(cfg)
    if args.bwT is not None:
        filt = build_nce(filt, cfg, args.bwT)
    nbar = cfg.occupied_width
    print(f"{filt.kind}: stop-band energy {stopband_energy(filt, nbar):.6g}, "
          f"side lobe {sidelobe_level(filt, nbar):.2f} dB")
    data = ser.filter_to_dict(filt, cfg)
    data["metadata"] = dict(data["metadata"], generator="ce-ofdma-lab optimize-filter",
                            phi=args.phi, bbar=args.bbar, bw_t=args.bwT)
    if args.out:
        ser.write_json(args.out, data)
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_optimize_pilot(args):
    pilot = optimize_pilot(args.nd, seed=args.seed, budget=args.budget)
    print(f"objective {pilot.objective:.4f} (start {pilot.metadata['initial_objective']:.4f}), "
          f"min |s|^2 {pilot.min_power():.4f}")
    if args.out:
        ser.save_pilot(args.out, pilot)
        print(f"wrote {args.out}")
    return EXIT_OK


def _load_experiment(args, experiment):
    if args.config:
        cfg = ExperimentConfig.from_file(args.config)
        if cfg.experiment != experiment:
            cfg = cfg.replace(experiment=experiment)
    else:
        cfg = ExperimentConfig(experiment=experiment)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out:
        changes["output"] = args.out
    if getattr(args, "n_blocks", None):
        changes["n_blocks"] = args.n_blocks
    return cfg.replace(**changes) if changes else cfg


def cmd_experiment(args):
    cfg = _load_experiment(args, args.command)
    result = run(cfg)
    path = result.write()
    print(f"wrote {path} ({len(result.records)} rows, config {cfg.config_hash})")
    print(json.dumps(ser._jsonable(result.summary), indent=2, sort_keys=True))
    return EXIT_OK


def _dci_config(args):
    data = ser.read_json(args.config) if args.config else {}
    try:
        return mac.DciConfig(**data.get("dci", data))
    except TypeError as exc:
        raise ConfigurationError(f"bad DCI config: {exc}") from exc


def cmd_dci(args):
    config = _dci_config(args)
    if args.action == "encode":
        if not args.fields:
            raise ConfigurationError("dci encode needs --fields")
        fields = ser.read_json(args.fields)
        try:
            msg = mac.DciMessage(**fields)
        except TypeError as exc:
            raise ConfigurationError(f"bad DCI fields: {exc}") from exc
        bits = "".join(map(str, mac.encode_dci(msg, config)))
        if args.out:
            Path(args.out).write_text(bits + "\n")
        print(bits)
        return EXIT_OK
    if args.bits is None or args.format is None:
        raise ConfigurationError("dci decode needs --bits and --format")
    text = Path(args.bits).read_text().strip() if Path(args.bits).is_file() else args.bits
    if set(text) - {"0", "1"}:
        raise ConfigurationError("bits must be a string of 0 and 1")
    try:
        msg = mac.decode_dci([int(c) for c in text], args.format, config, rnti=args.rnti)
    except CrcError as exc:
        print(f"CRC failure: {exc}", file=sys.stderr)
        return EXIT_CRC
    fields = {k: v for k, v in vars(msg).items() if v is not None}
    _write_or_print(fields, args.out)
    return EXIT_OK


def cmd_rx_debug(args):
    """One pilot and one data block through the channel, every stage dumped."""
    cfg = _load_experiment(args, "ber")
    out = Path(cfg.output or "rx-debug")
    rng = np.random.default_rng(cfg.seed)
    wcfg = cfg.waveform_config(1)
    filt = build_filter(cfg.filter, wcfg)
    full = filt.user_response(wcfg)
    lam = est.effective_response(filt, wcfg)
    sig2 = chn.noise_variance(ce_symbol_energy(lam, wcfg.n_complex_symbols), args.snr)
    pilot = build_pilot(cfg.pilot, wcfg.n_complex_symbols, rng)
    x = pilot.freq_diag(wcfg.lobe_halfwidth_order)
    profile = chn.load_profile(cfg.channel.get("profile", "awgn"))
    chan = chn.sample_tdl(profile, float(cfg.channel.get("delay_spread", 37e-9)), wcfg, rng,
                          cfg.channel.get("rice_k_db"))
    noise = chn.NoiseModel(sig2)
    y_p = est.demap(chn.apply_channel(fdtp_apply(pilot.gdft_out, full, wcfg), chan, noise, rng),
                    wcfg)
    e = est.epmce(y_p, x, lam, sig2, wcfg, est.EstimatorConfig(**cfg.estimator))
    h = chan.occupied(wcfg)
    d = qpsk_symbols(rng, wcfg.n_complex_symbols)
    y_d = est.demap(chn.apply_channel(fdtp_apply(prep(precode(d)), full, wcfg), chan, noise, rng),
                    wcfg)
    d_hat, llr, rho = ce_receive(y_d, e.final, lam, sig2, wcfg)
    sent = np.column_stack([d.real < 0, d.imag < 0]).ravel()
    stages = {"h_true": h, "xi_ls": e.equiv_ls, "h_ls": e.ls, "h_dft": e.denoised,
              "h_epmce": e.final, "pdp": e.pdp}
    for name, vec in stages.items():
        ser.write_vector_csv(out / f"{name}.csv", vec)
    ser.write_vector_csv(out / "equalized.csv", d_hat, np.repeat(rho.mean(), d_hat.size))
    ser.write_vector_csv(out / "rho.csv", rho, rho)
    summary = {"esn0_db": args.snr, "noise_var": sig2, "order": e.order,
               "delays_s": e.delays, "true_delays_s": chan.delays,
               "nmse_db": {k: 10 * np.log10(est.nmse(v, h)) for k, v in
                           (("ls", e.ls), ("dpmce", e.denoised), ("epmce", e.final))},
               "bit_errors": int(np.sum(hard_bits(llr) != sent))}
    ser.write_json(out / "summary.json", summary)
    print(json.dumps(ser._jsonable(summary), indent=2))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="ce-ofdma-lab",
                                     description="Constant-envelope OFDMA link-level lab.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize-filter", help="design a CE (or NCE) shaping filter")
    p.add_argument("--phi", type=int, default=16, help="sampling factor N_c / N_d")
    p.add_argument("--nc", type=int, default=4096, help="number of subcarriers")
    p.add_argument("--nd", type=int, default=None, help="complex symbols (checked)")
    p.add_argument("--bbar", type=int, default=1, help="main-lobe half-width order")
    p.add_argument("--bwT", type=float, default=None, help="Gaussian B_w T for an NCE filter")
    p.add_argument("--kind", choices=("optimized", "half-sine"), default="optimized")
    p.add_argument("--out", help="filter.json path")
    p.set_defaults(func=cmd_optimize_filter)

    p = sub.add_parser("optimize-pilot", help="search a flat binary pilot")
    p.add_argument("--nd", type=int, default=256)
    p.add_argument("--budget", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", help="pilot.json path")
    p.set_defaults(func=cmd_optimize_pilot)

    for name, text in (("papr", "PAPR CCDF of CE and baseline waveforms"),
                       ("nmse", "channel-estimation NMSE"), ("ber", "link BER")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="TOML or JSON experiment file")
        p.add_argument("--seed", type=int)
        p.add_argument("--n-blocks", type=int, dest="n_blocks")
        p.add_argument("--out", help="output directory")
        p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("dci", help="encode or decode a compact DCI")
    p.add_argument("action", choices=("encode", "decode"))
    p.add_argument("--fields", help="JSON file of DciMessage fields (encode)")
    p.add_argument("--bits", help="bit string or file (decode)")
    p.add_argument("--format", type=int, choices=(0, 1))
    p.add_argument("--rnti", type=lambda s: int(s, 0), help="expected RNTI (decode)")
    p.add_argument("--config", help="JSON with field widths / n_segments")
    p.add_argument("--out")
    p.set_defaults(func=cmd_dci)

    p = sub.add_parser("rx-debug", help="dump the receiver stages for one slot")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--snr", type=float, default=10.0, help="E_s/N_0 in dB")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_rx_debug)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ValueError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
