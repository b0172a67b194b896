"""Command-line entry point.

Exit codes: 0 success, 1 I/O failure or failed oracle check, 2 configuration
error, 3 input parse error, 4 fit did not converge, 5 ambiguous period count.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import PRESETS, ConfigError, ExperimentConfig, load_config, preset
from .core import ChannelSettings, channel_weights, comb_intensity, oracle_filter_integral
from .design import equalization_weights, slope_map
from .estimation import (AmbiguityError, FitError, combine_ci, disambiguate, estimate_rf_phase,
                         fit_gaussian_histogram, fit_interferogram)
from . import io
from .noise import ScanKind, sample_counts, scan_expected, simulate_histogram

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_PARSE, EXIT_NOCONV, EXIT_AMBIGUOUS = 0, 1, 2, 3, 4, 5
OUTPUT_DIR_ENV = "BFCDELAY_OUTPUT_DIR"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _output_path(arg, default_name: str) -> Path:
    if arg:
        return Path(arg)
    return Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / default_name


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _resolve_config(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = preset(args.preset or "fig3a")
    overrides = {}
    for item in args.set or ():
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = _parse_value(value.strip())
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return cfg.with_overrides(overrides) if overrides else cfg


def _metadata(command: str, cfg: ExperimentConfig, **extra) -> dict:
    return {"tool": "bfcdelay", "version": __version__, "command": command,
            "config": cfg.to_dict(), **extra}


def _write(path: Path, writer, *a):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        writer(path, *a)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from None


def _add_config_args(p):
    p.add_argument("--preset", choices=sorted(PRESETS), help="named parameter set")
    p.add_argument("--config", help="config JSON or run-metadata JSON")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config field (scan fields as scan.step=...)")


# -- commands -------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _resolve_config(args)
    if not args.no_noise and cfg.seed is None:
        raise ConfigError("--seed is required for noisy simulation")
    itf = scan_expected(cfg.state(), cfg.mixing(), cfg.channels(), cfg.scan.axis(),
                        cfg.scan.kind)
    if not args.no_noise:
        itf = sample_counts(itf, cfg.acquisition())
    out = _output_path(args.out, f"{cfg.preset or 'interferogram'}.csv")
    _write(out, io.write_interferogram, itf)
    meta = _metadata("simulate", cfg, noise=not args.no_noise, output=out.name)
    _write(out.with_suffix(".json"), io.write_json, meta)
    print(f"wrote {out} ({len(itf)} points)")
    return EXIT_OK


def cmd_simulate_histogram(args) -> int:
    hist = simulate_histogram(args.offset, args.jitter, args.total, args.bin_width, args.span,
                              args.seed)
    out = _output_path(args.out, "histogram.csv")
    _write(out, io.write_histogram, hist)
    meta = {"tool": "bfcdelay", "version": __version__, "command": "simulate-histogram",
            "params": {"offset": args.offset, "jitter": args.jitter, "total": args.total,
                       "bin_width": args.bin_width, "span": args.span, "seed": args.seed},
            "truncated": hist.truncated}
    _write(out.with_suffix(".json"), io.write_json, meta)
    print(f"wrote {out} ({hist.total} coincidences)")
    return EXIT_OK


def cmd_fit(args) -> int:
    data = io.read_interferogram(args.data)
    if data.counts is None:
        raise io.ParseError(args.data, 1, "file has no counts column")
    if not args.config and not args.preset:
        sidecar = Path(args.data).with_suffix(".json")
        if sidecar.exists():
            args.config = str(sidecar)
    cfg = _resolve_config(args)
    free = ["delay_offset", "amplitude"] + [f for f in (args.free or []) if f not in
                                            ("delay_offset", "amplitude")]
    beta0 = cfg.fit_beta2L() if args.beta2L is None else args.beta2L
    try:
        res = fit_interferogram(data, cfg.state(), cfg.mixing(), free, beta2L_total=beta0,
                                max_iter=args.max_iter, weighting=args.weighting)
    except FitError as exc:
        raise CliError(f"fit failed: {exc}", EXIT_NOCONV) from None
    report = {"tool": "bfcdelay", "version": __version__, "command": "fit",
              "data": str(args.data), "scan_kind": data.scan_kind.value,
              "fsr": cfg.fsr, "t_rep": 1000.0 / cfg.fsr, "weighting": args.weighting,
              "config": cfg.to_dict(),
              **res.to_dict()}
    out = _output_path(args.out, Path(args.data).stem + ".fit.json")
    _write(out, io.write_json, report)
    print(json.dumps({"params": report["params"], "ci95": report["ci95"],
                      "converged": res.converged}, indent=2))
    return EXIT_OK if res.converged else EXIT_NOCONV


def _fit_report(path):
    rep = io.read_json(path)
    try:
        return rep, float(rep["params"]["delay_offset"]), float(rep["ci95"]["delay_offset"])
    except (KeyError, TypeError, ValueError):
        raise io.ParseError(path, 1, "not a fit report (missing params.delay_offset)") from None


def cmd_disambiguate(args) -> int:
    h_with = fit_gaussian_histogram(io.read_histogram(args.hist_with))
    h_without = fit_gaussian_histogram(io.read_histogram(args.hist_without))
    rep_w, fine_w, ci_w = _fit_report(args.fit_with)
    _, fine_wo, ci_wo = _fit_report(args.fit_without)
    t_rep = args.t_rep if args.t_rep is not None else rep_w.get("t_rep")
    if t_rep is None:
        raise ConfigError("--t-rep is required when the fit report does not carry it")
    try:
        res = disambiguate(h_with.params["A"], h_without.params["A"], fine_w, fine_wo,
                           float(t_rep), ci_w, ci_wo, args.se or ())
    except AmbiguityError as exc:
        raise CliError(f"ambiguous: {exc}", EXIT_AMBIGUOUS) from None
    report = {"k": res.k, "t_rep": res.t_rep, "coarse_diff": res.coarse_diff,
              "fine_diff": res.fine_diff, "total_delay": res.total_delay,
              "ci95": res.ci95_half_width, "k_residual": res.k_residual,
              "tau_h_with": h_with.params["A"], "tau_h_without": h_without.params["A"]}
    if args.out:
        _write(Path(args.out), io.write_json, report)
    print(f"k = {res.k}")
    print(f"total delay = {res.total_delay:.4f} +/- {res.ci95_half_width:.4f} ps")
    return EXIT_OK


def cmd_estimate_rf_phase(args) -> int:
    rep1, d1, ci1 = _fit_report(args.report1)
    _, d2, ci2 = _fit_report(args.report2)
    fsr = args.fsr if args.fsr is not None else rep1.get("fsr")
    if fsr is None:
        raise ConfigError("--fsr is required when the fit report does not carry it")
    phase = estimate_rf_phase(d1, d2, float(fsr))
    ci = 2 * math.pi * float(fsr) / 1000.0 * combine_ci([ci1, ci2])
    print(json.dumps({"rf_phase_deg": math.degrees(phase), "ci95_deg": math.degrees(ci),
                      "rf_phase_rad": phase, "ci95_rad": ci}, indent=2))
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = _resolve_config(args)
    if not args.step > 0 or args.stop < args.start:
        raise ConfigError("invalid depth grid")
    grid = args.start + args.step * np.arange(int(math.floor((args.stop - args.start)
                                                              / args.step + 1e-9)) + 1)
    sm = slope_map(cfg.state(), grid)
    out = _output_path(args.out, "slope_map.csv")
    lines = ["m_S_rad,m_I_rad,max_slope_per_ps"]
    for i, a in enumerate(sm.depths_S):
        for j, b in enumerate(sm.depths_I):
            lines.append(f"{io.fmt(float(a))},{io.fmt(float(b))},{io.fmt(float(sm.max_slope[i, j]))}")
    _write(out, lambda p: p.write_text("\n".join(lines) + "\n"))
    summary = {"optimum": list(sm.optimum), "optimum_slope": sm.optimum_slope}
    _write(out.with_suffix(".json"), io.write_json,
           _metadata("optimize", cfg, grid=dict(start=args.start, stop=args.stop,
                                                step=args.step), **summary))
    print(json.dumps(summary))
    return EXIT_OK


def oracle_deviation(cfg: ExperimentConfig, points: int = 64, grid_points: int = 201):
    """Largest closed-form vs. quadrature mismatch over one period, relative to the peak."""
    state = cfg.state()
    S, I = cfg.channels()
    if cfg.equalize:
        # the oracle derives mixing from the modulators, so equalization enters
        # as shaper transmission on both arms
        w = equalization_weights(cfg.m_S, cfg.half_dim)
        S = S.replace(bin_transmission=w)
        I = I.replace(bin_transmission=w[::-1])
    taus = state.t_rep * np.arange(points) / points
    closed = comb_intensity(channel_weights(state, S, I), state.orders, taus * state.omega)
    oracle = np.array([oracle_filter_integral(state, S.replace(delay=S.delay + t), I,
                                              cfg.filter_width, grid_points).value
                       for t in taus])
    return float(np.max(np.abs(oracle - closed)) / closed.max())


def cmd_oracle_check(args) -> int:
    cfg = _resolve_config(args)
    if cfg.filter_width > cfg.fsr:
        raise ConfigError(f"filter width {cfg.filter_width} GHz exceeds the {cfg.fsr} GHz bin "
                          "spacing: the narrow-filter model does not apply")
    threshold = 1e-3 if cfg.filter_width <= cfg.fsr / 100 else 2e-2
    dev = oracle_deviation(cfg, args.points)
    ok = dev <= threshold
    print(f"max relative deviation = {dev:.3e} (threshold {threshold:.0e}): "
          f"{'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_IO


def cmd_presets(args) -> int:
    print(json.dumps({name: preset(name).to_dict() for name in PRESETS}, indent=2))
    return EXIT_OK


# -- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bfcdelay", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate an interferogram scan")
    _add_config_args(p)
    p.add_argument("--seed", type=int, help="RNG seed (required unless --no-noise)")
    p.add_argument("--no-noise", action="store_true", help="write expected values only")
    p.add_argument("--out", help="output CSV (metadata JSON written alongside)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("simulate-histogram", help="simulate a time-tag histogram")
    p.add_argument("--offset", type=float, required=True, help="true mean, ps")
    p.add_argument("--jitter", type=float, default=58.5, help="Gaussian sigma, ps")
    p.add_argument("--total", type=int, required=True, help="number of coincidences")
    p.add_argument("--bin-width", type=float, default=2.0)
    p.add_argument("--span", type=float, default=None, help="window width, ps")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate_histogram)

    p = sub.add_parser("fit", help="fit an interferogram CSV")
    p.add_argument("data")
    _add_config_args(p)
    p.add_argument("--free", action="append", choices=["beta2L", "background"],
                   help="additional free parameter")
    p.add_argument("--beta2L", type=float, default=None,
                   help="fixed or starting total dispersion, ps^2")
    p.add_argument("--weighting", choices=["counts", "model"], default="counts",
                   help="Poisson weights from observed counts or from the fitted model")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--out", help="report JSON")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("disambiguate", help="combine histograms and fits into an absolute delay")
    p.add_argument("--hist-with", required=True)
    p.add_argument("--hist-without", required=True)
    p.add_argument("--fit-with", required=True)
    p.add_argument("--fit-without", required=True)
    p.add_argument("--t-rep", type=float, default=None, help="period, ps")
    p.add_argument("--se", type=float, action="append",
                   help="extra standard error (e.g. delay-line resolution), ps")
    p.add_argument("--out")
    p.set_defaults(func=cmd_disambiguate)

    p = sub.add_parser("estimate-rf-phase", help="relative RF phase of two fitted traces")
    p.add_argument("report1")
    p.add_argument("report2")
    p.add_argument("--fsr", type=float, default=None)
    p.set_defaults(func=cmd_estimate_rf_phase)

    p = sub.add_parser("optimize", help="maximum-slope map over modulation depths")
    _add_config_args(p)
    p.add_argument("--start", type=float, default=0.5)
    p.add_argument("--stop", type=float, default=6.0)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("oracle-check", help="closed form vs. filter-integral quadrature")
    _add_config_args(p)
    p.add_argument("--points", type=int, default=64, help="delays per period")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("presets", help="list built-in presets")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except io.ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
