"""Command-line entry point: ``otacal sweep`` and ``otacal scenario``.

Exit codes: 0 success, 1 a scenario check failed, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys

from .experiments import VARIANTS, SweepConfig, emit_csv, parse_config_text, run_rmse_sweep, sweep_config_from
from .scenarios import SCENARIOS, ScenarioSettings, run_scenario

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _snr(text: str) -> float:
    return math.inf if text.lower() in ("inf", "+inf", "noiseless") else float(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otacal", description="Over-the-air phase calibration simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", help="Monte-Carlo RMSE versus SNR for dual-frequency F-alignment")
    sw.add_argument("--config", help="flat key = value file; flags override it")
    sw.add_argument("--snr-min", type=float)
    sw.add_argument("--snr-max", type=float)
    sw.add_argument("--snr-step", type=float)
    sw.add_argument("--trials", type=int)
    sw.add_argument("--samples", type=int, help="carrier samples averaged per measurement")
    sw.add_argument("--freq", type=float, help="probe frequency f in Hz")
    sw.add_argument("--freq-offset", type=float, help="f - f' in Hz")
    sw.add_argument("--distance-wavelengths", type=float)
    sw.add_argument("--dmax-wavelengths", type=float)
    sw.add_argument("--seed", type=int)
    sw.add_argument("--variants", help=f"comma-separated subset of {','.join(VARIANTS)}")
    sw.add_argument("--workers", type=int)
    sw.add_argument("--out", help="CSV destination (default stdout)")

    sc = sub.add_parser("scenario", help="run a scripted calibration demo with pass/fail checks")
    sc.add_argument("name", nargs="?", help=f"one of: {', '.join(SCENARIOS)}")
    sc.add_argument("--list", action="store_true", help="list scenarios and exit")
    sc.add_argument("--snr", type=_snr, default=math.inf, help="per-sample SNR in dB, or 'inf'")
    sc.add_argument("--samples", type=int, default=100)
    sc.add_argument("--seed", type=int, default=0)
    sc.add_argument("--phi", type=float, default=0.5, help="drift/aging step in radians")
    sc.add_argument("--antennas", type=int, default=4)
    sc.add_argument("--json", action="store_true", help="print the machine-readable report")
    return parser


def _sweep(args) -> int:
    settings = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                settings = parse_config_text(fh.read())
        except OSError as exc:
            print(f"otacal: cannot read config: {exc}", file=sys.stderr)
            return EXIT_USAGE
    for key in ("snr_min", "snr_max", "snr_step", "trials", "samples", "freq", "freq_offset",
                "distance_wavelengths", "dmax_wavelengths", "seed", "variants", "workers", "out"):
        value = getattr(args, key)
        if value is not None:
            settings[key] = value
    cfg = sweep_config_from(settings, SweepConfig())
    rows = run_rmse_sweep(cfg)
    out = settings.get("out")
    if out:
        emit_csv(rows, out, cfg.variants)
    else:
        emit_csv(rows, sys.stdout, cfg.variants)
    return EXIT_OK


def _scenario(args) -> int:
    if args.list:
        print("\n".join(SCENARIOS))
        return EXIT_OK
    if args.name not in SCENARIOS:
        print(f"otacal: unknown scenario {args.name!r}; available: {', '.join(SCENARIOS)}", file=sys.stderr)
        return EXIT_USAGE
    settings = ScenarioSettings(snr_db=args.snr, n_samples=args.samples, seed=args.seed,
                                phi=args.phi, antennas=args.antennas)
    report = run_scenario(args.name, settings)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2, default=float))
    else:
        print("\n".join(report.lines()))
    return EXIT_OK if report.passed else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        if args.command == "sweep":
            return _sweep(args)
        return _scenario(args)
    except ValueError as exc:
        print(f"otacal: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"otacal: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
