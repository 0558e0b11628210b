"""Command-line entry point ``gm1``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import runner
from .runner import PAPER_CHI_VALUES, PAPER_SCALE, RunConfig
from .soc import SignalDivergenceError

# CLI flag -> RunConfig field
_OVERRIDES = {
    "chi": "chi",
    "seed": "base_seed",
    "runs": "ensemble_size",
    "out": "output_dir",
    "n": "n",
    "beta": "beta",
    "rho": "rho",
    "sweeps": "heatbath_steps",
    "updates": "signal_updates",
    "matter_draw": "matter_draw",
}


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--paper-scale", action="store_true",
                   help="n=782, beta=1, 1e4 sweeps, 4e6 updates, 2400 runs")
    p.add_argument("--chi", type=float)
    p.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
    p.add_argument("--runs", type=int, help="ensemble size")
    p.add_argument("--out", help="output directory")
    p.add_argument("--n", type=int, help="lattice size")
    p.add_argument("--beta", type=float)
    p.add_argument("--rho", type=float, help="interest factor")
    p.add_argument("--sweeps", type=int, help="heatbath sweeps before the signal updates")
    p.add_argument("--updates", type=int, help="signal updates per run")
    p.add_argument("--matter-draw", choices=("symmetric", "conditional"))
    p.add_argument("--garch", action="store_true", help="fit GARCH(1,1) to every series")
    p.add_argument("--workers", type=int, help="worker processes (default: $GM1_THREADS, 0 = auto)")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides = {field: getattr(args, flag) for flag, field in _OVERRIDES.items()
                 if getattr(args, flag, None) is not None}
    if getattr(args, "garch", False):
        overrides["fit_garch"] = True
    cfg = RunConfig.from_file(args.config) if args.config is not None else RunConfig()
    if args.paper_scale:
        cfg = cfg.with_(**PAPER_SCALE)
    return cfg.with_(**overrides)


def cmd_simulate(args) -> int:
    cfg = resolve_config(args)
    art = runner.run_single(cfg, args.run_index, keep_trace=not args.no_trace)
    out = Path(cfg.output_dir)
    runner.write_run(out, art)
    summary = art.summary()
    if art.garch is not None:
        summary["garch"] = art.garch.to_dict()
    runner.io.write_json(out / "summary.json", summary)
    m = runner.manifest(cfg, [args.run_index], "simulate")
    runner.io.write_json(out / "manifest.json", m)
    print(json.dumps({k: summary[k] for k in ("run_index", "chi", "mean_L", "avalanches")}))
    return 0


def cmd_ensemble(args) -> int:
    cfg = resolve_config(args)
    res = runner.run_ensemble(cfg, args.workers, keep_traces=args.trace)
    runner.write_ensemble(cfg.output_dir, res)
    print(json.dumps(runner.io.json_safe(res.summary()), sort_keys=True))
    return 0 if not res.failures else 3


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    chis = args.chi_values or list(PAPER_CHI_VALUES)
    sweep = runner.sweep_chi(cfg, chis, args.workers)
    runner.write_sweep(cfg.output_dir, cfg, sweep)
    for chi, mean, err in sweep.rows:
        print(f"{chi:.3e}  {mean:.6g}  +- {err:.2g}")
    if sweep.fit is not None:
        f = sweep.fit
        print(f"upper plateau {f.upper:.6g}  lower plateau {f.lower:.6g}  "
              f"symmetry point {f.symmetry_point:.4g}")
    for chi, k in sweep.failures.items():
        print(f"chi={chi:g}: {k} failed runs", file=sys.stderr)
    if sweep.fit_error:
        print(f"tanh fit: {sweep.fit_error}", file=sys.stderr)
        return 4
    return 0


def cmd_analyze(args) -> int:
    summary = runner.analyze(args.input, args.bin_width_r, args.bin_width_lambda)
    print(json.dumps(runner.io.json_safe(summary), sort_keys=True))
    return 0


def cmd_garch(args) -> int:
    records = runner.garch_fit_stored(args.input, args.chi)
    ok = [r for r in records if r["converged"]]
    print(f"{len(records)} fits, {len(ok)} converged -> {Path(args.input) / 'garch.jsonl'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gm1", description="Gauge-lattice market simulator")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="one equilibration + signal-update run")
    _add_run_options(p)
    p.add_argument("--run-index", type=int, default=0)
    p.add_argument("--no-trace", action="store_true", help="skip signal_trace.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ensemble", help="independent runs with pooled statistics")
    _add_run_options(p)
    p.add_argument("--trace", action="store_true", help="write per-run signal traces")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("sweep-chi", help="one ensemble per chi value and a tanh fit")
    _add_run_options(p)
    p.add_argument("--chi-values", type=float, nargs="+",
                   help="default: 1e-6 .. 10 by decades")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="recompute statistics from stored series")
    p.add_argument("input", type=Path, help="directory written by simulate or ensemble")
    p.add_argument("--bin-width-r", type=float, default=0.01)
    p.add_argument("--bin-width-lambda", type=float, default=1.0)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("garch-fit", help="fit GARCH(1,1) to stored series")
    p.add_argument("input", type=Path)
    p.add_argument("--chi", type=float, help="label for the records (default: from manifest)")
    p.set_defaults(func=cmd_garch)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, SignalDivergenceError) as exc:
        print(f"gm1: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
