"""Command line entry point: ``misobc {simulate,slopes,dof,selftest}``.

Exit codes: 0 success, 1 configuration or usage error, 2 bad arguments
(argparse), 3 invariant violation (including failed self-test checks).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import dof, harness, kernels
from .errors import InvariantViolation, MisoBCError

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 3


def _experiment_args(p):
    p.add_argument("--config", help="YAML key-value file; flags below override its values")
    p.add_argument("--K", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--strategies", nargs="+", help="e.g. RS1 MULP NOMA-G3 NOMA-G1 OMA")
    p.add_argument("--snr", nargs="+", type=float, dest="snr_grid_dB", help="SNR grid in dB")
    p.add_argument("--realizations", type=int, dest="n_realizations")
    p.add_argument("--alpha", type=float, help="CSIT quality exponent; omit for perfect CSIT")
    p.add_argument("--variance-mode", choices=("equal", "uniform"), dest="variance_mode")
    p.add_argument("--saa-samples", type=int, dest="n_saa_samples")
    p.add_argument("--eval-samples", type=int, dest="n_eval_samples")
    p.add_argument("--objective", choices=("sum", "maxmin"))
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iterations", type=int, dest="max_iterations")
    p.add_argument("--no-restarts", action="store_false", dest="restarts", default=None,
                   help="start only from MRT/SVD (no MU-LP start for RS, no zero-forcing start for NOMA or MU-LP)")
    p.add_argument("--full-scale", action="store_true",
                   help="100 realizations and 1000 SAA samples")
    p.add_argument("-o", "--output", dest="output_path", help="CSV path for per-cell rows")


def _config(args):
    keys = ("K", "M", "strategies", "snr_grid_dB", "n_realizations", "alpha", "variance_mode",
            "n_saa_samples", "n_eval_samples", "objective", "seed", "max_iterations", "restarts",
            "output_path")
    overrides = {k: getattr(args, k) for k in keys}
    if args.full_scale:
        overrides["n_realizations"] = 100
        overrides["n_saa_samples"] = 1000
    return harness.load_config(args.config, **overrides)


def _invariant_rows(rows):
    return [r for r in rows if str(r["status"]).startswith("invariant")]


def cmd_simulate(args, out):
    cfg = _config(args)
    rows = harness.run_experiment(cfg)
    cols = harness.SUMMARY_COLUMNS
    out.write(",".join(cols) + "\n")
    for e in harness.summarize(rows):
        out.write(",".join(str(e[c]) for c in cols) + "\n")
    bad = _invariant_rows(rows)
    for r in bad:
        print(f"invariant violation: {r['strategy']} snr={r['snr_dB']} seed={r['seed']}: {r['status']}",
              file=sys.stderr)
    return EXIT_INVARIANT if bad else EXIT_OK


def cmd_slopes(args, out):
    cfg = _config(args)
    lo, hi = args.window
    grid = tuple(s for s in cfg.snr_grid_dB if lo <= s <= hi)
    if args.snr_grid_dB is None and args.config is None:
        grid = tuple(float(s) for s in range(int(lo), int(hi) + 1, 5))
    cfg = dataclasses.replace(cfg, snr_grid_dB=grid)
    rows = harness.run_experiment(cfg)
    slopes = harness.slope_campaign(cfg, window=(lo, hi), rows=rows)
    out.write("strategy,fitted,stderr,predicted,abs_diff\n")
    for s in slopes:
        out.write(f"{s.strategy},{s.fitted:.4f},{s.stderr:.4f},{s.predicted},{s.abs_diff:.4f}\n")
    bad = _invariant_rows(rows)
    return EXIT_INVARIANT if bad else EXIT_OK


def cmd_dof(args, out):
    if args.emit_golden_tables or args.kind is None:
        out.write(dof.golden_tables_csv(K=args.K, antennas=range(1, args.max_M + 1), alpha=args.alpha_q))
        return EXIT_OK
    value = dof.closed_form_dof(args.kind, args.M, args.K, args.G, args.alpha_q, args.metric)
    out.write(f"{value}\n")
    return EXIT_OK


def cmd_selftest(args, out):
    from . import selftest

    failed = 0
    for name, ok, detail in selftest.run_all():
        out.write(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}\n")
        failed += not ok
    out.write(f"backend: {kernels.BACKEND}\n")
    return EXIT_INVARIANT if failed else EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="misobc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a Monte-Carlo campaign and print the summary")
    _experiment_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("slopes", help="fit high-SNR slopes and compare with the closed forms")
    _experiment_args(p)
    p.add_argument("--window", nargs=2, type=float, default=(25.0, 40.0), metavar=("LO", "HI"))
    p.set_defaults(func=cmd_slopes)

    p = sub.add_parser("dof", help="closed-form multiplexing gains")
    p.add_argument("--emit-golden-tables", action="store_true",
                   help="print the sum and MMF tables for M = 1..max-M as CSV")
    p.add_argument("--kind", help="NOMA, MULP, RS1 or OMA (single value mode)")
    p.add_argument("--K", type=int, default=6)
    p.add_argument("--M", type=int, default=1)
    p.add_argument("--G", type=int)
    p.add_argument("--max-M", type=int, default=6, dest="max_M")
    p.add_argument("--alpha", default="1", help="rational or decimal, e.g. 1/2 or 0.5")
    p.add_argument("--metric", choices=("sum", "mmf"), default="sum")
    p.set_defaults(func=cmd_dof)

    p = sub.add_parser("selftest", help="run the built-in invariant suites")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "dof":
        try:
            args.alpha_q = dof.as_fraction(args.alpha)
        except (ValueError, ZeroDivisionError):
            parser.error(f"cannot parse alpha {args.alpha!r}")
    try:
        return args.func(args, out)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except MisoBCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
