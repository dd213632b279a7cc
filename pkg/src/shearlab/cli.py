"""Command-line entry point: ``shearlab {validate,simulate,sweep,spectral,fit}``.

Exit codes: 0 success, 2 validation failure, 3 numerical failure,
4 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import analysis, harness
from .config import RunConfig
from .errors import ShearLabError


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shearlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default):
        sp.add_argument("--config", required=True, type=Path, help="run configuration (INI)")
        sp.add_argument("--out", type=Path, default=Path(out_default), help="output directory")
        sp.add_argument("--seed", type=int, help="override [run] seed")

    v = sub.add_parser("validate", help="check the structural hypotheses of the flow")
    common(v, "run")

    for name, help_ in (("simulate", "run one simulation"), ("sweep", "run a parameter sweep")):
        sp = sub.add_parser(name, help=help_)
        common(sp, name)
        sp.add_argument("--force", action="store_true",
                        help="proceed despite failed validation (recorded in the manifest)")
        sp.add_argument("--dt", type=float, help="override the time step")
        sp.add_argument("--t-end", type=float, help="override the horizon")
        sp.add_argument("--no-plots", action="store_true", help="skip SVG figures")

    s = sub.add_parser("spectral", help="estimate spectral-inequality constants")
    common(s, "spectral")

    f = sub.add_parser("fit", help="re-fit the decay rate of an existing run")
    f.add_argument("run_dir", type=Path)
    f.add_argument("--lo", type=float)
    f.add_argument("--hi", type=float)
    f.add_argument("--lo-sat", type=float)
    f.add_argument("--hi-sat", type=float)
    return p


def _load(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config)
    overrides = {"run.seed": getattr(args, "seed", None),
                 "time.dt": getattr(args, "dt", None),
                 "time.t_end": getattr(args, "t_end", None)}
    return cfg.with_overrides(**overrides)


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "validate":
            report = harness.cmd_validate(_load(args), args.out)
            print(report.to_text(), end="")
            return 0 if report.passed else 2
        if args.command == "simulate":
            res = harness.cmd_simulate(_load(args), args.out, force=args.force,
                                       plots=not args.no_plots)
            for key, value in res.summary.items():
                print(f"{key} = {value}")
            return 0
        if args.command == "sweep":
            res = harness.cmd_sweep(_load(args), args.out, force=args.force,
                                    plots=not args.no_plots)
            print((res.out / "summary.txt").read_text(), end="")
            return 0
        if args.command == "spectral":
            res = harness.cmd_spectral(_load(args), args.out)
            for e, c in zip(res.estimates, res.checks):
                print(f"eps={e.eps} n={e.grid_n} constant={e.constant:.6g} raw={e.raw:.6g} "
                      f"converged={e.converged} violations={c.violations}/{c.n_fields}")
            return 0
        policy = None
        if any(v is not None for v in (args.lo, args.hi, args.lo_sat, args.hi_sat)):
            policy = analysis.WindowPolicy(lo=args.lo, hi=args.hi,
                                           lo_sat=1.0 if args.lo_sat is None else args.lo_sat,
                                           hi_sat=args.hi_sat)
        fit = harness.cmd_fit(args.run_dir, policy)
        print(f"delta_hat = {fit.delta_hat!r}\nr_squared = {fit.r_squared!r}\n"
              f"window = [{fit.window[0]!r}, {fit.window[1]!r}]")
        return 0
    except harness.ValidationFailed as exc:
        print(exc.report.to_text(), end="", file=sys.stderr)
        return exc.exit_code
    except ShearLabError as exc:
        print(f"shearlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


def main() -> None:
    sys.exit(run())
