"""Command-line front door.

Subcommands: critical, branch, floquet, simulate, sweep-eps, plots.
Outputs are CSV/JSON artifacts (plus rendered PNG figures for ``plots``),
each stamped with the toolkit version and the config hash.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from . import harness


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ddhopf",
        description="Hopf bifurcation toolkit for doubly diffusive convection "
                    "with artificial compressibility")
    ap.add_argument("--version", action="version", version=f"ddhopf {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, desc in [
        ("critical", "critical Rayleigh values and Hopf frequencies per eps"),
        ("branch", "bifurcating-branch continuation and singular-limit gaps"),
        ("floquet", "orbital stability: Hill and monodromy spectra"),
        ("simulate", "nonlinear initial-value cross-validation"),
        ("sweep-eps", "(eps, R2) sweep of critical values"),
        ("plots", "render figures from an existing result directory"),
    ]:
        p = sub.add_parser(name, help=desc)
        if name != "plots":
            p.add_argument("--config", type=str, default=None,
                           help="flat key=value config file (INI sections)")
        p.add_argument("--out", type=str, required=True, help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="worker pool size for sweep points")
        p.add_argument("--seed", type=int, default=0,
                       help="seed for stochastic initial perturbations")
    return ap


COMMANDS = {
    "critical": harness.cmd_critical,
    "branch": harness.cmd_branch,
    "floquet": harness.cmd_floquet,
    "simulate": harness.cmd_simulate,
    "sweep-eps": harness.cmd_sweep_eps,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    os.makedirs(args.out, exist_ok=True)

    if args.command == "plots":
        from . import plots
        try:
            made = plots.render_all(args.out)
        except plots.MissingInputs as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        for path in made:
            print(path)
        return 0

    try:
        cfg = harness.load_config(args.config, seed=args.seed)
    except Exception as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return 1
    try:
        code = COMMANDS[args.command](cfg, args.out, threads=args.threads)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return code


if __name__ == "__main__":
    raise SystemExit(main())
