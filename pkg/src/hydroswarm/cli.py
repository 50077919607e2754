"""Command-line interface: simulate / steady / verify / sweep.

    hydroswarm simulate --config run.ini --out results/
    hydroswarm steady   --config run.ini --out results/
    hydroswarm verify   --config run.ini --out results/
    hydroswarm sweep    --config run.ini --out results/ --param eps \
                        --values 1e-2,1e-3,1e-4 --workers 2

Any config key can be overridden by environment variables named
HYDROSWARM_<SECTION>__<KEY>.  Exit status: 0 success, 1 solver failure
(message names the module and contract), 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, load_config
from .dynamics import StepError
from .runner import SWEEPABLE, run_scenario, sweep


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hydroswarm", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="subcommand", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="INI run configuration")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--verbose", action="store_true")
    for name, helptext in (
        ("simulate", "integrate the time-dependent system"),
        ("steady", "solve the stationary balance of forces"),
        ("verify", "audit kernel/confinement hypotheses"),
    ):
        sub.add_parser(name, parents=[common], help=helptext)
    sw = sub.add_parser("sweep", parents=[common], help="run a parameter sweep")
    sw.add_argument("--param", choices=SWEEPABLE, help="parameter to sweep")
    sw.add_argument("--values", help="comma/space separated values")
    sw.add_argument("--workers", type=int, default=1, help="worker pool size")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.subcommand == "sweep":
            values = None
            if args.values:
                values = [float(tok) for tok in args.values.replace(",", " ").split()]
            report = sweep(config, args.out, parameter=args.param, values=values,
                           workers=args.workers)
        else:
            report = run_scenario(config, args.out, args.subcommand)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StepError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1
    except (RuntimeError, ValueError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(report, indent=2, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
