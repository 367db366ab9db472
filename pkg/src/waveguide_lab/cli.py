"""Command-line entry point: run, validate, and report on experiments.

Exit codes: 0 all verdicts pass, 1 any verdict fails, 2 config or runtime
error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import validate_config
from .errors import ConfigInvalid, WaveguideLabError
from .experiments import run_experiment
from .reporting import render_report

_RUN_KINDS = {
    "audit": ("domain-audit",),
    "norms": ("norms",),
    "sweep": ("resolvent-sweep",),
    "spectrum": ("spectrum",),
    "evolve": ("evolve", "duhamel"),
    "flat": ("flat-dispersion",),
}


def _add_run_parser(sub, name):
    p = sub.add_parser(name, help=f"run a {'/'.join(_RUN_KINDS[name])} experiment")
    p.add_argument("--config", required=True, help="path to the JSON config")
    p.add_argument("--out", required=True, help="output bundle directory")
    p.add_argument("--jobs", type=int, default=1, help="worker pool cap")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--extent-doubling", action="store_true",
                   help="also run at doubled extent and report sensitivity")
    return p


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wglab",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in _RUN_KINDS:
        _add_run_parser(sub, name)
    pv = sub.add_parser("validate", help="validate a config file")
    pv.add_argument("--config", required=True)
    pr = sub.add_parser("report", help="render a verdict report from bundles")
    pr.add_argument("bundles", nargs="+", help="bundle directories")
    pr.add_argument("--out", required=True, help="report output directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = validate_config(args.config)
            print(f"config ok: kind={cfg.kind} digest={cfg.digest()}")
            return 0
        if args.command == "report":
            out = render_report(args.bundles, args.out)
            print((Path(out) / "summary.txt").read_text(), end="")
            return 0
        cfg = validate_config(args.config)
        if cfg.kind not in _RUN_KINDS[args.command]:
            raise ConfigInvalid([("kind",
                                  f"subcommand {args.command} cannot run kind "
                                  f"{cfg.kind!r}")])
        if args.seed is not None:
            cfg.seed = args.seed
        bundle = run_experiment(cfg, args.out, jobs=args.jobs,
                                extent_doubling=args.extent_doubling)
        for key, v in bundle.verdicts.items():
            status = "PASS" if v.get("passed") else "FAIL"
            note = f"  ({v['note']})" if v.get("note") else ""
            print(f"{status}  {key}: {v.get('value')}{note}")
        return 0 if bundle.passed else 1
    except ConfigInvalid as exc:
        for path, msg in exc.issues:
            print(f"config error: {path}: {msg}" if path
                  else f"config error: {msg}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except WaveguideLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
