"""Command-line entry point: ``ds2cf {run,grid,ablate,export,synth}``.

Exit codes: 0 on success, 2 when the configuration or inputs fail
validation, 1 on any runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import experiments as ex
from .errors import ConfigError, DS2CFError, InputError

log = logging.getLogger("ds2cf")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ds2cf", description="Deep semi-supervised coupled factorization experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, out_help):
        p.add_argument("--config", help="flat TOML configuration file (defaults apply when omitted)")
        p.add_argument("--out", required=True, help=out_help)
        p.add_argument("--seed", type=int, help="override the master seed")

    p = sub.add_parser("run", help="run the clustering protocol for one configuration")
    common(p, "output directory")
    p.add_argument("--fmeasure-variant", action="store_true",
                   help="also report the per-class macro F-measure next to the pairwise one")

    p = sub.add_parser("grid", help="two-stage alpha/beta then gamma grid search")
    common(p, "output directory")

    p = sub.add_parser("ablate", help="sweep the layer count or labeled proportion")
    common(p, "output directory")
    p.add_argument("--axis", choices=("layers", "labeled_proportion"), required=True)

    p = sub.add_parser("export", help="write a stored run artifact as CSV")
    p.add_argument("run_dir")
    p.add_argument("artifact", choices=ex.ARTIFACTS)
    p.add_argument("--repeat", type=int, default=0)
    p.add_argument("--out", help="output CSV path (default: inside the run directory)")

    p = sub.add_parser("synth", help="write a synthetic blob dataset as CSV")
    p.add_argument("--config", help="configuration supplying synth_* keys")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--seed", type=int, help="override synth_seed")
    return parser


def _dispatch(args):
    if args.verb == "export":
        path = ex.cmd_export(args.run_dir, args.artifact, args.out, args.repeat)
        print(path)
        return
    if args.verb == "synth":
        cfg = ex.load_config(args.config)
        if args.seed is not None:
            cfg = ex.validate_config(dict(cfg, synth_seed=args.seed))
        print(ex.cmd_synth(cfg, args.out))
        return
    cfg = ex.load_config(args.config, args.seed)
    if args.verb == "run":
        outcomes = ex.cmd_run(cfg, args.out, args.fmeasure_variant)
        ac, f, _ = ex.summarize(outcomes)
        print(f"{cfg['method']}: AC {ac[0]:.4f} +/- {ac[1]:.4f}, F {f[0]:.4f} +/- {f[1]:.4f} "
              f"over {len(outcomes)} repeats")
    elif args.verb == "grid":
        _, best = ex.cmd_grid(cfg, args.out)
        print(f"best cell: alpha={best[2]:g} beta={best[3]:g} gamma={best[4]:g} AC={best[5]:.4f}")
    else:
        rows = ex.cmd_ablate(cfg, args.out, args.axis)
        for r in rows:
            print(f"{r[1]}={r[2]}: AC {r[3]:.4f} F {r[5]:.4f}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _dispatch(args)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DS2CFError, OSError, ArithmeticError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
