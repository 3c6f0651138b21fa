"""Command-line entry point.

    stablelab <subcommand> --config FILE --out DIR [--seed N] [--paths N]
                                                   [--threads N]

Subcommands: symbol, lp, pde, simulate, verify <kind>, regime-study, with
verify kinds apriori, krylov, feynman-kac, zvonkin, maxprinciple,
coercivity, commutator.  Exit codes: 0 pass, 2 verification warning,
1 error.  The config's [experiment] kind falls back to the subcommand.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback

from .config import load_config
from .experiments import run_experiment

VERIFY_KINDS = ("apriori", "krylov", "feynman-kac", "zvonkin",
                "maxprinciple", "coercivity", "commutator")


def _add_common(sp):
    sp.add_argument("--config", required=True, help="TOML config file")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--seed", type=int, default=None,
                    help="run seed (default: [experiment] seed or 0)")
    sp.add_argument("--paths", type=int, default=None,
                    help="override the configured Monte Carlo path count")
    sp.add_argument("--threads", type=int,
                    default=int(os.environ.get("STABLELAB_THREADS", "0"))
                    or None,
                    help="worker threads hint (default from "
                         "STABLELAB_THREADS); recorded in the manifest")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="stablelab",
        description="numerical laboratory for stable-like jump models")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("symbol", "lp", "pde", "simulate", "regime-study"):
        _add_common(sub.add_parser(name))
    vp = sub.add_parser("verify")
    vp.add_argument("kind", choices=VERIFY_KINDS)
    _add_common(vp)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    kind = args.command if args.command != "verify" \
        else f"verify-{args.kind}"
    try:
        config = load_config(args.config)
        config.setdefault("experiment", {})
        config["experiment"].setdefault("kind", kind)
        if config["experiment"]["kind"] != kind:
            raise ValueError(
                f"config declares experiment kind "
                f"{config['experiment']['kind']!r} but the subcommand "
                f"requests {kind!r}")
        seed = args.seed if args.seed is not None \
            else int(config["experiment"].get("seed", 0))
        status = run_experiment(config, args.config, args.out, seed,
                                n_paths=args.paths, threads=args.threads)
    except Exception as exc:  # error record, nonzero exit
        os.makedirs(args.out, exist_ok=True)
        record = {"error": type(exc).__name__, "message": str(exc)}
        with open(os.path.join(args.out, "error.json"), "w") as fh:
            json.dump(record, fh, indent=1, sort_keys=True)
        traceback.print_exc(file=sys.stderr)
        return 1
    print(f"{kind}: {status}")
    return 0 if status == "PASS" else 2


if __name__ == "__main__":
    sys.exit(main())
