"""Command line entry point: ``nlsctl <subcommand> [--config F] [--out D] [--seed S] [--threads N]``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import harness

SUBCOMMANDS = {
    "ground-state": "ground_state",
    "profile": "free_blowup",
    "evolve": "subcritical_global",
    "stabilize": "stabilize_global",
    "open-loop": "open_loop_null",
    "hum-linear": "hum_linear",
    "hum-nonlinear": "hum_nonlinear",
    "sweep": "sweep",
}


def build_parser():
    ap = argparse.ArgumentParser(prog="nlsctl", description="Mass-critical NLS blow-up, stabilization and null control runs.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, kind in SUBCOMMANDS.items():
        sp = sub.add_parser(name, help=f"run a {kind} scenario")
        sp.add_argument("--config", help="TOML file; [run] kind may refine the subcommand default")
        sp.add_argument("--out", default=f"runs/{name}", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="u64 seed for every random draw")
        sp.add_argument("--threads", type=int, default=0, help="FFT worker threads (0 = library default)")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    harness.configure_threads(args.threads)
    try:
        user = harness.load_config(args.config) if args.config else {}
    except (OSError, ValueError) as err:
        print(f"cannot read config: {err}", file=sys.stderr)
        return 2
    run = user.setdefault("run", {})
    default_kind = SUBCOMMANDS[args.command]
    kind = run.get("kind", default_kind)
    # `evolve` covers the free runs, `stabilize` both concatenations
    allowed = {
        "evolve": {"subcritical_global", "free_blowup"},
        "stabilize": {"stabilize_global", "stabilize_then_null"},
        "profile": {"free_blowup"},
    }.get(args.command, {default_kind})
    if kind not in allowed:
        print(f"nlsctl {args.command}: config kind {kind!r} not allowed here", file=sys.stderr)
        return 2
    run["kind"] = kind
    try:
        rec = harness.run_scenario(user, args.out, args.seed)
    except harness.ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    for name, ok in sorted(rec.checks.items()):
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    for k, v in sorted(rec.metrics.items()):
        if isinstance(v, (int, float, str)):
            print(f"  {k} = {v}")
    if rec.error:
        print(f"error: {rec.error}", file=sys.stderr)
    print(f"record: {rec.outputs.get('record')}")
    return 0 if rec.passed else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
