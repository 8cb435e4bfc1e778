"""Command line entry point: ``atcircle run <config> [--out DIR] [--seed N] [--jobs N]``.

Exit status: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ATCircleError
from .harness import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, KINDS, load_config, run_batch, with_seed


def build_parser():
    p = argparse.ArgumentParser(prog="atcircle", description="Phase-field experiments for circle-valued maps.")
    p.add_argument("--list-kinds", action="store_true", help="list experiment kinds and exit")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command")
    r = sub.add_parser("run", help="run the experiments of a JSON config")
    r.add_argument("config", nargs="?", help="path to the JSON config")
    r.add_argument("--out", default="runs", help="output root; each experiment gets a subdirectory")
    r.add_argument("--seed", type=int, default=None, help="override the seed of every experiment")
    r.add_argument("--jobs", type=int, default=1, help="experiments run concurrently")
    r.add_argument("--list-kinds", action="store_true", help="list experiment kinds and exit")
    return p


def list_kinds(stream=None):
    stream = sys.stdout if stream is None else stream
    for name, spec in KINDS.items():
        keys = ", ".join(spec.scenario_keys)
        print(f"{name:18s} {spec.description}\n{'':18s} scenario keys: {keys}", file=stream)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.list_kinds:
        list_kinds()
        return EXIT_OK
    if args.command != "run" or not args.config:
        print("atcircle: error: expected 'run <config>' or --list-kinds", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1:
        print("atcircle: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and args.seed < 0:
        print("atcircle: error: --seed must be nonnegative", file=sys.stderr)
        return EXIT_CONFIG
    try:
        configs = load_config(args.config)
        if args.seed is not None:
            with_seed(configs, args.seed)
    except ATCircleError as exc:
        print(f"atcircle: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = EXIT_OK
    for cfg, (state, payload) in zip(configs, run_batch(configs, args.out, args.jobs)):
        if state == "ok":
            print(json.dumps({"name": cfg.name, "kind": cfg.kind, "report": payload["report"]}, sort_keys=True))
        elif state == "config":
            print(f"atcircle: config error: {payload}", file=sys.stderr)
            status = EXIT_CONFIG
        else:
            print(f"atcircle: numerical failure: {payload}", file=sys.stderr)
            if status == EXIT_OK:
                status = EXIT_NUMERICAL
    return status


if __name__ == "__main__":
    sys.exit(main())
