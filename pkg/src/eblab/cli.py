"""Command line: ``eblab run | validate | list``."""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import runner, scenarios
from .errors import ConfigError


def _threads(arg):
    if arg is not None:
        return arg
    env = os.environ.get("EBLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            print(f"ignoring non-integer EBLAB_THREADS={env!r}", file=sys.stderr)
    return 1


def _parse_replay(tokens):
    vals = {}
    for tok in tokens:
        key, sep, v = tok.partition("=")
        if not sep or key not in ("n", "rep"):
            raise ConfigError(f"bad --replay token {tok!r}; expected n=<n> rep=<r>", key="replay")
        try:
            vals[key] = int(v)
        except ValueError:
            raise ConfigError(f"--replay {key} must be an integer", key="replay") from None
    if set(vals) != {"n", "rep"}:
        raise ConfigError("--replay needs both n=<n> and rep=<r>", key="replay")
    return vals["n"], vals["rep"]


def cmd_run(args) -> int:
    try:
        cfg = runner.load_config(args.config)
        if args.replay:
            n, rep = _parse_replay(args.replay)
            print(json.dumps(runner.replay(cfg, n, rep), indent=2, sort_keys=True, default=float))
            return runner.EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return runner.EXIT_CONFIG
    code, out = runner.execute(cfg, _threads(args.threads))
    if code == runner.EXIT_FAILURES:
        print(f"too many failed replications; see {out / 'events.csv'}", file=sys.stderr)
    else:
        print(f"wrote {out}")
    return code


def cmd_validate(args) -> int:
    try:
        cfg = runner.load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return runner.EXIT_CONFIG
    cells = len(cfg["n_grid"]) * cfg["reps"]
    print(f"ok: {cfg['name']} ({cfg['family']}), {cells} cells, hash {runner.config_hash(cfg)}")
    return runner.EXIT_OK


def cmd_list(args) -> int:
    rows = scenarios.list_scenarios()
    w0 = max(len(r[0]) for r in rows)
    w1 = max(len(r[1]) for r in rows)
    for fam, tpl, desc in rows:
        print(f"{fam:<{w0}}  {tpl:<{w1}}  {desc}")
    if args.templates:
        print(json.dumps({f: scenarios.FAMILIES[f].template for f in scenarios.FAMILIES}, indent=2))
    return runner.EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eblab", description="Empirical Bayes merging experiments")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario config")
    r.add_argument("config")
    r.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $EBLAB_THREADS or 1)")
    r.add_argument("--replay", nargs=2, metavar=("n=<n>", "rep=<r>"),
                   help="recompute one replication and print it as JSON")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)

    ls = sub.add_parser("list", help="list scenario families and templates")
    ls.add_argument("--templates", action="store_true", help="also print template configs")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
