"""Command-line front end: ``ldp-lab run|list|validate``."""
from __future__ import annotations

import argparse
import sys

from .errors import LdpLabError
from . import scenarios

EXIT_OK, EXIT_ERROR, EXIT_PHYSICS = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ldp-lab",
                                description="Rare-event scenarios: simulate, fit decay, compare "
                                            "with the analytic rate.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario config (path or shipped name)")
    run.add_argument("config")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--samples", type=int, default=None, help="override samples per n")
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--no-timestamp", action="store_true",
                     help="omit the '# generated' header line in estimates.csv")
    run.add_argument("-q", "--quiet", action="store_true", help="no progress lines")
    sub.add_parser("list", help="list registered drivers, equations, events, rates "
                                "and shipped scenarios")
    val = sub.add_parser("validate", help="parse and validate a config without running it")
    val.add_argument("config")
    return p


def _err(msg: str) -> None:
    print(f"ldp-lab: error: {msg}", file=sys.stderr)


def cmd_run(args) -> int:
    try:
        sc = scenarios.load_scenario(scenarios.resolve_config(args.config))
        log = None if args.quiet else (lambda s: print(s, file=sys.stderr, flush=True))
        res = scenarios.run_scenario(sc, out_dir=args.out, seed=args.seed, samples=args.samples,
                                     timestamp=not args.no_timestamp, log=log)
    except (LdpLabError, OSError) as e:
        _err(str(e))
        return EXIT_ERROR
    verdict = "PASS" if res.passed else "FAIL"
    print(f"{res.scenario}: {verdict}: {res.message}")
    print(f"outputs in {res.out_dir}")
    return EXIT_OK if res.passed else EXIT_PHYSICS


def cmd_list(args) -> int:
    print(scenarios.registry_text())
    print("shipped scenarios:")
    for name in sorted(scenarios.shipped_configs()):
        print(f"  {name}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        sc = scenarios.load_scenario(scenarios.resolve_config(args.config))
    except LdpLabError as e:
        _err(str(e))
        return EXIT_ERROR
    print(f"{sc.name}: ok ({sc.family} / {sc.equation} / {sc.event}, "
          f"n_ladder={sc.n_ladder}, samples={sc.samples})")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": cmd_run, "list": cmd_list, "validate": cmd_validate}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
