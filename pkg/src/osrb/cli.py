"""Command-line front end.

    osrb validate CONFIG        schema, normalization and guard checks
    osrb run CONFIG             run a config, CSV to --out or the config's output
    osrb p2p | bc-region | wiretap | thm1 | thm2 [flags]

The per-kind subcommands start from a built-in example payload (or
``--payload FILE``) and apply the inline flags on top. Exit codes: 0 success,
2 schema violation, 3 guard violation, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import experiments
from .binning import GuardError
from .prob import PmfError

EXIT_OK, EXIT_SCHEMA, EXIT_GUARD, EXIT_IO = 0, 2, 3, 4

_BINARY_SOURCE = {"axis_names": ["X", "Z"], "axis_sizes": [2, 2], "probs": [0.4, 0.1, 0.1, 0.4]}

DEFAULT_PAYLOADS = {
    "thm1": {"source": _BINARY_SOURCE, "spec": [[2, 2]], "gamma_grid": [0.25, 0.5, 1.0, 2.0, 4.0], "t_z": "marginal", "mc_trials": 2000},
    "thm2": {"source": _BINARY_SOURCE, "spec": [[2, 2]], "gamma_grid": [0.25, 0.5, 1.0, 2.0, 4.0], "t_joint": "match", "mc_trials": 2000},
    "p2p": {"input": [0.5, 0.5], "channel": {"bsc": 0.11}, "n_grid": [1000, 10000, 100000], "eps": 1e-3},
    "bc": {
        "q_u1u2x": {"axis_names": ["U1", "U2", "X"], "axis_sizes": [2, 2, 4], "probs": [
            0.25, 0, 0, 0, 0, 0.25, 0, 0, 0, 0, 0.25, 0, 0, 0, 0, 0.25]},
        "channel": {"product": [{"bsc": 0.1}, {"bsc": 0.2}]},
        "n_grid": [1000, 10000],
        "eps": 0.01,
        "directions": 16,
    },
    "wiretap": {
        "q_ux": [0.5, 0.5],
        "channel": {"broadcast": [{"bsc": 0.1}, {"bsc": 0.3}]},
        "n_grid": [1000, 10000, 100000],
        "eps_r": 0.01,
        "eps_sec": 0.01,
        "theta_grid": [0.25, 0.5, 0.75],
    },
}

_SUBCOMMAND_KIND = {"p2p": "p2p", "bc-region": "bc", "wiretap": "wiretap", "thm1": "thm1", "thm2": "thm2"}


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="osrb", description="Random-binning bounds and second-order rate calculators.")
    sub = ap.add_subparsers(dest="command", required=True)
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    r = sub.add_parser("run", help="run a config file")
    r.add_argument("config")
    r.add_argument("--out", help="CSV path (default: the config's output field, else stdout)")
    for name, kind in _SUBCOMMAND_KIND.items():
        p = sub.add_parser(name, help=f"{kind} sweep with inline overrides")
        p.add_argument("--payload", help="JSON file holding the payload object")
        p.add_argument("--n", type=int, action="append", help="blocklength (repeatable)")
        p.add_argument("--eps", type=float, help="target error (eps_r and eps_sec for wiretap)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--trials", type=int, help="Monte Carlo trials")
        p.add_argument("--out", help="CSV path (default stdout)")
        p.add_argument("--workers", type=int, default=1)
        if kind in ("thm1", "thm2"):
            p.add_argument("--gamma", type=float, action="append", help="gamma value (repeatable)")
        if kind == "p2p":
            p.add_argument("--bsc", type=float, help="BSC crossover probability")
        if kind == "wiretap":
            p.add_argument("--theta", type=float, action="append", help="error split (repeatable)")
    return ap


def _inline_config(args) -> experiments.ExperimentConfig:
    kind = _SUBCOMMAND_KIND[args.command]
    if args.payload:
        payload = experiments.load_config(args.payload)
    else:
        payload = json.loads(json.dumps(DEFAULT_PAYLOADS[kind]))
    if args.n:
        payload["n_grid"] = args.n
    if args.eps is not None:
        if kind == "wiretap":
            payload["eps_r"] = payload["eps_sec"] = args.eps
        else:
            payload["eps"] = args.eps
    if args.trials is not None:
        if kind in ("thm1", "thm2"):
            payload["mc_trials"] = args.trials
        elif "simulate" in payload:
            payload["simulate"]["trials"] = args.trials
    if getattr(args, "gamma", None):
        payload["gamma_grid"] = args.gamma
    if getattr(args, "bsc", None) is not None:
        payload["channel"] = {"bsc": args.bsc}
    if getattr(args, "theta", None):
        payload["theta_grid"] = args.theta
    return experiments.ExperimentConfig(kind, payload, args.seed, args.workers, args.out)


def _emit(config: experiments.ExperimentConfig, out_path: str | None) -> int:
    report = experiments.validate_config(config.to_json())
    if report.errors:
        for e in report.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    if report.warnings:
        for w in report.warnings:
            print(f"guard: {w}", file=sys.stderr)
        return EXIT_GUARD
    if out_path:
        try:
            fh = open(out_path, "w", encoding="utf-8", newline="")
        except OSError as exc:
            print(f"io: {exc}", file=sys.stderr)
            return EXIT_IO
        with fh:
            experiments.run_config(config, fh)
    else:
        experiments.run_config(config, sys.stdout)
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            try:
                obj = experiments.load_config(args.config)
            except json.JSONDecodeError as exc:
                print(json.dumps({"errors": [f"invalid JSON: {exc}"], "warnings": []}, indent=2))
                return EXIT_SCHEMA
            report = experiments.validate_config(obj)
            print(json.dumps(report.to_json(), indent=2))
            if report.errors:
                return EXIT_SCHEMA
            return EXIT_GUARD if report.warnings else EXIT_OK
        if args.command == "run":
            try:
                obj = experiments.load_config(args.config)
            except json.JSONDecodeError as exc:
                print(f"error: invalid JSON: {exc}", file=sys.stderr)
                return EXIT_SCHEMA
            config = experiments.ExperimentConfig.from_json(obj)
            return _emit(config, args.out or config.output_path)
        return _emit(_inline_config(args), args.out)
    except (experiments.ConfigError, PmfError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (GuardError, MemoryError) as exc:
        print(f"guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except OSError as exc:
        print(f"io: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
