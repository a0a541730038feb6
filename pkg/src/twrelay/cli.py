"""Command-line entry points.

Three subcommands:

``run``       execute a built-in preset or a YAML experiment file; writes
              CSV results, a provenance JSON sidecar, and a rendered PNG.
``oracle``    run the moment-identity checks and print the table; exits
              nonzero if any check fails, naming the failed identities.
``allocate``  solve a power-allocation problem from a YAML file and print
              the resulting allocation as JSON.

All dB-to-linear conversion happens in this layer and in the spec parsing
it drives; library modules deal in linear quantities only.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

import yaml

from . import __version__
from .allocation import (
    AllocationError,
    allocation_report,
    aopa_mrc,
    aopa_zf,
    epa,
    opa,
    OpaSettings,
)
from .beamforming import BeamformerKind
from .config import ConfigError, budget_from_dict, system_config_from_dict
from .experiments import (
    build_preset,
    ExperimentError,
    load_spec,
    preset_names,
    run_experiment,
)
from .gp import GpError
from .moments import run_oracle_suite
from .rates import bound_rates, RateError

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twrelay",
        description="Link-level simulation and power allocation for "
        "multi-pair two-way relaying with large antenna arrays.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a preset or YAML experiment spec")
    run_p.add_argument(
        "spec",
        help=f"preset name ({', '.join(preset_names())}) or path to a YAML file",
    )
    run_p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    run_p.add_argument(
        "--trials", type=int, default=None, help="override Monte Carlo trials per point"
    )
    run_p.add_argument("--out", default=None, help="output path stem (or .csv path)")
    run_p.add_argument(
        "--no-figure", action="store_true", help="skip rendering the PNG"
    )

    oracle_p = sub.add_parser("oracle", help="check the closed-form moment identities")
    oracle_p.add_argument(
        "--samples", type=int, default=20_000, help="Monte Carlo samples per check"
    )
    oracle_p.add_argument("--seed", type=int, default=0)
    oracle_p.add_argument("--out", default=None, help="also write the table as CSV")

    alloc_p = sub.add_parser(
        "allocate", help="solve a power allocation and print it as JSON"
    )
    alloc_p.add_argument("spec", help="YAML file with system, budget, scheme, kind")
    return parser


def _cmd_run(args) -> int:
    if os.path.exists(args.spec):
        spec = load_spec(args.spec)
    else:
        spec = build_preset(args.spec)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.trials is not None:
        updates["trials"] = args.trials
    if updates:
        spec = dataclasses.replace(spec, **updates)
    written = run_experiment(spec, output=args.out, render=not args.no_figure)
    for kind, path in written.items():
        print(f"{kind}: {path}")
    return 0


def _cmd_oracle(args) -> int:
    report = run_oracle_suite(seed=args.seed, n_samples=args.samples)
    print(report.format_table())
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(report.to_csv_rows())
        print(f"csv: {args.out}")
    if not report.passed:
        failed = ", ".join(report.failing_names())
        print(f"FAILED identities: {failed}", file=sys.stderr)
        return 1
    return 0


def _cmd_allocate(args) -> int:
    with open(args.spec, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError("allocation spec must be a mapping")
    for key in ("system", "budget", "scheme"):
        if key not in data:
            raise ConfigError(f"allocation spec is missing the {key!r} section")
    cfg = system_config_from_dict(data["system"])
    budget = budget_from_dict(data["budget"])
    scheme = str(data["scheme"]).lower()
    kind = BeamformerKind.parse(data.get("kind", "mrc-mrt"))

    iterations = 0
    converged = True
    if scheme == "epa":
        alloc = epa(cfg.n_pairs, budget)
    elif scheme == "aopa":
        alloc = (
            aopa_mrc(cfg, budget)
            if kind is BeamformerKind.MRC_MRT
            else aopa_zf(cfg, budget)
        )
    elif scheme == "opa":
        raw = data.get("settings") or {}
        settings = OpaSettings(
            tolerance=float(raw.get("tolerance", 0.01)),
            max_iterations=int(raw.get("max_iterations", 10)),
            trust_ratio=float(raw.get("trust_ratio", 1.1)),
        )
        alloc, trace = opa(cfg, kind, budget, settings)
        iterations = trace.n_iterations - 1
        converged = trace.converged
    else:
        raise ConfigError(f"unknown scheme {scheme!r}; use epa, opa, or aopa")

    report = bound_rates(cfg, kind, alloc)
    payload = allocation_report(
        scheme,
        alloc,
        report.sum_spectral_efficiency,
        iterations=iterations,
        converged=converged,
    )
    payload["kind"] = kind.value
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "oracle":
            return _cmd_oracle(args)
        return _cmd_allocate(args)
    except (
        ConfigError,
        ExperimentError,
        AllocationError,
        RateError,
        GpError,
        OSError,
        yaml.YAMLError,
    ) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
