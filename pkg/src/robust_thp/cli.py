"""Command-line front end for the experiment runner.

Three subcommands:

    robust-thp run --spec sweep.cfg [--seed 7] [--output-dir out/]
    robust-thp validate --spec sweep.cfg
    robust-thp list-experiments

`run` executes the experiment and prints the output CSV path.  Both
`run` and `validate` exit nonzero with a single `error: ...` line on
stderr naming the violated invariant when the spec is malformed.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .experiments import EXPERIMENT_KINDS, parse_spec, run_experiment

_KIND_SUMMARIES = {
    "sweep-power": "mean SMSE vs transmit power in dB, robust and non-robust",
    "sweep-sigma": "mean SMSE vs CSIT error variance at fixed power",
    "sweep-delta": "worst-case SMSE vs error radius, robust and non-robust",
    "power-vs-eta": "minimum transmit power vs per-stream MSE target",
    "feasibility": "fraction of channels infeasible vs error radius",
    "convergence": "mean transmit power per iteration and iteration counts",
    "balance": "min-max worst-case user MSE vs transmit power in dB",
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="robust-thp",
        description="Run batch transceiver-design experiments from spec files.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment spec")
    run_p.add_argument("--spec", required=True, help="spec file path")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the spec's base seed")
    run_p.add_argument("--output-dir", default=None,
                       help="directory for the output files")

    val_p = sub.add_parser("validate", help="check a spec without running it")
    val_p.add_argument("--spec", required=True, help="spec file path")

    sub.add_parser("list-experiments", help="list the experiment kinds")
    return parser


def _load(path, seed=None):
    spec = parse_spec(path)
    if seed is not None:
        spec = dataclasses.replace(spec, seed=seed)
    return spec


def main(argv=None):
    args = _build_parser().parse_args(argv)
    if args.command == "list-experiments":
        for kind in EXPERIMENT_KINDS:
            print(f"{kind}: {_KIND_SUMMARIES[kind]}")
        return 0
    try:
        spec = _load(args.spec, getattr(args, "seed", None))
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate":
        print(f"ok: {spec.kind}, {len(spec.sweep)} grid points, "
              f"{spec.channels} channels, seed {spec.seed}")
        return 0
    try:
        path = run_experiment(spec, output_dir=args.output_dir)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
