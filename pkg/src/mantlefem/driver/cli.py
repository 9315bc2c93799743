"""Command-line interface.

::

    mantlefem run config.cfg
    mantlefem bench king --di 0.25 --ra 1e4 --resolution 32 --formulation ALA
    mantlefem verify acceptance

``--output-dir`` (or the ``MANTLEFEM_OUTPUT_DIR`` environment variable)
selects where statistics, the echoed configuration and VTK files go.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys

from ..material import AVERAGING_SCHEMES
from .benchmarks import BENCHMARKS, setup_benchmark
from .config import load_config
from .manufactured import run_manufactured
from .simulation import OUTPUT_DIR_ENV, SimulationError, resolve_output_dir, run_time_loop

VERIFY_SUITES = ("acceptance", "unit", "all")


def _run(config, output_dir):
    if config.scenario in ("mms_stokes", "mms_energy"):
        study = run_manufactured(config)
        print(study.table())
        out = resolve_output_dir(config, output_dir)
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, f"{config.name}.txt"), "w", encoding="utf-8") as fh:
            fh.write(study.table() + "\n")
        return 0
    try:
        result = run_time_loop(config, output_dir)
    except SimulationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    if result.statistics:
        last = result.statistics[-1]
        print(" ".join(f"{k}={last[k]:.6g}" for k in ("time", "Nu", "Vrms", "T_mean", "phi", "W")))
    print(f"output written to {result.output_dir}")
    return 0


def _bench_parameters(args):
    name = args.name
    params = {}
    if name == "king":
        if args.di is not None:
            params["Di"] = args.di
        if args.ra is not None:
            params["Ra"] = args.ra
        if args.resolution is not None:
            params["resolution"] = args.resolution
        if args.averaging is not None:
            params["averaging"] = args.averaging
        if args.formulation is not None:
            params["formulation"] = args.formulation
        if args.pressure_space is not None:
            params["pressure_space"] = args.pressure_space
        if args.max_steps is not None:
            params["max_steps"] = args.max_steps
        return params
    if args.di is not None or args.ra is not None:
        if name != "arctan":
            raise SystemExit(f"--di/--ra do not apply to {name}")
        if args.di is not None:
            params["Di"] = args.di
        if args.ra is not None:
            params["Ra"] = args.ra
    if args.resolution is not None:
        if name in ("arctan", "sinker", "mms_energy"):
            params["resolution"] = args.resolution
        elif name == "finite_strain":
            params["resolution_level"] = args.resolution
        else:
            raise SystemExit(f"--resolution does not apply to {name}")
    if args.averaging is not None:
        if name != "sinker":
            raise SystemExit(f"--averaging does not apply to {name}")
        params["averaging"] = args.averaging
    if args.formulation is not None:
        if name != "arctan":
            raise SystemExit(f"--formulation does not apply to {name}")
        params["mass_strategy"] = args.formulation
    if args.pressure_space is not None:
        if name not in ("arctan", "sinker", "mms_stokes"):
            raise SystemExit(f"--pressure-space does not apply to {name}")
        params["pressure_space"] = args.pressure_space
    if args.max_steps is not None:
        if name not in ("latent_pipe", "finite_strain"):
            raise SystemExit(f"--max-steps does not apply to {name}")
        params["max_steps"] = args.max_steps
    return params


def build_parser():
    parser = argparse.ArgumentParser(prog="mantlefem", description=__doc__.splitlines()[0])
    parser.add_argument("--output-dir", default=None,
                        help=f"output directory (overrides ${OUTPUT_DIR_ENV} and the configuration)")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a configuration file")
    p_run.add_argument("config")
    p_bench = sub.add_parser("bench", help="run a named benchmark")
    p_bench.add_argument("name", choices=BENCHMARKS)
    p_bench.add_argument("--di", type=float, help="dissipation number (king, arctan)")
    p_bench.add_argument("--ra", type=float, help="Rayleigh number (king, arctan)")
    p_bench.add_argument("--resolution", type=int, help="cells per side (refinement level for finite_strain)")
    p_bench.add_argument("--averaging", choices=AVERAGING_SCHEMES)
    p_bench.add_argument("--formulation",
                         help="king: BA/TALA/ALA; arctan: implicit/explicit mass strategy")
    p_bench.add_argument("--pressure-space", choices=("Q1", "P-1"))
    p_bench.add_argument("--max-steps", type=int)
    p_bench.add_argument("--echo", action="store_true", help="print the configuration and exit")
    p_ver = sub.add_parser("verify", help="run a verification suite")
    p_ver.add_argument("suite", choices=VERIFY_SUITES)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return _run(load_config(args.config), args.output_dir)
    if args.command == "bench":
        config = setup_benchmark(args.name, **_bench_parameters(args))
        if args.echo:
            print(config.echo())
            return 0
        return _run(config, args.output_dir)
    if args.command == "verify":
        here = os.path.dirname(os.path.abspath(__file__))
        tests = os.path.normpath(os.path.join(here, "..", "..", "..", "tests"))
        if not os.path.isdir(tests):
            print(f"test directory not found: {tests}", file=sys.stderr)
            return 2
        target = {"acceptance": [os.path.join(tests, "test_acceptance.py")],
                  "unit": [tests, "--ignore", os.path.join(tests, "test_acceptance.py")],
                  "all": [tests]}[args.suite]
        return subprocess.call([sys.executable, "-m", "pytest", "-v", "-s", *target])
    return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
