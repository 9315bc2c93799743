"""Simulation driver: configuration, time loop, benchmarks, statistics and output."""
from .benchmarks import BENCHMARKS, setup_benchmark
from .config import RunConfig, load_config, parse_config
from .io import read_statistics, write_statistics, write_vtk
from .simulation import (OUTPUT_DIR_ENV, Simulation, SimulationError, SimulationResult, compute_time_step,
                         continue_on_finer_mesh, run_time_loop)
from .statistics import COLUMNS, statistics_row

__all__ = ["BENCHMARKS", "setup_benchmark", "RunConfig", "load_config", "parse_config", "read_statistics",
           "write_statistics", "write_vtk", "OUTPUT_DIR_ENV", "Simulation", "SimulationError",
           "SimulationResult", "compute_time_step", "continue_on_finer_mesh", "run_time_loop", "COLUMNS", "statistics_row"]
