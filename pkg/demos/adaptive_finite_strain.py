"""Adaptive convection tracking the deformation gradient; writes VTK output.

Usage::

    python3 demos/adaptive_finite_strain.py [output_dir]
"""
import sys

from mantlefem.driver import run_time_loop, setup_benchmark

cfg = setup_benchmark("finite_strain", resolution_level=3, max_steps=20)
cfg.output.vtk_every = 10
result = run_time_loop(cfg, sys.argv[1] if len(sys.argv) > 1 else "output_finite_strain")
print(f"{result.simulation.mesh.n_active} active cells; output in {result.output_dir}")
