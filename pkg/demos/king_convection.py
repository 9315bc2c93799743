"""Compressible convection (King ALA, Di = 0.25, Ra = 1e4) on a 16^2 mesh.

Runs to steady state and prints the final Nusselt number, rms velocity,
mean temperature and heating integrals.  Usage::

    python3 demos/king_convection.py [resolution]
"""
import sys

from mantlefem.driver import run_time_loop, setup_benchmark

resolution = int(sys.argv[1]) if len(sys.argv) > 1 else 16
cfg = setup_benchmark("king", Di=0.25, Ra=1e4, resolution=resolution, formulation="ALA")
cfg.output.log = False
result = run_time_loop(cfg, write_files=False)
row = result.statistics[-1]
print(f"{result.reason} after {row['step']} steps")
for key in ("Nu", "Vrms", "T_mean", "phi", "W"):
    print(f"{key:>7s} = {row[key]:.5f}")
