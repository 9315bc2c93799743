"""Stiff dense disk: effect of viscosity averaging on the Stokes solver.

Prints outer/inner iteration counts and the pressure range for harmonic
averaging and no averaging.  Usage::

    python3 demos/sinker_averaging.py [resolution]
"""
import sys

from mantlefem.driver import setup_benchmark
from mantlefem.driver.simulation import Simulation

resolution = int(sys.argv[1]) if len(sys.argv) > 1 else 32
for averaging in ("harmonic", "none"):
    sim = Simulation(setup_benchmark("sinker", resolution=resolution, averaging=averaging))
    sim.initial_solve()
    rep = sim.stokes_report
    print(f"{averaging:>9s}: outer {rep.outer_iterations:4d}  inner A {rep.inner_A_iterations:5d}  "
          f"inner S {rep.inner_S_iterations:5d}  p in [{sim.p.min():.3g}, {sim.p.max():.3g}]")
