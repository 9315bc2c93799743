"""Convergence tables for the manufactured Stokes and energy problems."""
from mantlefem.driver.manufactured import energy_temporal_convergence, stokes_convergence

stokes = stokes_convergence((8, 16, 32))
print("Stokes (Q2/Q1), variable viscosity")
print(stokes.table())
energy = energy_temporal_convergence(steps=(10, 20, 40), resolution=16)
print("\nEnergy, BDF-2 in time")
print(energy.table())
