"""Adaptive finite-element solver for 2D Cartesian (compressible) mantle convection."""
__version__ = "0.1.0"
