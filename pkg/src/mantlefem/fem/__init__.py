"""Finite element spaces, dof numbering, constraints and assembly helpers."""
from .elements import DiscontinuousP1, LagrangeQ, gauss_1d, make_element, quadrature_rule
from .dofs import AffineConstraints, FunctionSpace, dirichlet_from_function, distribute_dofs
from .assembly import (
    DEFAULT_QUADRATURE_DEGREE,
    CellQuadrature,
    evaluate_at_points,
    field_at_quadrature,
    integrate,
    integrate_field,
    interpolate,
    mass_matrix,
    mass_vector,
    scatter_matrix,
    scatter_vector,
    stiffness_matrix,
    symmetric_within,
)
