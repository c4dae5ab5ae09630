"""Finite-difference laboratory for the regularized inhomogeneous normalized p-Laplacian flow."""

from plmodica.grid import Grid, ScalarField, VectorField, gradient, mollify, sup_norm
from plmodica.kernels import BACKEND
from plmodica.potential import double_well, sine_potential, zero_potential

__all__ = [
    "BACKEND",
    "Grid",
    "ScalarField",
    "VectorField",
    "double_well",
    "gradient",
    "mollify",
    "sine_potential",
    "sup_norm",
    "zero_potential",
]

__version__ = "0.1.0"
