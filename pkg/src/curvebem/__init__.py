"""Galerkin boundary elements on curved high-order surface meshes."""

from .geometry import Bean, Sphere, build_curved_mesh, element_frame, geometric_error_report
from .fe_space import Density, FeSpace, build_space, evaluate_density, l2_project
from .quadrature import Adjacency, gauss_triangle, singular_pair_rule

__all__ = [
    "Adjacency",
    "Bean",
    "Density",
    "FeSpace",
    "Sphere",
    "build_curved_mesh",
    "build_space",
    "element_frame",
    "evaluate_density",
    "gauss_triangle",
    "geometric_error_report",
    "l2_project",
    "singular_pair_rule",
]
