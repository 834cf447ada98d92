"""Local multilevel preconditioners for jump-coefficient elliptic problems
on adaptively bisected triangle meshes."""

from localmg import adapt, fem, hierarchy, mesh, precond, solver, spectral
from localmg.adapt import adaptive_solve, estimate, mark
from localmg.fem import (CoefficientField, assemble_load, assemble_stiffness,
                         dof_map)
from localmg.hierarchy import decompose
from localmg.mesh import Triangulation, crisscross_grid, refine, uniform_refine
from localmg.precond import bpx_apply, build_spaces, vcycle_apply
from localmg.solver import cg, pcg, stationary_iterate
from localmg.spectral import condition_numbers, dense_spectrum, pcg_bound

__all__ = [
    "adapt", "fem", "hierarchy", "mesh", "precond", "solver", "spectral",
    "experiments",
    "adaptive_solve", "estimate", "mark",
    "CoefficientField", "assemble_load", "assemble_stiffness", "dof_map",
    "decompose",
    "Triangulation", "crisscross_grid", "refine", "uniform_refine",
    "bpx_apply", "build_spaces", "vcycle_apply",
    "cg", "pcg", "stationary_iterate",
    "condition_numbers", "dense_spectrum", "pcg_bound",
]
__version__ = "0.1.0"
