"""Steady flow in coupled free and porous media.

Stokes flow in the free region and Darcy-Brinkman flow in the porous region
are coupled through interface conditions generated by a quadratic interface
power density ``Psi``. The package provides a Taylor-Hood finite element
solver, the total power functional with minimum-power checks, 1D channel
reference solutions and a small command line front end.
"""
from .assembly import ModelConfig, apply_velocity_bcs, assemble_system, build_dofmap
from .core import (FluidProps, InterfaceLaw, PorousProps, bj_law, bjs_law,
                   interface_tangential_tractions, noslip_limit_law, psi_gradients, psi_value)
from .mesh import (CHANNEL_PLAN, ENCLOSED_PLAN, DomainGeometry, Mesh, build_channel_mesh,
                   write_mesh_vtk, write_vtk)
from .oracles import (ChannelProblem, ChannelSolution, interface_residuals, shoot_channel,
                      solve_channel, traction)
from .power import (PowerBreakdown, admissible_perturbation, gateaux_check, minimum_power_check,
                    total_power)
from .problems import cavity_setup, channel_setup
from .solver import IllPosedError, Solution, solve

__version__ = "0.1.0"

__all__ = [
    "CHANNEL_PLAN", "ENCLOSED_PLAN", "ChannelProblem", "ChannelSolution", "DomainGeometry",
    "FluidProps", "IllPosedError", "InterfaceLaw", "Mesh", "ModelConfig", "PorousProps",
    "PowerBreakdown", "Solution", "admissible_perturbation", "apply_velocity_bcs",
    "assemble_system", "bj_law", "bjs_law", "build_channel_mesh", "build_dofmap", "cavity_setup",
    "channel_setup", "gateaux_check", "interface_residuals", "interface_tangential_tractions",
    "minimum_power_check", "noslip_limit_law", "psi_gradients", "psi_value", "shoot_channel",
    "solve", "solve_channel", "total_power", "traction", "write_mesh_vtk", "write_vtk",
]
