"""Ready-made configurations used by the verification suites and the demos."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import ModelConfig, apply_velocity_bcs, assemble_system
from .core import FluidProps, PorousProps, bj_law, bjs_law
from .mesh import ENCLOSED_PLAN, DomainGeometry, build_channel_mesh
from .oracles import ChannelProblem, fully_developed_traction, solve_channel
from .solver import solve

CHANNEL_GEOMETRY = DomainGeometry((0.0, 1.0), 0.0, 0.5, -0.5)


@dataclass(frozen=True, eq=False)
class Setup:
    mesh: object
    config: ModelConfig
    channel: object = None

    def system(self, pressure_datum="auto"):
        sys0 = assemble_system(self.mesh, self.config)
        return apply_velocity_bcs(sys0, self.mesh, self.config, pressure_datum)

    def solve(self, pressure_datum="auto", permutation=None):
        return solve(self.system(pressure_datum), permutation)


def make_law(kind, alpha, fluid, porous):
    if kind == "bj":
        return bj_law(alpha, fluid.mu, porous.K)
    if kind == "bjs":
        return bjs_law(alpha, fluid.mu, porous.K)
    raise ValueError(f"unknown interface law {kind!r} (expected 'bj' or 'bjs')")


def channel_setup(nx, law="bjs", alpha=1.0, k=0.01, phi=0.4, mu=1.0, gamma=1.0, G=-1.0,
                  geometry=CHANNEL_GEOMETRY, ny_free=None, ny_por=None):
    """Pressure-driven channel over a porous bed with its 1D reference profile.

    Both walls are no-slip; the inflow and outflow sides carry the traction of
    the fully developed flow, so the discrete solution should reproduce the
    reference profile up to discretisation error.
    """
    fluid = FluidProps(mu, gamma)
    porous = PorousProps.isotropic(phi, k)
    law_obj = make_law(law, alpha, fluid, porous) if isinstance(law, str) else law
    ny_free = ny_free or max(1, nx // 2)
    ny_por = ny_por or max(1, nx // 2)
    mesh = build_channel_mesh(geometry, nx, ny_free, ny_por)
    problem = ChannelProblem(geometry.free_height, geometry.porous_height, G, fluid, porous, law_obj)
    channel = solve_channel(problem)
    t = fully_developed_traction(channel, x_ref=geometry.x_extent[0], y_interface=geometry.y_interface)
    zero = (0.0, 0.0)
    config = ModelConfig(fluid, porous, law_obj,
                         velocity_data={"free_v": zero, "por_v": zero},
                         traction_data={"free_t": t, "por_t": t})
    return Setup(mesh, config, channel)


def cavity_setup(nx, law="bjs", alpha=1.0, k=0.01, phi=0.4, mu=1.0, gamma=1.0,
                 b_free=(1.0, 0.0), b_por=(0.0, 0.0), geometry=CHANNEL_GEOMETRY):
    """Closed box with no-slip walls everywhere, stirred by a body force in the free layer.

    With no traction boundary the pressure is determined only up to a constant.
    """
    fluid = FluidProps(mu, gamma)
    porous = PorousProps.isotropic(phi, k)
    law_obj = make_law(law, alpha, fluid, porous) if isinstance(law, str) else law
    mesh = build_channel_mesh(geometry, nx, max(1, nx // 2), max(1, nx // 2), ENCLOSED_PLAN)
    zero = (0.0, 0.0)
    config = ModelConfig(fluid, porous, law_obj, b_free=np.asarray(b_free, float),
                         b_por=np.asarray(b_por, float),
                         velocity_data={"free_v": zero, "por_v": zero})
    return Setup(mesh, config)
