"""
Sealing the porous bed
======================

As the permeability goes to zero the bed turns into a solid wall. With the
slip coefficient growing like 1 / sqrt(tr K) the slip velocity should vanish
linearly in sqrt(tr K).
"""
import numpy as np

from freeporous import FluidProps, PorousProps, noslip_limit_law
from freeporous.oracles import ChannelProblem, solve_channel

fluid = FluidProps()
trKs = 10.0 ** -np.arange(2, 9)
slips = []
for trK in trKs:
    porous = PorousProps.isotropic(0.4, trK / 2)
    sol = solve_channel(ChannelProblem(0.5, 0.5, -1.0, fluid, porous,
                                       noslip_limit_law(1.0, trK)))
    slips.append(sol.u_B)
    print(f"tr K = {trK:7.0e}   u_B = {sol.u_B:.4e}   u_B / sqrt(tr K) = {sol.u_B / np.sqrt(trK):.4f}")

# %%
# Fit u_B ~ (tr K)^(p/2); p should come out close to one.
p = np.polyfit(np.log(np.sqrt(trKs)), np.log(slips), 1)[0]
print(f"\nfitted exponent: {p:.3f}")

# %%
# The free layer approaches plane Poiseuille flow: u(h/2) -> G h^2 / (8 mu).
print(f"centre velocity {sol.velocity(0.25):.6f} vs sealed-wall value {1.0 * 0.5 ** 2 / 8:.6f}")
