"""
The solution minimises the total power
======================================

The coupled flow is the minimiser of a convex power functional: viscous
dissipation in both layers, Darcy drag, the interface power Psi, minus the
work of the driving forces. Nudging the solution along any admissible
direction should raise the power, and by an amount quadratic in the nudge.
"""
import numpy as np

from freeporous import channel_setup, gateaux_check, minimum_power_check, total_power

setup = channel_setup(16, law="bjs")
sol = setup.solve()

# %%
# Breakdown of the power at the solution.
pb = total_power(sol, setup.mesh, setup.config)
for name in ("phi_free", "phi_por", "drag", "psi_interface", "external_work", "total"):
    print(f"{name:>15}: {getattr(pb, name): .6e}")

# %%
# At a minimiser the external work is twice the dissipation, so the total is
# minus half the work.
print(f"total / (-work/2) = {pb.total / (-0.5 * pb.external_work):.12f}")

# %%
# Random divergence-free perturbations that respect the walls and the normal
# flux balance across the interface. Three amplitudes per trial.
rep = minimum_power_check(sol, setup.mesh, setup.config, n_trials=20, seed=3)
print(rep.summary())
print("first trial gaps:", np.array2string(rep.gaps[0], precision=3))

# %%
# The directional derivative is zero in every admissible direction.
g = gateaux_check(sol, setup.mesh, setup.config, n_dirs=20)
print(f"largest scaled directional derivative: {g.max_abs:.2e}")

# %%
# Off the solution it is not: halve the velocity and look again.
half = np.where(sol.dofmap.velocity_mask(), 0.5 * sol.x, 0.0)
g_half = gateaux_check(half, setup.mesh, setup.config, n_dirs=20, dofmap=sol.dofmap)
print(f"same check at half the solution:      {g_half.max_abs:.2e}")
