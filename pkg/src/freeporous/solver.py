"""Direct solution of the assembled saddle-point system."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import DofMap


PIVOT_RATIO = 1e-15


class IllPosedError(RuntimeError):
    """The discrete problem is singular."""


@dataclass(frozen=True, eq=False)
class Solution:
    """Nodal fields of a solved coupled problem.

    Velocities live on the P2 nodes of each region (``dofmap.free.node_coords``),
    pressures on the region vertices and ``lam`` on the interface vertices.
    """

    x: np.ndarray
    dofmap: DofMap
    residual_norm: float
    interface_flux_residual: float
    mass_residual: float
    pressure_datum: int | None = None

    @property
    def v_free(self):
        return self.x[self.dofmap.free.u_slice].reshape(-1, 2)

    @property
    def v_por(self):
        return self.x[self.dofmap.porous.u_slice].reshape(-1, 2)

    @property
    def p_free(self):
        return self.x[self.dofmap.free.p_slice]

    @property
    def p_por(self):
        return self.x[self.dofmap.porous.p_slice]

    @property
    def lam(self):
        return self.x[self.dofmap.lam_slice]


def _diagnose(system):
    dm = system.dofmap
    if dm is None:
        return "ill-posed configuration: the system matrix is singular"
    if system.pressure_datum is None and system.constrained:
        return ("ill-posed configuration: the system is singular; the pressure has no datum "
                "(no traction boundary and no pinned pressure dof)")
    if not system.constrained:
        return ("ill-posed configuration: the system is singular; no velocity is prescribed "
                "(zero-measure velocity boundary) and rigid motions are not excluded")
    return f"ill-posed configuration: the system of {dm.total_dofs} dofs is singular"


def constraint_residuals(system, x):
    """Max-norm residuals of the divergence rows and the interface flux rows of ``A0``."""
    dm = system.dofmap
    A0 = system.A0 if system.A0 is not None else system.A
    v = np.where(dm.velocity_mask(), x, 0.0)
    r = A0 @ v
    mass = float(np.max(np.abs(r[dm.pressure_mask()]), initial=0.0))
    flux = float(np.max(np.abs(r[dm.lam_slice]), initial=0.0))
    return mass, flux


def solve(system, permutation=None):
    """Factorize and solve ``A x = b``.

    Parameters
    ----------
    system : CoupledSystem
        Assembled and constrained system.
    permutation : array of int, optional
        Dof reordering applied before factorization (and undone afterwards).

    Raises
    ------
    IllPosedError
        If the factorization breaks down, a pivot is negligible relative to
        the largest one (``PIVOT_RATIO``), or the result is not finite.
    """
    A = sp.csc_matrix(system.A)
    b = np.asarray(system.b, float)
    if permutation is not None:
        perm = np.asarray(permutation)
        P = sp.eye(len(b), format="csr")[perm]
        A = sp.csc_matrix(P @ A @ P.T)
        b = b[perm]
    try:
        lu = spla.splu(A, permc_spec="COLAMD")
        y = lu.solve(b)
    except RuntimeError as exc:
        raise IllPosedError(f"{_diagnose(system)} ({exc})") from exc
    # A consistent singular system can factor with a round-off sized pivot.
    piv = np.abs(lu.U.diagonal())
    if piv.size and piv.min() <= PIVOT_RATIO * piv.max():
        raise IllPosedError(f"{_diagnose(system)} (pivot ratio {piv.min() / piv.max():.3e})")
    if not np.all(np.isfinite(y)):
        raise IllPosedError(_diagnose(system))
    if permutation is not None:
        x = np.empty_like(y)
        x[perm] = y
    else:
        x = y
    res = float(np.linalg.norm(system.A @ x - system.b) / max(np.linalg.norm(system.b), 1.0))
    if res > 1e-6:
        raise IllPosedError(f"{_diagnose(system)} (relative residual {res:.3e})")
    mass, flux = (0.0, 0.0) if system.dofmap is None else constraint_residuals(system, x)
    return Solution(x=x, dofmap=system.dofmap, residual_norm=res,
                    interface_flux_residual=flux, mass_residual=mass,
                    pressure_datum=system.pressure_datum)
