"""Total power of a velocity field and checks of its minimum at the discrete solution.

For an admissible velocity field (prescribed boundary values, discretely
divergence free in each region, zero discrete interface flux) the power is

    P(v) = int_free mu D:D + int_por (mu D:D + 1/2 mu K^-1 v.v) + int_interface Psi
           - int gamma b.v_f - int gamma phi b.v_p - int_traction t.v

It is evaluated by quadrature straight from the nodal fields, not from the
assembled matrix, so comparing it against the linear solve is a genuine check.
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.polynomial import polynomial as P
from scipy.signal import convolve2d

from .assembly import (boundary_edge_quadrature, build_dofmap, constraint_matrix, eval_vector_data,
                       interface_quadrature, needs_pressure_datum)
from .core import ddot, dot, psi_value, sym, tangential_part
from .elements import p2_gradients, p2_values, refined_tri_rule, triangle_geometry
from .mesh import FREE, boundary_outward_normals


@dataclass(frozen=True)
class PowerBreakdown:
    """Contributions to the total power [W per unit depth].

    ``phi_por`` includes the drag part, also reported on its own as ``drag``.
    """

    phi_free: float
    phi_por: float
    psi_interface: float
    external_work: float
    drag: float = 0.0

    @property
    def total(self):
        return self.phi_free + self.phi_por + self.psi_interface - self.external_work

    @property
    def magnitude(self):
        """Sum of absolute contributions, the natural scale for round-off."""
        return abs(self.phi_free) + abs(self.phi_por) + abs(self.psi_interface) + abs(self.external_work)

    def summary(self):
        return (f"phi_free={self.phi_free!r} phi_por={self.phi_por!r} "
                f"psi_interface={self.psi_interface!r} external_work={self.external_work!r} "
                f"total={self.total!r}")


def _region_terms(mesh, rd, x, mu, K_inv, body, body_weight, level):
    pts, wts = refined_tri_rule(level)
    coords = mesh.vertices[mesh.triangles[rd.tris]]
    area, grad_lam = triangle_geometry(coords)
    v_nodes = x[rd.u_slice].reshape(-1, 2)[rd.nodes]            # (T, 6, 2)
    phi = p2_values(pts)                                         # (Q, 6)
    grad = p2_gradients(pts, grad_lam)                           # (T, Q, 6, 2)
    w = area[:, None] * wts[None, :]
    v = np.einsum("qa,tac->tqc", phi, v_nodes)
    D = sym(np.einsum("tqai,tac->tqci", grad, v_nodes))
    diss = float(np.sum(w * mu * ddot(D, D)))
    drag = 0.0
    if K_inv is not None:
        drag = float(np.sum(w * 0.5 * mu * np.einsum("tqi,ij,tqj->tq", v, K_inv, v)))
    xq = np.einsum("qk,tki->tqi", pts, coords)
    f = eval_vector_data(body, xq)
    ext = float(np.sum(w * body_weight * dot(f, v)))
    return diss, drag, ext


def _fields(fields, dofmap):
    if hasattr(fields, "x"):
        return np.asarray(fields.x, float), fields.dofmap if dofmap is None else dofmap
    if dofmap is None:
        raise ValueError("a raw dof vector needs its dofmap")
    return np.asarray(fields, float), dofmap


def total_power(fields, mesh, config, dofmap=None, quad_level=0):
    """Evaluate the power functional for a solution or candidate field.

    Parameters
    ----------
    fields : Solution or ndarray
        A solution, or a full dof vector (only velocity entries are read).
    dofmap : DofMap, optional
        Required when ``fields`` is a raw vector.
    quad_level : int
        Volume integrals use the base rule on ``4**quad_level`` sub-triangles.
    """
    x, dofmap = _fields(fields, dofmap)
    mu = config.fluid.mu
    gamma = config.fluid.gamma
    d_f, _, e_f = _region_terms(mesh, dofmap.free, x, mu, None, config.b_free, gamma, quad_level)
    d_p, drag, e_p = _region_terms(mesh, dofmap.porous, x, mu, config.porous.K_inv,
                                   config.b_por, gamma * config.porous.phi, quad_level)
    iq = interface_quadrature(mesh, dofmap)
    n = iq["n"][:, None, :]
    vf = np.einsum("eqa,eac->eqc", iq["phi_f"], x[iq["dofs_f"]].reshape(-1, 6, 2))
    vp = np.einsum("eqa,eac->eqc", iq["phi_p"], x[iq["dofs_p"]].reshape(-1, 6, 2))
    n_b = np.broadcast_to(n, vf.shape)
    psi = psi_value(config.law, tangential_part(vf, n_b), tangential_part(vp, n_b), dot(vf, n_b))
    interface = float(np.sum(iq["w"] * psi))
    e_t = 0.0
    normals_all = boundary_outward_normals(mesh)
    for tag in ("free_t", "por_t"):
        ids = np.flatnonzero(mesh.boundary_tags == tag)
        if len(ids) == 0:
            continue
        xq, w, phi = boundary_edge_quadrature(mesh, ids)
        nb = np.broadcast_to(normals_all[ids][:, None, :], xq.shape)
        t = eval_vector_data(config.traction_data[tag], xq, nb)
        tris = mesh.boundary_tri[ids]
        rd = dofmap.free if tag == "free_t" else dofmap.porous
        v_nodes = x[rd.u_dofs(dofmap.tri_local[tris])].reshape(-1, 6, 2)
        v = np.einsum("bqa,bac->bqc", phi, v_nodes)
        e_t += float(np.sum(w * dot(t, v)))
    return PowerBreakdown(d_f, d_p + drag, interface, e_f + e_p + e_t, drag)


class AdmissibleSpace:
    """Orthogonal projection onto discretely admissible velocity perturbations.

    A perturbation is admissible when it vanishes on prescribed-velocity dofs
    and satisfies the discrete mass and interface-flux constraints. The
    projection solves ``[[I, C^T], [C, 0]] [d; y] = [d_I; 0]`` over the free
    velocity dofs, factorized once.
    """

    def __init__(self, mesh, dofmap):
        self.mesh = mesh
        self.dofmap = dofmap
        C = constraint_matrix(mesh, dofmap).tocsr()
        vmask = dofmap.velocity_mask()
        vmask[dofmap.constrained_velocity] = False
        self.free_dofs = np.flatnonzero(vmask)
        rows = np.flatnonzero(dofmap.pressure_mask())
        if needs_pressure_datum(mesh):
            # pressure rows minus multiplier rows sum to the (zero) boundary flux
            rows = rows[1:]
        rows = np.concatenate([rows, np.arange(dofmap.lam_slice.start, dofmap.lam_slice.stop)])
        self.C = C[rows][:, self.free_dofs].tocsc()
        nf, nc = self.C.shape[1], self.C.shape[0]
        kkt = sp.bmat([[sp.eye(nf), self.C.T], [self.C, None]], format="csc")
        self._lu = spla.splu(kkt, permc_spec="COLAMD")
        self._nc = nc
        self.full_C = C

    def project(self, d_full):
        """Return the projected full-length vector and the defect ``max|C d_I|`` before projection."""
        d = np.asarray(d_full, float)[self.free_dofs]
        defect = float(np.max(np.abs(self.C @ d), initial=0.0))
        sol = self._lu.solve(np.concatenate([d, np.zeros(self._nc)]))
        out = np.zeros(self.dofmap.total_dofs)
        out[self.free_dofs] = sol[: len(d)]
        return out, defect

    def residual(self, d_full):
        d = np.asarray(d_full, float)[self.free_dofs]
        return float(np.max(np.abs(self.C @ d), initial=0.0))


@dataclass(frozen=True, eq=False)
class StreamField:
    """Polynomial stream function on one region's bounding box.

    ``coeffs[i, j]`` multiplies ``xi**i * eta**j`` with ``xi = (x - x0) / Lx``
    and ``eta = (y - y0) / Ly``.
    """

    coeffs: np.ndarray
    x0: float
    y0: float
    Lx: float
    Ly: float

    def _local(self, points):
        points = np.asarray(points, float)
        return (points[..., 0] - self.x0) / self.Lx, (points[..., 1] - self.y0) / self.Ly

    def psi(self, points):
        return P.polyval2d(*self._local(points), self.coeffs)

    def velocity(self, points):
        """``curl psi = (d psi/dy, -d psi/dx)``."""
        xi, eta = self._local(points)
        u = P.polyval2d(xi, eta, P.polyder(self.coeffs, axis=1)) / self.Ly
        v = -P.polyval2d(xi, eta, P.polyder(self.coeffs, axis=0)) / self.Lx
        return np.stack([u, v], axis=-1)

    def divergence(self, points):
        xi, eta = self._local(points)
        c_xy = P.polyder(P.polyder(self.coeffs, axis=1), axis=0)
        c_yx = P.polyder(P.polyder(self.coeffs, axis=0), axis=1)
        return (P.polyval2d(xi, eta, c_xy) - P.polyval2d(xi, eta, c_yx)) / (self.Lx * self.Ly)


@dataclass(frozen=True, eq=False)
class Perturbation:
    """Admissible velocity increment.

    ``streams`` holds the analytic divergence-free fields per region,
    ``interpolant`` their P2 interpolant (zeroed on prescribed dofs) and
    ``vector`` its projection onto the discrete admissible set, scaled to
    unit max-norm. ``interpolation_defect`` is the constraint residual of
    the interpolant (same scaling), ``residual`` that of ``vector``.
    """

    vector: np.ndarray
    interpolant: np.ndarray
    streams: dict
    interpolation_defect: float
    residual: float

    def velocity(self, dofmap, region):
        rd = dofmap.region(region)
        return self.vector[rd.u_slice].reshape(-1, 2)


def _side_power(tag):
    if tag is None:
        return 1  # the interface: stream function vanishes, tangential slip allowed
    return 2 if tag.endswith("_v") else 0


def random_stream_field(mesh, region, rng):
    """Random quadratic times a bubble that vanishes on the interface and, with
    its gradient, on prescribed-velocity sides."""
    g = mesh.geometry
    x0, x1 = g.x_extent
    if region == FREE:
        ya, yb = g.y_interface, g.y_top
        below, above = None, mesh.segment_tag("top")
        left, right = mesh.segment_tag("left_free"), mesh.segment_tag("right_free")
    else:
        ya, yb = g.y_bottom, g.y_interface
        below, above = mesh.segment_tag("bottom"), None
        left, right = mesh.segment_tag("left_por"), mesh.segment_tag("right_por")
    bx = P.polymul(P.polypow([0.0, 1.0], _side_power(left)), P.polypow([1.0, -1.0], _side_power(right)))
    by = P.polymul(P.polypow([0.0, 1.0], _side_power(below)), P.polypow([1.0, -1.0], _side_power(above)))
    r = rng.standard_normal((3, 3))
    r[np.add.outer(np.arange(3), np.arange(3)) > 2] = 0.0
    return StreamField(convolve2d(np.outer(bx, by), r), x0, ya, x1 - x0, yb - ya)


def admissible_perturbation(mesh, seed=None, dofmap=None, space=None):
    """Random admissible velocity perturbation with unit max-norm.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``.
    """
    rng = np.random.default_rng(seed)
    if space is None:
        space = AdmissibleSpace(mesh, build_dofmap(mesh) if dofmap is None else dofmap)
    dofmap = space.dofmap
    d = np.zeros(dofmap.total_dofs)
    streams = {}
    for rd in (dofmap.free, dofmap.porous):
        streams[rd.region] = random_stream_field(mesh, rd.region, rng)
        d[rd.u_slice] = streams[rd.region].velocity(rd.node_coords).ravel()
    d[dofmap.constrained_velocity] = 0.0
    proj, defect = space.project(d)
    scale = np.max(np.abs(proj))
    if not scale > 0:
        raise ValueError("perturbation vanished after projection")
    proj /= scale
    return Perturbation(proj, d / scale, streams, defect / scale, space.residual(proj))


@dataclass(frozen=True, eq=False)
class GateauxReport:
    derivatives: np.ndarray   # normalized central differences per direction
    step: float
    scale: float

    @property
    def max_abs(self):
        return float(np.max(np.abs(self.derivatives), initial=0.0))


def _velocity_scale(x, dofmap):
    return max(1.0, float(np.max(np.abs(x[dofmap.velocity_mask()]), initial=0.0)))


def gateaux_check(fields, mesh, config, n_dirs=50, h=1e-5, seed=0, dofmap=None,
                  directions=None, quad_level=0):
    """Central-difference directional derivatives of the power.

    Each derivative is divided by ``max|delta| * max(1, |P(v)|)``; a zero
    direction gives exactly zero.

    Parameters
    ----------
    fields : Solution or ndarray
        Point of evaluation (a raw dof vector needs ``dofmap``).
    directions : sequence of ndarray, optional
        Explicit directions; by default ``n_dirs`` random admissible ones.
    """
    x, dm = _fields(fields, dofmap)
    p0 = total_power(x, mesh, config, dm, quad_level)
    scale = max(1.0, abs(p0.total))
    if directions is None:
        space = AdmissibleSpace(mesh, dm)
        directions = [admissible_perturbation(mesh, ss, space=space).vector
                      for ss in np.random.SeedSequence(seed).spawn(n_dirs)]
    out = np.empty(len(directions))
    for i, d in enumerate(directions):
        d = np.asarray(d, float)
        norm = float(np.max(np.abs(d), initial=0.0))
        if norm == 0.0:
            out[i] = 0.0
            continue
        plus = total_power(x + h * d, mesh, config, dm, quad_level).total
        minus = total_power(x - h * d, mesh, config, dm, quad_level).total
        out[i] = (plus - minus) / (2 * h) / (norm * scale)
    return GateauxReport(out, h, scale)


@dataclass(frozen=True, eq=False)
class MinimumPowerReport:
    power: PowerBreakdown
    amplitudes: np.ndarray    # absolute perturbation amplitudes
    gaps: np.ndarray          # (trials, amplitudes) P(v + eps d) - P(v)
    slopes: np.ndarray        # log-log slope of the gap per trial
    defects: np.ndarray       # interpolation defect before projection
    residuals: np.ndarray     # constraint residual after projection
    tolerance: float
    seed: int = 0

    @property
    def violations(self):
        return int(np.sum(self.gaps < -self.tolerance))

    def summary(self):
        return (f"minpower: trials={len(self.gaps)} violations={self.violations} "
                f"min_gap={self.min_gap!r} slope_range=[{float(np.nanmin(self.slopes))!r}, "
                f"{float(np.nanmax(self.slopes))!r}] seed={self.seed}")

    @property
    def min_gap(self):
        return float(np.min(self.gaps))

    def write_csv(self, path, header=None):
        with open(path, "w", newline="") as fh:
            for line in header or ():
                fh.write(f"# {line}\n")
            fh.write(f"# seed {self.seed}\n")
            fh.write(f"# power {self.power.total!r}\n")
            fh.write(f"# violation tolerance {self.tolerance!r}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trial", "amplitude", "power_gap", "slope", "defect", "residual"])
            for i in range(len(self.gaps)):
                for eps, gap in zip(self.amplitudes, self.gaps[i]):
                    w.writerow([i, repr(float(eps)), repr(float(gap)), repr(float(self.slopes[i])),
                                repr(float(self.defects[i])), repr(float(self.residuals[i]))])


def minimum_power_check(solution, mesh, config, n_trials=100, amplitudes=(1e-2, 1e-1, 1.0),
                        seed=0, threads=1, rel_tol=1e-10, quad_level=0):
    """Perturb the discrete solution in random admissible directions and record the power gap.

    Amplitudes are relative to the largest velocity component of the solution.
    A violation is a gap below ``-rel_tol * |P(v)|``.
    """
    dm = solution.dofmap
    x = solution.x
    space = AdmissibleSpace(mesh, dm)
    p0 = total_power(x, mesh, config, dm, quad_level)
    eps = np.asarray(amplitudes, float) * _velocity_scale(x, dm)
    seeds = np.random.SeedSequence(seed).spawn(n_trials)

    def trial(ss):
        pert = admissible_perturbation(mesh, ss, space=space)
        gaps = np.array([total_power(x + e * pert.vector, mesh, config, dm, quad_level).total - p0.total
                         for e in eps])
        with np.errstate(invalid="ignore", divide="ignore"):
            slope = np.polyfit(np.log(eps), np.log(gaps), 1)[0] if np.all(gaps > 0) else np.nan
        return gaps, slope, pert.interpolation_defect, pert.residual

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as ex:
            results = list(ex.map(trial, seeds))
    else:
        results = [trial(ss) for ss in seeds]
    gaps, slopes, defects, residuals = (np.array(r) for r in zip(*results))
    return MinimumPowerReport(p0, eps, gaps, slopes, defects, residuals,
                              rel_tol * abs(p0.total), seed)
