"""Reference solutions for rectilinear channel flow over a porous bed, and
interface diagnostics for finite element solutions.

Coordinates: ``x`` along the channel, ``y`` upward, interface at ``y = 0``,
free layer ``0 < y < h`` under an impervious wall, porous layer
``-H < y < 0``. A negative pressure gradient ``G = dp/dx`` drives flow in +x.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .core import FluidProps, InterfaceLaw, PorousProps, dot, psi_gradients, rot90, sym, tangential_part
from .elements import barycentric, p2_gradients, p2_values, triangle_geometry
from .assembly import interface_quadrature, multiplier_element_matrices

VISCOSITY_NOTE = "porous-side slip viscosity mu' taken equal to mu"


@dataclass(frozen=True)
class ChannelProblem:
    """Rectilinear channel over a porous layer.

    ``alpha`` is the Beavers-Joseph constant, required by the Darcy branch
    which imposes the Beavers-Joseph slip relation directly.
    """

    h: float
    H: float
    G: float
    fluid: FluidProps
    porous: PorousProps
    law: InterfaceLaw
    model: str = "brinkman"
    alpha: float | None = None

    def __post_init__(self):
        if not (self.h > 0 and self.H > 0):
            raise ValueError("channel heights h and H must be positive")
        if not self.porous.is_isotropic:
            raise ValueError("channel oracle requires isotropic permeability K = k I")
        if self.model not in ("darcy", "brinkman"):
            raise ValueError(f"unknown porous model {self.model!r}")
        if self.model == "darcy" and not (self.alpha and self.alpha > 0):
            raise ValueError("darcy branch needs the Beavers-Joseph constant alpha > 0")

    @property
    def k(self):
        return float(self.porous.K[0, 0])

    @property
    def darcy_discharge(self):
        return -self.k * self.G / self.fluid.mu


@dataclass(frozen=True, eq=False)
class ChannelSolution:
    """Velocity profile ``u(y)`` with interface data.

    ``u_B`` is the free-side velocity at ``y = 0+``, ``Q`` the Darcy discharge
    velocity ``-(k/mu) G`` and ``u_por_interface`` the porous-side tangential
    velocity at ``y = 0-``.
    """

    problem: ChannelProblem
    y: np.ndarray
    u: np.ndarray
    region: np.ndarray
    u_B: float
    Q: float
    u_por_interface: float
    du_free: float
    du_por: float
    coefficients: np.ndarray
    free_side_mismatch: float = 0.0
    notes: tuple = field(default=(VISCOSITY_NOTE,))

    def velocity(self, y, side=None):
        """Profile at ``y``; ``side`` picks the branch at ``y = 0`` (default free)."""
        return _evaluate(self.problem, self.coefficients, np.asarray(y, float), 0, side)

    def shear_rate(self, y, side=None):
        return _evaluate(self.problem, self.coefficients, np.asarray(y, float), 1, side)


# Beds thinner than this many Brinkman lengths use the hyperbolic basis, which
# stays well conditioned as k grows; thicker beds use decaying exponentials.
_HYPERBOLIC_MAX = 30.0


def _porous_basis(problem, y, deriv):
    """Particular solution and two homogeneous solutions of ``u'' - u/k = G/mu``.

    Returns ``(p, f1, f2)`` (or their derivatives) at ``y``.
    """
    r = np.sqrt(problem.k)
    H = problem.H
    g = problem.G / problem.fluid.mu
    if H / r <= _HYPERBOLIC_MAX:
        z = (y + H) / r
        if deriv == 0:
            # g k (cosh z - 1) without cancellation
            return 2 * g * r * r * np.sinh(z / 2) ** 2, r * np.sinh(z), np.cosh(z)
        return g * r * np.sinh(z), np.cosh(z), np.sinh(z) / r
    e1 = np.exp(np.minimum(y, 0.0) / r)
    e2 = np.exp(-(y + H) / r)
    if deriv == 0:
        return np.full_like(e1, problem.darcy_discharge), e1, e2
    return np.zeros_like(e1), e1 / r, -e2 / r


def _evaluate(problem, c, y, deriv, side=None):
    """Profile (deriv=0) or du/dy (deriv=1); porous branch for y < 0 unless ``side`` is given."""
    mu, G = problem.fluid.mu, problem.G
    free = G / (2 * mu) * y ** 2 + c[0] * y + c[1] if deriv == 0 else G / mu * y + c[0]
    if problem.model == "darcy":
        por = np.full_like(y, problem.darcy_discharge) if deriv == 0 else np.zeros_like(y)
    else:
        p, f1, f2 = _porous_basis(problem, np.minimum(y, 0.0), deriv)
        por = p + c[2] * f1 + c[3] * f2
    if side == "free":
        return free
    if side == "porous":
        return por
    return np.where(y >= 0, free, por)


def _grid(problem, n):
    y_por = np.linspace(-problem.H, 0.0, n)
    y_free = np.linspace(0.0, problem.h, n)
    y = np.concatenate([y_por, y_free])
    region = np.array(["porous"] * n + ["free"] * n)
    return y, region


def solve_channel(problem, n_samples=101):
    """Closed-form channel profile for the Darcy or Brinkman porous model."""
    mu, G, h, H = problem.fluid.mu, problem.G, problem.h, problem.H
    law = problem.law
    Q = problem.darcy_discharge
    if problem.model == "darcy":
        s = np.sqrt(problem.k) / problem.alpha
        # u(y) = G/(2mu) y^2 + A y + u_B with u(h) = 0 and u_B - Q = s A
        A = -(G / (2 * mu) * h ** 2 + Q) / (h + s)
        u_B = Q + s * A
        coeffs = np.array([A, u_B])
        # porous side of the generalized conditions with zero porous extra stress:
        # 0 = -2 (a12 u_B + a22 u_p)
        u_p = -law.a12 * u_B / law.a22 + 0.0 if law.a22 > 0 else Q
        mismatch = mu * A - 2 * (law.a11 * u_B + law.a12 * u_p)
        du_por = 0.0
    else:
        k = problem.k
        a11, a12, a22 = law.a11, law.a12, law.a22
        at_wall = [float(v) for v in _porous_basis(problem, np.array(-H), 0)]
        at_0 = [float(v) for v in _porous_basis(problem, np.array(0.0), 0)]
        d_0 = [float(v) for v in _porous_basis(problem, np.array(0.0), 1)]
        # unknowns: D1, D0 (free), C1, C2 (porous); rows: top wall, bottom wall,
        # free and porous tangential interface conditions
        M = np.array([
            [h, 1.0, 0.0, 0.0],
            [0.0, 0.0, at_wall[1], at_wall[2]],
            [mu, -2 * a11, -2 * a12 * at_0[1], -2 * a12 * at_0[2]],
            [0.0, 2 * a12, mu * d_0[1] + 2 * a22 * at_0[1], mu * d_0[2] + 2 * a22 * at_0[2]],
        ])
        rhs = np.array([
            -G / (2 * mu) * h ** 2,
            -at_wall[0],
            2 * a12 * at_0[0],
            -(mu * d_0[0] + 2 * a22 * at_0[0]),
        ])
        try:
            cond = np.linalg.cond(M)
            if not np.isfinite(cond) or cond > 1e14:
                raise np.linalg.LinAlgError(f"condition number {cond:.3g}")
            coeffs = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError as exc:
            raise ValueError(
                f"singular channel system for k={k}, h={h}, H={H}, mu={mu}, "
                f"law=({a11}, {a12}, {a22}): {exc}") from exc
        u_p = at_0[0] + coeffs[2] * at_0[1] + coeffs[3] * at_0[2]
        du_por = d_0[0] + coeffs[2] * d_0[1] + coeffs[3] * d_0[2]
        u_B = coeffs[1]
        mismatch = 0.0
    y, region = _grid(problem, n_samples)
    sol = ChannelSolution(problem, y, np.zeros_like(y), region, float(u_B), float(Q), float(u_p),
                          float(coeffs[0]), float(du_por), coeffs, float(mismatch))
    u = np.where(region == "free", sol.velocity(y, "free"), sol.velocity(y, "porous"))
    object.__setattr__(sol, "u", u)
    return sol


def _rk4_propagator(M, c, step):
    """RK4 update matrix for ``z' = M z + c`` written on the augmented state (z, 1)."""
    A = np.zeros((3, 3))
    A[:2, :2] = M
    A[:2, 2] = c
    hA = step * A
    I = np.eye(3)
    return I + hA + hA @ hA / 2 + hA @ hA @ hA / 6 + hA @ hA @ hA @ hA / 24


def _march(R, z0, blocks, per_block):
    Rb = np.linalg.matrix_power(R, per_block)
    out = [z0]
    for _ in range(blocks):
        out.append(Rb @ out[-1])
    return np.array(out)


def shoot_channel(problem, n_steps=10 ** 6, n_samples=101):
    """Independent reference: RK4 shooting with ``n_steps`` steps in total.

    Linear superposition of shots fixes the unknown initial data. Intended
    for moderate ``H / sqrt(k)`` where the growing porous mode stays
    representable.
    """
    mu, G, h, H = problem.fluid.mu, problem.G, problem.h, problem.H
    law = problem.law
    blocks = n_samples - 1
    per_block = max(1, n_steps // (2 * blocks))
    M_free = np.array([[0.0, 1.0], [0.0, 0.0]])
    c_free = np.array([0.0, G / mu])
    R_f = _rk4_propagator(M_free, c_free, h / (blocks * per_block))

    def run_free(u0, du0):
        return _march(R_f, np.array([u0, du0, 1.0]), blocks, per_block)

    if problem.model == "darcy":
        Q = problem.darcy_discharge
        s = np.sqrt(problem.k) / problem.alpha
        end0 = run_free(Q, 0.0)[-1, 0]
        end1 = run_free(Q + s, 1.0)[-1, 0]
        A = -end0 / (end1 - end0)
        zf = run_free(Q + s * A, A)
        por = np.full(n_samples, Q)
    else:
        k = problem.k
        M_por = np.array([[0.0, 1.0], [1.0 / k, 0.0]])
        R_p = _rk4_propagator(M_por, c_free, H / (blocks * per_block))
        Rp_total = np.linalg.matrix_power(np.linalg.matrix_power(R_p, per_block), blocks)
        Rf_total = np.linalg.matrix_power(np.linalg.matrix_power(R_f, per_block), blocks)
        # unknowns: porous slope at y=-H, free value and slope at y=0+
        P = Rp_total
        F = Rf_total
        a11, a12, a22 = law.a11, law.a12, law.a22
        Msys = np.array([
            [0.0, F[0, 0], F[0, 1]],
            [-2 * a12 * P[0, 1], -2 * a11, mu],
            [mu * P[1, 1] + 2 * a22 * P[0, 1], 2 * a12, 0.0],
        ])
        rhs = np.array([
            -F[0, 2],
            2 * a12 * P[0, 2],
            -(mu * P[1, 2] + 2 * a22 * P[0, 2]),
        ])
        s1, uf0, duf0 = np.linalg.solve(Msys, rhs)
        por = _march(R_p, np.array([0.0, s1, 1.0]), blocks, per_block)[:, 0]
        zf = run_free(uf0, duf0)
    y, region = _grid(problem, n_samples)
    return y, np.concatenate([por, zf[:, 0]]), region


def traction(stress, n):
    """Traction ``T n`` of a (batch of) stress tensor(s) on unit normal(s) ``n``."""
    return np.einsum("...ij,...j->...i", np.asarray(stress, float), np.asarray(n, float))


def fully_developed_stress(channel, points, x_ref=0.0, p_ref=0.0):
    """Cauchy stress of the fully developed channel flow at ``points`` (..., 2)."""
    points = np.asarray(points, float)
    x, y = points[..., 0], points[..., 1]
    p = p_ref + channel.problem.G * (x - x_ref)
    tau = channel.problem.fluid.mu * channel.shear_rate(y)
    T = np.zeros(points.shape[:-1] + (2, 2))
    T[..., 0, 0] = -p
    T[..., 1, 1] = -p
    T[..., 0, 1] = tau
    T[..., 1, 0] = tau
    return T


def fully_developed_traction(channel, x_ref=0.0, p_ref=0.0, y_interface=0.0):
    """Traction callable ``t(points, normals)`` matching the fully developed flow.

    The channel coordinate is shifted so the interface sits at ``y_interface``.
    """

    def t(points, normals):
        pts = np.array(points, float, copy=True)
        pts[..., 1] -= y_interface
        return traction(fully_developed_stress(channel, pts, x_ref, p_ref), normals)

    return t


@dataclass(frozen=True, eq=False)
class InterfaceResiduals:
    """Interface-condition residuals of a discrete solution.

    ``per_edge`` holds, for every interface edge, the L2 norms of

    r1. ``v_f.n_f + v_p.n_p``
    r2. ``n_f.T_f n_f + dPsi/dv_n - n_p.T_p n_p``
    r3. ``s.T_f^extra n_f + s.dPsi/dvt_f``
    r4. ``s.T_p^extra n_p + s.dPsi/dvt_p``
    """

    x_mid: np.ndarray
    per_edge: np.ndarray
    totals: dict
    r1_weighted: float

    def write_csv(self, path, header=None):
        with open(path, "w", newline="") as fh:
            for line in header or ():
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["edge", "x_mid", "r1", "r2", "r3", "r4"])
            for e, (xm, r) in enumerate(zip(self.x_mid, self.per_edge)):
                w.writerow([e, repr(float(xm))] + [repr(float(v)) for v in r])


def _side_fields(mesh, rd, tris, x, vel, pres, tri_local):
    coords = mesh.vertices[mesh.triangles[tris]]
    lam = barycentric(coords, x)
    _, grad_lam = triangle_geometry(coords)
    lt = tri_local[tris]
    nodes = rd.nodes[lt]
    v_nodes = vel[nodes]                               # (E, 6, 2)
    phi = p2_values(lam)                               # (E, Q, 6)
    grad = p2_gradients(lam, grad_lam)                 # (E, Q, 6, 2)
    v = np.einsum("eqa,eac->eqc", phi, v_nodes)
    L = np.einsum("eqai,eac->eqci", grad, v_nodes)     # dv_c/dx_i
    p = np.einsum("eqk,ek->eq", lam, pres[nodes[:, :3]])
    return v, sym(L), p


def interface_residuals(solution, mesh, config):
    """Pointwise interface-condition residuals, reconstructed from the discrete fields."""
    dm = solution.dofmap
    iq = interface_quadrature(mesh, dm)
    mu = config.fluid.mu
    law = config.law
    x, w = iq["x"], iq["w"]
    n = iq["n"][:, None, :]
    s = iq["s"][:, None, :]
    vf, Df, pf = _side_fields(mesh, dm.free, mesh.interface_free_tri, x,
                              solution.v_free, solution.p_free, dm.tri_local)
    vp, Dp, pp = _side_fields(mesh, dm.porous, mesh.interface_por_tri, x,
                              solution.v_por, solution.p_por, dm.tri_local)
    n_b = np.broadcast_to(n, vf.shape)
    s_b = np.broadcast_to(s, vf.shape)
    vn = dot(vf, n_b)
    gf, gp, gn = psi_gradients(law, tangential_part(vf, n_b), tangential_part(vp, n_b), vn)
    Tf_extra = 2 * mu * Df
    Tp_extra = 2 * mu * Dp
    eye = np.eye(2)
    Tf = -pf[..., None, None] * eye + Tf_extra
    Tp = -pp[..., None, None] * eye + Tp_extra
    r = np.stack([
        vn + dot(vp, -n_b),
        dot(n_b, traction(Tf, n_b)) + gn - dot(-n_b, traction(Tp, -n_b)),
        dot(s_b, traction(Tf_extra, n_b)) + dot(s_b, gf),
        dot(s_b, traction(Tp_extra, -n_b)) + dot(s_b, gp),
    ], axis=-1)                                          # (E, Q, 4)
    per_edge = np.sqrt(np.einsum("eq,eqk->ek", w, r ** 2))
    totals = {f"r{i + 1}": float(np.sqrt(np.sum(per_edge[:, i] ** 2))) for i in range(4)}
    Mf, Mp = multiplier_element_matrices(iq)
    flux = np.zeros(dm.total_dofs)
    np.add.at(flux, iq["lam_dofs"], np.einsum("eia,ea->ei", Mf, solution.x[iq["dofs_f"]])
              + np.einsum("eia,ea->ei", Mp, solution.x[iq["dofs_p"]]))
    r1w = float(np.max(np.abs(flux[dm.lam_slice]), initial=0.0))
    x_mid = mesh.vertices[mesh.interface_edges].mean(axis=1)[:, 0]
    return InterfaceResiduals(x_mid, per_edge, totals, r1w)


def write_profile_csv(channel, path, header=None):
    with open(path, "w", newline="") as fh:
        for line in list(header or ()) + [f"note: {n}" for n in channel.notes]:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y", "u", "region"])
        for y, u, reg in zip(channel.y, channel.u, channel.region):
            w.writerow([repr(float(y)), repr(float(u)), reg])


def plot_profile_svg(path, curves, title="channel velocity profile"):
    """Static SVG line chart of one or more ``(label, y, u)`` profiles."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "freeporous", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 4))
        for label, y, u in curves:
            ax.plot(u, y, label=label)
        ax.axhline(0.0, color="0.6", lw=0.8, ls="--")
        ax.set_xlabel("u [m/s]")
        ax.set_ylabel("y [m]")
        ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
