"""Verification suites, callable as library functions and from the command line.

Each suite takes a :class:`~freeporous.config.RunConfig` and returns a
:class:`SuiteResult` holding named pass/fail checks plus any tables it
produced. Nothing here writes files; :mod:`freeporous.cli` does that.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import ModelConfig, apply_velocity_bcs, assemble_system, needs_pressure_datum
from .config import ConfigError
from .mesh import CHANNEL_PLAN, build_channel_mesh
from .oracles import ChannelProblem, fully_developed_traction, interface_residuals, solve_channel
from .power import gateaux_check, minimum_power_check
from .problems import Setup
from .solver import solve

RESIDUAL_TOL = 1e-9
FLUX_TOL = 1e-9
MASS_TOL = 1e-10
GATEAUX_TOL = 1e-6
UNIQUENESS_TOL = 1e-8
SLIP_TOL = 1e-3
MIN_ORDER = 1.0
SLOPE_TARGET, SLOPE_TOL = 2.0, 0.05
MINPOWER_REL_TOL = 1e-10


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""


@dataclass(eq=False)
class SuiteResult:
    suite: str
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)   # name -> (columns, rows)
    elapsed: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def add(self, name, value, tolerance, passed, detail=""):
        self.checks.append(Check(name, float(value), float(tolerance), bool(passed), detail))

    def write_csv(self, path, header=()):
        with open(path, "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["suite", "check", "value", "tolerance", "passed", "detail"])
            for c in self.checks:
                w.writerow([self.suite, c.name, repr(c.value), repr(c.tolerance),
                            "pass" if c.passed else "fail", c.detail])


def _scaled_rows(rc, nx):
    ratio = nx / rc.nx
    return max(1, round(rc.ny_free * ratio)), max(1, round(rc.ny_por * ratio))


def channel_problem(rc, model="brinkman"):
    g = rc.geometry
    return ChannelProblem(g.free_height, g.porous_height, rc.pressure_gradient, rc.fluid, rc.porous,
                          rc.law, model=model, alpha=rc.alpha if model == "darcy" else None)


def setup_from_config(rc, nx=None):
    """Mesh and model configuration described by a run configuration.

    Velocity-tagged sides are no-slip walls. Traction-tagged sides carry
    either a constant traction or the traction of the fully developed
    channel flow.
    """
    nx = rc.nx if nx is None else int(nx)
    ny_free, ny_por = (rc.ny_free, rc.ny_por) if nx == rc.nx else _scaled_rows(rc, nx)
    mesh = build_channel_mesh(rc.geometry, nx, ny_free, ny_por, rc.plan)
    channel = None
    if isinstance(rc.traction, str):
        channel = solve_channel(channel_problem(rc))
        t = fully_developed_traction(channel, x_ref=rc.geometry.x_extent[0],
                                     y_interface=rc.geometry.y_interface)
    else:
        t = np.asarray(rc.traction, float)
    zero = np.zeros(2)
    config = ModelConfig(rc.fluid, rc.porous, rc.law, b_free=rc.b_free, b_por=rc.b_por,
                         velocity_data={"free_v": zero, "por_v": zero},
                         traction_data={"free_t": t, "por_t": t})
    return Setup(mesh, config, channel)


def _require_channel(rc, suite):
    problems = []
    if rc.plan != CHANNEL_PLAN:
        problems.append("the channel boundary plan")
    if not isinstance(rc.traction, str):
        problems.append("traction = channel")
    if np.any(rc.b_free) or np.any(rc.b_por):
        problems.append("zero body forces")
    if problems:
        raise ConfigError(f"{rc.path}: suite {suite!r} compares against the channel oracle and needs "
                          + ", ".join(problems))


def _solve_checks(result, sol, label=""):
    tag = f"{label} " if label else ""
    result.add(f"{tag}residual_norm", sol.residual_norm, RESIDUAL_TOL, sol.residual_norm < RESIDUAL_TOL)
    result.add(f"{tag}interface_flux", sol.interface_flux_residual, FLUX_TOL,
               sol.interface_flux_residual < FLUX_TOL)


def run_minpower(rc, seed=None, threads=None):
    t0 = time.perf_counter()
    seed = rc.seed if seed is None else seed
    s = setup_from_config(rc)
    sol = s.solve()
    rep = minimum_power_check(sol, s.mesh, s.config, n_trials=rc.trials, amplitudes=rc.amplitudes,
                              seed=seed, threads=threads or rc.threads, rel_tol=MINPOWER_REL_TOL)
    res = SuiteResult("minpower")
    _solve_checks(res, sol)
    res.add("violations", rep.violations, 0, rep.violations == 0,
            f"{len(rep.gaps)} trials x {len(rep.amplitudes)} amplitudes, tol {rep.tolerance:.3e}")
    dev = float(np.nanmax(np.abs(rep.slopes - SLOPE_TARGET))) if np.all(np.isfinite(rep.slopes)) else np.inf
    res.add("slope_deviation", dev, SLOPE_TOL, dev <= SLOPE_TOL, "max |slope - 2| over trials")
    res.add("admissibility_residual", float(np.max(rep.residuals)), 1e-10,
            float(np.max(rep.residuals)) < 1e-10, "constraint residual of projected perturbations")
    res.extras["report"] = rep
    res.elapsed = time.perf_counter() - t0
    return res


def run_gradient(rc, seed=None):
    t0 = time.perf_counter()
    seed = rc.seed if seed is None else seed
    s = setup_from_config(rc)
    sol = s.solve()
    rep = gateaux_check(sol, s.mesh, s.config, n_dirs=rc.directions, seed=seed)
    res = SuiteResult("gradient")
    _solve_checks(res, sol)
    res.add("max_gateaux_derivative", rep.max_abs, GATEAUX_TOL, rep.max_abs < GATEAUX_TOL,
            f"{len(rep.derivatives)} directions, h={rep.step}")
    res.tables["gateaux"] = (["direction", "derivative"],
                             [[i, repr(float(d))] for i, d in enumerate(rep.derivatives)])
    res.extras["report"] = rep
    res.elapsed = time.perf_counter() - t0
    return res


def run_uniqueness(rc, seed=None):
    """Two solves with different dof orderings and pressure datums."""
    t0 = time.perf_counter()
    seed = rc.seed if seed is None else seed
    s = setup_from_config(rc)
    sys0 = assemble_system(s.mesh, s.config)
    dm = sys0.dofmap
    if needs_pressure_datum(s.mesh):
        datum_a, datum_b = dm.free.p_offset, dm.porous.p_offset + dm.porous.n_vertices - 1
    else:
        datum_a = datum_b = None
    sol_a = solve(apply_velocity_bcs(sys0, s.mesh, s.config, datum_a))
    perm = np.random.default_rng(seed).permutation(dm.total_dofs)
    sol_b = solve(apply_velocity_bcs(sys0, s.mesh, s.config, datum_b), permutation=perm)
    res = SuiteResult("uniqueness")
    _solve_checks(res, sol_a, "a")
    _solve_checks(res, sol_b, "b")
    vmask = dm.velocity_mask()
    dv = float(np.max(np.abs(sol_a.x[vmask] - sol_b.x[vmask])))
    res.add("velocity_difference", dv, UNIQUENESS_TOL, dv < UNIQUENESS_TOL)
    dpf = sol_b.p_free - sol_a.p_free
    dpp = sol_b.p_por - sol_a.p_por
    dlam = sol_b.lam - sol_a.lam
    cf, cp = float(np.mean(dpf)), float(np.mean(dpp))
    for name, d, c in (("free", dpf, cf), ("porous", dpp, cp)):
        dev = float(np.max(np.abs(d - c)))
        res.add(f"pressure_{name}_nonconstant", dev, UNIQUENESS_TOL, dev < UNIQUENESS_TOL,
                f"shift {c!r}")
    res.add("pressure_shift_mismatch", abs(cf - cp), UNIQUENESS_TOL, abs(cf - cp) < UNIQUENESS_TOL,
            "free and porous shifts must agree")
    dl = float(np.max(np.abs(dlam + cf), initial=0.0))
    res.add("multiplier_shift_mismatch", dl, UNIQUENESS_TOL, dl < UNIQUENESS_TOL,
            "interface multiplier shifts by minus the pressure constant")
    res.extras.update(shift=cf, solutions=(sol_a, sol_b), datums=(datum_a, datum_b))
    res.elapsed = time.perf_counter() - t0
    return res


def run_jump(rc):
    """Mass conservation and interface jump conditions of one solve."""
    t0 = time.perf_counter()
    s = setup_from_config(rc)
    sol = s.solve()
    ir = interface_residuals(sol, s.mesh, s.config)
    res = SuiteResult("jump")
    _solve_checks(res, sol)
    res.add("mass_residual", sol.mass_residual, MASS_TOL, sol.mass_residual < MASS_TOL)
    res.add("r1_weighted", ir.r1_weighted, FLUX_TOL, ir.r1_weighted < FLUX_TOL,
            "multiplier-weighted normal-velocity jump")
    res.tables["interface_residuals"] = _residual_table(ir)
    res.extras.update(residuals=ir, solution=sol, setup=s)
    res.elapsed = time.perf_counter() - t0
    return res


def _residual_table(ir):
    return (["edge", "x_mid", "r1", "r2", "r3", "r4"],
            [[e, repr(float(x))] + [repr(float(v)) for v in r]
             for e, (x, r) in enumerate(zip(ir.x_mid, ir.per_edge))])


def slip_error(sol, setup):
    """Max relative deviation of the free-side interface velocity from the oracle slip ``u_B``."""
    rd = sol.dofmap.free
    on = np.abs(rd.node_coords[:, 1] - setup.mesh.geometry.y_interface) < 1e-12
    u_B = setup.channel.u_B
    return float(np.max(np.abs(sol.v_free[on, 0] - u_B)) / abs(u_B))


def fem_profile(sol, mesh, x=None):
    """FEM horizontal velocity at P2 nodes on the vertical line through ``x`` (default mid-channel).

    Returns ``(y, u, region)``; interface nodes appear once for each side.
    """
    x0, x1 = mesh.geometry.x_extent
    x = 0.5 * (x0 + x1) if x is None else x
    ys, us, sides = [], [], []
    for rd, v in ((sol.dofmap.porous, sol.v_por), (sol.dofmap.free, sol.v_free)):
        sel = np.flatnonzero(np.abs(rd.node_coords[:, 0] - x) < 1e-12)
        order = sel[np.argsort(rd.node_coords[sel, 1], kind="stable")]
        ys.append(rd.node_coords[order, 1])
        us.append(v[order, 0])
        sides.append(np.full(len(order), rd.region))
    return np.concatenate(ys), np.concatenate(us), np.concatenate(sides)


def run_channel(rc, nx=None):
    """FEM channel solve against the Brinkman-branch oracle at the finest level."""
    _require_channel(rc, "channel")
    t0 = time.perf_counter()
    nx = rc.levels[-1] if nx is None else nx
    s = setup_from_config(rc, nx)
    sol = s.solve()
    res = SuiteResult("channel")
    _solve_checks(res, sol)
    err = slip_error(sol, s)
    res.add("slip_relative_error", err, SLIP_TOL, err < SLIP_TOL, f"nx={nx}, u_B={s.channel.u_B!r}")
    y, u, side = fem_profile(sol, s.mesh)
    yi = rc.geometry.y_interface
    u_ref = np.array([s.channel.velocity(yy - yi, sd) for yy, sd in zip(y, side)])
    res.add("profile_max_error", float(np.max(np.abs(u - u_ref))), np.inf, True, "informational")
    rows = [[repr(float(a)), repr(float(b)), repr(float(c))] for a, b, c in zip(y, u, u_ref)]
    res.tables["profile"] = (["y", "u_fem", "u_oracle"], rows)
    curves = [("FEM (mid-channel)", y, u),
              ("Stokes-Brinkman oracle", s.channel.y + yi, s.channel.u)]
    if rc.alpha:
        darcy = solve_channel(channel_problem(rc, "darcy"))
        curves.append(("Darcy + Beavers-Joseph", darcy.y + yi, darcy.u))
        res.tables["branches"] = (
            ["model", "u_B", "Q", "u_por_interface", "free_side_mismatch"],
            [[m.problem.model, repr(m.u_B), repr(m.Q), repr(m.u_por_interface),
              repr(m.free_side_mismatch)] for m in (s.channel, darcy)])
    res.extras.update(curves=curves, channel=s.channel, solution=sol, setup=s)
    res.elapsed = time.perf_counter() - t0
    return res


def observed_orders(h, e):
    h, e = np.asarray(h, float), np.asarray(e, float)
    return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])


def run_convergence(rc):
    """Interface residuals and slip error over the configured mesh levels."""
    _require_channel(rc, "convergence")
    t0 = time.perf_counter()
    res = SuiteResult("convergence")
    rows, r3, r4, slip = [], [], [], []
    for nx in rc.levels:
        s = setup_from_config(rc, nx)
        sol = s.solve()
        _solve_checks(res, sol, f"nx={nx}")
        ir = interface_residuals(sol, s.mesh, s.config)
        err = slip_error(sol, s)
        r3.append(ir.totals["r3"])
        r4.append(ir.totals["r4"])
        slip.append(err)
        rows.append([nx] + [repr(ir.totals[k]) for k in ("r1", "r2", "r3", "r4")]
                    + [repr(ir.r1_weighted), repr(err)])
    h = 1.0 / np.asarray(rc.levels, float)
    o3, o4 = observed_orders(h, r3), observed_orders(h, r4)
    res.add("order_r3", float(np.min(o3)), MIN_ORDER, np.min(o3) >= MIN_ORDER,
            "orders " + " ".join(f"{o:.3f}" for o in o3))
    res.add("order_r4", float(np.min(o4)), MIN_ORDER, np.min(o4) >= MIN_ORDER,
            "orders " + " ".join(f"{o:.3f}" for o in o4))
    res.add("slip_relative_error_finest", slip[-1], SLIP_TOL, slip[-1] < SLIP_TOL,
            f"nx={rc.levels[-1]}")
    res.tables["convergence"] = (["nx", "r1", "r2", "r3", "r4", "r1_weighted", "slip_rel_error"], rows)
    res.extras.update(r3=np.array(r3), r4=np.array(r4), slip=np.array(slip), orders=(o3, o4))
    res.elapsed = time.perf_counter() - t0
    return res


def run_suite(name, rc, seed=None, threads=None):
    if name == "minpower":
        return run_minpower(rc, seed, threads)
    if name == "gradient":
        return run_gradient(rc, seed)
    if name == "uniqueness":
        return run_uniqueness(rc, seed)
    if name == "jump":
        return run_jump(rc)
    if name == "channel":
        return run_channel(rc)
    if name == "convergence":
        return run_convergence(rc)
    raise ValueError(f"unknown suite {name!r}")
