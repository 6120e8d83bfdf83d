import itertools

import numpy as np
import pytest
import sympy

from freeporous.assembly import (ModelConfig, apply_velocity_bcs, assemble_system, build_dofmap,
                                 constraint_matrix, drag_element_matrices, needs_pressure_datum,
                                 viscous_element_matrices)
from freeporous.core import FluidProps, InterfaceLaw, PorousProps
from freeporous.elements import TRI_POINTS, TRI_WEIGHTS, p2_gradients, p2_values, triangle_geometry
from freeporous.mesh import CHANNEL_PLAN, ENCLOSED_PLAN, DomainGeometry, build_channel_mesh
from freeporous.problems import cavity_setup
from freeporous.solver import solve

GEOM = DomainGeometry((0.0, 1.0), 0.0, 0.5, -0.5)
ZERO = (0.0, 0.0)
NO_LAW = InterfaceLaw(0.0, 0.0, 0.0)


def _config(law=NO_LAW, k=1.0, mu=1.0, traction=True, **kw):
    fluid = FluidProps(mu)
    porous = PorousProps.isotropic(0.4, k)
    t = {"free_t": ZERO, "por_t": ZERO} if traction else {}
    return ModelConfig(fluid, porous, law, velocity_data={"free_v": ZERO, "por_v": ZERO},
                       traction_data=t, **kw)


def _sympy_viscous(verts, mu):
    """Exact element matrix of int 2 mu D(u):D(v) on one P2 triangle."""
    x, y = sympy.symbols("x y")
    (x0, y0), (x1, y1), (x2, y2) = [[sympy.Rational(c) for c in v] for v in verts]
    det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    l1 = ((x - x0) * (y2 - y0) - (x2 - x0) * (y - y0)) / det
    l2 = ((x1 - x0) * (y - y0) - (x - x0) * (y1 - y0)) / det
    lam = [1 - l1 - l2, l1, l2]
    basis = [lam[i] * (2 * lam[i] - 1) for i in range(3)]
    basis += [4 * lam[i] * lam[j] for i, j in ((0, 1), (1, 2), (2, 0))]
    s, t = sympy.symbols("s t")
    sub = {x: x0 + s * (x1 - x0) + t * (x2 - x0), y: y0 + s * (y1 - y0) + t * (y2 - y0)}

    def integrate(expr):
        e = sympy.expand(expr.subs(sub))
        return sympy.integrate(sympy.integrate(e, (t, 0, 1 - s)), (s, 0, 1)) * abs(det)

    fields = []
    for phi in basis:
        for c in range(2):
            u = [phi if c == 0 else 0, phi if c == 1 else 0]
            grad = [[sympy.diff(u[i], v) for v in (x, y)] for i in range(2)]
            fields.append([[(grad[i][j] + grad[j][i]) / 2 for j in range(2)] for i in range(2)])
    K = np.zeros((12, 12))
    for a, b in itertools.product(range(12), repeat=2):
        if b < a:
            K[a, b] = K[b, a]
            continue
        ddot = sum(fields[a][i][j] * fields[b][i][j] for i in range(2) for j in range(2))
        K[a, b] = float(integrate(2 * mu * ddot))
    return K


def _fem_viscous(verts, mu):
    coords = np.array([[float(sympy.Rational(c)) for c in v] for v in verts])[None]
    area, grad_lam = triangle_geometry(coords)
    grad = p2_gradients(TRI_POINTS, grad_lam)
    w = area[:, None] * TRI_WEIGHTS[None, :]
    return viscous_element_matrices(w, grad, mu)[0]


@pytest.mark.parametrize("verts", [
    [(0, 0), (1, 0), (0, 1)],
    [("1/2", "1/4"), ("3/2", "0"), ("1/3", "1")],
])
def test_viscous_matrix_matches_exact_integration(verts):
    np.testing.assert_allclose(_fem_viscous(verts, 1.5), _sympy_viscous(verts, 1.5),
                               rtol=0, atol=1e-13)


def _interp(dofmap, region, fn):
    rd = dofmap.region(region)
    v = np.zeros(dofmap.total_dofs)
    v[rd.u_slice] = fn(rd.node_coords).ravel()
    return v


def _translation(c):
    return lambda x: np.broadcast_to(np.asarray(c, float), x.shape)


def _rotation(x):
    return np.column_stack([-x[:, 1], x[:, 0]])


def test_rigid_motions_carry_no_viscous_energy():
    mesh = build_channel_mesh(GEOM, 3, 2, 2)
    sys0 = assemble_system(mesh, _config(k=1e300))
    dm = sys0.dofmap
    for region in ("free", "porous"):
        for fn in (_translation((1.0, -2.0)), _rotation):
            v = _interp(dm, region, fn)
            Av = sys0.A0 @ v
            assert np.max(np.abs(Av[dm.velocity_mask()])) < 1e-12


def test_large_permeability_reduces_porous_element_to_stokes():
    coords = np.array([[[0.0, 0.0], [0.5, 0.1], [0.2, 0.7]]])
    area, grad_lam = triangle_geometry(coords)
    w = area[:, None] * TRI_WEIGHTS[None, :]
    visc = viscous_element_matrices(w, p2_gradients(TRI_POINTS, grad_lam), 1.0)
    drag = drag_element_matrices(w, p2_values(TRI_POINTS), 1.0, np.eye(2) / 1e12)
    np.testing.assert_allclose(visc + drag, visc, rtol=0, atol=1e-12 * np.abs(visc).max())


def test_drag_energy_of_translation():
    mesh = build_channel_mesh(GEOM, 4, 2, 2)
    mu, k = 2.0, 0.25
    sys0 = assemble_system(mesh, _config(k=k, mu=mu))
    c = np.array([0.6, -0.8])
    v = _interp(sys0.dofmap, "porous", _translation(c))
    # viscous part vanishes, drag is mu/k |c|^2 times the porous area
    assert v @ (sys0.A0 @ v) == pytest.approx(mu / k * (c @ c) * 0.5, rel=1e-13)
    ps = sys0.dofmap.porous.u_slice
    Ap = sys0.A0[ps, ps].toarray()
    assert np.linalg.eigvalsh(Ap).min() > -1e-10 * np.abs(Ap).max()


def test_zero_law_leaves_only_multiplier_coupling():
    mesh = build_channel_mesh(GEOM, 3, 2, 2)
    sys0 = assemble_system(mesh, _config())
    dm = sys0.dofmap
    A = sys0.A0.tocsr()
    assert A[dm.free.u_slice, dm.porous.u_slice].count_nonzero() == 0
    lam = A[dm.lam_slice, :].toarray()
    cols = np.flatnonzero(np.any(lam != 0, axis=0))
    assert np.all(dm.velocity_mask()[cols])
    assert A[dm.lam_slice, dm.lam_slice].count_nonzero() == 0


def _interface_form(law, vf, vp, nx=1):
    mesh = build_channel_mesh(GEOM, nx, 1, 1)
    a = assemble_system(mesh, _config(law))
    z = assemble_system(mesh, _config(NO_LAW))
    v = _interp(a.dofmap, "free", _translation(vf)) + _interp(a.dofmap, "porous", _translation(vp))
    return v @ ((a.A0 - z.A0) @ v)


def test_single_edge_form_is_twice_psi():
    law = InterfaceLaw(1.5, -0.5, 2.0, beta=3.0)
    vf, vp = np.array([0.7, 0.2]), np.array([-0.4, 0.9])
    # n_free = (0, -1), s = (1, 0); unit edge length
    psi = law.a11 * vf[0] ** 2 + 2 * law.a12 * vf[0] * vp[0] + law.a22 * vp[0] ** 2 \
        + law.beta * vf[1] ** 2
    assert _interface_form(law, vf, vp) == pytest.approx(2 * psi, rel=1e-13)
    assert _interface_form(law, vf, vp, nx=5) == pytest.approx(2 * psi, rel=1e-13)


def test_bj_form_vanishes_without_slip():
    law = InterfaceLaw(3.0, -3.0, 3.0)
    c = (0.8, 0.0)
    assert abs(_interface_form(law, c, c, nx=4)) < 1e-13


def test_system_is_symmetric():
    s = cavity_setup(4, law="bj")
    sys0 = assemble_system(s.mesh, s.config)
    d = sys0.A0 - sys0.A0.T
    assert abs(d).max() < 1e-14 * abs(sys0.A0).max()
    sysc = apply_velocity_bcs(sys0, s.mesh, s.config)
    assert abs(sysc.A - sysc.A.T).max() < 1e-14 * abs(sysc.A).max()


def test_constraint_rows_match_operator():
    s = cavity_setup(3, law="bjs")
    sys0 = assemble_system(s.mesh, s.config)
    dm = sys0.dofmap
    C = constraint_matrix(s.mesh, dm).tocsr()
    rows = ~dm.velocity_mask()
    vel = dm.velocity_mask()
    diff = (sys0.A0.tocsr()[rows][:, vel] - C[rows][:, vel]).toarray()
    assert np.max(np.abs(diff)) < 1e-15


def test_no_velocity_boundary_leaves_system_unchanged():
    plan = {**CHANNEL_PLAN, "top": "free_t", "bottom": "por_t"}
    mesh = build_channel_mesh(GEOM, 2, 1, 1, plan)
    cfg = _config()
    sys0 = assemble_system(mesh, cfg)
    out = apply_velocity_bcs(sys0, mesh, cfg, pressure_datum=None)
    assert out.constrained == {} and out.pressure_datum is None
    assert (out.A != sys0.A).nnz == 0
    np.testing.assert_array_equal(out.b, sys0.b)


def test_zero_data_gives_zero_flow():
    s = cavity_setup(4, b_free=(0.0, 0.0))
    sol = s.solve()
    assert np.max(np.abs(sol.x)) == 0.0


def test_pressure_datum_choice():
    mesh = build_channel_mesh(GEOM, 2, 1, 1, ENCLOSED_PLAN)
    assert needs_pressure_datum(mesh)
    cfg = _config(traction=False)
    sys0 = assemble_system(mesh, cfg)
    assert apply_velocity_bcs(sys0, mesh, cfg).pressure_datum == sys0.dofmap.free.p_offset
    with pytest.raises(ValueError, match="not a pressure dof"):
        apply_velocity_bcs(sys0, mesh, cfg, pressure_datum=0)


def test_conflicting_prescriptions_raise():
    mesh = build_channel_mesh(GEOM, 2, 1, 1, ENCLOSED_PLAN)
    calls = itertools.count()

    def drifting(x):
        # a corner node is visited from two edges and sees different values
        return np.full(x.shape, float(next(calls)))

    cfg = ModelConfig(FluidProps(), PorousProps.isotropic(0.4, 1.0), NO_LAW,
                      velocity_data={"free_v": drifting, "por_v": ZERO})
    sys0 = assemble_system(mesh, cfg)
    with pytest.raises(ValueError, match="conflicting velocity prescriptions"):
        apply_velocity_bcs(sys0, mesh, cfg)


def test_missing_boundary_data():
    mesh = build_channel_mesh(GEOM, 2, 1, 1)
    with pytest.raises(ValueError, match="free_t"):
        assemble_system(mesh, _config(traction=False))


def test_dofmap_is_a_permutation():
    mesh = build_channel_mesh(GEOM, 3, 2, 1)
    dm = build_dofmap(mesh)
    used = np.concatenate([dm.free.u_dofs().ravel(), dm.free.p_dofs().ravel(),
                           dm.porous.u_dofs().ravel(), dm.porous.p_dofs().ravel(),
                           np.arange(dm.lam_offset, dm.total_dofs)])
    np.testing.assert_array_equal(np.unique(used), np.arange(dm.total_dofs))
    assert len(dm.lam_vertices) == 4
    assert np.all(np.diff(mesh.vertices[dm.lam_vertices, 0]) > 0)
    # P2 nodes: vertices plus edge midpoints of each region
    assert dm.free.n_nodes == len(np.unique(np.round(dm.free.node_coords, 14), axis=0))


def test_solve_is_linear_in_loads():
    s = cavity_setup(4, law="bj")
    a = solve(apply_velocity_bcs(assemble_system(s.mesh, s.config), s.mesh, s.config))
    cfg = s.config.scaled(-2.5)
    b = solve(apply_velocity_bcs(assemble_system(s.mesh, cfg), s.mesh, cfg))
    np.testing.assert_allclose(b.x, -2.5 * a.x, rtol=0, atol=1e-12 * np.abs(a.x).max())
