import csv

import numpy as np
import pytest

from freeporous.assembly import ModelConfig, build_dofmap
from freeporous.core import FluidProps, InterfaceLaw, PorousProps, bj_law
from freeporous.mesh import ENCLOSED_PLAN, FREE, POROUS, DomainGeometry, build_channel_mesh
from freeporous.power import (AdmissibleSpace, admissible_perturbation, gateaux_check,
                              minimum_power_check, random_stream_field, total_power)
from freeporous.problems import Setup


def test_zero_field_has_zero_power(bjs_channel16):
    s, sol = bjs_channel16
    pb = total_power(np.zeros_like(sol.x), s.mesh, s.config, sol.dofmap)
    assert (pb.phi_free, pb.phi_por, pb.psi_interface, pb.external_work, pb.total) == (0, 0, 0, 0, 0)


def test_raw_vector_needs_dofmap(bjs_channel16):
    s, sol = bjs_channel16
    with pytest.raises(ValueError, match="dofmap"):
        total_power(sol.x, s.mesh, s.config)


def test_porous_translation():
    geom = DomainGeometry((0.0, 2.0), 0.0, 0.5, -1.0)
    mesh = build_channel_mesh(geom, 4, 2, 3, ENCLOSED_PLAN)
    fluid, porous = FluidProps(mu=1.5), PorousProps(0.3, np.eye(2))
    law = bj_law(1.0, fluid.mu, porous.K)
    cfg = ModelConfig(fluid, porous, law, velocity_data={"free_v": (0, 0), "por_v": (0, 0)})
    dm = build_dofmap(mesh)
    c = np.array([0.4, 0.3])
    x = np.zeros(dm.total_dofs)
    x[dm.porous.u_slice] = np.tile(c, dm.porous.n_nodes)
    pb = total_power(x, mesh, cfg, dm)
    area_p = 2.0 * 1.0
    assert pb.phi_free == 0.0
    assert pb.drag == pytest.approx(0.5 * fluid.mu * (c @ c) * area_p, rel=1e-13)
    assert pb.phi_por == pytest.approx(pb.drag, rel=1e-12)
    # free side at rest: Psi = a22 |v_p,t|^2 along an interface of length 2
    assert pb.psi_interface == pytest.approx(law.a22 * c[0] ** 2 * 2.0, rel=1e-13)
    assert pb.external_work == 0.0


def test_refined_quadrature_agrees(bjs_channel16):
    s, sol = bjs_channel16
    a = total_power(sol, s.mesh, s.config)
    b = total_power(sol, s.mesh, s.config, quad_level=1)
    assert b.total == pytest.approx(a.total, rel=1e-12)


def test_power_equals_quadratic_form(bj_cavity8):
    s, sol = bj_cavity8
    sys0 = s.system()
    rng = np.random.default_rng(5)
    v = np.where(sol.dofmap.velocity_mask(), rng.standard_normal(sol.dofmap.total_dofs), 0.0)
    pb = total_power(v, s.mesh, s.config, sol.dofmap)
    quad = 0.5 * v @ (sys0.A0 @ v) - sys0.b0 @ v
    assert pb.total == pytest.approx(quad, rel=1e-12)


def test_gateaux_matches_exact_derivative_off_solution(bjs_channel16):
    s, sol = bjs_channel16
    sys0 = s.system()
    v = np.where(sol.dofmap.velocity_mask(), 0.5 * sol.x, 0.0)
    rep = gateaux_check(v, s.mesh, s.config, n_dirs=5, dofmap=sol.dofmap)
    space = AdmissibleSpace(s.mesh, sol.dofmap)
    dirs = [admissible_perturbation(s.mesh, ss, space=space).vector
            for ss in np.random.SeedSequence(0).spawn(5)]
    exact = np.array([d @ (sys0.A0 @ v - sys0.b0) for d in dirs]) / rep.scale
    np.testing.assert_allclose(rep.derivatives, exact, rtol=1e-6)
    assert rep.max_abs > 1e6 * gateaux_check(sol, s.mesh, s.config, n_dirs=5).max_abs
    zero = gateaux_check(sol, s.mesh, s.config, directions=[np.zeros_like(sol.x)])
    assert zero.derivatives.tolist() == [0.0]


def test_gateaux_vanishes_at_solution(bj_cavity8):
    s, sol = bj_cavity8
    assert gateaux_check(sol, s.mesh, s.config, n_dirs=10).max_abs < 1e-6


@pytest.mark.parametrize("fixture", ["bjs_channel16", "bj_cavity8"])
def test_perturbations_are_admissible(fixture, request):
    s, sol = request.getfixturevalue(fixture)
    dm = sol.dofmap
    a = admissible_perturbation(s.mesh, 11, dofmap=dm)
    b = admissible_perturbation(s.mesh, 11, dofmap=dm)
    assert a.vector.tobytes() == b.vector.tobytes()
    assert np.max(np.abs(a.vector)) == 1.0
    assert np.all(a.vector[dm.constrained_velocity] == 0.0)
    assert np.all(a.vector[~dm.velocity_mask()] == 0.0)
    assert a.residual < 1e-12
    assert AdmissibleSpace(s.mesh, dm).residual(a.vector) == a.residual
    # the interpolant of the analytic field is already nearly admissible
    assert a.interpolation_defect < 0.1


def test_stream_fields_are_solenoidal_and_tight():
    geom = DomainGeometry((0.0, 1.0), 0.0, 0.5, -0.5)
    mesh = build_channel_mesh(geom, 2, 1, 1)
    rng = np.random.default_rng(2)
    xs = np.linspace(0, 1, 7)
    for region, (ya, yb) in ((FREE, (0.0, 0.5)), (POROUS, (-0.5, 0.0))):
        f = random_stream_field(mesh, region, rng)
        pts = np.stack(np.meshgrid(xs, np.linspace(ya, yb, 5)), axis=-1).reshape(-1, 2)
        assert np.max(np.abs(f.divergence(pts))) < 1e-12
        iface = np.column_stack([xs, np.zeros_like(xs)])
        assert np.max(np.abs(f.velocity(iface)[:, 1])) < 1e-12
        wall_y = yb if region == FREE else ya
        wall = np.column_stack([xs, np.full_like(xs, wall_y)])
        assert np.max(np.abs(f.velocity(wall))) < 1e-12


def test_gap_is_quadratic_in_amplitude(bj_cavity8):
    s, sol = bj_cavity8
    d = admissible_perturbation(s.mesh, 4, dofmap=sol.dofmap).vector
    p0 = total_power(sol, s.mesh, s.config).total
    assert total_power(sol.x + 0.0 * d, s.mesh, s.config, sol.dofmap).total == p0
    gap = [total_power(sol.x + e * d, s.mesh, s.config, sol.dofmap).total - p0 for e in (0.1, 1.0)]
    assert gap[1] > 0
    assert gap[0] / gap[1] == pytest.approx(0.01, rel=1e-6)


def test_minimum_power_threads_are_deterministic(bj_cavity8, tmp_path):
    s, sol = bj_cavity8
    one = minimum_power_check(sol, s.mesh, s.config, n_trials=6, seed=9, threads=1)
    many = minimum_power_check(sol, s.mesh, s.config, n_trials=6, seed=9, threads=3)
    assert one.gaps.tobytes() == many.gaps.tobytes()
    assert one.violations == 0
    np.testing.assert_allclose(one.slopes, 2.0, atol=0.05)
    path = tmp_path / "trials.csv"
    one.write_csv(path, header=["run x"])
    text = path.read_text()
    assert text.startswith("# run x\n# seed 9\n")
    rows = list(csv.reader(ln for ln in text.splitlines() if not ln.startswith("#")))
    assert rows[0] == ["trial", "amplitude", "power_gap", "slope", "defect", "residual"]
    assert len(rows) == 1 + 6 * 3
    assert "\r" not in text


def test_strictly_convex_form_has_no_violations_with_zero_coupling():
    # enclosed box with no interface law: still a minimum thanks to viscosity and drag
    geom = DomainGeometry((0.0, 1.0), 0.0, 0.5, -0.5)
    mesh = build_channel_mesh(geom, 4, 2, 2, ENCLOSED_PLAN)
    cfg = ModelConfig(FluidProps(), PorousProps.isotropic(0.4, 0.1), InterfaceLaw(0, 0, 0),
                      b_free=(1.0, 0.5), b_por=(0.0, -1.0),
                      velocity_data={"free_v": (0, 0), "por_v": (0, 0)})
    sol = Setup(mesh, cfg).solve()
    rep = minimum_power_check(sol, mesh, cfg, n_trials=10)
    assert rep.violations == 0 and rep.min_gap > 0
