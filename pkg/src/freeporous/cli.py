"""Command line entry point.

    freeporous solve  --config run.ini [--out DIR] [--seed N] [--threads N]
    freeporous verify --config run.ini --suite NAME [--out DIR] [--seed N] [--threads N]

Exit codes: 0 success, 1 failed verification check, 2 configuration error,
3 solver failure. The output directory is ``--out``, else the
``FREEPOROUS_OUT`` environment variable, else ``[run] out`` of the config.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import suites
from .config import SUITES, ConfigError, load_config
from .mesh import POROUS, write_vtk
from .oracles import interface_residuals, plot_profile_svg, write_profile_csv
from .power import total_power
from .solver import IllPosedError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def header_lines(rc, seed, tolerances):
    tol = " ".join(f"{k}={v!r}" for k, v in tolerances.items())
    return [f"freeporous config_sha256={rc.digest}", f"seed={seed}", f"tolerances: {tol}"]


def _write_table(path, columns, rows, header):
    import csv

    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


def write_solution_vtk(path, sol, title):
    """Quadratic-triangle VTK of both regions; pressure is interpolated to midside nodes."""
    dm = sol.dofmap
    points, cells, vel, pres, region = [], [], [], [], []
    offset = 0
    for rd, v, p in ((dm.free, sol.v_free, sol.p_free), (dm.porous, sol.v_por, sol.p_por)):
        nv = rd.n_vertices
        mids = rd.nodes[:, 3:]
        p2 = np.empty(rd.n_nodes)
        p2[:nv] = p
        for m, (a, b) in enumerate(((0, 1), (1, 2), (2, 0))):
            p2[mids[:, m]] = 0.5 * (p[rd.nodes[:, a]] + p[rd.nodes[:, b]])
        points.append(rd.node_coords)
        cells.append(rd.nodes + offset)
        vel.append(v)
        pres.append(p2)
        region.append(np.full(len(rd.nodes), int(rd.region == POROUS)))
        offset += rd.n_nodes
    write_vtk(path, np.vstack(points), np.vstack(cells),
              cell_data={"subdomain": np.concatenate(region)},
              point_data={"velocity": np.vstack(vel), "pressure": np.concatenate(pres)},
              title=title)


def _out_dir(args, rc):
    out = args.out or os.environ.get("FREEPOROUS_OUT") or rc.out
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_solve(args):
    rc = load_config(args.config)
    seed = rc.seed if args.seed is None else args.seed
    out = _out_dir(args, rc)
    tol = {"residual_norm": suites.RESIDUAL_TOL, "interface_flux": suites.FLUX_TOL}
    head = header_lines(rc, seed, tol)
    s = suites.setup_from_config(rc)
    sol = s.solve()
    write_solution_vtk(out / "solution.vtk", sol, f"freeporous solution config_sha256={rc.short_hash} seed={seed}")
    ir = interface_residuals(sol, s.mesh, s.config)
    ir.write_csv(out / "interface_residuals.csv", head)
    pb = total_power(sol, s.mesh, s.config)
    _write_table(out / "power.csv", ["component", "value"],
                 [[k, repr(float(getattr(pb, k)))] for k in
                  ("phi_free", "phi_por", "psi_interface", "external_work", "total")], head)
    if s.channel is not None:
        write_profile_csv(s.channel, out / "profile.csv", head)
        yi = rc.geometry.y_interface
        y, u, _ = suites.fem_profile(sol, s.mesh)
        plot_profile_svg(out / "profile.svg",
                         [("FEM (mid-channel)", y, u), ("Stokes-Brinkman oracle", s.channel.y + yi, s.channel.u)])
    ok = sol.residual_norm < suites.RESIDUAL_TOL and sol.interface_flux_residual < suites.FLUX_TOL
    print(f"solve: residual_norm={sol.residual_norm:.3e} "
          f"interface_flux={sol.interface_flux_residual:.3e} {pb.summary()}")
    print(f"wrote {out}")
    return EXIT_OK if ok else EXIT_SOLVER


def cmd_verify(args):
    rc = load_config(args.config)
    name = args.suite or rc.suite
    if name is None:
        raise ConfigError(f"{rc.path}: no suite given (use --suite or [run] suite)")
    seed = rc.seed if args.seed is None else args.seed
    threads = args.threads or rc.threads
    rc = replace(rc, seed=seed, threads=threads)
    out = _out_dir(args, rc)
    result = suites.run_suite(name, rc, seed=seed, threads=threads)
    tol = {c.name: c.tolerance for c in result.checks}
    head = header_lines(rc, seed, tol)
    result.write_csv(out / f"{name}_checks.csv", head)
    for tname, (cols, rows) in result.tables.items():
        _write_table(out / f"{name}_{tname}.csv", cols, rows, head)
    if name == "minpower":
        report = result.extras["report"]
        report.write_csv(out / "minpower_trials.csv", head)
        print(report.summary())
    if name == "channel":
        plot_profile_svg(out / "channel_profile.svg", result.extras["curves"])
    for c in result.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {name}.{c.name} value={c.value:.3e} tol={c.tolerance:.3e}")
    print(f"{name}: {'pass' if result.passed else 'FAIL'} ({result.elapsed:.1f} s)")
    return EXIT_OK if result.passed else EXIT_FAIL


def build_parser():
    parser = argparse.ArgumentParser(prog="freeporous", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("solve", "solve one coupled problem and write fields and reports"),
                            ("verify", "run a verification suite")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--seed", type=int, metavar="N")
        p.add_argument("--threads", type=int, metavar="N")
        if name == "verify":
            p.add_argument("--suite", choices=SUITES)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return cmd_solve(args) if args.command == "solve" else cmd_verify(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IllPosedError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
