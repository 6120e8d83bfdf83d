"""Taylor-Hood assembly of the coupled Stokes / Darcy-Brinkman saddle-point system.

Unknown layout: ``[u_free, p_free, u_por, p_por, lambda]``. Velocity dof of
node ``a`` and component ``c`` is ``offset + 2*a + c``. The multiplier
``lambda`` is continuous piecewise linear on the interface and equals the
normal traction ``n_free . T_free n_free + dPsi/dv_n``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp

from .core import FluidProps, InterfaceLaw, PorousProps
from .elements import (EDGE_POINTS, EDGE_WEIGHTS, P2_EDGES, TRI_POINTS, TRI_WEIGHTS,
                       barycentric, p2_gradients, p2_values, triangle_geometry)
from .mesh import FREE, POROUS, boundary_outward_normals

VectorData = Union[np.ndarray, tuple, Callable]


@dataclass(frozen=True, eq=False)
class RegionDofs:
    region: str
    tris: np.ndarray          # global triangle ids
    vertices: np.ndarray      # local P1 index -> global vertex id
    nodes: np.ndarray         # (Tr, 6) local P2 node ids; vertex nodes share the P1 index
    node_coords: np.ndarray   # (n_nodes, 2)
    u_offset: int
    p_offset: int

    @property
    def n_nodes(self):
        return len(self.node_coords)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def u_slice(self):
        return slice(self.u_offset, self.u_offset + 2 * self.n_nodes)

    @property
    def p_slice(self):
        return slice(self.p_offset, self.p_offset + self.n_vertices)

    def u_dofs(self, local_tris=None):
        nodes = self.nodes if local_tris is None else self.nodes[local_tris]
        d = self.u_offset + 2 * nodes[..., None] + np.arange(2)
        return d.reshape(*nodes.shape[:-1], 12)

    def p_dofs(self, local_tris=None):
        nodes = self.nodes if local_tris is None else self.nodes[local_tris]
        return self.p_offset + nodes[..., :3]


@dataclass(frozen=True, eq=False)
class DofMap:
    free: RegionDofs
    porous: RegionDofs
    lam_vertices: np.ndarray   # interface vertices (global ids) ordered by x
    lam_offset: int
    total_dofs: int
    tri_local: np.ndarray      # global triangle -> index within its region
    constrained_velocity: np.ndarray = field(default_factory=lambda: np.zeros(0, int))

    def region(self, name):
        return self.free if name == FREE else self.porous

    @property
    def lam_slice(self):
        return slice(self.lam_offset, self.lam_offset + len(self.lam_vertices))

    def velocity_mask(self):
        m = np.zeros(self.total_dofs, bool)
        m[self.free.u_slice] = True
        m[self.porous.u_slice] = True
        return m

    def pressure_mask(self):
        m = np.zeros(self.total_dofs, bool)
        m[self.free.p_slice] = True
        m[self.porous.p_slice] = True
        return m

    def lam_dofs_of_edges(self, mesh):
        pos = {int(v): i for i, v in enumerate(self.lam_vertices)}
        return self.lam_offset + np.vectorize(pos.__getitem__)(mesh.interface_edges)


def _region_dofs(mesh, region, u_offset):
    tris = mesh.region_triangles(region)
    t = mesh.triangles[tris]
    verts, inv = np.unique(t, return_inverse=True)
    local = inv.reshape(t.shape)
    nv = len(verts)
    edges = np.concatenate([local[:, list(e)] for e in P2_EDGES])
    edges_sorted = np.sort(edges, axis=1)
    uniq, e_inv = np.unique(edges_sorted, axis=0, return_inverse=True)
    mids = nv + e_inv.reshape(3, -1).T
    nodes = np.hstack([local, mids])
    coords = np.vstack([mesh.vertices[verts],
                        0.5 * (mesh.vertices[verts[uniq[:, 0]]] + mesh.vertices[verts[uniq[:, 1]]])])
    p_offset = u_offset + 2 * len(coords)
    return RegionDofs(region, tris, verts, nodes, coords, u_offset, p_offset)


def _edge_local_nodes(mesh, dofmap, tris, edges):
    """Local P2 node ids (start, end, midpoint) of given edges inside given triangles."""
    out = np.empty((len(tris), 3), int)
    for k, (t, (a, b)) in enumerate(zip(tris, edges)):
        rd = dofmap.region(mesh.tri_region[t])
        lt = dofmap.tri_local[t]
        tv = list(mesh.triangles[t])
        i, j = tv.index(a), tv.index(b)
        for m, (p, q) in enumerate(P2_EDGES):
            if {p, q} == {i, j}:
                mid = rd.nodes[lt, 3 + m]
        out[k] = (rd.nodes[lt, i], rd.nodes[lt, j], mid)
    return out


def build_dofmap(mesh):
    free = _region_dofs(mesh, FREE, 0)
    porous = _region_dofs(mesh, POROUS, free.p_offset + free.n_vertices)
    lam_offset = porous.p_offset + porous.n_vertices
    iv = np.unique(mesh.interface_edges)
    lam_vertices = iv[np.argsort(mesh.vertices[iv, 0], kind="stable")]
    tri_local = np.empty(mesh.n_triangles, int)
    tri_local[free.tris] = np.arange(len(free.tris))
    tri_local[porous.tris] = np.arange(len(porous.tris))
    dm = DofMap(free, porous, lam_vertices, lam_offset, lam_offset + len(lam_vertices), tri_local)

    vmask = np.isin(mesh.boundary_tags, ("free_v", "por_v"))
    cons = []
    if vmask.any():
        nodes = _edge_local_nodes(mesh, dm, mesh.boundary_tri[vmask], mesh.boundary_edges[vmask])
        for t, row in zip(mesh.boundary_tri[vmask], nodes):
            rd = dm.region(mesh.tri_region[t])
            cons.append((rd.u_offset + 2 * row[:, None] + np.arange(2)).ravel())
    constrained = np.unique(np.concatenate(cons)) if cons else np.zeros(0, int)
    return replace(dm, constrained_velocity=constrained)


@dataclass(frozen=True, eq=False)
class ModelConfig:
    """Material data, interface law, body forces and boundary data.

    Body forces and boundary data are constant 2-vectors or callables.
    Velocity data callables take points ``(..., 2)``; traction callables take
    ``(points, outward_normals)``; both return ``(..., 2)``.
    """

    fluid: FluidProps
    porous: PorousProps
    law: InterfaceLaw
    b_free: VectorData = (0.0, 0.0)
    b_por: VectorData = (0.0, 0.0)
    velocity_data: dict = field(default_factory=dict)
    traction_data: dict = field(default_factory=dict)

    def validate(self, mesh):
        for tag in np.unique(mesh.boundary_tags):
            data = self.velocity_data if tag.endswith("_v") else self.traction_data
            if tag not in data:
                raise ValueError(f"boundary segments tagged {tag!r} have no prescribed data")

    def scaled(self, s):
        """Copy with all loads (body forces, tractions) multiplied by ``s``."""
        return replace(
            self,
            b_free=_scale_data(self.b_free, s),
            b_por=_scale_data(self.b_por, s),
            traction_data={k: _scale_data(v, s) for k, v in self.traction_data.items()},
        )


def _scale_data(data, s):
    if callable(data):
        return lambda *args: s * np.asarray(data(*args), float)
    return s * np.asarray(data, float)


def eval_vector_data(data, points, normals=None):
    points = np.asarray(points, float)
    if callable(data):
        out = data(points) if normals is None else data(points, normals)
        return np.broadcast_to(np.asarray(out, float), points.shape)
    return np.broadcast_to(np.asarray(data, float), points.shape)


@dataclass(frozen=True, eq=False)
class CoupledSystem:
    A: sp.csr_matrix
    b: np.ndarray
    dofmap: DofMap
    constrained: dict = field(default_factory=dict)
    pressure_datum: int | None = None
    A0: sp.csr_matrix | None = None   # operator before constraint elimination
    b0: np.ndarray | None = None


class _Triplets:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def add(self, rows, cols, block):
        r = np.broadcast_to(rows[..., :, None], block.shape)
        c = np.broadcast_to(cols[..., None, :], block.shape)
        self.rows.append(r.ravel())
        self.cols.append(c.ravel())
        self.vals.append(block.ravel())

    def add_sym(self, rows, cols, block):
        self.add(rows, cols, block)
        self.add(cols, rows, np.swapaxes(block, -1, -2))

    def matrix(self, n):
        if not self.rows:
            return sp.csr_matrix((n, n))
        m = sp.coo_matrix((np.concatenate(self.vals),
                           (np.concatenate(self.rows), np.concatenate(self.cols))), shape=(n, n))
        return m.tocsr()


def region_quadrature(mesh, rd, level_points=TRI_POINTS, level_weights=TRI_WEIGHTS):
    coords = mesh.vertices[mesh.triangles[rd.tris]]
    area, grad_lam = triangle_geometry(coords)
    phi = p2_values(level_points)                      # (Q, 6)
    grad = p2_gradients(level_points, grad_lam)        # (T, Q, 6, 2)
    x = np.einsum("qk,tki->tqi", level_points, coords)  # (T, Q, 2)
    w = area[:, None] * level_weights[None, :]           # (T, Q)
    return x, w, phi, grad


def viscous_element_matrices(w, grad, mu):
    """Element matrices of ``int 2 mu D(u):D(v)``, shape (T, 12, 12)."""
    T = grad.shape[0]
    gg = np.einsum("tq,tqai,tqbi->tab", w, grad, grad)          # grad phi_a . grad phi_b
    cross = np.einsum("tq,tqad,tqbc->tacbd", w, grad, grad)     # d_d phi_a * d_c phi_b
    K = cross.copy()
    K[:, :, 0, :, 0] += gg
    K[:, :, 1, :, 1] += gg
    return mu * K.reshape(T, 12, 12)


def drag_element_matrices(w, phi, mu, K_inv):
    T = w.shape[0]
    mass = np.einsum("tq,qa,qb->tab", w, phi, phi)
    M = np.einsum("tab,cd->tacbd", mass, mu * np.asarray(K_inv, float))
    return M.reshape(T, 12, 12)


def divergence_element_matrices(w, grad, lam_points):
    """Element matrices of ``-int q div u`` with P1 ``q``, shape (T, 3, 12)."""
    T = w.shape[0]
    B = -np.einsum("tq,qi,tqbd->tibd", w, lam_points, grad)
    return B.reshape(T, 3, 12)


def _load_vector(mesh, rd, data, weight):
    x, w, phi, _ = region_quadrature(mesh, rd)
    f = eval_vector_data(data, x)                      # (T, Q, 2)
    fe = weight * np.einsum("tq,qa,tqc->tac", w, phi, f).reshape(-1, 12)
    return rd.u_dofs(), fe


def _stokes_part(mesh, dofmap, rd, mu, tri):
    _, w, phi, grad = region_quadrature(mesh, rd)
    ud, pd = rd.u_dofs(), rd.p_dofs()
    tri.add(ud, ud, viscous_element_matrices(w, grad, mu))
    tri.add_sym(pd, ud, divergence_element_matrices(w, grad, TRI_POINTS))
    return w, phi, ud


def assemble_free_block(mesh, config, dofmap, tri, rhs):
    rd = dofmap.free
    _stokes_part(mesh, dofmap, rd, config.fluid.mu, tri)
    dofs, fe = _load_vector(mesh, rd, config.b_free, config.fluid.gamma)
    np.add.at(rhs, dofs, fe)
    _traction_load(mesh, dofmap, config, "free_t", rhs)


def assemble_porous_block(mesh, config, dofmap, tri, rhs):
    rd = dofmap.porous
    mu = config.fluid.mu
    w, phi, ud = _stokes_part(mesh, dofmap, rd, mu, tri)
    tri.add(ud, ud, drag_element_matrices(w, phi, mu, config.porous.K_inv))
    dofs, fe = _load_vector(mesh, rd, config.b_por, config.fluid.gamma * config.porous.phi)
    np.add.at(rhs, dofs, fe)
    _traction_load(mesh, dofmap, config, "por_t", rhs)


def boundary_edge_quadrature(mesh, edge_ids):
    """Gauss points, weights (times length) and owner-triangle P2 values on boundary edges."""
    p = mesh.vertices[mesh.boundary_edges[edge_ids]]            # (B, 2, 2)
    t = EDGE_POINTS
    x = p[:, None, 0] + t[None, :, None] * (p[:, None, 1] - p[:, None, 0])
    length = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
    w = length[:, None] * EDGE_WEIGHTS[None, :]
    coords = mesh.vertices[mesh.triangles[mesh.boundary_tri[edge_ids]]]
    phi = p2_values(barycentric(coords, x))                     # (B, Q, 6)
    return x, w, phi


def _traction_load(mesh, dofmap, config, tag, rhs):
    ids = np.flatnonzero(mesh.boundary_tags == tag)
    if len(ids) == 0:
        return
    x, w, phi = boundary_edge_quadrature(mesh, ids)
    normals = np.broadcast_to(boundary_outward_normals(mesh)[ids][:, None, :], x.shape)
    t = eval_vector_data(config.traction_data[tag], x, normals)
    fe = np.einsum("bq,bqa,bqc->bac", w, phi, t).reshape(-1, 12)
    tris = mesh.boundary_tri[ids]
    rd = dofmap.region(mesh.tri_region[tris[0]])
    dofs = rd.u_dofs(dofmap.tri_local[tris])
    np.add.at(rhs, dofs, fe)


def interface_quadrature(mesh, dofmap):
    """Gauss points on interface edges with P2 traces from both sides.

    Returns a dict with points ``x`` (E, Q, 2), weights ``w`` (E, Q) that
    include the edge length, P2 values ``phi_f``/``phi_p`` (E, Q, 6), the
    P1 hat values ``hat`` (Q, 2), edge normals and tangents, and the global
    velocity dofs of the adjacent free/porous triangles.
    """
    p = mesh.vertices[mesh.interface_edges]
    t = EDGE_POINTS
    x = p[:, None, 0] + t[None, :, None] * (p[:, None, 1] - p[:, None, 0])
    length = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
    w = length[:, None] * EDGE_WEIGHTS[None, :]
    tf, tp = mesh.interface_free_tri, mesh.interface_por_tri
    phi_f = p2_values(barycentric(mesh.vertices[mesh.triangles[tf]], x))
    phi_p = p2_values(barycentric(mesh.vertices[mesh.triangles[tp]], x))
    return {
        "x": x, "w": w, "phi_f": phi_f, "phi_p": phi_p,
        "hat": np.column_stack([1.0 - t, t]),
        "n": mesh.interface_normals, "s": mesh.interface_tangents(),
        "free_tris": tf, "por_tris": tp,
        "dofs_f": dofmap.free.u_dofs(dofmap.tri_local[tf]),
        "dofs_p": dofmap.porous.u_dofs(dofmap.tri_local[tp]),
        "lam_dofs": dofmap.lam_dofs_of_edges(mesh),
    }


def _vec_basis(phi, direction):
    """Component of each vector basis function along ``direction``: (E, Q, 12)."""
    E, Q, _ = phi.shape
    return (phi[..., :, None] * direction[:, None, None, :]).reshape(E, Q, 12)


def multiplier_element_matrices(iq):
    """``-int hat_i (w_f.n_f + w_p.n_p)`` blocks for free and porous sides, each (E, 2, 12)."""
    n = iq["n"]
    nf = _vec_basis(iq["phi_f"], n)
    np_ = _vec_basis(iq["phi_p"], -n)
    Mf = -np.einsum("eq,qi,eqa->eia", iq["w"], iq["hat"], nf)
    Mp = -np.einsum("eq,qi,eqa->eia", iq["w"], iq["hat"], np_)
    return Mf, Mp


def assemble_interface_block(mesh, config, dofmap, tri):
    iq = interface_quadrature(mesh, dofmap)
    law = config.law
    w = iq["w"]
    sf = _vec_basis(iq["phi_f"], iq["s"])
    sp_ = _vec_basis(iq["phi_p"], iq["s"])
    nf = _vec_basis(iq["phi_f"], iq["n"])
    df, dp = iq["dofs_f"], iq["dofs_p"]

    def gram(a, b):
        return np.einsum("eq,eqa,eqb->eab", w, a, b)

    if law.a11 or law.beta:
        tri.add(df, df, 2 * law.a11 * gram(sf, sf) + 2 * law.beta * gram(nf, nf))
    if law.a12:
        tri.add_sym(df, dp, 2 * law.a12 * gram(sf, sp_))
    if law.a22:
        tri.add(dp, dp, 2 * law.a22 * gram(sp_, sp_))
    Mf, Mp = multiplier_element_matrices(iq)
    tri.add_sym(iq["lam_dofs"], df, Mf)
    tri.add_sym(iq["lam_dofs"], dp, Mp)


def assemble_system(mesh, config, dofmap=None):
    """Assemble the unconstrained coupled operator and load vector."""
    config.validate(mesh)
    dofmap = build_dofmap(mesh) if dofmap is None else dofmap
    n = dofmap.total_dofs
    tri = _Triplets()
    rhs = np.zeros(n)
    assemble_free_block(mesh, config, dofmap, tri, rhs)
    assemble_porous_block(mesh, config, dofmap, tri, rhs)
    assemble_interface_block(mesh, config, dofmap, tri)
    A = tri.matrix(n)
    return CoupledSystem(A=A, b=rhs, dofmap=dofmap, A0=A, b0=rhs.copy())


def constraint_matrix(mesh, dofmap):
    """Rows of the divergence and multiplier constraints over all dofs (config independent)."""
    n = dofmap.total_dofs
    tri = _Triplets()
    for rd in (dofmap.free, dofmap.porous):
        _, w, _, grad = region_quadrature(mesh, rd)
        tri.add(rd.p_dofs(), rd.u_dofs(), divergence_element_matrices(w, grad, TRI_POINTS))
    iq = interface_quadrature(mesh, dofmap)
    Mf, Mp = multiplier_element_matrices(iq)
    tri.add(iq["lam_dofs"], iq["dofs_f"], Mf)
    tri.add(iq["lam_dofs"], iq["dofs_p"], Mp)
    return tri.matrix(n)


def needs_pressure_datum(mesh):
    """Pressure is only fixed up to a constant when no traction boundary exists."""
    return not mesh.has_traction_boundary()


def velocity_constraints(mesh, config, dofmap):
    """Prescribed values of the velocity dofs on velocity-tagged boundaries."""
    values = {}
    vmask = np.isin(mesh.boundary_tags, ("free_v", "por_v"))
    ids = np.flatnonzero(vmask)
    if len(ids) == 0:
        return values
    nodes = _edge_local_nodes(mesh, dofmap, mesh.boundary_tri[ids], mesh.boundary_edges[ids])
    for e, row in zip(ids, nodes):
        tag = mesh.boundary_tags[e]
        rd = dofmap.region(mesh.tri_region[mesh.boundary_tri[e]])
        vals = eval_vector_data(config.velocity_data[tag], rd.node_coords[row])
        for node, v in zip(row, vals):
            for c in range(2):
                dof = rd.u_offset + 2 * int(node) + c
                old = values.get(dof)
                if old is not None and abs(old - v[c]) > 1e-12 * max(1.0, abs(old)):
                    raise ValueError(
                        f"conflicting velocity prescriptions at dof {dof} "
                        f"(node {tuple(rd.node_coords[node])}): {old} vs {v[c]}")
                values[dof] = float(v[c])
    return values


def apply_velocity_bcs(system, mesh, config, pressure_datum="auto"):
    """Symmetric elimination of prescribed velocity dofs (and an optional pressure datum).

    ``pressure_datum`` is ``"auto"`` (pin the first free-region pressure dof
    when no traction boundary fixes the pressure level), ``None`` (never pin)
    or an explicit pressure dof index.
    """
    dofmap = system.dofmap
    cons = velocity_constraints(mesh, config, dofmap)
    datum = None
    if pressure_datum == "auto":
        if needs_pressure_datum(mesh):
            datum = dofmap.free.p_offset
    elif pressure_datum is not None:
        datum = int(pressure_datum)
        if not dofmap.pressure_mask()[datum]:
            raise ValueError(f"dof {datum} is not a pressure dof")
    if datum is not None:
        cons[datum] = 0.0
    if not cons:
        return replace(system, constrained={}, pressure_datum=None)
    n = dofmap.total_dofs
    idx = np.fromiter(cons.keys(), int, len(cons))
    val = np.fromiter(cons.values(), float, len(cons))
    g = np.zeros(n)
    g[idx] = val
    keep = np.ones(n)
    keep[idx] = 0.0
    Dk = sp.diags(keep)
    A = system.A.tocsr()
    b = system.b - A @ g
    A = (Dk @ A @ Dk + sp.diags(1.0 - keep)).tocsr()
    A.eliminate_zeros()
    b = b * keep + g
    return replace(system, A=A, b=b, constrained=dict(zip(idx.tolist(), val.tolist())),
                   pressure_datum=datum)
