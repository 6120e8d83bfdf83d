"""Structured crossed-triangle meshes of a free layer stacked on a porous layer."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .core import dot, rot90

FREE = "free"
POROUS = "porous"
REGIONS = (FREE, POROUS)
BOUNDARY_TAGS = ("free_v", "free_t", "por_v", "por_t")

# (side, region) pairs making up the exterior boundary of the two-layer box
EXTERIOR_SEGMENTS = ("top", "bottom", "left_free", "right_free", "left_por", "right_por")

CHANNEL_PLAN = {
    "top": "free_v",
    "bottom": "por_v",
    "left_free": "free_t",
    "right_free": "free_t",
    "left_por": "por_t",
    "right_por": "por_t",
}

ENCLOSED_PLAN = {
    "top": "free_v",
    "bottom": "por_v",
    "left_free": "free_v",
    "right_free": "free_v",
    "left_por": "por_v",
    "right_por": "por_v",
}

_SEGMENT_REGION = {
    "top": FREE, "left_free": FREE, "right_free": FREE,
    "bottom": POROUS, "left_por": POROUS, "right_por": POROUS,
}


@dataclass(frozen=True)
class DomainGeometry:
    x_extent: tuple
    y_interface: float
    y_top: float
    y_bottom: float

    def __post_init__(self):
        x0, x1 = self.x_extent
        if not x0 < x1:
            raise ValueError(f"x extent must be increasing, got {self.x_extent}")
        if not self.y_bottom < self.y_interface < self.y_top:
            raise ValueError("need y_bottom < y_interface < y_top")
        object.__setattr__(self, "x_extent", (float(x0), float(x1)))

    @property
    def width(self):
        return self.x_extent[1] - self.x_extent[0]

    @property
    def free_height(self):
        return self.y_top - self.y_interface

    @property
    def porous_height(self):
        return self.y_interface - self.y_bottom

    @property
    def area(self):
        return self.width * (self.y_top - self.y_bottom)


class InterfaceEdge(NamedTuple):
    free_tri: int
    por_tri: int
    endpoints: np.ndarray  # (2, 2), ordered along the tangent
    n_free: np.ndarray


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation with subdomain, boundary and interface tags.

    Attributes
    ----------
    vertices : (N, 2) float array
    triangles : (T, 3) int array, counter-clockwise
    tri_region : (T,) array of ``"free"`` / ``"porous"``
    boundary_edges : (B, 2) int array of vertex pairs on the exterior boundary
    boundary_tags : (B,) array of tags in :data:`BOUNDARY_TAGS`
    boundary_segments : (B,) array naming the side of the box each edge lies on
    boundary_tri : (B,) owning triangle of each boundary edge
    interface_edges : (E, 2) vertex pairs on the interface, ordered along the tangent
    interface_free_tri, interface_por_tri : (E,) triangles on either side
    interface_normals : (E, 2) unit normals pointing from the free into the porous region
    """

    geometry: DomainGeometry
    vertices: np.ndarray
    triangles: np.ndarray
    tri_region: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    boundary_segments: np.ndarray
    boundary_tri: np.ndarray
    interface_edges: np.ndarray
    interface_free_tri: np.ndarray
    interface_por_tri: np.ndarray
    interface_normals: np.ndarray
    shape: tuple = ()

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def triangle_areas(self):
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def region_triangles(self, region):
        return np.flatnonzero(self.tri_region == region)

    def interface_edge(self, e):
        return InterfaceEdge(
            int(self.interface_free_tri[e]),
            int(self.interface_por_tri[e]),
            self.vertices[self.interface_edges[e]],
            self.interface_normals[e],
        )

    def interface_tangents(self):
        return rot90(self.interface_normals)

    def has_traction_boundary(self):
        return bool(np.any(np.isin(self.boundary_tags, ("free_t", "por_t"))))

    def segment_tag(self, segment):
        """Boundary tag carried by one side of the box."""
        hits = self.boundary_tags[self.boundary_segments == segment]
        return str(hits[0])

    @cached_property
    def edge_triangle_counts(self):
        """Map from sorted vertex pair to the number of triangles sharing it."""
        t = self.triangles
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        edges = np.sort(edges, axis=1)
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        return {tuple(e): int(c) for e, c in zip(uniq, counts)}


def tangent_of(edge):
    """Unit tangent of an interface edge: the CCW quarter turn of ``n_free``."""
    p0, p1 = np.asarray(edge.endpoints, dtype=float)
    d = p1 - p0
    length = np.hypot(*d)
    if length == 0.0:
        raise ValueError("zero-length edge has no tangent")
    s = rot90(edge.n_free)
    if abs(abs(dot(s, d / length)) - 1.0) > 1e-12:
        raise ValueError("edge direction is not orthogonal to its normal")
    return s


def _levels(a, b, n):
    return np.linspace(a, b, n + 1)


def build_channel_mesh(geom, nx, ny_free, ny_por, bc_plan=None):
    """Crossed-triangle mesh of the two-layer box.

    Each rectangular cell is split by its diagonals into four triangles; the
    interface ``y = geom.y_interface`` is a grid line.

    Parameters
    ----------
    geom : DomainGeometry
    nx, ny_free, ny_por : int
        Cell counts along x and across the free and porous layers.
    bc_plan : dict, optional
        Boundary tag for each entry of :data:`EXTERIOR_SEGMENTS`;
        defaults to :data:`CHANNEL_PLAN`.
    """
    for label, n in (("nx", nx), ("ny_free", ny_free), ("ny_por", ny_por)):
        if int(n) != n or n < 1:
            raise ValueError(f"{label} must be a positive integer, got {n}")
    nx, ny_free, ny_por = int(nx), int(ny_free), int(ny_por)
    plan = dict(CHANNEL_PLAN if bc_plan is None else bc_plan)
    missing = [s for s in EXTERIOR_SEGMENTS if s not in plan]
    if missing:
        raise ValueError(f"boundary plan leaves exterior segments untagged: {missing}")
    for seg in EXTERIOR_SEGMENTS:
        tag = plan[seg]
        if tag not in BOUNDARY_TAGS:
            raise ValueError(f"unknown boundary tag {tag!r} for segment {seg!r}")
        prefix = "free" if _SEGMENT_REGION[seg] == FREE else "por"
        if not tag.startswith(prefix + "_"):
            raise ValueError(f"segment {seg!r} lies in the {_SEGMENT_REGION[seg]} region "
                             f"but is tagged {tag!r}")

    x0, x1 = geom.x_extent
    xs = _levels(x0, x1, nx)
    ys = np.concatenate([_levels(geom.y_bottom, geom.y_interface, ny_por),
                         _levels(geom.y_interface, geom.y_top, ny_free)[1:]])
    # Interface level is exactly y_interface, never a rounded linspace value.
    ys[ny_por] = geom.y_interface
    ny = ny_free + ny_por
    X, Y = np.meshgrid(xs, ys)  # (ny+1, nx+1)
    grid = np.column_stack([X.ravel(), Y.ravel()])
    cx = 0.5 * (xs[:-1] + xs[1:])
    cy = 0.5 * (ys[:-1] + ys[1:])
    CX, CY = np.meshgrid(cx, cy)
    centres = np.column_stack([CX.ravel(), CY.ravel()])
    vertices = np.vstack([grid, centres])
    n_grid = len(grid)

    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    j = j.ravel()
    i = i.ravel()
    sw = j * (nx + 1) + i
    se = sw + 1
    nw = sw + (nx + 1)
    ne = nw + 1
    c = n_grid + j * nx + i
    # per cell: bottom, right, top, left (all counter-clockwise)
    tris = np.stack([
        np.column_stack([sw, se, c]),
        np.column_stack([se, ne, c]),
        np.column_stack([ne, nw, c]),
        np.column_stack([nw, sw, c]),
    ], axis=1)  # (cells, 4, 3)
    triangles = tris.reshape(-1, 3)
    cell_region = np.where(j < ny_por, POROUS, FREE)
    tri_region = np.repeat(cell_region, 4)

    def tri_id(jj, ii, k):
        return (jj * nx + ii) * 4 + k

    b_edges, b_tags, b_segs, b_tri = [], [], [], []

    def add(seg, verts, tri):
        b_edges.append(verts)
        b_tags.append(plan[seg])
        b_segs.append(seg)
        b_tri.append(tri)

    for ii in range(nx):
        add("bottom", (ii, ii + 1), tri_id(0, ii, 0))
        top_sw = ny * (nx + 1) + ii
        add("top", (top_sw + 1, top_sw), tri_id(ny - 1, ii, 2))
    for jj in range(ny):
        left = "left_por" if jj < ny_por else "left_free"
        right = "right_por" if jj < ny_por else "right_free"
        sw_l = jj * (nx + 1)
        add(left, (sw_l + (nx + 1), sw_l), tri_id(jj, 0, 3))
        se_r = jj * (nx + 1) + nx
        add(right, (se_r, se_r + (nx + 1)), tri_id(jj, nx - 1, 1))

    iface = np.array([(ny_por * (nx + 1) + ii, ny_por * (nx + 1) + ii + 1) for ii in range(nx)])
    i_free = np.array([tri_id(ny_por, ii, 0) for ii in range(nx)])
    i_por = np.array([tri_id(ny_por - 1, ii, 2) for ii in range(nx)])
    normals = np.tile([0.0, -1.0], (nx, 1))

    return Mesh(
        geometry=geom,
        vertices=vertices,
        triangles=triangles,
        tri_region=tri_region,
        boundary_edges=np.array(b_edges, dtype=int),
        boundary_tags=np.array(b_tags),
        boundary_segments=np.array(b_segs),
        boundary_tri=np.array(b_tri, dtype=int),
        interface_edges=iface,
        interface_free_tri=i_free,
        interface_por_tri=i_por,
        interface_normals=normals,
        shape=(nx, ny_free, ny_por),
    )


def boundary_outward_normals(mesh):
    """Outward unit normals of the exterior boundary edges."""
    p = mesh.vertices[mesh.boundary_edges]
    d = p[:, 1] - p[:, 0]
    d /= np.linalg.norm(d, axis=1)[:, None]
    # Boundary edges run counter-clockwise around their triangle, so the
    # outward normal is the clockwise quarter turn of the edge direction.
    return -rot90(d)


_VTK_LINE_CELLS = {3: 5, 6: 22}


def write_vtk(path, points, cells, cell_data=None, point_data=None, title="freeporous"):
    """Write a legacy-VTK ASCII unstructured grid.

    ``cells`` is an (n, 3) array of linear triangles or (n, 6) of quadratic
    triangles. ``cell_data``/``point_data`` map names to arrays of shape (n,)
    (scalars) or (n, 2|3) (vectors).
    """
    points = np.asarray(points, dtype=float)
    cells = np.asarray(cells, dtype=int)
    npe = cells.shape[1]
    ctype = _VTK_LINE_CELLS[npe]
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(points)} double"]
    for x, y in points:
        lines.append(f"{float(x)!r} {float(y)!r} 0.0")
    lines.append(f"CELLS {len(cells)} {len(cells) * (npe + 1)}")
    for c in cells:
        lines.append(f"{npe} " + " ".join(str(v) for v in c))
    lines.append(f"CELL_TYPES {len(cells)}")
    lines.extend([str(ctype)] * len(cells))

    def block(kind, n, data):
        if not data:
            return
        lines.append(f"{kind} {n}")
        for name, arr in data.items():
            arr = np.asarray(arr)
            if arr.ndim == 1:
                dtype = "int" if np.issubdtype(arr.dtype, np.integer) else "double"
                lines.append(f"SCALARS {name} {dtype} 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(repr(v.item()) for v in arr)
            else:
                lines.append(f"VECTORS {name} double")
                for v in arr:
                    z = v[2] if len(v) > 2 else 0.0
                    lines.append(f"{float(v[0])!r} {float(v[1])!r} {float(z)!r}")

    block("CELL_DATA", len(cells), cell_data)
    block("POINT_DATA", len(points), point_data)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_mesh_vtk(mesh, path):
    """Export the triangulation with its subdomain tags (0 = free, 1 = porous)."""
    tags = (mesh.tri_region == POROUS).astype(int)
    write_vtk(path, mesh.vertices, mesh.triangles, cell_data={"subdomain": tags})
