"""Quadrature rules and P1/P2 Lagrange bases on triangles, in barycentric form."""
from __future__ import annotations

import numpy as np

# Symmetric 6-point rule, exact for polynomials of degree 4.
_A1, _W1 = 0.445948490915964886318329253883, 0.223381589678011465944827816535
_A2, _W2 = 0.091576213509770743459571463402, 0.109951743655321867388505516798

TRI_POINTS = np.array([
    [_A1, _A1, 1 - 2 * _A1],
    [_A1, 1 - 2 * _A1, _A1],
    [1 - 2 * _A1, _A1, _A1],
    [_A2, _A2, 1 - 2 * _A2],
    [_A2, 1 - 2 * _A2, _A2],
    [1 - 2 * _A2, _A2, _A2],
])
TRI_WEIGHTS = np.array([_W1, _W1, _W1, _W2, _W2, _W2])  # sum to 1

# 3-point Gauss-Legendre on [0, 1], exact for degree 5.
EDGE_POINTS = 0.5 + 0.5 * np.sqrt(0.6) * np.array([-1.0, 0.0, 1.0])
EDGE_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0

# P2 node order: three vertices, then midpoints of edges (0,1), (1,2), (2,0).
P2_EDGES = ((0, 1), (1, 2), (2, 0))


def refined_tri_rule(level=0):
    """The 6-point rule applied on each of ``4**level`` congruent sub-triangles."""
    pts, wts = TRI_POINTS, TRI_WEIGHTS
    for _ in range(level):
        corners = np.eye(3)
        mids = {e: 0.5 * (corners[e[0]] + corners[e[1]]) for e in P2_EDGES}
        subs = [
            (corners[0], mids[(0, 1)], mids[(2, 0)]),
            (mids[(0, 1)], corners[1], mids[(1, 2)]),
            (mids[(2, 0)], mids[(1, 2)], corners[2]),
            (mids[(1, 2)], mids[(2, 0)], mids[(0, 1)]),
        ]
        pts = np.vstack([pts @ np.array(s) for s in subs])
        wts = np.concatenate([wts / 4.0] * 4)
    return pts, wts


def triangle_geometry(coords):
    """Areas and barycentric gradients of a batch of triangles.

    Parameters
    ----------
    coords : (T, 3, 2) array of vertex coordinates

    Returns
    -------
    area : (T,) signed area
    grad_lam : (T, 3, 2) gradients of the barycentric coordinates
    """
    e1 = coords[:, 1] - coords[:, 0]
    e2 = coords[:, 2] - coords[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    # rows of the inverse Jacobian are grad(lambda_1), grad(lambda_2)
    g1 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) / det[:, None]
    g2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) / det[:, None]
    g0 = -(g1 + g2)
    return 0.5 * det, np.stack([g0, g1, g2], axis=1)


def barycentric(coords, x):
    """Barycentric coordinates of points ``x`` (T, Q, 2) in triangles ``coords`` (T, 3, 2)."""
    _, g = triangle_geometry(coords)
    d = x - coords[:, None, 0, :]
    l1 = np.einsum("tqi,ti->tq", d, g[:, 1])
    l2 = np.einsum("tqi,ti->tq", d, g[:, 2])
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


def p2_values(lam):
    """P2 basis values at barycentric points, shape (..., 6)."""
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    return np.stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0,
    ], axis=-1)


def p2_gradients(lam, grad_lam):
    """Physical gradients of the P2 basis.

    ``lam`` has shape (T, Q, 3) (or (Q, 3), broadcast over triangles) and
    ``grad_lam`` shape (T, 3, 2); the result has shape (T, Q, 6, 2).
    """
    lam = np.asarray(lam, dtype=float)
    if lam.ndim == 2:
        lam = np.broadcast_to(lam, (grad_lam.shape[0],) + lam.shape)
    G = grad_lam[:, None, :, :]  # (T, 1, 3, 2)
    L = lam[..., None]  # (T, Q, 3, 1)
    vert = (4 * L - 1) * G
    mids = [4 * (L[:, :, i] * G[:, :, j] + L[:, :, j] * G[:, :, i]) for i, j in P2_EDGES]
    return np.concatenate([vert, np.stack(mids, axis=2)], axis=2)


def map_points(coords, lam):
    """Physical coordinates of barycentric points: (T, 3, 2) x (Q, 3) -> (T, Q, 2)."""
    return np.einsum("qk,tki->tqi", lam, coords)
