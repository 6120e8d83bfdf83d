"""Material data, the interface power functional and small 2D tensor helpers.

Vectors and tensors are plain numpy arrays with trailing shape ``(2,)`` and
``(2, 2)``; every function here broadcasts over leading axes so the same
code serves a single interface state and a whole quadrature grid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Vec2 = np.ndarray
Ten2 = np.ndarray


def sym(T):
    """Symmetric part of a (batch of) 2x2 tensor(s)."""
    T = np.asarray(T, dtype=float)
    return 0.5 * (T + np.swapaxes(T, -1, -2))


def trace(T):
    T = np.asarray(T, dtype=float)
    return T[..., 0, 0] + T[..., 1, 1]


def ddot(A, B):
    """Double contraction ``A : B``."""
    return np.einsum("...ij,...ij->...", np.asarray(A, float), np.asarray(B, float))


def dot(a, b):
    return np.einsum("...i,...i->...", np.asarray(a, float), np.asarray(b, float))


def rot90(v):
    """Counter-clockwise quarter turn of a (batch of) 2-vector(s)."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def tangential_part(v, n):
    """Remove the component of ``v`` along the unit normal ``n``."""
    v = np.asarray(v, dtype=float)
    n = np.asarray(n, dtype=float)
    return v - dot(v, n)[..., None] * n


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FluidProps:
    """Viscosity ``mu`` [Pa s] and true density ``gamma`` [kg/m^3], shared by both regions."""

    mu: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"viscosity must be positive, got mu={self.mu}")
        if not self.gamma > 0:
            raise ValueError(f"density must be positive, got gamma={self.gamma}")


@dataclass(frozen=True, eq=False)
class PorousProps:
    """Porosity and (symmetric positive-definite) permeability tensor of the rigid matrix."""

    phi: float
    K: Ten2

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        if K.ndim == 0:
            K = float(K) * np.eye(2)
        if K.shape != (2, 2):
            raise ValueError(f"permeability must be a 2x2 tensor, got shape {K.shape}")
        if K[0, 1] != K[1, 0]:
            raise ValueError("permeability tensor is not symmetric")
        if not np.all(np.linalg.eigvalsh(K) > 0):
            raise ValueError("permeability tensor is not positive definite")
        if not 0 < self.phi <= 1:
            raise ValueError(f"porosity must lie in (0, 1], got phi={self.phi}")
        object.__setattr__(self, "K", _readonly(K))

    @classmethod
    def isotropic(cls, phi, k):
        return cls(phi=phi, K=k * np.eye(2))

    @property
    def K_inv(self):
        return np.linalg.inv(self.K)

    @property
    def is_isotropic(self):
        return self.K[0, 1] == 0 and self.K[0, 0] == self.K[1, 1]


@dataclass(frozen=True)
class InterfaceLaw:
    """Coefficients of the quadratic interface power density

    ``Psi = a11 |vt_f|^2 + 2 a12 vt_f.vt_p + a22 |vt_p|^2 + beta vn^2``

    where ``vt_f``/``vt_p`` are the tangential velocities on the free and
    porous sides and ``vn`` the normal velocity of the free side.
    """

    a11: float
    a12: float
    a22: float
    beta: float = 0.0
    name: str = "explicit"

    def __post_init__(self):
        for label in ("a11", "a22", "beta"):
            if getattr(self, label) < 0:
                raise ValueError(f"interface law requires {label} >= 0, got {getattr(self, label)}")
        # Relative slack so that the BJ law (a11*a22 == a12**2) survives rounding.
        lhs, rhs = self.a11 * self.a22, self.a12 ** 2
        if lhs < rhs and rhs - lhs > 1e-12 * max(rhs, 1e-300):
            raise ValueError(
                "interface law violates positive semi-definiteness a11*a22 >= a12**2 "
                f"(a11*a22={lhs:.6g}, a12**2={rhs:.6g})"
            )

    @property
    def strictly_definite(self):
        """True when the tangential quadratic form is positive definite."""
        return self.a11 > 0 and self.a11 * self.a22 > self.a12 ** 2 * (1 + 1e-12)

    def as_dict(self):
        return {"a11": self.a11, "a12": self.a12, "a22": self.a22, "beta": self.beta}


def psi_value(law, vt_free, vt_por, vn):
    """Interface power density for given tangential and normal velocities.

    Inputs are not projected: the caller passes tangential vectors.
    """
    vt_free = np.asarray(vt_free, dtype=float)
    vt_por = np.asarray(vt_por, dtype=float)
    vn = np.asarray(vn, dtype=float)
    return (law.a11 * dot(vt_free, vt_free)
            + 2.0 * law.a12 * dot(vt_free, vt_por)
            + law.a22 * dot(vt_por, vt_por)
            + law.beta * vn * vn)


def psi_gradients(law, vt_free, vt_por, vn):
    """Partial derivatives of :func:`psi_value`.

    Returns
    -------
    gf, gp : ndarray
        Derivatives with respect to the free-side and porous-side tangential velocities.
    gn : ndarray
        Derivative with respect to the normal velocity.
    """
    vt_free = np.asarray(vt_free, dtype=float)
    vt_por = np.asarray(vt_por, dtype=float)
    vn = np.asarray(vn, dtype=float)
    gf = 2.0 * (law.a11 * vt_free + law.a12 * vt_por)
    gp = 2.0 * (law.a12 * vt_free + law.a22 * vt_por)
    gn = 2.0 * law.beta * vn
    return gf, gp, gn


def interface_tangential_tractions(law, v_free, v_por, n_free):
    """Tangential extra-stress tractions demanded by the interface law.

    Returns ``(tf, tp)`` with ``tf = s.T_free^extra n_free`` and
    ``tp = s.T_por^extra n_por`` where ``s`` is the counter-clockwise
    rotation of ``n_free``.
    """
    n_free = np.asarray(n_free, dtype=float)
    s = rot90(n_free)
    vt_f = tangential_part(v_free, n_free)
    vt_p = tangential_part(v_por, n_free)
    gf, gp, _ = psi_gradients(law, vt_f, vt_p, dot(v_free, n_free))
    return -dot(s, gf), -dot(s, gp)


def _slip_prefactor(alpha, mu, trK):
    if not trK > 0:
        raise ValueError(f"degenerate permeability: tr K = {trK} must be positive")
    return alpha * mu * np.sqrt(3.0) / (2.0 * np.sqrt(trK))


def bj_law(alpha, mu, K):
    """Beavers-Joseph law: penalises only the tangential velocity jump."""
    c = _slip_prefactor(alpha, mu, float(trace(np.asarray(K, float))))
    return InterfaceLaw(a11=c, a12=-c, a22=c, beta=0.0, name="bj")


def bjs_law(alpha, mu, K):
    """Beavers-Joseph-Saffman law (no cross coupling)."""
    c = _slip_prefactor(alpha, mu, float(trace(np.asarray(K, float))))
    return InterfaceLaw(a11=c, a12=0.0, a22=c, beta=0.0, name="bjs")


def noslip_limit_law(alpha, trK):
    """Free-side slip law whose coefficient diverges as ``trK -> 0``."""
    if not trK > 0:
        raise ValueError(f"degenerate permeability: tr K = {trK} must be positive")
    return InterfaceLaw(a11=alpha / (2.0 * np.sqrt(trK)), a12=0.0, a22=0.0, beta=0.0,
                        name="noslip")
