"""Incremental assembly of cone programs from affine expressions.

An affine expression over the decision vector x (length n) is a pair
``(coef, const)`` meaning ``coef @ x + const``; ``coef`` is an (n,) vector
for scalars or a (k, n) matrix for vectors.
"""

import numpy as np

from .program import Cone, ConeProgram

__all__ = ["ProgramBuilder", "quad_over_linear_block", "rsoc_contains"]


def _affine(expr, n):
    coef, const = expr
    coef = np.atleast_2d(np.asarray(coef, dtype=float))
    if coef.shape[1] != n:
        raise ValueError(f"expression has {coef.shape[1]} columns, expected {n}")
    const = np.broadcast_to(np.asarray(const, dtype=float), (coef.shape[0],))
    return coef, np.array(const)


def quad_over_linear_block(L, v, u):
    """Rotated-SOC block encoding ``||L(x)||^2 <= u(x) * v(x)``, u, v >= 0.

    Parameters
    ----------
    L : (matrix (k, n), offset (k,))
        Affine vector expression.
    v, u : (vector (n,), constant)
        Affine scalar expressions; ``v`` is the denominator.

    Returns
    -------
    G, h, cone
        Rows with slack ``h - G x = (u(x), v(x), L(x))`` in ``cone``.
    """
    Lc, Lo = L
    Lc = np.atleast_2d(np.asarray(Lc, dtype=float))
    n = Lc.shape[1]
    uc, uo = _affine(u, n)
    vc, vo = _affine(v, n)
    Lc, Lo = _affine((Lc, Lo), n)
    G = -np.vstack([uc, vc, Lc])
    h = np.concatenate([uo, vo, Lo])
    return G, h, Cone.rsoc(G.shape[0])


def rsoc_contains(u, v, z, tol=0.0):
    """Direct membership test for ``||z||^2 <= u v`` with ``u, v >= 0``."""
    z = np.atleast_1d(z)
    return u >= -tol and v >= -tol and float(z @ z) <= u * v + tol


class ProgramBuilder:
    """Collects cone blocks over a fixed number of real variables."""

    def __init__(self, n):
        self.n = int(n)
        self._G, self._h, self._cones = [], [], []
        self._A, self._b = [], []

    def add_block(self, G, h, cone):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        if G.shape != (cone.size, self.n):
            raise ValueError(f"block rows {G.shape} do not match cone {cone}")
        self._G.append(G)
        self._h.append(np.asarray(h, dtype=float).ravel())
        self._cones.append(cone)

    def add_leq(self, coef, rhs):
        """Scalar linear inequality ``coef @ x <= rhs``."""
        self.add_block(np.asarray(coef, dtype=float)[None, :], [rhs], Cone.orthant(1))

    def add_quad_over_linear(self, L, v, u):
        self.add_block(*quad_over_linear_block(L, v, u))

    def add_eq(self, coef, rhs):
        self._A.append(np.asarray(coef, dtype=float))
        self._b.append(float(rhs))

    def build(self, c):
        """Program with objective ``c``; consecutive orthant rows are merged."""
        G_parts, h_parts, cones = [], [], []
        orth_G, orth_h = [], []
        for G, h, cone in zip(self._G, self._h, self._cones):
            if cone.kind == "orthant":
                orth_G.append(G)
                orth_h.append(h)
            else:
                G_parts.append(G)
                h_parts.append(h)
                cones.append(cone)
        if orth_G:
            G_parts.insert(0, np.vstack(orth_G))
            h_parts.insert(0, np.concatenate(orth_h))
            cones.insert(0, Cone.orthant(sum(len(h) for h in orth_h)))
        A = np.array(self._A) if self._A else None
        b = np.array(self._b) if self._b else None
        return ConeProgram(c, np.vstack(G_parts), np.concatenate(h_parts), cones, A, b)
