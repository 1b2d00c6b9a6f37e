"""Random conic programs with a known primal-dual solution or a known
infeasibility certificate.

Optimal instances are built backwards from a complementary pair
(s*, z*): with x*, y* arbitrary, setting h = G x* + s*, b = A x* and
c = -A^T y* - G^T z* makes (x*, s*, y*, z*) satisfy the KKT conditions, so
c^T x* is the optimal value.
"""

import numpy as np

from .cones import svec
from .program import Cone, ConeProgram

__all__ = ["random_cones", "optimal_instance", "infeasible_instance"]


def _complementary_block(rng, cone):
    """Random s, z in the block with s o z = 0 and s + z interior."""
    k = cone.size
    if cone.kind == "orthant":
        mask = rng.random(k) < 0.5
        s = np.where(mask, rng.uniform(0.5, 2.0, k), 0.0)
        z = np.where(mask, 0.0, rng.uniform(0.5, 2.0, k))
        return s, z
    if cone.kind == "soc":
        u = rng.standard_normal(k - 1)
        u /= np.linalg.norm(u)
        a, b = rng.uniform(0.5, 2.0, 2)
        s = np.concatenate([[a], a * u])
        z = np.concatenate([[b], -b * u])
        return s, z
    if cone.kind == "psd":
        n = cone.dim
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        r = rng.integers(1, n) if n > 1 else 1
        ds = np.zeros(n)
        dz = np.zeros(n)
        ds[:r] = rng.uniform(0.5, 2.0, r)
        dz[r:] = rng.uniform(0.5, 2.0, n - r)
        if n == 1:
            ds[0], dz[0] = 1.0, 0.0
        return svec(Q @ np.diag(ds) @ Q.T), svec(Q @ np.diag(dz) @ Q.T)
    raise ValueError(cone.kind)


def _interior_block(rng, cone):
    k = cone.size
    if cone.kind == "orthant":
        return rng.uniform(0.5, 2.0, k)
    if cone.kind == "soc":
        u = rng.standard_normal(k - 1)
        return np.concatenate([[np.linalg.norm(u) + rng.uniform(0.5, 2.0)], u])
    B = rng.standard_normal((cone.dim, cone.dim))
    return svec(B @ B.T + np.eye(cone.dim))


def random_cones(rng, kind):
    if kind == "lp":
        return [Cone.orthant(int(rng.integers(3, 12)))]
    if kind == "socp":
        cones = [Cone.orthant(int(rng.integers(1, 4)))]
        cones += [Cone.soc(int(rng.integers(2, 6))) for _ in range(int(rng.integers(1, 4)))]
        return cones
    if kind == "sdp":
        return [Cone.orthant(int(rng.integers(1, 3))), Cone.psd(int(rng.integers(2, 6)))]
    raise ValueError(kind)


def optimal_instance(rng, kind):
    """Return (program, optimal value)."""
    cones = random_cones(rng, kind)
    m = sum(c.size for c in cones)
    n = int(rng.integers(2, max(3, m)))
    p = int(rng.integers(0, n))
    G = rng.standard_normal((m, n))
    A = rng.standard_normal((p, n))
    pairs = [_complementary_block(rng, c) for c in cones]
    s = np.concatenate([a for a, _ in pairs])
    z = np.concatenate([b for _, b in pairs])
    x = rng.standard_normal(n)
    y = rng.standard_normal(p)
    h = G @ x + s
    b = A @ x
    c = -A.T @ y - G.T @ z
    return ConeProgram(c, G, h, cones, A, b), float(c @ x)


def infeasible_instance(rng, kind):
    """Return a program whose primal is infeasible by construction."""
    cones = random_cones(rng, kind)
    m = sum(c.size for c in cones)
    n = int(rng.integers(2, max(3, m)))
    p = int(rng.integers(0, n))
    z = np.concatenate([_interior_block(rng, c) for c in cones])
    y = rng.standard_normal(p)
    G = rng.standard_normal((m, n))
    A = rng.standard_normal((p, n))
    # make A^T y + G^T z = 0
    G -= np.outer(z, G.T @ z + A.T @ y) / (z @ z)
    h = rng.standard_normal(m)
    b = rng.standard_normal(p)
    h += z * (-1.0 - b @ y - h @ z) / (z @ z)
    c = rng.standard_normal(n)
    return ConeProgram(c, G, h, cones, A, b)
