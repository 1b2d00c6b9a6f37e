"""Primal-dual interior-point method for :class:`ConeProgram`.

Homogeneous self-dual embedding with Nesterov-Todd scaling and a Mehrotra
predictor-corrector, in the style of CVXOPT's ``conelp``.  The embedding
lets one code path return either an optimal pair or a certificate of
primal or dual infeasibility.

The Newton systems reduce to

    [ H   A^T ] [dx]   [rx']
    [ A    0  ] [dy] = [ry ],      H = G^T W^{-1} W^{-T} G,

which is tiny for every problem in this package, so it is assembled densely
and factored by Cholesky with static regularization plus a Schur complement
for the equality block.
"""

import numpy as np
import scipy.linalg as sla

from .cones import ProductCone
from .program import ConeSolution, Status

__all__ = ["solve"]

_STEP = 0.99
_REG = 1e-10


class _KKTFailure(Exception):
    pass


class _KKT:
    """Factored reduced KKT system for one scaling.

    ``H + A^T A`` is factored as ``R^T R`` from a QR decomposition of the
    column-equilibrated stack ``[W^{-T} G; A; sqrt(reg) I]``, which avoids
    squaring the condition number of the scaled constraint matrix.
    """

    def __init__(self, G, A, scaling):
        self.G, self.A, self.W = G, A, scaling
        Gt = scaling.apply(G, inverse=True, trans=True)  # W^{-T} G
        self.Gt = Gt
        n, p = G.shape[1], A.shape[0]
        stack = np.vstack([Gt, A]) if p else Gt
        col = np.linalg.norm(stack, axis=0)
        col[col == 0.0] = 1.0
        self.dg = col
        M = stack / col
        R = np.linalg.qr(M, mode="r") if M.shape[0] >= n else None
        d = np.abs(np.diag(R)) if R is not None else np.zeros(1)
        if not np.all(np.isfinite(d)) or d.min() <= 1e-13 * d.max():
            # (nearly) rank deficient: fall back to the statically regularized stack
            R = np.linalg.qr(np.vstack([M, np.sqrt(_REG) * np.eye(n)]), mode="r")
            if not np.all(np.isfinite(R)):
                raise _KKTFailure("non-finite reduced KKT factor")
        self.R = R
        if p:
            self.As = A / col[None, :]
            # S = A H'^{-1} A^T = B^T B with B = R^{-T} As^T
            B = sla.solve_triangular(R, self.As.T, trans="T", check_finite=False)
            S = B.T @ B
            S[np.diag_indices(p)] += _REG * max(1.0, np.abs(np.diag(S)).max())
            try:
                self.cs = sla.cho_factor(S, lower=True, check_finite=False)
            except np.linalg.LinAlgError as exc:
                raise _KKTFailure(str(exc)) from exc

    def _hsolve(self, r):
        u = sla.solve_triangular(self.R, r, trans="T", check_finite=False)
        return sla.solve_triangular(self.R, u, check_finite=False)

    def _solve_reduced(self, rx, ry):
        """Solve [H A^T; A 0][x; y] = [rx; ry] (equality-augmented form)."""
        # with H' = H + A^T A the system is equivalent to
        # [H' A^T; A 0][x; y] = [rx + A^T ry; ry]
        p = self.A.shape[0]
        dg = self.dg
        if p:
            r = (rx + self.A.T @ ry) / dg
            u = self._hsolve(r)
            y = sla.cho_solve(self.cs, self.As @ u - ry, check_finite=False)
            x = self._hsolve(r - self.As.T @ y)
            return x / dg, y
        return self._hsolve(rx / dg) / dg, np.zeros(0)

    def _solve_once(self, bx, by, bz):
        bzt = self.W.apply(bz, inverse=True, trans=True)
        x, y = self._solve_reduced(bx + self.Gt.T @ bzt, by)
        zt = self.Gt @ x - bzt
        return x, y, self.W.apply(zt, inverse=True)

    def solve(self, bx, by, bz, refine=3):
        """Solve the full KKT system

            A^T uy + G^T uz = bx,  A ux = by,  G ux - W^T W uz = bz

        with iterative refinement on the unreduced equations.
        """
        W = self.W
        x, y, z = self._solve_once(bx, by, bz)
        scale = 1.0 + max(np.abs(bx).max(initial=0.0), np.abs(by).max(initial=0.0),
                          np.abs(bz).max(initial=0.0))
        for _ in range(refine):
            ex = bx - self.A.T @ y - self.G.T @ z
            ey = by - self.A @ x
            ez = bz - self.G @ x + W.apply(W.apply(z), trans=True)
            err = max(np.abs(ex).max(initial=0.0), np.abs(ey).max(initial=0.0),
                      np.abs(ez).max(initial=0.0))
            if err <= 1e-15 * scale:
                break
            dx, dy, dz = self._solve_once(ex, ey, ez)
            x += dx
            y += dy
            z += dz
        return x, y, z


def solve(p, tol=1e-8, max_iter=100):
    """Solve a :class:`ConeProgram`.

    Parameters
    ----------
    p : ConeProgram
    tol : float
        Tolerance on relative primal residual, dual residual and gap.
    max_iter : int

    Returns
    -------
    ConeSolution
        ``x``, ``y`` and ``s``, ``z`` in the program's own block layout.  For
        the infeasible statuses ``certificate`` holds the normalized ray:
        ``(y, z)`` stacked for primal infeasibility, ``x`` for dual
        infeasibility.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    G, h, (l, soc, psd), to_s, to_z = p.lower()
    A, b, c = p.A, p.b, p.c
    cone = ProductCone(l, soc, psd)
    n, m, pdim = c.size, h.size, b.size
    e = cone.identity()

    resx0 = max(1.0, np.linalg.norm(c))
    resy0 = max(1.0, np.linalg.norm(b))
    resz0 = max(1.0, np.linalg.norm(h))

    def finish(status, x, y, s, z, tau, kappa, it, res, cert=None):
        if status == Status.OPTIMAL or status == Status.NUMERIC_LIMIT:
            xs, ys, ss, zs = x / tau, y / tau, s / tau, z / tau
        else:
            xs, ys, ss, zs = x, y, s, z
        return ConeSolution(
            status=status,
            x=xs,
            s=to_s(ss),
            z=to_z(zs),
            y=ys,
            primal_objective=float(c @ xs),
            dual_objective=float(-(b @ ys) - (h @ zs)),
            residuals=res,
            iterations=it,
            certificate=cert,
        )

    # -- starting point ---------------------------------------------------
    try:
        kkt = _KKT(G, A, cone.scaling(e, e))
    except _KKTFailure:
        zero = np.zeros
        return finish(Status.NUMERIC_LIMIT, zero(n), zero(pdim), e.copy(), e.copy(), 1.0, 1.0, 0,
                      {"primal": np.inf, "dual": np.inf, "gap": np.inf})
    x, _, sneg = kkt.solve(np.zeros(n), b, h)
    s = -sneg  # s = h - G x at the least-squares primal point
    _, y, z = kkt.solve(-c, np.zeros(pdim), np.zeros(m))
    ap = cone.interior_shift(s)
    if ap >= -1e-8 * max(1.0, np.linalg.norm(s)):
        s = s + (1.0 + max(ap, 0.0)) * e
    ad = cone.interior_shift(z)
    if ad >= -1e-8 * max(1.0, np.linalg.norm(z)):
        z = z + (1.0 + max(ad, 0.0)) * e
    tau, kappa = 1.0, 1.0
    try:
        W = cone.scaling(s, z)
    except np.linalg.LinAlgError:
        W = None

    best = None
    res = {"primal": np.inf, "dual": np.inf, "gap": np.inf}
    for it in range(max_iter + 1):
        # -- residuals ---------------------------------------------------
        hx = A.T @ y + G.T @ z
        rx = hx + c * tau
        Ax = A @ x
        ry = Ax - b * tau
        Gxs = G @ x + s
        rz = Gxs - h * tau
        cx, by_, hz = c @ x, b @ y, h @ z
        rt = kappa + cx + by_ + hz
        sz = s @ z
        mu = (sz + tau * kappa) / (cone.degree + 1)

        pcost, dcost = cx / tau, -(by_ + hz) / tau
        pres = max(np.linalg.norm(ry) / resy0, np.linalg.norm(rz) / resz0) / tau
        dres = np.linalg.norm(rx) / resx0 / tau
        gap = sz / tau**2
        relgap = gap / max(1.0, abs(pcost))
        res = {"primal": float(pres), "dual": float(dres), "gap": float(relgap)}
        pinf = np.linalg.norm(hx) / resx0 / (-(by_ + hz)) if by_ + hz < 0 else np.inf
        dinf = (max(np.linalg.norm(Ax) / resy0, np.linalg.norm(Gxs) / resz0) / (-cx)
                if cx < 0 else np.inf)

        score = max(pres, dres, relgap)
        if best is None or score < best[0]:
            best = (score, x.copy(), y.copy(), s.copy(), z.copy(), tau, kappa, dict(res))

        if pres <= tol and dres <= tol and relgap <= tol:
            return finish(Status.OPTIMAL, x, y, s, z, tau, kappa, it, res)
        if pinf <= tol:
            scale = -(by_ + hz)
            cert = np.concatenate([y, to_z(z)]) / scale
            r = dict(res, certificate=float(pinf))
            return finish(Status.PRIMAL_INFEASIBLE, x, y / scale, s, z / scale, 1.0, kappa, it, r, cert)
        if dinf <= tol:
            scale = -cx
            r = dict(res, certificate=float(dinf))
            return finish(Status.DUAL_INFEASIBLE, x / scale, y, s / scale, z, 1.0, kappa, it, r,
                          x / scale)
        if it == max_iter:
            break

        # -- Newton directions ------------------------------------------
        if W is None:
            break
        try:
            lam = W.lam
            kkt = _KKT(G, A, W)
            x1, y1, z1 = kkt.solve(-c, b, h)
        except (_KKTFailure, np.linalg.LinAlgError, FloatingPointError):
            break
        Wz1 = W.apply(z1)
        denom = -(Wz1 @ Wz1) - kappa / tau
        lamsq = cone.product(lam, lam)

        def direction(eta, ds_rhs, dk_rhs):
            x2, y2, z2 = kkt.solve(
                -eta * rx,
                -eta * ry,
                -eta * rz - W.apply(cone.diag_divide(lam, ds_rhs), trans=True),
            )
            num = -eta * rt - dk_rhs / tau - c @ x2 - b @ y2 - h @ z2
            dt = num / denom
            dx, dy, dz = x2 + dt * x1, y2 + dt * y1, z2 + dt * z1
            dzt = W.apply(dz)
            dst = cone.diag_divide(lam, ds_rhs) - dzt
            dk = (dk_rhs - kappa * dt) / tau
            return dx, dy, dz, dst, dzt, dt, dk

        def step_length(dst, dzt, dt, dk):
            a = min(cone.max_step(lam, dst), cone.max_step(lam, dzt))
            if dt < 0:
                a = min(a, -tau / dt)
            if dk < 0:
                a = min(a, -kappa / dk)
            return a

        # predictor
        aff = direction(1.0, -lamsq, -tau * kappa)
        _, _, _, dst_a, dzt_a, dt_a, dk_a = aff
        alpha_aff = min(1.0, step_length(dst_a, dzt_a, dt_a, dk_a))
        sigma = (1.0 - alpha_aff) ** 3
        # corrector
        ds_rhs = -lamsq + sigma * mu * e - cone.product(dst_a, dzt_a)
        dk_rhs = -tau * kappa + sigma * mu - dt_a * dk_a
        dx, dy, dz, dst, dzt, dt, dk = direction(1.0 - sigma, ds_rhs, dk_rhs)
        alpha = min(1.0, _STEP * step_length(dst, dzt, dt, dk))
        if not np.isfinite(alpha) or alpha <= 1e-14:
            break

        # update in the scaled space keeps s and z well inside the cone
        st = lam + alpha * dst
        zt = lam + alpha * dzt
        s = W.apply(st, trans=True)
        z = W.apply(zt, inverse=True)
        try:
            W.update(st, zt)
        except np.linalg.LinAlgError:
            W = None
        x = x + alpha * dx
        y = y + alpha * dy
        tau = tau + alpha * dt
        kappa = kappa + alpha * dk
        if not (np.all(np.isfinite(x)) and np.isfinite(tau)):
            break

    _, x, y, s, z, tau, kappa, res = best
    return finish(Status.NUMERIC_LIMIT, x, y, s, z, tau, kappa, max_iter, res)
