"""Symmetric-cone algebra used by the interior-point solver.

The slack vector of a standard-form program is laid out as

    [ orthant | soc blocks grouped by size | psd blocks ]

PSD blocks are stored as ``svec`` vectors: the lower triangle, column by
column, with off-diagonal entries multiplied by sqrt(2) so that the
Euclidean inner product of two svecs equals the trace inner product.
"""

import numpy as np

SQRT2 = np.sqrt(2.0)

_svec_cache = {}


def _svec_index(n):
    idx = _svec_cache.get(n)
    if idx is None:
        rows, cols = [], []
        for j in range(n):
            for i in range(j, n):
                rows.append(i)
                cols.append(j)
        rows = np.array(rows, dtype=np.intp)
        cols = np.array(cols, dtype=np.intp)
        scale = np.where(rows == cols, 1.0, SQRT2)
        flat_lo = rows * n + cols
        flat_up = cols * n + rows
        idx = (rows, cols, scale, flat_lo, flat_up, 1.0 / scale)
        _svec_cache[n] = idx
    return idx


def svec(mat):
    """Symmetric matrix (or stack of matrices) -> scaled lower-triangle vector."""
    mat = np.asarray(mat)
    n = mat.shape[-1]
    _, _, scale, flat_lo, _, _ = _svec_index(n)
    if mat.ndim == 2:
        return mat.reshape(-1).take(flat_lo) * scale
    return mat.reshape(mat.shape[:-2] + (n * n,))[..., flat_lo] * scale


def smat(vec, n=None):
    """Inverse of :func:`svec`."""
    vec = np.asarray(vec)
    if n is None:
        n = int(round((np.sqrt(8 * vec.shape[-1] + 1) - 1) / 2))
    _, _, _, flat_lo, flat_up, inv = _svec_index(n)
    vals = vec * inv
    out = np.empty(vec.shape[:-1] + (n * n,))
    out[..., flat_up] = vals
    out[..., flat_lo] = vals
    return out.reshape(vec.shape[:-1] + (n, n))


def svec_size(n):
    return n * (n + 1) // 2


class ProductCone:
    """Product of one orthant, second-order cones and PSD cones.

    Parameters
    ----------
    l : int
        Dimension of the nonnegative orthant.
    soc : sequence of int
        Sizes of the second-order cone blocks, in slack order.
    psd : sequence of int
        Orders of the PSD blocks, in slack order.
    """

    def __init__(self, l, soc=(), psd=()):
        self.l = int(l)
        self.soc = [int(q) for q in soc]
        self.psd = [int(n) for n in psd]
        off = self.l
        # contiguous runs of equal-size SOC blocks are processed as one 2-D array
        self._soc_groups = []
        i = 0
        while i < len(self.soc):
            q = self.soc[i]
            j = i
            while j < len(self.soc) and self.soc[j] == q:
                j += 1
            count = j - i
            self._soc_groups.append((off, q, count))
            off += q * count
            i = j
        self._psd_slices = []
        for n in self.psd:
            size = svec_size(n)
            self._psd_slices.append((slice(off, off + size), n))
            off += size
        self.dim = off
        self.degree = self.l + len(self.soc) + sum(self.psd)

    # -- helpers ---------------------------------------------------------
    def _groups(self, u):
        for off, q, count in self._soc_groups:
            yield off, q, count, u[off:off + q * count].reshape(count, q)

    def identity(self):
        e = np.zeros(self.dim)
        e[: self.l] = 1.0
        for off, q, count in self._soc_groups:
            e[off:off + q * count].reshape(count, q)[:, 0] = 1.0
        for sl, n in self._psd_slices:
            e[sl] = svec(np.eye(n))
        return e

    def inner(self, u, v):
        return float(u @ v)

    # -- Jordan algebra -------------------------------------------------
    def product(self, u, v):
        """Jordan product u o v."""
        out = np.empty(self.dim)
        out[: self.l] = u[: self.l] * v[: self.l]
        for off, q, count in self._soc_groups:
            U = u[off:off + q * count].reshape(count, q)
            V = v[off:off + q * count].reshape(count, q)
            O = out[off:off + q * count].reshape(count, q)
            O[:, 0] = np.einsum("ij,ij->i", U, V)
            O[:, 1:] = U[:, :1] * V[:, 1:] + V[:, :1] * U[:, 1:]
        for sl, n in self._psd_slices:
            U = smat(u[sl], n)
            V = smat(v[sl], n)
            P = U @ V
            out[sl] = svec(0.5 * (P + P.T))
        return out

    def diag_product(self, lam, u):
        """lam o u where lam is a scaled point (PSD part diagonal)."""
        out = np.empty(self.dim)
        out[: self.l] = lam[: self.l] * u[: self.l]
        for off, q, count in self._soc_groups:
            L = lam[off:off + q * count].reshape(count, q)
            U = u[off:off + q * count].reshape(count, q)
            O = out[off:off + q * count].reshape(count, q)
            O[:, 0] = np.einsum("ij,ij->i", L, U)
            O[:, 1:] = L[:, :1] * U[:, 1:] + U[:, :1] * L[:, 1:]
        for sl, n in self._psd_slices:
            d = self._psd_diag(lam[sl], n)
            U = smat(u[sl], n)
            out[sl] = svec(0.5 * (d[:, None] + d[None, :]) * U)
        return out

    def diag_divide(self, lam, v):
        """Solve lam o x = v for x (lam a scaled point)."""
        out = np.empty(self.dim)
        out[: self.l] = v[: self.l] / lam[: self.l]
        for off, q, count in self._soc_groups:
            L = lam[off:off + q * count].reshape(count, q)
            V = v[off:off + q * count].reshape(count, q)
            O = out[off:off + q * count].reshape(count, q)
            l0 = L[:, 0]
            det = l0 * l0 - np.einsum("ij,ij->i", L[:, 1:], L[:, 1:])
            x0 = (l0 * V[:, 0] - np.einsum("ij,ij->i", L[:, 1:], V[:, 1:])) / det
            O[:, 0] = x0
            O[:, 1:] = (V[:, 1:] - x0[:, None] * L[:, 1:]) / l0[:, None]
        for sl, n in self._psd_slices:
            d = self._psd_diag(lam[sl], n)
            V = smat(v[sl], n)
            out[sl] = svec(V * (2.0 / (d[:, None] + d[None, :])))
        return out

    @staticmethod
    def _psd_diag(vec, n):
        rows, cols = _svec_index(n)[:2]
        return vec[rows == cols]

    def max_step(self, lam, d):
        """Largest alpha >= 0 with lam + alpha*d in the cone (inf if unbounded)."""
        alpha = np.inf
        if self.l:
            dl = d[: self.l]
            neg = dl < 0
            if np.any(neg):
                alpha = min(alpha, float(np.min(-lam[: self.l][neg] / dl[neg])))
        for off, q, count in self._soc_groups:
            L = lam[off:off + q * count].reshape(count, q)
            D = d[off:off + q * count].reshape(count, q)
            A = D[:, 0] ** 2 - np.einsum("ij,ij->i", D[:, 1:], D[:, 1:])
            B = L[:, 0] * D[:, 0] - np.einsum("ij,ij->i", L[:, 1:], D[:, 1:])
            C = L[:, 0] ** 2 - np.einsum("ij,ij->i", L[:, 1:], L[:, 1:])
            disc = np.maximum(B * B - A * C, 0.0)
            den = -B + np.sqrt(disc)
            inside = (A >= 0) & (D[:, 0] >= 0)
            ok = (~inside) & (den > 0)
            if np.any(ok):
                alpha = min(alpha, float(np.min(C[ok] / den[ok])))
        for sl, n in self._psd_slices:
            dl = self._psd_diag(lam[sl], n)
            s = 1.0 / np.sqrt(dl)
            M = smat(d[sl], n) * s[:, None] * s[None, :]
            ev = np.linalg.eigvalsh(M)[0]
            if ev < 0:
                alpha = min(alpha, -1.0 / ev)
        return alpha

    def interior_shift(self, u):
        """Smallest alpha with u + alpha*e in the cone (negative if u is interior)."""
        worst = -np.inf
        if self.l:
            worst = max(worst, float(-u[: self.l].min()))
        for off, q, count, U in self._groups(u):
            nrm = np.linalg.norm(U[:, 1:], axis=1)
            worst = max(worst, float(np.max(nrm - U[:, 0])))
        for sl, n in self._psd_slices:
            worst = max(worst, float(-np.linalg.eigvalsh(smat(u[sl], n))[0]))
        return worst

    # -- Nesterov-Todd scaling ------------------------------------------
    def scaling(self, s, z):
        return NTScaling(self, s, z)


class NTScaling:
    """Nesterov-Todd scaling W with W z = W^{-T} s = lam.

    Second-order blocks keep W and W^{-1} as dense (count, q, q) stacks and
    PSD blocks keep the congruence factor R with W(U) = R^T U R, so a new
    scaling can be composed onto an old one (see :meth:`update`) without
    recomputing cone determinants from nearly-degenerate iterates.
    """

    def __init__(self, cone, s, z):
        self.cone = cone
        l = cone.l
        self.d = np.sqrt(s[:l] / z[:l])
        self.soc = []
        for off, q, count in cone._soc_groups:
            S = s[off:off + q * count].reshape(count, q)
            Z = z[off:off + q * count].reshape(count, q)
            self.soc.append(_soc_nt(S, Z))
        self.psd = []
        sigmas = []
        for sl, n in cone._psd_slices:
            R, Rinv, sig = _psd_nt(smat(s[sl], n), smat(z[sl], n), with_sigma=True)
            self.psd.append((R, Rinv))
            sigmas.append(sig)
        self.lam = self.apply(z)
        for (sl, n), sig in zip(cone._psd_slices, sigmas):
            self.lam[sl] = svec(np.diag(sig))

    def update(self, s_scaled, z_scaled):
        """Compose with the NT scaling of a scaled pair (s~, z~).

        ``s_scaled = W^{-T} s_new`` and ``z_scaled = W z_new``; afterwards
        this object is the NT scaling of (s_new, z_new).
        """
        cone = self.cone
        l = cone.l
        sl_, zl = s_scaled[:l], z_scaled[:l]
        self.d = self.d * np.sqrt(sl_ / zl)
        lam = np.empty(cone.dim)
        lam[:l] = np.sqrt(sl_ * zl)
        for k, (off, q, count) in enumerate(cone._soc_groups):
            blk = slice(off, off + q * count)
            S = s_scaled[blk].reshape(count, q)
            Z = z_scaled[blk].reshape(count, q)
            W1, Wi1 = _soc_nt(S, Z)
            W0, Wi0 = self.soc[k]
            self.soc[k] = (W1 @ W0, Wi0 @ Wi1)
            lam[blk] = np.einsum("iqr,ir->iq", W1, Z).reshape(-1)
        for k, (sl, n) in enumerate(cone._psd_slices):
            R0, Ri0 = self.psd[k]
            R1, Ri1, sig = _psd_nt(smat(s_scaled[sl], n), smat(z_scaled[sl], n), with_sigma=True)
            self.psd[k] = (R0 @ R1, Ri1 @ Ri0)
            lam[sl] = svec(np.diag(sig))
        self.lam = lam

    def apply(self, u, inverse=False, trans=False):
        """Return W u, W^{-1} u, W^T u or W^{-T} u (u may be a 2-D column stack)."""
        cone = self.cone
        u = np.asarray(u, dtype=float)
        out = np.empty_like(u)
        l = cone.l
        if inverse:
            out[:l] = u[:l] / (self.d if u.ndim == 1 else self.d[:, None])
        else:
            out[:l] = u[:l] * (self.d if u.ndim == 1 else self.d[:, None])
        for (off, q, count), (W, Wi) in zip(cone._soc_groups, self.soc):
            blk = slice(off, off + q * count)
            M = Wi if inverse else W
            if trans:
                M = M.transpose(0, 2, 1)
            if u.ndim == 1:
                U = u[blk].reshape(count, q, 1)
                out[blk] = np.matmul(M, U).reshape(-1)
            else:
                k = u.shape[1]
                U = u[blk].reshape(count, q, k)
                out[blk] = np.matmul(M, U).reshape(q * count, k)
        for (sl, n), (R, Rinv) in zip(cone._psd_slices, self.psd):
            # W(U) = R^T U R, W^T(U) = R U R^T, inverses analogous
            if inverse:
                left, right = (Rinv.T, Rinv) if not trans else (Rinv, Rinv.T)
            else:
                left, right = (R.T, R) if not trans else (R, R.T)
            if u.ndim == 1:
                out[sl] = svec(left @ smat(u[sl], n) @ right)
            else:
                mats = smat(u[sl].T, n)
                out[sl] = svec(left @ mats @ right).T
        return out


def _soc_det_sqrt(U):
    """sqrt(u0^2 - ||u1||^2) per row, computed as sqrt((u0-|u1|)(u0+|u1|))."""
    r = np.linalg.norm(U[:, 1:], axis=1)
    return np.sqrt(np.maximum((U[:, 0] - r) * (U[:, 0] + r), 0.0))


def _soc_nt(S, Z):
    """Dense NT scaling matrices (W, W^{-1}) for a stack of SOC pairs."""
    count, q = S.shape
    snrm = _soc_det_sqrt(S)
    znrm = _soc_det_sqrt(Z)
    Sb = S / snrm[:, None]
    Zb = Z / znrm[:, None]
    gamma = np.sqrt(0.5 * (1.0 + np.einsum("ij,ij->i", Sb, Zb)))
    Wb = Sb.copy()
    Wb[:, 0] += Zb[:, 0]
    Wb[:, 1:] -= Zb[:, 1:]
    Wb /= (2.0 * gamma)[:, None]
    v = Wb.copy()
    v[:, 0] += 1.0
    v /= np.sqrt(2.0 * (Wb[:, 0] + 1.0))[:, None]
    beta = np.sqrt(snrm / znrm)
    Jv = v.copy()
    Jv[:, 1:] *= -1.0
    J = -np.eye(q)
    J[0, 0] = 1.0
    W = beta[:, None, None] * (2.0 * v[:, :, None] * v[:, None, :] - J)
    Wi = (2.0 * Jv[:, :, None] * Jv[:, None, :] - J) / beta[:, None, None]
    return W, Wi


def _psd_nt(S, Z, with_sigma=False):
    Ls = np.linalg.cholesky(S)
    Lz = np.linalg.cholesky(Z)
    U, sig, Vt = np.linalg.svd(Lz.T @ Ls)
    isq = 1.0 / np.sqrt(sig)
    R = (Ls @ Vt.T) * isq[None, :]
    Rinv = (U.T @ Lz.T) * isq[:, None]
    if with_sigma:
        return R, Rinv, sig
    return R, Rinv
