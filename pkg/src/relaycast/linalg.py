"""Dense complex linear-algebra kernels.

All routines work on double-precision numpy arrays and are thin, checked
wrappers around LAPACK (via scipy).  They raise :class:`NumericalError`
instead of returning garbage when a factorization is not possible.
"""

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

__all__ = [
    "NumericalError",
    "is_hermitian",
    "hermitian_eig",
    "cholesky",
    "solve_linear",
]


class NumericalError(ArithmeticError):
    """A factorization or solve could not be carried out.

    Parameters
    ----------
    message : str
        Human-readable description.
    pivot : int, optional
        Zero-based index of the failing pivot (Cholesky).
    condition : float, optional
        Estimated 1-norm condition number (linear solves).
    """

    def __init__(self, message, pivot=None, condition=None):
        super().__init__(message)
        self.pivot = pivot
        self.condition = condition


def _as_square(m):
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def is_hermitian(m, rtol=1e-12):
    """Return True if ``m`` equals its conjugate transpose within ``rtol``."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    scale = max(np.abs(m).max(initial=0.0), np.finfo(float).tiny)
    return np.abs(m - m.conj().T).max(initial=0.0) <= rtol * scale


def hermitian_eig(m):
    """Eigendecomposition of a Hermitian matrix.

    Uses LAPACK's ``?heev`` (Householder tridiagonalization followed by the
    implicit QL/QR iteration).

    Parameters
    ----------
    m : (n, n) array_like
        Hermitian (or real symmetric) matrix.

    Returns
    -------
    eigenvalues : (n,) ndarray
        Real eigenvalues sorted in descending order.
    eigenvectors : (n, n) ndarray
        Orthonormal eigenvectors; column ``k`` belongs to ``eigenvalues[k]``.
    """
    m = _as_square(m)
    if not is_hermitian(m):
        raise ValueError("matrix is not Hermitian")
    m = 0.5 * (m + m.conj().T)
    try:
        vals, vecs = sla.eigh(m, driver="ev")
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver did not converge: {exc}") from exc
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


def cholesky(m):
    """Lower Cholesky factor ``L`` with ``L @ L.conj().T == m``.

    Raises
    ------
    NumericalError
        If ``m`` is not numerically positive definite.  ``pivot`` holds the
        zero-based index of the first non-positive pivot.
    """
    m = _as_square(m)
    if not is_hermitian(m):
        raise ValueError("matrix is not Hermitian")
    n = m.shape[0]
    diag = np.real(np.diag(m))
    floor = 1e-12 * max(diag.sum(), 0.0) / max(n, 1)
    if n and diag.min() <= floor:
        idx = int(np.argmin(diag))
        raise NumericalError(f"matrix is not positive definite (pivot {idx})", pivot=idx)
    potrf = lapack.zpotrf if np.iscomplexobj(m) else lapack.dpotrf
    c, info = potrf(m, lower=1, clean=1)
    if info > 0:
        raise NumericalError(
            f"matrix is not positive definite (pivot {info - 1})", pivot=info - 1
        )
    if info < 0:  # pragma: no cover - argument error inside LAPACK
        raise ValueError(f"illegal argument {-info} to potrf")
    return np.tril(c)


def solve_linear(m, rhs, max_condition=1e12):
    """Solve ``m @ x = rhs`` by LU factorization with a condition check.

    Raises
    ------
    NumericalError
        If ``m`` is singular or its estimated condition number exceeds
        ``max_condition``.
    """
    m = _as_square(m)
    rhs = np.asarray(rhs)
    if rhs.shape[0] != m.shape[0]:
        raise ValueError(f"rhs has {rhs.shape[0]} rows, matrix has {m.shape[0]}")
    anorm = np.abs(m).sum(axis=0).max(initial=0.0)
    lu, piv, info = (lapack.zgetrf if np.iscomplexobj(m) else lapack.dgetrf)(m)
    if info > 0 or anorm == 0.0:
        raise NumericalError("matrix is singular", condition=np.inf)
    gecon = lapack.zgecon if np.iscomplexobj(m) else lapack.dgecon
    rcond, _ = gecon(lu, anorm)
    cond = np.inf if rcond == 0.0 else 1.0 / rcond
    if cond > max_condition:
        raise NumericalError(f"matrix is ill-conditioned (cond ~ {cond:.3g})", condition=cond)
    dtype = np.result_type(m, rhs)
    return sla.lu_solve((lu, piv), rhs.astype(dtype, copy=False))
