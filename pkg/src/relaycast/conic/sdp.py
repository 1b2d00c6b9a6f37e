"""Complex Hermitian semidefinite feasibility on top of the real solver.

A Hermitian ``n x n`` matrix X is parameterized by ``n**2`` reals: the
diagonal, then the real parts and the imaginary parts of the strict lower
triangle.  The PSD constraint X >= 0 is imposed through the real symmetric
embedding

    Y = [[Re X, -Im X],
         [Im X,  Re X]]  >= 0,

which has the same eigenvalues as X, each repeated twice.
"""

from dataclasses import dataclass, field

import numpy as np

from .cones import svec, svec_size
from .program import Cone, ConeProgram, Status
from .solver import solve

__all__ = [
    "HermitianParam",
    "MatrixConstraint",
    "FeasibilityResult",
    "sdp_feasibility",
    "sdp_minimize",
    "OptimizationResult",
]


class HermitianParam:
    """Real parameterization of n x n Hermitian matrices."""

    _cache = {}

    def __new__(cls, n):
        obj = cls._cache.get(n)
        if obj is None:
            obj = super().__new__(cls)
            obj._setup(int(n))
            cls._cache[n] = obj
        return obj

    def _setup(self, n):
        self.n = n
        self.rows, self.cols = np.tril_indices(n, -1)
        self.size = n * n
        self.embed = self._embedding_matrix()

    def to_params(self, X):
        X = np.asarray(X)
        low = X[self.rows, self.cols]
        return np.concatenate([np.real(np.diag(X)), low.real, low.imag])

    def from_params(self, v):
        n = self.n
        k = len(self.rows)
        X = np.zeros((n, n), dtype=complex)
        X[np.diag_indices(n)] = v[:n]
        low = v[n:n + k] + 1j * v[n + k:]
        X[self.rows, self.cols] = low
        X[self.cols, self.rows] = np.conj(low)
        return X

    def trace_row(self, C):
        """Coefficient row r with r @ to_params(X) == Re tr(C X)."""
        C = np.asarray(C)
        low = C[self.rows, self.cols]
        return np.concatenate([np.real(np.diag(C)), 2.0 * low.real, 2.0 * low.imag])

    def _embedding_matrix(self):
        """Matrix E with svec(Y) = E @ params for the real embedding Y of X."""
        n = self.n
        cols = []
        basis = np.eye(self.size)
        for j in range(self.size):
            X = self.from_params(basis[j])
            Y = np.block([[X.real, -X.imag], [X.imag, X.real]])
            cols.append(svec(Y))
        return np.column_stack(cols)


@dataclass
class MatrixConstraint:
    """Affine constraint  sum_k Re tr(coeffs[k] X_k)  (sense)  rhs.

    ``coeffs`` holds one Hermitian matrix per block (``None`` for blocks
    that do not appear).  ``sense`` is one of ``">="``, ``"<="``, ``"=="``.
    In feasibility problems an inequality with ``soft=False`` must hold
    exactly instead of contributing to the margin; use it for constraints
    whose feasible region may have empty interior.
    """

    coeffs: tuple
    sense: str
    rhs: float
    soft: bool = True

    def __post_init__(self):
        if self.sense not in (">=", "<=", "=="):
            raise ValueError(f"bad constraint sense {self.sense!r}")


@dataclass
class FeasibilityResult:
    status: str  # "feasible", "infeasible" or "indeterminate"
    X: list = field(default_factory=list)
    margin: float = float("nan")
    solver_status: str = ""
    iterations: int = 0

    @property
    def feasible(self):
        return self.status == "feasible"


def _rows(constraints, dims, params, offsets, nv):
    """Real coefficient rows (length nv) of every constraint."""
    out = []
    for con in constraints:
        if len(con.coeffs) != len(dims):
            raise ValueError("constraint has wrong number of coefficient blocks")
        row = np.zeros(nv)
        for k, C in enumerate(con.coeffs):
            if C is None:
                continue
            C = np.asarray(C)
            if C.shape != (dims[k], dims[k]):
                raise ValueError(f"coefficient block {k} has shape {C.shape}")
            row[offsets[k]:offsets[k + 1]] = params[k].trace_row(C)
        out.append(row)
    return out


def _lower(constraints, dims, margin):
    """Cone program pieces shared by the feasibility and optimization forms.

    With ``margin`` the last variable is the slack s and every inequality
    reads ``sigma_i (a_i(X) - b_i) >= s * nu_i``; otherwise inequalities are
    plain ``sigma_i (a_i(X) - b_i) >= 0``.
    """
    params = [HermitianParam(n) for n in dims]
    offsets = np.cumsum([0] + [p.size for p in params])
    nv = int(offsets[-1]) + (1 if margin else 0)
    ineq_rows, ineq_rhs, eq_rows, eq_rhs = [], [], [], []
    for con, row in zip(constraints, _rows(constraints, dims, params, offsets, nv)):
        if con.sense == "==":
            eq_rows.append(row)
            eq_rhs.append(con.rhs)
            continue
        sign = 1.0 if con.sense == ">=" else -1.0
        nu = max(np.linalg.norm(row), abs(con.rhs), 1e-300)
        # -sign*a(X) + nu*s <= -sign*b
        r = -sign * row
        if margin and con.soft:
            r[-1] = nu
        ineq_rows.append(r / nu)
        ineq_rhs.append(-sign * con.rhs / nu)
    if margin:
        cap = np.zeros(nv)
        cap[-1] = 1.0
        ineq_rows.append(cap)
        ineq_rhs.append(1.0)
    G_parts, h_parts, cones = [], [], []
    if ineq_rows:
        G_parts.append(np.array(ineq_rows))
        h_parts.append(np.array(ineq_rhs))
        cones.append(Cone.orthant(len(ineq_rows)))
    for k, p in enumerate(params):
        Gk = np.zeros((svec_size(2 * p.n), nv))
        Gk[:, offsets[k]:offsets[k + 1]] = -p.embed
        G_parts.append(Gk)
        h_parts.append(np.zeros(svec_size(2 * p.n)))
        cones.append(Cone.psd(2 * p.n))
    A = np.array(eq_rows) if eq_rows else None
    b = np.array(eq_rhs) if eq_rows else None
    return np.vstack(G_parts), np.concatenate(h_parts), cones, A, b, params, offsets, nv


def build_margin_program(constraints, dims):
    """Lower a Hermitian feasibility problem to a margin-maximization program.

    Variables are the stacked block parameters followed by the margin s::

        maximize  s
        s.t.      sigma_i (a_i(X) - b_i) >= s * nu_i      (inequalities)
                  a_j(X) = b_j                            (equalities)
                  s <= 1,  X_k >= 0

    where sigma_i orients the inequality and nu_i normalizes the row.
    """
    G, h, cones, A, b, params, offsets, nv = _lower(constraints, dims, margin=True)
    c = np.zeros(nv)
    c[-1] = -1.0
    return ConeProgram(c, G, h, cones, A, b), params, offsets


@dataclass
class OptimizationResult:
    status: str  # conic solver status
    X: list = field(default_factory=list)
    value: float = float("nan")
    iterations: int = 0

    @property
    def optimal(self):
        return self.status == Status.OPTIMAL


def sdp_minimize(objective, constraints, dims, tol=1e-8, max_iter=100):
    """Minimize ``sum_k Re tr(objective[k] X_k)`` over PSD Hermitian blocks.

    Parameters
    ----------
    objective : sequence of Hermitian matrices (or None), one per block
    constraints : sequence of MatrixConstraint
    dims : int or sequence of int
    """
    if np.isscalar(dims):
        dims = [int(dims)]
    dims = [int(n) for n in dims]
    G, h, cones, A, b, params, offsets, nv = _lower(constraints, dims, margin=False)
    c = _rows([MatrixConstraint(tuple(objective), ">=", 0.0)], dims, params, offsets, nv)[0]
    sol = solve(ConeProgram(c, G, h, cones, A, b), tol=tol, max_iter=max_iter)
    X = [p.from_params(sol.x[offsets[k]:offsets[k + 1]]) for k, p in enumerate(params)]
    return OptimizationResult(sol.status, X, float(sol.primal_objective), sol.iterations)


def sdp_feasibility(constraints, dims, tol=1e-7, solver_tol=1e-8, max_iter=100):
    """Decide whether PSD Hermitian matrices satisfying ``constraints`` exist.

    Parameters
    ----------
    constraints : sequence of MatrixConstraint
    dims : int or sequence of int
        Order of each Hermitian block (each at most 64).
    tol : float
        Margin threshold: margin >= tol is feasible, margin <= -tol is
        infeasible, anything in between is indeterminate.

    Returns
    -------
    FeasibilityResult
        ``X`` holds the blocks at the margin-maximizing point when the
        solver finished, whatever the verdict.
    """
    if np.isscalar(dims):
        dims = [int(dims)]
    dims = [int(n) for n in dims]
    if any(n < 1 or n > 64 for n in dims):
        raise ValueError("block orders must lie in [1, 64]")
    prog, params, offsets = build_margin_program(constraints, dims)
    sol = solve(prog, tol=solver_tol, max_iter=max_iter)
    if sol.status == Status.PRIMAL_INFEASIBLE:
        return FeasibilityResult("infeasible", [], -np.inf, sol.status, sol.iterations)
    if sol.status != Status.OPTIMAL:
        return FeasibilityResult("indeterminate", [], float("nan"), sol.status, sol.iterations)
    X = [p.from_params(sol.x[offsets[k]:offsets[k + 1]]) for k, p in enumerate(params)]
    margin = float(sol.x[-1])
    if margin >= tol:
        verdict = "feasible"
    elif margin <= -tol:
        verdict = "infeasible"
    else:
        verdict = "indeterminate"
    return FeasibilityResult(verdict, X, margin, sol.status, sol.iterations)
