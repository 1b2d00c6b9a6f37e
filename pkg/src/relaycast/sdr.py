"""Semidefinite relaxation with a 2D search over (a, t).

Replacing w1~ w1~^H + w2^ w2^H by one PSD matrix X (w2^ = A w2~) turns the
SNR constraint at fixed (t, a) into the linear matrix inequality

    tr(X Q~_{m,1}) >= (a/t - |d_m|^2/s2) (tr(X R~_m) + s2),

and every power constraint into a linear one.  For fixed a, feasibility is
monotone in t, so the smallest feasible t is found by bisection; a is
searched over a logarithmic grid.

Bound
    Feasibility at (t, a) implies feasibility at (t a'/a, a') for every
    a' >= a (the SNR constraint only depends on a/t and every power term
    shrinks).  Hence for a in [a_i, a_{i+1}] the optimal value satisfies
    t*(a) >= t_lo(a_{i+1}) a_i / a_{i+1}, where t_lo is a t certified
    infeasible at a_{i+1}.  The minimum of these values over the grid is a
    lower bound on t over the whole interval [a_min, a_max], i.e. its
    reciprocal upper-bounds the minimum SNR of any beamformer.

Search and recovery work on normalized data (see :func:`model.normalize`);
:func:`search` accepts physical data and maps results back.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import model
from .cccp import A_MAX_FACTOR, initial_point
from .conic import MatrixConstraint, sdp_feasibility, sdp_minimize
from .linalg import hermitian_eig
from .scenario import make_rng

__all__ = [
    "GridRecord",
    "BisectionResult",
    "SdrOutcome",
    "RandomizationResult",
    "snr_constraints",
    "power_constraints",
    "sdr_feasible",
    "bisect_t",
    "search",
    "snr_upper_bound",
    "numerical_rank",
    "decompose_rank_two",
    "randomize",
    "recover",
    "write_grid_csv",
]

RANK_TOL = 1e-6
# first grid point sits this far (relative) above a_min, where the source
# budget leaves no room for the direct-link slots
_A_MIN_OFFSET = 1e-6
_STREAM_RANDOMIZE = 32


# -- constraint sets -------------------------------------------------------------

def snr_constraints(t, a, data, form="one"):
    """SNR constraints at fixed (t, a) as MatrixConstraint objects.

    ``form`` selects the variables:

    ``"one"``
        X1 alone (the rank-relaxed single-matrix problem).
    ``"two"``
        X1 and X2 = w2^ w2^H, both weighted by Q~_{m,1}.
    ``"two-direct"``
        X1 and X2 = w2~ w2~^H with the second block weighted by Q~_{m,2}.
    """
    s2 = data.sigma_nu_sq
    out = []
    for m in range(data.M):
        c = a / t - data.d_sq[m] / s2
        Rm = np.diag(data.r_diag[m])
        C1 = np.outer(data.q1[m], data.q1[m].conj()) - c * Rm
        if form == "one":
            coeffs = (C1,)
        elif form == "two":
            coeffs = (C1, C1)
        elif form == "two-direct":
            coeffs = (C1, np.outer(data.q2[m], data.q2[m].conj()) - c * Rm)
        else:
            raise ValueError(f"unknown form {form!r}")
        out.append(MatrixConstraint(coeffs, ">=", c * s2))
    return out


def _power_matrices(a, data):
    """Diagonals of the per-relay power matrices and of the source term."""
    n, R = data.n, data.R
    relay = np.zeros((R, n))
    relay[np.arange(R), np.arange(R)] = data.d_diag / a + data.e_diag
    src = np.zeros(n)
    src[-1] = data.s_entry / a
    return relay, src


def power_constraints(a, data, budget, blocks=1):
    """Power budgets at fixed a; every block enters with the same weight.

    These are hard constraints in the feasibility margin: near a_min the
    source budget pins the direct-link entries of X to zero.
    """
    relay, src = _power_matrices(a, data)
    out = []

    def add(diag, rhs):
        C = np.diag(diag).astype(complex)
        out.append(MatrixConstraint((C,) * blocks, "<=", rhs, soft=False))

    if budget.p_r_max is not None:
        for r in range(data.R):
            add(relay[r], budget.p_r_max)
    if budget.P_R_max is not None:
        add(relay.sum(axis=0), budget.P_R_max)
    if budget.P_S_max is not None:
        add(src, budget.P_S_max - 2.0 / a)
    if budget.P_T_max is not None:
        add(src + 2.0 * relay.sum(axis=0), budget.P_T_max - 2.0 / a)
    return out


def sdr_feasible(t, a, data, budget, form="one", tol=1e-7):
    """Feasibility of the relaxed problem at fixed (t, a).

    Returns a :class:`~relaycast.conic.FeasibilityResult` whose ``status``
    is ``"feasible"``, ``"infeasible"`` or ``"indeterminate"``.
    """
    if not (t > 0 and a > 0):
        raise ValueError("t and a must be positive")
    blocks = 1 if form == "one" else 2
    cons = snr_constraints(t, a, data, form) + power_constraints(a, data, budget, blocks)
    return sdp_feasibility(cons, [data.n] * blocks, tol=tol)


# -- bisection and grid search -------------------------------------------------

@dataclass
class BisectionResult:
    """Outcome at one grid point.

    ``t_best`` is feasible (``inf`` if none was found) and ``t_lo`` is
    certified infeasible, or treated as such after an indeterminate verdict.
    """

    a: float
    t_best: float
    t_lo: float
    X: np.ndarray = None
    n_sdp: int = 0
    n_indeterminate: int = 0
    status: str = "bisected"


class _Oracle:
    def __init__(self, data, budget, tol):
        self.data, self.budget, self.tol = data, budget, tol
        self.n_sdp = 0
        self.n_indeterminate = 0

    def __call__(self, t, a):
        res = sdr_feasible(t, a, self.data, self.budget, tol=self.tol)
        self.n_sdp += 1
        if res.status == "indeterminate":
            self.n_indeterminate += 1
        return res.status == "feasible", (res.X[0] if res.X else None)


def bisect_t(a, data, budget, eps=1e-2, t_hi=None, t_lo=None, tol=1e-7, max_expand=64,
             hi_feasible=None, _oracle=None):
    """Smallest feasible t at fixed a, to relative precision ``eps``.

    The upper end starts at ``t_hi`` (default: 1/min SNR of the CCCP start
    point, rescaled to this a) and doubles until feasible.  The lower end
    starts at ``t_lo`` when given (it must be known infeasible), else at
    ``t_hi / 2**20``, halving while still feasible.  Bisection is geometric
    and stops once ``t_hi / t_lo <= 1 + eps``.  Indeterminate verdicts count
    as infeasible.  ``hi_feasible=(X,)`` skips re-checking a ``t_hi`` already
    known feasible with witness X.
    """
    oracle = _oracle or _Oracle(data, budget, tol)
    start = oracle.n_sdp, oracle.n_indeterminate
    if t_hi is None:
        st = initial_point(data, budget, seed=0, a_max=max(a, 1.0) * A_MAX_FACTOR)
        t_hi = st.t * max(1.0, a / st.a)
    if hi_feasible is not None:
        ok, X = True, hi_feasible[0]
    else:
        ok, X = oracle(t_hi, a)
    expand = 0
    while not ok and expand < max_expand:
        t_lo = t_hi if t_lo is None else max(t_lo, t_hi)
        t_hi *= 2.0
        ok, X = oracle(t_hi, a)
        expand += 1
    if not ok:
        return BisectionResult(a, math.inf, t_hi, None, oracle.n_sdp - start[0],
                               oracle.n_indeterminate - start[1], "infeasible")
    if t_lo is None:
        t_lo = t_hi / 2.0 ** 20
        while True:
            ok_lo, X_lo = oracle(t_lo, a)
            if not ok_lo:
                break
            t_hi, X = t_lo, X_lo
            t_lo /= 2.0
            if t_lo <= 0 or oracle.n_sdp - start[0] > 400:
                break
    while t_hi / t_lo > 1.0 + eps:
        mid = math.sqrt(t_hi * t_lo)
        ok, Xm = oracle(mid, a)
        if ok:
            t_hi, X = mid, Xm
        else:
            t_lo = mid
    return BisectionResult(a, t_hi, t_lo, X, oracle.n_sdp - start[0],
                           oracle.n_indeterminate - start[1], "bisected")


@dataclass
class GridRecord:
    a: float
    t_best: float
    t_lo: float
    status: str
    n_sdp: int
    n_indeterminate: int


@dataclass
class SdrOutcome:
    """Result of the relaxed 2D search.

    Quantities with a ``_n`` suffix are in solver units; ``a_star`` and
    ``X1_star`` are physical.  ``bound_t`` is the grid-continuous lower
    bound on t, ``bound_snr = 1 / bound_t``.
    """

    X1_star: np.ndarray
    X1_star_n: np.ndarray
    t_star: float
    a_star: float
    a_star_n: float
    rank: int
    eigenvalues: np.ndarray
    bound_t: float
    records: list = field(default_factory=list)
    normalization: model.Normalization = None
    n_sdp: int = 0
    n_indeterminate: int = 0
    status: str = "ok"

    @property
    def bound_snr(self):
        return 1.0 / self.bound_t

    @property
    def bound_snr_db(self):
        return 10.0 * math.log10(self.bound_snr)

    @property
    def snr_star(self):
        return 1.0 / self.t_star


def snr_upper_bound(a, data, budget):
    """Cheap upper bound on the relaxed minimum SNR at fixed a.

    With per-entry power caps nu_i >= X_ii implied by the budgets,
    |X_ij| <= sqrt(X_ii X_jj) gives tr(X Q~_{m,1}) <= (sum_i |q_mi| sqrt(nu_i))^2,
    and the noise term is at least s2.  Returns ``inf`` when no budget
    caps the relay entries.
    """
    relay_w = data.d_diag / a + data.e_diag
    caps = []
    if budget.p_r_max is not None:
        caps.append(budget.p_r_max / relay_w)
    if budget.P_R_max is not None:
        caps.append(budget.P_R_max / relay_w)
    if budget.P_T_max is not None:
        caps.append(max(budget.P_T_max - 2.0 / a, 0.0) / (2.0 * relay_w))
    if not caps:
        return math.inf
    nu = np.empty(data.n)
    nu[:-1] = np.min(caps, axis=0)
    src = [v for v in (budget.P_S_max, budget.P_T_max) if v is not None]
    nu[-1] = max(min(src) * a - 2.0, 0.0) / data.s_entry if src else math.inf
    if not np.isfinite(nu[-1]):
        return math.inf
    amp = np.abs(data.q1) @ np.sqrt(nu)
    s2 = data.sigma_nu_sq
    return float(np.min((amp ** 2 / s2 + data.d_sq / s2) / a))


def _min_power_matrix(t, a, data, budget):
    """Feasible X at (t, a) of least total power, or None."""
    relay, src = _power_matrices(a, data)
    obj = np.diag(src + 2.0 * relay.sum(axis=0)).astype(complex)
    cons = snr_constraints(t, a, data) + power_constraints(a, data, budget)
    res = sdp_minimize((obj,), cons, data.n)
    return res.X[0] if res.optimal else None


def search(data, budget, grid_size=200, eps=1e-2, a_max=None, grid=None, tol=1e-7):
    """Grid search over a with bisection over t on physical data.

    Parameters
    ----------
    grid_size : int
        Number of log-spaced points on [2/min(P_S_max, P_T_max), a_max].
    a_max : float, optional
        Physical upper end, default ``2e6 / P_S_max``.
    grid : array_like, optional
        Explicit physical grid; overrides ``grid_size``.

    Notes
    -----
    A grid point is pruned with one SDP when the best t so far, shrunk by
    ``1 + eps``, is already infeasible there: it cannot improve the search
    by more than the bisection precision.  The reported ``X1_star`` is the
    minimum-total-power matrix feasible at ``(t_star, a_star)``, which picks
    a low-rank point out of the (thin) feasible set.
    """
    caps = [v for v in (budget.P_S_max, budget.P_T_max) if v is not None]
    if not caps:
        raise ValueError("the relaxed search needs a source or total power budget")
    ndata, nbudget, norm = model.normalize(data, budget)
    if grid is None:
        if grid_size < 2:
            raise ValueError("grid_size must be at least 2")
        if a_max is None:
            a_max = A_MAX_FACTOR / (budget.P_S_max if budget.P_S_max is not None
                                    else budget.P_T_max / 2.0)
        grid_n = np.geomspace(nbudget.min_a() * (1.0 + _A_MIN_OFFSET), a_max * norm.p0, grid_size)
    else:
        grid_n = np.sort(np.asarray(grid, dtype=float)) * norm.p0
    oracle = _Oracle(ndata, nbudget, tol)
    start = initial_point(ndata, nbudget, seed=0, a_max=grid_n[-1] / 0.99 + 1.0)
    records, best = [], None
    for a in grid_n:
        n0, i0 = oracle.n_sdp, oracle.n_indeterminate
        # every t below t_floor is infeasible at this a
        t_floor = 1.0 / snr_upper_bound(a, ndata, nbudget) * (1.0 - 1e-9)
        if best is not None:
            probe = best.t_best / (1.0 + eps)
            if t_floor >= probe:
                records.append(GridRecord(a, math.nan, t_floor, "pruned-bound", 0, 0))
                continue
            ok, X = oracle(probe, a)
            if not ok:
                records.append(GridRecord(a, math.nan, probe, "pruned",
                                          oracle.n_sdp - n0, oracle.n_indeterminate - i0))
                continue
            res = bisect_t(a, ndata, nbudget, eps, t_hi=probe, t_lo=t_floor, _oracle=oracle,
                           hi_feasible=(X,))
        else:
            t_hi = start.t * max(1.0, a / start.a)
            res = bisect_t(a, ndata, nbudget, eps, t_hi=t_hi, t_lo=min(t_floor, t_hi / 2.0),
                           _oracle=oracle)
        records.append(GridRecord(a, res.t_best, res.t_lo, res.status,
                                  oracle.n_sdp - n0, oracle.n_indeterminate - i0))
        if res.status == "bisected" and (best is None or res.t_best < best.t_best):
            best = res
    if best is None:
        return SdrOutcome(None, None, math.inf, math.nan, math.nan, 0, np.zeros(0), math.inf,
                          records, norm, oracle.n_sdp, oracle.n_indeterminate, "infeasible")
    # grid-continuous lower bound on t
    t_lo = np.array([r.t_lo for r in records])
    bound_t = float(t_lo[0])
    if grid is None:
        # the sliver [a_min, a_0] below the first grid point
        bound_t = bound_t / (1.0 + _A_MIN_OFFSET)
    if len(grid_n) > 1:
        bound_t = min(bound_t, float(np.min(t_lo[1:] * grid_n[:-1] / grid_n[1:])))
    X = _min_power_matrix(best.t_best, best.a, ndata, nbudget)
    if X is None:
        X = best.X
    X = 0.5 * (X + X.conj().T)
    lam, _ = hermitian_eig(X)
    delta = norm.delta
    X_phys = X * np.outer(delta, delta)
    return SdrOutcome(
        X1_star=X_phys,
        X1_star_n=X,
        t_star=best.t_best,
        a_star=best.a / norm.p0,
        a_star_n=best.a,
        rank=numerical_rank(X, RANK_TOL),
        eigenvalues=lam,
        bound_t=bound_t,
        records=records,
        normalization=norm,
        n_sdp=oracle.n_sdp,
        n_indeterminate=oracle.n_indeterminate,
    )


def write_grid_csv(outcome, path):
    """Columns ``a, t_best, t_lo, status, n_sdp, n_indeterminate`` (solver units)."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["a", "t_best", "t_lo", "status", "n_sdp", "n_indeterminate"])
        for r in outcome.records:
            out.writerow([repr(r.a), repr(r.t_best), repr(r.t_lo), r.status, r.n_sdp,
                          r.n_indeterminate])


# -- rank analysis and recovery -----------------------------------------------------

def numerical_rank(X, rel_tol=RANK_TOL):
    """Number of eigenvalues at least ``rel_tol`` times the largest one."""
    lam, _ = hermitian_eig(0.5 * (X + np.conj(X).T))
    top = lam[0]
    if not top > 0:
        return 0
    return int(np.sum(lam >= rel_tol * top))


def decompose_rank_two(X1, data, rel_tol=RANK_TOL):
    """Split a rank <= 2 matrix into (w1~, w2~) with w2~ = A^H w2^.

    Raises
    ------
    ValueError
        If the numerical rank exceeds two.
    """
    rank = numerical_rank(X1, rel_tol)
    if rank > 2:
        raise ValueError(f"matrix has numerical rank {rank} > 2; use randomization")
    lam, U = hermitian_eig(0.5 * (X1 + np.conj(X1).T))
    lam = np.maximum(lam, 0.0)
    w1 = np.sqrt(lam[0]) * U[:, 0]
    w2_hat = np.sqrt(lam[1]) * U[:, 1] if rank == 2 else np.zeros_like(w1)
    w2 = np.conj(data.phase) * w2_hat
    return w1, w2


@dataclass
class RandomizationResult:
    solution: model.BeamformerSolution
    min_snr: float
    n_feasible: int
    n_candidates: int
    best_index: int


def _gaussian(X, rng, count):
    lam, U = hermitian_eig(0.5 * (X + np.conj(X).T))
    root = U * np.sqrt(np.maximum(lam, 0.0))
    n = X.shape[0]
    z = (rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n))) / np.sqrt(2.0)
    return z @ root.T


def _finish(w, a, data, budget):
    """Round a candidate back inside the budgets and evaluate it."""
    if model.feasible(w, a, budget, data):
        w = min(1.0, model.max_feasible_scale(w, a, budget, data, margin=1e-12)) * w
    snr, _ = model.min_snr(w, a, data)
    return w, snr


def _pair_lp(parts, a, s, data, budget):
    """Feasible (beta1, beta2) >= 0 reaching min SNR s, or None."""
    N1, N2, D1, D2, P1, P2, S1, S2 = parts
    s2 = data.sigma_nu_sq
    c = a * s - data.d_sq / s2
    act = c > 0
    rows = [np.column_stack([-(N1 - c * D1), -(N2 - c * D2)])[act]]
    rhs = [-(c * s2)[act]]
    if budget.p_r_max is not None:
        rows.append(np.column_stack([P1, P2]))
        rhs.append(np.full(P1.size, budget.p_r_max))
    if budget.P_R_max is not None:
        rows.append([[P1.sum(), P2.sum()]])
        rhs.append([budget.P_R_max])
    if budget.P_S_max is not None:
        rows.append([[S1, S2]])
        rhs.append([budget.P_S_max - 2.0 / a])
    if budget.P_T_max is not None:
        rows.append([[S1 + 2 * P1.sum(), S2 + 2 * P2.sum()]])
        rhs.append([budget.P_T_max - 2.0 / a])
    A = np.vstack([np.atleast_2d(r) for r in rows if np.size(r)])
    b = np.concatenate([np.ravel(r) for r in rhs if np.size(r)])
    res = linprog(np.zeros(2), A_ub=A, b_ub=b, bounds=[(0, None), (0, None)], method="highs")
    return res.x if res.status == 0 else None


def randomize(X1, a, data, budget, n_candidates=200, mode="rank1", seed=0, s_max=None):
    """Best feasible beamformer among Gaussian candidates drawn from X1.

    ``mode="rank1"`` draws w1~ ~ CN(0, X1), sets w2~ = 0 and scales by the
    largest feasible factor.  ``mode="rank2"`` draws a pair with the same
    first-vector stream (divided by sqrt 2) plus an independent second
    vector w2^, both with covariance X1/2, and picks nonnegative power
    factors (beta1, beta2) by bisection on the target SNR with a linear
    feasibility program per step.  ``s_max`` caps the bisection (e.g. the
    relaxation bound).  Works in the units of ``data``.
    """
    if mode not in ("rank1", "rank2"):
        raise ValueError(f"unknown mode {mode!r}")
    n = data.n
    first = _gaussian(X1, make_rng(seed, _STREAM_RANDOMIZE, 0), n_candidates)
    best_w, best_snr, best_i, n_ok = None, -math.inf, -1, 0
    zero = np.zeros(n, dtype=complex)
    if mode == "rank1":
        for i, xi in enumerate(first):
            w = np.concatenate([xi, zero])
            beta = model.max_feasible_scale(w, a, budget, data)
            if not np.isfinite(beta) or beta <= 0:
                continue
            w, snr = _finish(beta * w, a, data, budget)
            n_ok += 1
            if snr > best_snr:
                best_w, best_snr, best_i = w, snr, i
    else:
        second = _gaussian(X1, make_rng(seed, _STREAM_RANDOMIZE, 1), n_candidates)
        relay_w = data.d_diag / a + data.e_diag
        if s_max is None:
            s_max = math.inf
        for i in range(n_candidates):
            v1 = first[i] / np.sqrt(2.0)
            v2 = np.conj(data.phase) * second[i] / np.sqrt(2.0)
            parts = (
                np.abs(data.q1.conj() @ v1) ** 2,
                np.abs(data.q2.conj() @ v2) ** 2,
                data.r_diag @ np.abs(v1) ** 2,
                data.r_diag @ np.abs(v2) ** 2,
                np.abs(v1[:-1]) ** 2 * relay_w,
                np.abs(v2[:-1]) ** 2 * relay_w,
                data.s_entry * abs(v1[-1]) ** 2 / a,
                data.s_entry * abs(v2[-1]) ** 2 / a,
            )
            lo = max(best_snr, 0.0)
            beta = _pair_lp(parts, a, lo * (1.0 + 1e-6), data, budget)
            if beta is None:
                continue
            n_ok += 1
            hi = s_max
            if not np.isfinite(hi):
                hi = max(2.0 * lo, 1.0)
                while _pair_lp(parts, a, hi, data, budget) is not None:
                    lo, hi = hi, 2.0 * hi
            while hi / max(lo, 1e-300) > 1.0 + 1e-5:
                mid = math.sqrt(hi * max(lo, hi * 1e-12))
                b_mid = _pair_lp(parts, a, mid, data, budget)
                if b_mid is None:
                    hi = mid
                else:
                    lo, beta = mid, b_mid
            w = np.concatenate([np.sqrt(beta[0]) * v1, np.sqrt(beta[1]) * v2])
            w, snr = _finish(w, a, data, budget)
            if snr > best_snr:
                best_w, best_snr, best_i = w, snr, i
    if best_w is None:
        raise RuntimeError("no randomized candidate could be scaled to feasibility")
    sol = model.BeamformerSolution(best_w, a, 1.0 / best_snr)
    return RandomizationResult(sol, best_snr, n_ok, n_candidates, best_i)


def recover(outcome, data, budget, mode="rank2", n_candidates=200, seed=0):
    """Physical beamformer from a search outcome.

    Rank-two mode decomposes X1* exactly when its numerical rank is at most
    two and randomizes otherwise; rank-one mode does the same with the
    threshold one.  Returns ``(BeamformerSolution, method)`` where
    ``method`` is ``"decomposition"`` or ``"randomization"``.
    """
    norm = outcome.normalization
    ndata, nbudget, _ = model.normalize(data, budget)
    a = outcome.a_star_n
    X = outcome.X1_star_n
    limit = 2 if mode == "rank2" else 1
    if outcome.rank <= limit:
        w1, w2 = decompose_rank_two(X, ndata)
        if mode == "rank1":
            w2 = np.zeros_like(w2)
        w, snr = _finish(np.concatenate([w1, w2]), a, ndata, nbudget)
        if snr > 0:
            return norm.solution_to_physical(model.BeamformerSolution(w, a, 1.0 / snr)), \
                "decomposition"
    res = randomize(X, a, ndata, nbudget, n_candidates, "rank2" if mode == "rank2" else "rank1",
                    seed, s_max=outcome.bound_snr)
    return norm.solution_to_physical(res.solution), "randomization"
