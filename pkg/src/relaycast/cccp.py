"""Max-min concave-convex procedure.

Each SNR constraint ``lambda_m(w, a, t) <= 0`` is a difference of the convex
terms (w^H R_m w + s2)/t and (w^H P_m w + |d_m|^2)/a with
P_m = Q_m + |d_m|^2/s2 R_m.  At the current point the second term is
replaced by its tangent plane, which yields a convex inner approximation
whose solution is again feasible and never worse.  Iterating gives a
non-increasing sequence of t = 1 / min SNR.

The convex subproblem is written as an SOCP in the real variables

    [Re w_free, Im w_free, alpha, theta, u_1..u_M, y_1..y_R, s_1..s_R, y_S]

where a = a_k alpha and t = t_k theta keep the scalar unknowns near 1, u_m is
the epigraph of the quadratic-over-linear SNR term (scaled by t_k), y_r and
s_r split the relay power into its 1/a part and its constant part, and y_S
is the source power.  Rank-one operation fixes the second weight half to 0.

The public functions accept problem data in any consistent unit system;
:func:`run` normalizes physical data first (see :func:`model.normalize`).
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import model
from .conic import ProgramBuilder, Status, solve
from .scenario import make_rng

__all__ = [
    "CccpOptions",
    "CccpState",
    "CccpReport",
    "TraceEntry",
    "InitializationError",
    "SubproblemError",
    "LinearizedConstraint",
    "initial_point",
    "linearized_constraint",
    "subproblem",
    "run",
    "step_norm",
    "write_trace_csv",
]

_STREAM_INIT = 16
# accepted relative increase of t caused by solver round-off near a fixed point
_T_SLACK = 1e-10
A_MAX_FACTOR = 2.0e6


class InitializationError(RuntimeError):
    """No admissible starting point (e.g. every channel is zero)."""


class SubproblemError(RuntimeError):
    def __init__(self, status):
        super().__init__(f"subproblem solver stopped with status {status!r}")
        self.status = status


@dataclass
class CccpOptions:
    """Algorithm settings.

    ``a_max`` is in the units of the data passed to :func:`run` (physical
    watts); ``None`` selects ``2e6 / P_S_max``.  ``rank`` is 2 for the
    two-vector scheme and 1 for the single-vector special case.

    The loop stops once the relative progress of t is at most ``epsilon``.
    With ``step_tol`` set it additionally requires the last step to satisfy
    ``||(dw, da, dt)|| <= step_tol * (1 + ||(w, a, t)||)`` in solver units,
    which is a much stricter fixed-point test: t converges quadratically
    faster than the weights.
    """

    epsilon: float = 1e-2
    max_iter: int = 50
    a_max: float = None
    seed: int = 0
    n_starts: int = 1
    rank: int = 2
    solver_tol: float = 1e-8
    initial: tuple = None  # optional (w, a) start in physical units
    step_tol: float = None

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be non-negative")
        if self.max_iter < 1 or self.n_starts < 1:
            raise ValueError("max_iter and n_starts must be at least 1")
        if self.rank not in (1, 2):
            raise ValueError("rank must be 1 or 2")


@dataclass(frozen=True, eq=False)
class CccpState:
    k: int
    w: np.ndarray
    a: float
    t: float
    rho: float = math.inf


@dataclass(frozen=True)
class TraceEntry:
    k: int
    t: float
    min_snr: float
    rho: float
    slack: np.ndarray = field(repr=False, default=None)
    w: np.ndarray = field(repr=False, default=None)  # iterate in solver units
    a: float = None

    @property
    def min_snr_db(self):
        return 10.0 * math.log10(self.min_snr) if self.min_snr > 0 else -math.inf


@dataclass
class CccpReport:
    """Outcome of :func:`run`.

    ``trace`` belongs to the best start; ``traces`` holds every start.
    ``solution`` is in physical units, ``normalized`` in solver units.
    """

    trace: list
    reason: str
    solution: model.BeamformerSolution
    traces: list = field(default_factory=list)
    normalized: model.BeamformerSolution = None
    final_state: CccpState = None
    start_index: int = 0

    @property
    def iterations(self):
        return self.trace[-1].k if self.trace else 0

    @property
    def min_snr(self):
        return self.solution.min_snr


# -- starting point ----------------------------------------------------------

def _free_mask(n, rank):
    mask = np.ones(2 * n, dtype=bool)
    if rank == 1:
        mask[n:] = False
    return mask


def _default_a_max(budget):
    if budget.P_S_max is not None:
        return A_MAX_FACTOR / budget.P_S_max
    if budget.P_T_max is not None:
        return A_MAX_FACTOR / (budget.P_T_max / 2.0)
    return A_MAX_FACTOR


def _start_a(budget, a_max):
    caps = [v for v in (budget.P_S_max, budget.P_T_max) if v is not None]
    a = 4.0 / min(caps) if caps else 1.0
    return min(a, 0.99 * a_max)


def initial_point(data, budget, seed, a_max=None, rank=2, start=0):
    """Random strictly feasible start (w0, a0, t0).

    w is drawn i.i.d. unit complex Gaussian, a is set so the source spends
    half its budget on the first two slots, then w is shrunk by the largest
    factor in (0, 1] that leaves a 1% margin on every power constraint.
    """
    if a_max is None:
        a_max = _default_a_max(budget)
    rng = make_rng(seed, _STREAM_INIT, start)
    n = data.n
    w = (rng.standard_normal(2 * n) + 1j * rng.standard_normal(2 * n)) / np.sqrt(2.0)
    w[~_free_mask(n, rank)] = 0.0
    a = _start_a(budget, a_max)
    beta = min(1.0, model.max_feasible_scale(w, a, budget, data, margin=0.01))
    w = beta * w
    snr, _ = model.min_snr(w, a, data)
    if not snr > 0 or not np.isfinite(snr):
        raise InitializationError("every scaled candidate has zero minimum SNR")
    return CccpState(k=0, w=w, a=a, t=1.0 / snr)


# -- linearization -----------------------------------------------------------

def _p_times(data, w, m):
    """P_m w for P_m = Q_m + |d_m|^2/s2 R_m."""
    n = data.n
    w1, w2 = w[:n], w[n:]
    q1, q2 = data.q1[m], data.q2[m]
    rd = data.r_diag[m] * (data.d_sq[m] / data.sigma_nu_sq)
    top = q1 * np.vdot(q1, w1) + rd * w1
    bot = q2 * np.vdot(q2, w2) + rd * w2
    return np.concatenate([top, bot])


@dataclass(frozen=True, eq=False)
class LinearizedConstraint:
    """Convex majorizer of lambda_m around (w_k, a_k, t_k)."""

    m: int
    w_k: np.ndarray
    a_k: float
    t_k: float
    grad: np.ndarray  # P_m w_k
    concave_value: float  # w_k^H P_m w_k + |d_m|^2
    r_diag: np.ndarray  # diagonal of R_m on the stacked vector
    sigma_nu_sq: float

    def value(self, dw, da, dt):
        w = self.w_k + dw
        convex = (float(self.r_diag @ np.abs(w) ** 2) + self.sigma_nu_sq) / (self.t_k + dt)
        lin = self.concave_value / self.a_k * (da / self.a_k - 1.0)
        return convex + lin - 2.0 * float(np.real(np.vdot(dw, self.grad))) / self.a_k


def linearized_constraint(m, state, data):
    if not (state.a > 0 and state.t > 0):
        raise ValueError("linearization needs a > 0 and t > 0")
    w = np.asarray(state.w, dtype=complex)
    g = _p_times(data, w, m)
    conc = float(np.real(np.vdot(w, g))) + float(data.d_sq[m])
    r = np.concatenate([data.r_diag[m], data.r_diag[m]])
    return LinearizedConstraint(m, w, float(state.a), float(state.t), g, conc, r,
                                data.sigma_nu_sq)


# -- subproblem ----------------------------------------------------------------

class _Layout:
    def __init__(self, data, rank):
        self.n = data.n
        self.free = np.flatnonzero(_free_mask(data.n, rank))
        self.nf = self.free.size
        self.R, self.M = data.R, data.M
        self.alpha = 2 * self.nf
        self.theta = self.alpha + 1
        self.u = self.theta + 1
        self.y = self.u + self.M
        self.s = self.y + self.R
        self.ys = self.s + self.R
        self.size = self.ys + 1

    def w_cols(self, idx):
        """(Re, Im) columns of the complex entries ``idx`` of the stacked w."""
        pos = np.searchsorted(self.free, idx)
        ok = (pos < self.nf) & (self.free[np.minimum(pos, self.nf - 1)] == idx)
        return pos[ok], pos[ok] + self.nf, np.asarray(idx)[ok]

    def weighted_w(self, weights):
        """Rows mapping x to [sqrt(c_i) Re w_i, sqrt(c_i) Im w_i] for c_i > 0."""
        weights = np.asarray(weights, dtype=float)
        idx = np.flatnonzero(weights > 0)
        re, im, idx = self.w_cols(idx)
        k = idx.size
        L = np.zeros((2 * k, self.size))
        sq = np.sqrt(weights[idx])
        L[np.arange(k), re] = sq
        L[k + np.arange(k), im] = sq
        return L

    def unit(self, col, scale=1.0):
        e = np.zeros(self.size)
        e[col] = scale
        return e

    def to_w(self, x):
        w = np.zeros(2 * self.n, dtype=complex)
        w[self.free] = x[:self.nf] + 1j * x[self.nf:2 * self.nf]
        return w


def _build_subproblem(state, data, budget, a_max, rank):
    lay = _Layout(data, rank)
    n, R = data.n, data.R
    a_k, t_k = float(state.a), float(state.t)
    pb = ProgramBuilder(lay.size)
    zero = np.zeros(lay.size)

    for m in range(data.M):
        lin = linearized_constraint(m, state, data)
        # ||[R_m^(1/2) w; s]||^2 <= theta * u'_m
        Lw = lay.weighted_w(lin.r_diag)
        L = np.vstack([Lw, zero])
        off = np.zeros(L.shape[0])
        off[-1] = np.sqrt(data.sigma_nu_sq)
        pb.add_quad_over_linear((L, off), (lay.unit(lay.theta), 0.0), (lay.unit(lay.u + m), 0.0))
        # u'_m + (t_k c/a_k)(alpha - 2) + (t_k/a_k)(2 c0 - 2 Re{w^H g}) <= 0
        row = np.zeros(lay.size)
        re, im, idx = lay.w_cols(np.arange(2 * n))
        row[re] = -2.0 * t_k / a_k * lin.grad[idx].real
        row[im] = -2.0 * t_k / a_k * lin.grad[idx].imag
        row[lay.alpha] = t_k * lin.concave_value / a_k
        row[lay.u + m] = 1.0
        pb.add_leq(row, 2.0 * t_k * float(data.d_sq[m]) / a_k)

    relay_limits = budget.p_r_max is not None or budget.P_R_max is not None or budget.P_T_max is not None
    if relay_limits:
        for r in range(R):
            sel = np.zeros(2 * n)
            sel[[r, n + r]] = 1.0
            # y_r >= D_r nu_r / a,  s_r >= E_r nu_r
            L = lay.weighted_w(sel * data.d_diag[r])
            pb.add_quad_over_linear((L, np.zeros(L.shape[0])), (lay.unit(lay.alpha, a_k), 0.0),
                                    (lay.unit(lay.y + r), 0.0))
            L = lay.weighted_w(sel * data.e_diag[r])
            pb.add_quad_over_linear((L, np.zeros(L.shape[0])), (zero, 1.0),
                                    (lay.unit(lay.s + r), 0.0))
            if budget.p_r_max is not None:
                pb.add_leq(lay.unit(lay.y + r) + lay.unit(lay.s + r), budget.p_r_max)
        relay_sum = np.zeros(lay.size)
        relay_sum[lay.y:lay.y + R] = 1.0
        relay_sum[lay.s:lay.s + R] = 1.0
        if budget.P_R_max is not None:
            pb.add_leq(relay_sum, budget.P_R_max)
    if budget.P_S_max is not None or budget.P_T_max is not None:
        sel = np.zeros(2 * n)
        sel[[n - 1, 2 * n - 1]] = data.s_entry
        Lw = lay.weighted_w(sel)
        L = np.vstack([zero, Lw])
        off = np.zeros(L.shape[0])
        off[0] = np.sqrt(2.0)
        pb.add_quad_over_linear((L, off), (lay.unit(lay.alpha, a_k), 0.0), (lay.unit(lay.ys), 0.0))
        if budget.P_S_max is not None:
            pb.add_leq(lay.unit(lay.ys), budget.P_S_max)
        if budget.P_T_max is not None:
            pb.add_leq(lay.unit(lay.ys) + 2.0 * relay_sum, budget.P_T_max)
    pb.add_leq(lay.unit(lay.alpha), a_max / a_k)
    return pb.build(lay.unit(lay.theta)), lay


def subproblem(state, data, budget, a_max, rank=2, tol=1e-8, max_iter=100):
    """Solve the convex inner approximation at ``state``.

    Returns
    -------
    (dw, da, dt, solution)
        Optimal deltas and the raw :class:`ConeSolution`.

    Raises
    ------
    SubproblemError
        When the conic solver does not reach optimality.
    """
    if not (state.a > 0 and state.t > 0):
        raise ValueError("subproblem needs a > 0 and t > 0")
    prog, lay = _build_subproblem(state, data, budget, a_max, rank)
    sol = solve(prog, tol=tol, max_iter=max_iter)
    if sol.status != Status.OPTIMAL:
        raise SubproblemError(sol.status)
    x = sol.x
    w = lay.to_w(x)
    dw = w - state.w
    da = state.a * (x[lay.alpha] - 1.0)
    dt = state.t * (x[lay.theta] - 1.0)
    return dw, da, dt, sol


# -- iteration -------------------------------------------------------------------

def _restore(w, a, data, budget, a_max):
    """Pull an interior-point answer that overshoots a budget by rounding back inside."""
    caps = [v for v in (budget.P_S_max, budget.P_T_max) if v is not None]
    if caps:
        a = max(a, 2.0 / min(caps) * (1.0 + 1e-12))
    a = min(a, a_max)
    if model.feasible(w, a, budget, data):
        beta = model.max_feasible_scale(w, a, budget, data, margin=1e-12)
        w = min(beta, 1.0) * w
    return w, a


def step_norm(state, dw, da, dt):
    """(||(dw, da, dt)||, ||(w, a, t)||) for the fixed-point test."""
    step = math.sqrt(float(np.linalg.norm(dw)) ** 2 + da ** 2 + dt ** 2)
    size = math.sqrt(float(np.linalg.norm(state.w)) ** 2 + state.a ** 2 + state.t ** 2)
    return step, size


def _step(state, data, budget, a_max, rank, tol):
    dw, da, dt, _ = subproblem(state, data, budget, a_max, rank, tol)
    w, a = _restore(state.w + dw, state.a + da, data, budget, a_max)
    snr, _ = model.min_snr(w, a, data)
    t = 1.0 / snr if snr > 0 else math.inf
    step, size = step_norm(state, dw, da, dt)
    return w, a, t, step / (1.0 + size)


def _run_single(data, budget, a_max, opts, start, init):
    if init is None:
        state = initial_point(data, budget, opts.seed, a_max, opts.rank, start)
    else:
        w0, a0 = init
        w0 = np.array(w0, dtype=complex)
        if opts.rank == 1:
            w0[data.n:] = 0.0
        snr, _ = model.min_snr(w0, a0, data)
        if model.feasible(w0, a0, budget, data) or not snr > 0:
            raise InitializationError("supplied start is infeasible or has zero SNR")
        state = CccpState(0, w0, float(a0), 1.0 / snr)

    def entry(st, rho):
        snr, _ = model.min_snr(st.w, st.a, data)
        lam = model.snr_constraint_value(st.w, st.a, st.t, data)
        return TraceEntry(st.k, st.t, snr, rho, lam, st.w, st.a)

    trace = [entry(state, math.inf)]
    reason = "max_iter"
    for k in range(1, opts.max_iter + 1):
        try:
            w, a, t, rel_step = _step(state, data, budget, a_max, opts.rank, opts.solver_tol)
        except SubproblemError:
            reason = "subproblem-failure"
            break
        if not t <= state.t * (1.0 + _T_SLACK):
            # rounding pushed the point above the previous value: stationary in
            # practice, keep the better iterate
            reason = "progress"
            break
        rho = abs(state.t - t) / state.t
        state = CccpState(k, w, a, t, rho)
        trace.append(entry(state, rho))
        if rho <= opts.epsilon and (opts.step_tol is None or rel_step <= opts.step_tol):
            reason = "progress"
            break
    return trace, reason, state


def run(data, budget, opts=None):
    """Run the max-min CCCP on physical problem data.

    Parameters
    ----------
    data : ProblemData
        Output of :func:`model.build` (physical units).
    budget : PowerBudget
    opts : CccpOptions, optional

    Returns
    -------
    CccpReport
        Best of ``opts.n_starts`` runs; all traces retained.
    """
    opts = opts or CccpOptions()
    a_max = opts.a_max if opts.a_max is not None else _default_a_max(budget)
    ndata, nbudget, norm = model.normalize(data, budget)
    a_max_n = a_max * norm.p0
    init = None
    if opts.initial is not None:
        init = norm.from_physical(*opts.initial)
    results = []
    for start in range(opts.n_starts):
        trace, reason, state = _run_single(ndata, nbudget, a_max_n, opts, start,
                                           init if start == 0 else None)
        results.append((trace, reason, state))
    best = min(range(len(results)), key=lambda i: (results[i][2].t, i))
    trace, reason, state = results[best]
    nsol = model.BeamformerSolution(state.w, state.a, state.t)
    return CccpReport(
        trace=trace,
        reason=reason,
        solution=norm.solution_to_physical(nsol),
        traces=[r[0] for r in results],
        normalized=nsol,
        final_state=state,
        start_index=best,
    )


def write_trace_csv(report, path):
    """Columns ``start, k, t, min_snr_db, rho`` for every start."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["start", "k", "t", "min_snr_db", "rho"])
        for s, trace in enumerate(report.traces):
            for e in trace:
                out.writerow([s, e.k, repr(e.t), repr(e.min_snr_db), repr(e.rho)])
