"""Optimization data, SNR and power evaluation for the rank-two relay scheme.

Notation
--------
The stacked weight vector is ``w = [w1~; w2~]`` with ``n = R + 1`` entries
per half.  The first R entries of each half are the relay weights ``w1`` and
``w2``; the last entry carries the source's direct-link coefficient for the
third and fourth slot:

    w1~[R] = conj(alpha3 / alpha1),   w2~[R] = conj(alpha4 / alpha1),

with ``alpha1 = 1 / sqrt(a)`` real and positive.  With this encoding

    |h1|^2 + |h2|^2 = w^H Q w / a,     P_S = 2/a + 2|alpha3|^2 + 2|alpha4|^2.

For destination m::

    q_{m,1} = [G_m f; d_m],     q_{m,2} = [G_m conj(f); d_m]
    Q_m     = blkdiag(q1 q1^H, q2 q2^H)
    R_m     = blkdiag(R~_m, R~_m),  R~_m = diag(sigma_eta^2 |g_m|^2, 0)
    SNR_m   = w^H Q_m w / ((w^H R_m w + sigma_nu^2) a) + |d_m|^2 / (sigma_nu^2 a)

and per relay r::

    p_r = w^H D_r w / a + w^H E_r w,   D~_r = |f_r|^2 e_r e_r^T,  E~_r = sigma_eta^2 e_r e_r^T
    P_S = (2 + w^H S w) / a,           S~ = 2 e_R e_R^T
    P_T = P_S + 2 sum_r p_r

All diagonal matrices are stored by their diagonals.
"""

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "PowerBudget",
    "ProblemData",
    "BeamformerSolution",
    "Violation",
    "Normalization",
    "build",
    "normalize",
    "snr",
    "snr_all",
    "min_snr",
    "relay_power",
    "relay_powers",
    "source_power",
    "total_power",
    "feasible",
    "snr_constraint_value",
    "max_feasible_scale",
    "stack",
    "split",
    "alamouti_gains",
    "noise_power_34",
]


@dataclass(frozen=True)
class PowerBudget:
    """Power limits in watts; ``None`` means unconstrained."""

    p_r_max: float = None
    P_R_max: float = None
    P_S_max: float = None
    P_T_max: float = None

    def __post_init__(self):
        for name in ("p_r_max", "P_R_max", "P_S_max", "P_T_max"):
            v = getattr(self, name)
            if v is not None and not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")

    @classmethod
    def from_total(cls, P_T_max, source_ratio=0.5, relay_sum_ratio=1 / 3, per_relay_ratio=1 / 15):
        """Budgets derived from the total power as fixed ratios."""
        return cls(
            p_r_max=per_relay_ratio * P_T_max,
            P_R_max=relay_sum_ratio * P_T_max,
            P_S_max=source_ratio * P_T_max,
            P_T_max=P_T_max,
        )

    def scaled(self, factor):
        def f(v):
            return None if v is None else v * factor
        return PowerBudget(f(self.p_r_max), f(self.P_R_max), f(self.P_S_max), f(self.P_T_max))

    def reference_power(self):
        """Power used to normalize problems: P_S_max, else P_T_max/2, else 1."""
        if self.P_S_max is not None:
            return float(self.P_S_max)
        if self.P_T_max is not None:
            return float(self.P_T_max) / 2.0
        return 1.0

    def min_a(self):
        """Smallest a allowed by the source budget: 2/a <= min(P_S, P_T)."""
        caps = [v for v in (self.P_S_max, self.P_T_max) if v is not None]
        return 2.0 / min(caps) if caps else 0.0


@dataclass(frozen=True, eq=False)
class ProblemData:
    """Everything the optimizers need about one channel realization.

    Attributes
    ----------
    q1, q2 : (M, n) complex
        Rows are the vectors q_{m,1}, q_{m,2}.
    r_diag : (M, n) float
        Diagonal of R~_m.
    d_sq : (M,) float
        |d_m|^2.
    d_diag, e_diag : (R,) float
        Nonzero entries of D~_r and E~_r.
    s_entry : float
        The nonzero entry of S~ (2 for physical data).
    sigma_nu_sq, sigma_eta_sq : float
    phase : (n,) complex
        Diagonal of the unitary A = diag(e^{2j phi_1}, ..., e^{2j phi_R}, 1),
        phi_r = arg f_r.
    """

    q1: np.ndarray
    q2: np.ndarray
    r_diag: np.ndarray
    d_sq: np.ndarray
    d_diag: np.ndarray
    e_diag: np.ndarray
    s_entry: float
    sigma_nu_sq: float
    sigma_eta_sq: float
    phase: np.ndarray
    normalization: "Normalization" = field(default=None, repr=False)

    @property
    def R(self):
        return self.d_diag.size

    @property
    def M(self):
        return self.d_sq.size

    @property
    def n(self):
        return self.d_diag.size + 1

    # explicit matrices (tests, SDR, documentation) ----------------------
    def Q_tilde(self, m, i):
        q = self.q1[m] if i == 1 else self.q2[m]
        return np.outer(q, q.conj())

    def R_tilde(self, m):
        return np.diag(self.r_diag[m]).astype(complex)

    def D_tilde(self, r):
        v = np.zeros(self.n)
        v[r] = self.d_diag[r]
        return np.diag(v).astype(complex)

    def E_tilde(self, r):
        v = np.zeros(self.n)
        v[r] = self.e_diag[r]
        return np.diag(v).astype(complex)

    def S_tilde(self):
        v = np.zeros(self.n)
        v[-1] = self.s_entry
        return np.diag(v).astype(complex)

    def A(self):
        return np.diag(self.phase)

    def Q(self, m):
        return _blkdiag(self.Q_tilde(m, 1), self.Q_tilde(m, 2))

    def R_full(self, m):
        return _blkdiag(self.R_tilde(m), self.R_tilde(m))

    def degenerate_destinations(self):
        """Indices m whose SNR is identically zero (no relay path, no direct link)."""
        relay = np.abs(self.q1[:, :-1]).sum(axis=1) + np.abs(self.q2[:, :-1]).sum(axis=1)
        return np.flatnonzero((relay == 0) & (self.d_sq == 0))


def _blkdiag(a, b):
    n1, n2 = a.shape[0], b.shape[0]
    out = np.zeros((n1 + n2, n1 + n2), dtype=np.result_type(a, b))
    out[:n1, :n1] = a
    out[n1:, n1:] = b
    return out


@dataclass(frozen=True, eq=False)
class BeamformerSolution:
    """A point (w, a) with its objective t = 1 / min SNR.

    ``w`` is the stacked complex vector of length 2(R+1).
    """

    w: np.ndarray
    a: float
    t: float = np.nan

    def __post_init__(self):
        w = np.asarray(self.w, dtype=complex).reshape(-1)
        if w.size % 2 or w.size < 4:
            raise ValueError("w must stack two halves of length R+1")
        object.__setattr__(self, "w", w)
        if not self.a > 0:
            raise ValueError("a must be positive")

    @property
    def n(self):
        return self.w.size // 2

    @property
    def w1_tilde(self):
        return self.w[: self.n]

    @property
    def w2_tilde(self):
        return self.w[self.n:]

    @property
    def w1(self):
        return self.w1_tilde[:-1]

    @property
    def w2(self):
        return self.w2_tilde[:-1]

    @property
    def alpha1(self):
        return 1.0 / np.sqrt(self.a)

    @property
    def alpha3(self):
        return self.alpha1 * np.conj(self.w1_tilde[-1])

    @property
    def alpha4(self):
        return self.alpha1 * np.conj(self.w2_tilde[-1])

    @property
    def min_snr(self):
        return 1.0 / self.t


@dataclass(frozen=True)
class Violation:
    """One violated constraint: ``value`` exceeds ``limit`` by ``margin``."""

    constraint: str
    index: int
    value: float
    limit: float

    @property
    def margin(self):
        return self.value - self.limit


# -- construction -------------------------------------------------------------

def build(channels):
    """Problem data from a :class:`~relaycast.scenario.ChannelRealization`."""
    f, g, d = channels.f, channels.g, channels.d
    M, R = g.shape
    Gf = g * f[None, :]
    Gfc = g * np.conj(f)[None, :]
    q1 = np.concatenate([Gf, d[:, None]], axis=1)
    q2 = np.concatenate([Gfc, d[:, None]], axis=1)
    r_diag = np.zeros((M, R + 1))
    r_diag[:, :R] = channels.sigma_eta_sq * np.abs(g) ** 2
    phase = np.ones(R + 1, dtype=complex)
    phase[:R] = np.exp(2j * np.angle(f))
    return ProblemData(
        q1=q1,
        q2=q2,
        r_diag=r_diag,
        d_sq=np.abs(d) ** 2,
        d_diag=np.abs(f) ** 2,
        e_diag=np.full(R, channels.sigma_eta_sq),
        s_entry=2.0,
        sigma_nu_sq=float(channels.sigma_nu_sq),
        sigma_eta_sq=float(channels.sigma_eta_sq),
        phase=phase,
    )


@dataclass(frozen=True)
class Normalization:
    """Change of variables w = diag(delta) v, a = a' / p0.

    Physical channel gains and noise powers span ~20 orders of magnitude;
    the optimizers work on data where noise is 1, budgets are O(1) and each
    relay weight has unit "power per |v|^2".  SNR values are unchanged.
    """

    p0: float
    delta: np.ndarray  # (n,) real, last entry 1

    def to_physical(self, v, a_prime):
        D = np.concatenate([self.delta, self.delta])
        return np.asarray(v) * D, a_prime / self.p0

    def from_physical(self, w, a):
        D = np.concatenate([self.delta, self.delta])
        return np.asarray(w) / D, a * self.p0

    def solution_to_physical(self, sol):
        w, a = self.to_physical(sol.w, sol.a)
        return BeamformerSolution(w, a, sol.t)

    def solution_from_physical(self, sol):
        v, a = self.from_physical(sol.w, sol.a)
        return BeamformerSolution(v, a, sol.t)


def normalize(data, budget):
    """Return (scaled data, scaled budget, Normalization).

    SNRs of (v, a') on the scaled data equal SNRs of the mapped physical
    point; all powers are divided by ``p0 = budget.reference_power()``.
    """
    p0 = budget.reference_power()
    delta = np.ones(data.n)
    delta[:-1] = 1.0 / np.sqrt(data.d_diag + data.e_diag / p0)
    sig = data.sigma_nu_sq
    scale_q = np.sqrt(p0 / sig) * delta
    scaled = ProblemData(
        q1=data.q1 * scale_q[None, :],
        q2=data.q2 * scale_q[None, :],
        r_diag=data.r_diag * delta[None, :] ** 2 / sig,
        d_sq=data.d_sq * p0 / sig,
        d_diag=data.d_diag * delta[:-1] ** 2,
        e_diag=data.e_diag * delta[:-1] ** 2 / p0,
        s_entry=data.s_entry,
        sigma_nu_sq=1.0,
        sigma_eta_sq=data.sigma_eta_sq,
        phase=data.phase,
    )
    norm = Normalization(p0=p0, delta=delta)
    scaled = replace(scaled, normalization=norm)
    return scaled, budget.scaled(1.0 / p0), norm


# -- evaluation -----------------------------------------------------------------

def split(w, n):
    w = np.asarray(w)
    return w[..., :n], w[..., n:]


def stack(w1_tilde, w2_tilde):
    return np.concatenate([np.asarray(w1_tilde), np.asarray(w2_tilde)], axis=-1)


def _check_a(a):
    if not np.all(np.asarray(a) > 0):
        raise ValueError("power factor a must be positive")


def _quad_terms(w, data):
    """(w^H Q_m w, w^H R_m w) for all m."""
    w1, w2 = split(np.asarray(w, dtype=complex), data.n)
    num = np.abs(data.q1.conj() @ w1) ** 2 + np.abs(data.q2.conj() @ w2) ** 2
    den = data.r_diag @ (np.abs(w1) ** 2 + np.abs(w2) ** 2)
    return num, den


def snr_all(w, a, data):
    """SNR of every destination."""
    _check_a(a)
    num, den = _quad_terms(w, data)
    return num / ((den + data.sigma_nu_sq) * a) + data.d_sq / (data.sigma_nu_sq * a)


def snr(w, a, data, m):
    """SNR of destination ``m``."""
    return float(snr_all(w, a, data)[m])


def min_snr(w, a, data):
    """(min_m SNR_m, argmin) with ties broken by the lowest index."""
    s = snr_all(w, a, data)
    m = int(np.argmin(s))
    return float(s[m]), m


def relay_powers(w, a, data):
    """Per-relay transmit power p_r of every relay."""
    _check_a(a)
    w1, w2 = split(np.asarray(w, dtype=complex), data.n)
    mag = np.abs(w1[:-1]) ** 2 + np.abs(w2[:-1]) ** 2
    return mag * (data.d_diag / a + data.e_diag)


def relay_power(r, w, a, data):
    return float(relay_powers(w, a, data)[r])


def source_power(w, a, data):
    _check_a(a)
    w1, w2 = split(np.asarray(w, dtype=complex), data.n)
    return float((2.0 + data.s_entry * (abs(w1[-1]) ** 2 + abs(w2[-1]) ** 2)) / a)


def total_power(w, a, data):
    return source_power(w, a, data) + 2.0 * float(relay_powers(w, a, data).sum())


def feasible(w, a, budget, data, rtol=0.0):
    """List of violated power constraints (empty when feasible).

    A constraint ``value <= limit`` counts as violated when
    ``value > limit * (1 + rtol)``.  Positivity of ``a`` is checked first and
    reported alone when it fails.
    """
    if not a > 0:
        return [Violation("a-positive", -1, -float(a), 0.0)]
    out = []
    pr = relay_powers(w, a, data)
    if budget.p_r_max is not None:
        for r in np.flatnonzero(pr > budget.p_r_max * (1 + rtol)):
            out.append(Violation("relay-power", int(r), float(pr[r]), budget.p_r_max))
    checks = (
        ("relay-sum-power", float(pr.sum()), budget.P_R_max),
        ("source-power", source_power(w, a, data), budget.P_S_max),
        ("total-power", total_power(w, a, data), budget.P_T_max),
    )
    for name, value, limit in checks:
        if limit is not None and value > limit * (1 + rtol):
            out.append(Violation(name, -1, value, limit))
    return out


def snr_constraint_value(w, a, t, data, m=None):
    """lambda_m = (w^H R_m w + s2)/t - (w^H (Q_m + |d_m|^2/s2 R_m) w + |d_m|^2)/a.

    ``lambda_m <= 0`` exactly when SNR_m >= 1/t.  Returns all destinations
    when ``m`` is None.
    """
    _check_a(a)
    if not t > 0:
        raise ValueError("t must be positive")
    num, den = _quad_terms(w, data)
    s2 = data.sigma_nu_sq
    lam = (den + s2) / t - (num + data.d_sq / s2 * den + data.d_sq) / a
    return lam if m is None else float(lam[m])


def max_feasible_scale(w, a, budget, data, margin=0.0):
    """Largest beta >= 0 such that (beta w, a) meets every budget.

    Each limit is tightened to ``limit * (1 - margin)``.  Every power is of
    the form ``const / a + beta^2 * var``, so the answer is a minimum of
    closed-form ratios.  Returns ``inf`` when no budget constrains w and
    0 when the fixed parts alone already violate a budget.
    """
    _check_a(a)
    w1, w2 = split(np.asarray(w, dtype=complex), data.n)
    pr = relay_powers(w, a, data)
    src_var = data.s_entry * (abs(w1[-1]) ** 2 + abs(w2[-1]) ** 2) / a
    src_const = 2.0 / a
    shrink = 1.0 - margin
    ratios = []

    def add(limit, const, var):
        if limit is None:
            return
        room = limit * shrink - const
        if room < 0:
            ratios.append(0.0)
        elif var > 0:
            ratios.append(room / var)

    if budget.p_r_max is not None:
        for v in pr:
            add(budget.p_r_max, 0.0, v)
    add(budget.P_R_max, 0.0, float(pr.sum()))
    add(budget.P_S_max, src_const, src_var)
    add(budget.P_T_max, src_const, src_var + 2.0 * float(pr.sum()))
    return float(np.sqrt(min(ratios))) if ratios else np.inf


# -- link-level helpers -----------------------------------------------------------

def alamouti_gains(sol, channels):
    """Equivalent channel gains (h_{m,1}, h_{m,2}) for all destinations."""
    f, g, d = channels.f, channels.g, channels.d
    a1 = sol.alpha1
    h1 = a1 * (g * f[None, :]) @ np.conj(sol.w1) + sol.alpha3 * d
    h2 = a1 * (g * np.conj(f)[None, :]) @ np.conj(sol.w2) + sol.alpha4 * d
    return h1, h2


def noise_power_34(sol, channels):
    """sigma_{m,34}^2 = sigma_eta^2 (w1^H Gm Gm^H w1 + w2^H Gm Gm^H w2) + sigma_nu^2."""
    gm2 = np.abs(channels.g) ** 2
    mag = np.abs(sol.w1) ** 2 + np.abs(sol.w2) ** 2
    return channels.sigma_eta_sq * gm2 @ mag + channels.sigma_nu_sq
