"""Monte Carlo link-level simulation of the four-slot relay scheme.

Actual data symbols are pushed through the physical signal model: the
source broadcasts ``alpha1 s1`` and ``alpha1 s2*`` in slots 1 and 2, the
relays re-transmit Alamouti-encoded combinations of what they received in
slots 3 and 4, and the source adds the direct terms ``alpha3, alpha4``.
Every destination forms the combined estimate ``s_hat = B y_m`` and slices
each component to the nearest constellation point.

Random numbers
    Pairs are processed in chunks.  Symbols, relay noise (per slot) and
    destination noise (per destination and slot) each use their own
    Philox child stream of the batch seed, keyed additionally by the chunk
    index, so any destination can be simulated alone and results do not
    depend on how many destinations are simulated together.

Statistics
    All moments are accumulated with pairwise (Chan) merging of
    per-chunk ``(count, mean, M2)`` triples, which is associative and
    numerically stable.
"""

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from . import model
from .scenario import make_rng

__all__ = [
    "CONSTELLATIONS",
    "DetectionError",
    "TransmissionBatch",
    "ReceivedSignals",
    "LinkStats",
    "equivalent_channel",
    "combiner",
    "transmit",
    "detect",
    "joint_ml",
    "measure",
    "write_stats_csv",
    "dump_samples",
]

# per-axis PAM levels (before energy normalization) and whether Q is used
CONSTELLATIONS = {
    "BPSK": (np.array([-1.0, 1.0]), False),
    "QPSK": (np.array([-1.0, 1.0]), True),
    "16QAM": (np.array([-3.0, -1.0, 1.0, 3.0]), True),
}

_STREAM_SYMBOLS, _STREAM_RELAY, _STREAM_DEST = 0, 1, 2
_MAX_DUMP_ROWS = 10_000


class DetectionError(ArithmeticError):
    """The combined channel gain ``c`` of a destination is zero."""


@dataclass(frozen=True)
class TransmissionBatch:
    """A batch of (s1, s2) symbol pairs and its random streams.

    Parameters
    ----------
    constellation : {"QPSK", "BPSK", "16QAM"}
        Square QAM (or BPSK) with unit average symbol energy.
    n_pairs : int
        Number of symbol pairs.
    seed : int
    noiseless : bool
        Suppress all relay and destination noise draws.
    chunk_size : int
        Pairs per processing chunk; part of the random stream layout.
    """

    constellation: str = "QPSK"
    n_pairs: int = 10**6
    seed: int = 0
    noiseless: bool = False
    chunk_size: int = 2**14

    def __post_init__(self):
        if self.constellation not in CONSTELLATIONS:
            raise ValueError(f"unknown constellation {self.constellation!r}")
        if int(self.n_pairs) < 1 or int(self.chunk_size) < 1:
            raise ValueError("n_pairs and chunk_size must be positive")

    @property
    def levels(self):
        """Per-axis amplitude levels scaled to unit average symbol energy."""
        lv, quad = CONSTELLATIONS[self.constellation]
        energy = np.mean(lv**2) * (2 if quad else 1)
        return lv / np.sqrt(energy)

    @property
    def quadrature(self):
        return CONSTELLATIONS[self.constellation][1]

    @property
    def points(self):
        """All constellation points."""
        lv = self.levels
        if not self.quadrature:
            return lv.astype(complex)
        return (lv[:, None] + 1j * lv[None, :]).ravel()

    @property
    def bits_per_symbol(self):
        k = int(np.log2(len(self.levels)))
        return 2 * k if self.quadrature else k

    def chunks(self):
        """Yield ``(index, size)`` of every chunk."""
        N, C = int(self.n_pairs), int(self.chunk_size)
        for k, start in enumerate(range(0, N, C)):
            yield k, min(C, N - start)

    def symbols(self, k, size):
        """Axis indices (size, 2, 2) and symbols (size, 2) of chunk ``k``."""
        rng = make_rng(self.seed, _STREAM_SYMBOLS, k)
        L = len(self.levels)
        idx = rng.integers(0, L, size=(size, 2, 2))
        if not self.quadrature:
            idx[:, :, 1] = 0
        lv = self.levels
        s = lv[idx[:, :, 0]] + (1j * lv[idx[:, :, 1]] if self.quadrature else 0.0)
        return idx, np.asarray(s, dtype=complex)

    def slice(self, s_hat):
        """Nearest-point axis indices (..., 2) of every entry of ``s_hat``."""
        lv = self.levels
        edges = 0.5 * (lv[1:] + lv[:-1])
        re = np.searchsorted(edges, s_hat.real)
        im = np.searchsorted(edges, s_hat.imag) if self.quadrature else np.zeros_like(re)
        return np.stack([re, im], axis=-1)

    def index_to_symbol(self, idx):
        lv = self.levels
        out = lv[idx[..., 0]].astype(complex)
        if self.quadrature:
            out = out + 1j * lv[idx[..., 1]]
        return out


@dataclass
class ReceivedSignals:
    """Materialized output of :func:`transmit`.

    Attributes
    ----------
    s : (N, 2) complex
        Transmitted pairs.
    y : (M, N, 4) complex
        ``[y1, y2*, y3, y4*]`` for every destination and pair.
    n : (M, N, 4) complex
        The effective noise ``y - H_m s``.
    t : (2, R, N) complex
        Relay transmit signals of slots 3 and 4.
    source : (4, N) complex
        Source transmit signal of each slot.
    """

    s: np.ndarray
    y: np.ndarray
    n: np.ndarray
    t: np.ndarray
    source: np.ndarray


def _cn(rng, shape, power):
    z = rng.standard_normal(shape + (2,)).view(complex)[..., 0]
    return np.sqrt(power / 2.0) * z


def equivalent_channel(solution, channels):
    """Equivalent 4x2 channel matrices ``H_m`` of all destinations, (M, 4, 2)."""
    h1, h2 = model.alamouti_gains(solution, channels)
    ad = solution.alpha1 * channels.d
    M = ad.size
    H = np.zeros((M, 4, 2), dtype=complex)
    H[:, 0, 0] = ad
    H[:, 1, 1] = np.conj(ad)
    H[:, 2, 0] = h1
    H[:, 2, 1] = h2
    H[:, 3, 0] = -np.conj(h2)
    H[:, 3, 1] = np.conj(h1)
    return H


def combiner(solution, channels, m=None):
    """Combining matrices ``B`` (M, 2, 4) and scalings ``Gamma`` (M, 4).

    Raises
    ------
    DetectionError
        If ``c = 0`` for a requested destination.
    """
    H = equivalent_channel(solution, channels)
    s34 = model.noise_power_34(solution, channels)
    gamma = np.ones((H.shape[0], 4))
    gamma[:, :2] = np.sqrt(s34 / channels.sigma_nu_sq)[:, None]
    GH = gamma[:, :, None] * H
    c2 = np.sum(np.abs(GH[:, :, 0]) ** 2, axis=1)
    sel = np.arange(H.shape[0]) if m is None else np.atleast_1d(m)
    bad = [int(i) for i in sel if not c2[i] > 0]
    if bad:
        raise DetectionError(f"zero equivalent channel at destination(s) {bad}")
    with np.errstate(divide="ignore", invalid="ignore"):
        B = np.conj(np.swapaxes(GH, 1, 2)) * gamma[:, None, :] / c2[:, None, None]
    return B, gamma


def _chunk(solution, channels, batch, k, size, dests):
    """Simulate chunk ``k``; returns (idx, s, y, n, t, source) for ``dests``."""
    f, g, d = channels.f, channels.g, channels.d
    R = f.size
    a1, a3, a4 = solution.alpha1, solution.alpha3, solution.alpha4
    idx, s = batch.symbols(k, size)
    s1, s2 = s[:, 0], s[:, 1]

    if batch.noiseless:
        eta = np.zeros((2, R, size), dtype=complex)
    else:
        eta = np.stack([
            _cn(make_rng(batch.seed, _STREAM_RELAY, q, k), (R, size), channels.sigma_eta_sq)
            for q in range(2)
        ])
    # relay receptions of slots 1 and 2
    x1 = f[:, None] * a1 * s1[None, :] + eta[0]
    x2 = f[:, None] * a1 * np.conj(s2)[None, :] + eta[1]
    # Alamouti encoding with W_i = diag(w_i^H)
    cw1, cw2 = np.conj(solution.w1)[:, None], np.conj(solution.w2)[:, None]
    t3 = cw1 * x1 + cw2 * np.conj(x2)
    t4 = -cw2 * np.conj(x1) + cw1 * x2
    src = np.stack([a1 * s1, a1 * np.conj(s2), a3 * s1 + a4 * s2, -a4 * np.conj(s1) + a3 * np.conj(s2)])

    gd = g[dests]
    dd = d[dests]
    rel3 = gd @ t3
    rel4 = gd @ t4
    clean = np.empty((len(dests), size, 4), dtype=complex)
    clean[:, :, 0] = dd[:, None] * src[0]
    clean[:, :, 1] = dd[:, None] * src[1]
    clean[:, :, 2] = rel3 + dd[:, None] * src[2]
    clean[:, :, 3] = rel4 + dd[:, None] * src[3]
    nu = np.zeros_like(clean)
    if not batch.noiseless:
        for i, m in enumerate(dests):
            for q in range(4):
                nu[i, :, q] = _cn(make_rng(batch.seed, _STREAM_DEST, m, q, k), (size,),
                                  channels.sigma_nu_sq)
    raw = clean + nu
    # stacked observation [y1, y2*, y3, y4*]
    y = raw.copy()
    y[:, :, 1] = np.conj(raw[:, :, 1])
    y[:, :, 3] = np.conj(raw[:, :, 3])
    H = equivalent_channel(solution, channels)[dests]
    n = y - (H[:, None, :, 0] * s[None, :, 0, None] + H[:, None, :, 1] * s[None, :, 1, None])
    return idx, s, y, n, np.stack([t3, t4]), src


def _dests(channels, m):
    if m is None:
        return np.arange(channels.destination_count)
    return np.atleast_1d(np.asarray(m, dtype=int))


def transmit(solution, channels, batch, m=None):
    """Simulate the whole batch and keep every sample.

    Memory grows as ``M * n_pairs``; use :func:`measure` for large batches.

    Parameters
    ----------
    solution : BeamformerSolution
        Physical relay weights and power factor.
    channels : ChannelRealization
    batch : TransmissionBatch
    m : int or sequence of int, optional
        Restrict to these destinations (default all).
    """
    if solution.n != channels.relay_count + 1:
        raise ValueError("solution and channels disagree on the relay count")
    dests = _dests(channels, m)
    parts = [_chunk(solution, channels, batch, k, size, dests) for k, size in batch.chunks()]
    return ReceivedSignals(
        s=np.concatenate([p[1] for p in parts]),
        y=np.concatenate([p[2] for p in parts], axis=1),
        n=np.concatenate([p[3] for p in parts], axis=1),
        t=np.concatenate([p[4] for p in parts], axis=2),
        source=np.concatenate([p[5] for p in parts], axis=1),
    )


def detect(y_m, solution, channels, m, batch=None):
    """Combine and slice the observations of destination ``m``.

    Parameters
    ----------
    y_m : (N, 4) complex
        Stacked observations ``[y1, y2*, y3, y4*]``.
    batch : TransmissionBatch, optional
        Supplies the constellation (default QPSK).

    Returns
    -------
    s_hat : (N, 2) complex
        Soft estimates ``B y_m``.
    decisions : (N, 2) complex
        Nearest constellation point of each component.
    """
    batch = TransmissionBatch() if batch is None else batch
    B, _ = combiner(solution, channels, m)
    s_hat = np.asarray(y_m) @ B[m].T
    return s_hat, batch.index_to_symbol(batch.slice(s_hat))


def joint_ml(y_m, solution, channels, m, batch=None):
    """Exhaustive ML decision over all pairs in S x S for destination ``m``.

    Minimizes ``||Gamma y_m - Gamma H_m s||^2``; cost grows as ``|S|^2``.
    """
    batch = TransmissionBatch() if batch is None else batch
    _, gamma = combiner(solution, channels, m)
    H = equivalent_channel(solution, channels)[m]
    pts = batch.points
    cand = np.array(list(itertools.product(pts, pts)))            # (K^2, 2)
    gy = np.asarray(y_m) * gamma[m]
    gHs = (cand @ H.T) * gamma[m]                                  # (K^2, 4)
    cost = np.sum(np.abs(gy[:, None, :] - gHs[None, :, :]) ** 2, axis=2)
    return cand[np.argmin(cost, axis=1)]


class _Moments:
    """Mean and variance of an array-valued sample, merged chunk-wise."""

    def __init__(self):
        self.count, self.mean, self.m2 = 0, None, None

    def add(self, x, axis):
        x = np.asarray(x, dtype=float)
        n = x.shape[axis]
        mean = x.mean(axis=axis)
        m2 = np.sum((x - np.expand_dims(mean, axis)) ** 2, axis=axis)
        if self.count == 0:
            self.count, self.mean, self.m2 = n, mean, m2
            return
        tot = self.count + n
        delta = mean - self.mean
        self.mean = self.mean + delta * n / tot
        self.m2 = self.m2 + m2 + delta**2 * self.count * n / tot
        self.count = tot

    @property
    def stderr(self):
        if self.count < 2:
            return np.full_like(self.mean, np.inf)
        return np.sqrt(self.m2 / (self.count - 1) / self.count)


def _outer_parts(v):
    """Real and imaginary parts of all products ``v_i conj(v_j)``, (..., 2, k, k)."""
    p = v[..., :, None] * np.conj(v[..., None, :])
    return np.stack([p.real, p.imag], axis=-3)


def _gray_bit_errors(sent, got):
    g1 = sent ^ (sent >> 1)
    g2 = got ^ (got >> 1)
    x = g1 ^ g2
    count = np.zeros_like(x)
    while np.any(x):
        count += x & 1
        x >>= 1
    return count


@dataclass
class LinkStats:
    """Empirical link statistics of one batch.

    Attributes
    ----------
    snr, snr_stderr : (M, 2)
        ``1 / E|s_hat - s|^2`` per destination and symbol component.
    symbol_error_rate, ser_stderr : (M, 2)
    bit_error_rate, ber_stderr : (M,)
        Gray-labelled bit errors averaged over both symbols.
    noise_cov, noise_cov_stderr : (M, 4, 4)
        ``E{n_m n_m^H}``; the standard error holds real and imaginary
        parts as the real and imaginary parts of a complex number.
    scaled_noise_cov, scaled_noise_cov_stderr : (M, 4, 4)
        Same for ``Gamma n_m``.
    error_cov, error_cov_stderr : (M, 2, 2)
        Same for ``s_hat - s``.
    relay_power : (R, 2)
        Mean ``|t_{r,3}|^2`` and ``|t_{r,4}|^2``.
    source_power : (4,)
        Mean source transmit power of each slot.
    destinations : (M,) int
    n_samples : int
    """

    snr: np.ndarray
    snr_stderr: np.ndarray
    symbol_error_rate: np.ndarray
    ser_stderr: np.ndarray
    bit_error_rate: np.ndarray
    ber_stderr: np.ndarray
    noise_cov: np.ndarray
    noise_cov_stderr: np.ndarray
    scaled_noise_cov: np.ndarray
    scaled_noise_cov_stderr: np.ndarray
    error_cov: np.ndarray
    error_cov_stderr: np.ndarray
    relay_power: np.ndarray
    source_power: np.ndarray
    destinations: np.ndarray
    n_samples: int

    @property
    def snr_db(self):
        return 10.0 * np.log10(self.snr)

    def min_snr(self):
        """Smallest per-destination SNR (components averaged)."""
        return float(np.min(self.snr.mean(axis=1)))

    def rows(self):
        """One CSV row per destination."""
        out = []
        for i, m in enumerate(self.destinations):
            out.append({
                "destination": int(m),
                "n_samples": self.n_samples,
                "snr1_db": f"{self.snr_db[i, 0]:.6f}",
                "snr2_db": f"{self.snr_db[i, 1]:.6f}",
                "snr1_stderr": f"{self.snr_stderr[i, 0]:.6e}",
                "snr2_stderr": f"{self.snr_stderr[i, 1]:.6e}",
                "ser1": f"{self.symbol_error_rate[i, 0]:.6e}",
                "ser2": f"{self.symbol_error_rate[i, 1]:.6e}",
                "ber": f"{self.bit_error_rate[i]:.6e}",
                "ber_stderr": f"{self.ber_stderr[i]:.6e}",
            })
        return out


def _combine(mom, shape):
    if mom.count == 0:
        return np.full(shape, np.nan + 1j * np.nan)
    return mom.mean[..., 0, :, :] + 1j * mom.mean[..., 1, :, :]


def _combine_se(mom, shape):
    if mom.count == 0:
        return np.full(shape, np.nan + 1j * np.nan)
    se = mom.stderr
    return se[..., 0, :, :] + 1j * se[..., 1, :, :]


def measure(solution, channels, batch, m=None, covariances=True):
    """Simulate ``batch`` and return :class:`LinkStats`.

    Samples are reduced chunk by chunk, so memory does not grow with
    ``n_pairs``.  With ``covariances=False`` the covariance fields are
    left as NaN, which roughly halves the cost.
    """
    if solution.n != channels.relay_count + 1:
        raise ValueError("solution and channels disagree on the relay count")
    dests = _dests(channels, m)
    B, gamma = combiner(solution, channels, dests)
    B, gamma = B[dests], gamma[dests]
    mse, ser, ber = _Moments(), _Moments(), _Moments()
    ncov, gcov, ecov = _Moments(), _Moments(), _Moments()
    tpow, spow = _Moments(), _Moments()
    bits = batch.bits_per_symbol
    for k, size in batch.chunks():
        idx, s, y, n, t, src = _chunk(solution, channels, batch, k, size, dests)
        s_hat = sum(B[:, None, :, j] * y[:, :, j, None] for j in range(4))
        e = s_hat - s[None]
        mse.add(np.abs(e) ** 2, axis=1)
        got = batch.slice(s_hat)
        wrong = np.any(got != idx[None], axis=-1)
        ser.add(wrong.astype(float), axis=1)
        nbits = _gray_bit_errors(idx[None], got).sum(axis=(2, 3))
        ber.add(nbits / (2.0 * bits), axis=1)
        if covariances:
            ncov.add(_outer_parts(n), axis=1)
            gcov.add(_outer_parts(n * gamma[:, None, :]), axis=1)
            ecov.add(_outer_parts(e), axis=1)
        tpow.add(np.abs(t) ** 2, axis=2)
        spow.add(np.abs(src) ** 2, axis=1)

    snr = 1.0 / mse.mean
    return LinkStats(
        snr=snr,
        snr_stderr=snr**2 * mse.stderr,
        symbol_error_rate=ser.mean,
        ser_stderr=ser.stderr,
        bit_error_rate=ber.mean,
        ber_stderr=ber.stderr,
        noise_cov=_combine(ncov, (len(dests), 4, 4)),
        noise_cov_stderr=_combine_se(ncov, (len(dests), 4, 4)),
        scaled_noise_cov=_combine(gcov, (len(dests), 4, 4)),
        scaled_noise_cov_stderr=_combine_se(gcov, (len(dests), 4, 4)),
        error_cov=_combine(ecov, (len(dests), 2, 2)),
        error_cov_stderr=_combine_se(ecov, (len(dests), 2, 2)),
        relay_power=tpow.mean.T,
        source_power=spow.mean,
        destinations=dests,
        n_samples=int(batch.n_pairs),
    )


def write_stats_csv(stats, path):
    """Write one row per destination."""
    rows = stats.rows()
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def dump_samples(solution, channels, batch, path, m=0, max_rows=_MAX_DUMP_ROWS):
    """Write raw samples of destination ``m`` for debugging (at most ``max_rows``)."""
    rows = min(int(max_rows), _MAX_DUMP_ROWS, int(batch.n_pairs))
    small = TransmissionBatch(batch.constellation, rows, batch.seed, batch.noiseless, batch.chunk_size)
    sig = transmit(solution, channels, small, m=m)
    s_hat, dec = detect(sig.y[0], solution, channels, m, small)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair", "s1", "s2", "s1_hat", "s2_hat", "s1_dec", "s2_dec"])
        for i in range(rows):
            writer.writerow([i, *(f"{v:.9g}" for v in (*sig.s[i], *s_hat[i], *dec[i]))])
