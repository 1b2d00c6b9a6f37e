"""Network geometry and channel generation.

Geometry
    The source sits at the origin.  R relays sit on a circle of radius
    ``relay_radius`` at equidistant angles 2*pi*r/R.  Destinations are placed
    uniformly in angle and uniformly in radial distance between
    ``destination_radius_min`` and ``destination_radius_max``.  Distances are
    three-dimensional and include the antenna heights.

Channel model
    Every link coefficient is

        sqrt(10**(-PL(dist)/10)) * sqrt(shadowing gain) * CN(0, 1),

    with the log-distance pathloss ``PL(d) = 34.53 + 38 log10(d / 1 m)`` dB on
    all links and lognormal shadowing (default 10 dB standard deviation)
    on source-destination and relay-destination links only.

Random numbers
    All draws come from numpy's Philox4x64-10 counter-based generator keyed
    by :class:`numpy.random.SeedSequence` children of the user seed.  Each
    quantity (destination placement, shadowing, and the fading of f, g and d)
    has its own child stream, so e.g. the source-relay fading does not change
    when the destination count changes.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PATHLOSS_INTERCEPT_DB",
    "PATHLOSS_SLOPE",
    "NetworkGeometry",
    "ChannelRealization",
    "pathloss_db",
    "dbm_to_watt",
    "watt_to_dbm",
    "make_rng",
    "generate",
    "write_channels_csv",
    "read_channels_csv",
]

PATHLOSS_INTERCEPT_DB = 34.53
PATHLOSS_SLOPE = 38.0
LINK_KINDS = ("source-relay", "source-destination", "relay-destination")

# SeedSequence spawn keys of the individual streams
_STREAM_PLACEMENT, _STREAM_SHADOW_SD, _STREAM_SHADOW_RD = 0, 1, 2
_STREAM_FADE_F, _STREAM_FADE_G, _STREAM_FADE_D = 3, 4, 5


def dbm_to_watt(dbm):
    """Convert dBm to watts: P = 10**((dBm - 30) / 10)."""
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(watt):
    return 10.0 * np.log10(np.asarray(watt, dtype=float)) + 30.0


def make_rng(seed, *path):
    """Philox generator for the child stream ``path`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def pathloss_db(distance, link_kind="relay-destination"):
    """Log-distance pathloss in dB.

    Parameters
    ----------
    distance : float or array_like
        Link length in meters (> 0).
    link_kind : str
        One of ``"source-relay"``, ``"source-destination"``,
        ``"relay-destination"``.  All kinds share the same law; the argument
        is validated so a future per-link model can slot in.
    """
    if link_kind not in LINK_KINDS:
        raise ValueError(f"unknown link kind {link_kind!r}")
    distance = np.asarray(distance, dtype=float)
    if np.any(distance <= 0):
        raise ValueError("distance must be positive")
    return PATHLOSS_INTERCEPT_DB + PATHLOSS_SLOPE * np.log10(distance)


@dataclass(frozen=True)
class NetworkGeometry:
    """Placement and propagation parameters of one network."""

    relay_count: int = 10
    destination_count: int = 10
    relay_radius: float = 250.0
    destination_radius_min: float = 600.0
    destination_radius_max: float = 800.0
    source_height: float = 10.0
    relay_height: float = 5.0
    destination_height: float = 1.5
    carrier_frequency: float = 2.0e9
    shadowing_db: float = 10.0
    noise_nu_dbm: float = -132.0
    noise_eta_dbm: float = -132.0

    def __post_init__(self):
        if int(self.relay_count) < 1 or int(self.destination_count) < 1:
            raise ValueError("relay_count and destination_count must be at least 1")
        if not 0 < self.destination_radius_min <= self.destination_radius_max:
            raise ValueError("need 0 < destination_radius_min <= destination_radius_max")
        if self.relay_radius < 0:
            raise ValueError("relay_radius must be non-negative")
        if min(self.source_height, self.relay_height, self.destination_height) <= 0:
            raise ValueError("heights must be positive")
        if self.shadowing_db < 0:
            raise ValueError("shadowing_db must be non-negative")

    @property
    def sigma_nu_sq(self):
        return float(dbm_to_watt(self.noise_nu_dbm))

    @property
    def sigma_eta_sq(self):
        return float(dbm_to_watt(self.noise_eta_dbm))

    def relay_positions(self):
        R = int(self.relay_count)
        ang = 2.0 * np.pi * np.arange(R) / R
        return np.column_stack([
            self.relay_radius * np.cos(ang),
            self.relay_radius * np.sin(ang),
            np.full(R, self.relay_height),
        ])


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """Channel coefficients of one network draw.

    Attributes
    ----------
    f : (R,) complex
        Source-to-relay channels.
    g : (M, R) complex
        Row ``m`` holds the relay-to-destination channels g_m.
    d : (M,) complex
        Source-to-destination channels.
    sigma_nu_sq, sigma_eta_sq : float
        Destination and relay noise powers in watts.
    """

    f: np.ndarray
    g: np.ndarray
    d: np.ndarray
    sigma_nu_sq: float
    sigma_eta_sq: float
    relay_positions: np.ndarray = field(default=None, repr=False)
    destination_positions: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        f = np.asarray(self.f, dtype=complex).reshape(-1)
        g = np.atleast_2d(np.asarray(self.g, dtype=complex))
        d = np.asarray(self.d, dtype=complex).reshape(-1)
        if g.shape != (d.size, f.size):
            raise ValueError(f"g has shape {g.shape}, expected {(d.size, f.size)}")
        for name, arr in (("f", f), ("g", g), ("d", d)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
        if not (self.sigma_nu_sq > 0 and self.sigma_eta_sq > 0):
            raise ValueError("noise powers must be positive")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "d", d)

    @property
    def relay_count(self):
        return self.f.size

    @property
    def destination_count(self):
        return self.d.size

    def equal(self, other):
        return (
            np.array_equal(self.f, other.f)
            and np.array_equal(self.g, other.g)
            and np.array_equal(self.d, other.d)
            and self.sigma_nu_sq == other.sigma_nu_sq
            and self.sigma_eta_sq == other.sigma_eta_sq
        )


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _shadow_amplitude(rng, shape, sigma_db):
    if sigma_db == 0:
        return np.ones(shape)
    return 10.0 ** (sigma_db * rng.standard_normal(shape) / 20.0)


def generate(geometry, seed):
    """Draw one channel realization; a pure function of (geometry, seed)."""
    R, M = int(geometry.relay_count), int(geometry.destination_count)
    rng = make_rng(seed, _STREAM_PLACEMENT)
    radius = rng.uniform(geometry.destination_radius_min, geometry.destination_radius_max, M)
    angle = rng.uniform(0.0, 2.0 * np.pi, M)
    dest = np.column_stack([radius * np.cos(angle), radius * np.sin(angle),
                            np.full(M, geometry.destination_height)])
    relays = geometry.relay_positions()
    source = np.array([0.0, 0.0, geometry.source_height])

    d_sr = np.linalg.norm(relays - source, axis=1)
    d_sd = np.linalg.norm(dest - source, axis=1)
    d_rd = np.linalg.norm(dest[:, None, :] - relays[None, :, :], axis=2)

    amp_sr = 10.0 ** (-pathloss_db(d_sr, "source-relay") / 20.0)
    amp_sd = 10.0 ** (-pathloss_db(d_sd, "source-destination") / 20.0)
    amp_rd = 10.0 ** (-pathloss_db(d_rd, "relay-destination") / 20.0)

    sigma = geometry.shadowing_db
    amp_sd = amp_sd * _shadow_amplitude(make_rng(seed, _STREAM_SHADOW_SD), M, sigma)
    amp_rd = amp_rd * _shadow_amplitude(make_rng(seed, _STREAM_SHADOW_RD), (M, R), sigma)

    f = amp_sr * _cn(make_rng(seed, _STREAM_FADE_F), R)
    g = amp_rd * _cn(make_rng(seed, _STREAM_FADE_G), (M, R))
    d = amp_sd * _cn(make_rng(seed, _STREAM_FADE_D), M)
    return ChannelRealization(
        f=f, g=g, d=d,
        sigma_nu_sq=geometry.sigma_nu_sq,
        sigma_eta_sq=geometry.sigma_eta_sq,
        relay_positions=relays,
        destination_positions=dest,
    )


def write_channels_csv(channels, path):
    """Dump all coefficients as rows ``link, index_a, index_b, real, imag``.

    ``f`` rows use (relay, -1), ``g`` rows use (destination, relay) and
    ``d`` rows use (destination, -1).
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["link", "index_a", "index_b", "real", "imag"])
        for r, v in enumerate(channels.f):
            w.writerow(["source-relay", r, -1, repr(float(v.real)), repr(float(v.imag))])
        for m in range(channels.destination_count):
            for r in range(channels.relay_count):
                v = channels.g[m, r]
                w.writerow(["relay-destination", m, r, repr(float(v.real)), repr(float(v.imag))])
        for m, v in enumerate(channels.d):
            w.writerow(["source-destination", m, -1, repr(float(v.real)), repr(float(v.imag))])


def read_channels_csv(path, sigma_nu_sq, sigma_eta_sq):
    """Inverse of :func:`write_channels_csv`."""
    f, g, d = {}, {}, {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            v = complex(float(row["real"]), float(row["imag"]))
            a, b = int(row["index_a"]), int(row["index_b"])
            if row["link"] == "source-relay":
                f[a] = v
            elif row["link"] == "relay-destination":
                g[(a, b)] = v
            elif row["link"] == "source-destination":
                d[a] = v
            else:
                raise ValueError(f"unknown link {row['link']!r}")
    R, M = len(f), len(d)
    G = np.zeros((M, R), dtype=complex)
    for (m, r), v in g.items():
        G[m, r] = v
    return ChannelRealization(
        f=np.array([f[r] for r in range(R)]),
        g=G,
        d=np.array([d[m] for m in range(M)]),
        sigma_nu_sq=sigma_nu_sq,
        sigma_eta_sq=sigma_eta_sq,
    )
