"""Shared fixtures and hypothesis settings."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from relaycast import model, scenario

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


def unit_channels(R=1, M=1, f=1.0, g=1.0, d=0.0, s_nu=1.0, s_eta=1.0):
    """Channels with constant coefficients (handy for hand-checked values)."""
    return scenario.ChannelRealization(
        f=np.full(R, f, dtype=complex), g=np.full((M, R), g, dtype=complex),
        d=np.full(M, d, dtype=complex), sigma_nu_sq=s_nu, sigma_eta_sq=s_eta,
    )


def random_channels(rng, R=3, M=4, s_nu=1.0, s_eta=1.0):
    cn = lambda *shape: (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    return scenario.ChannelRealization(f=cn(R), g=cn(M, R), d=cn(M), sigma_nu_sq=s_nu,
                                       sigma_eta_sq=s_eta)


def random_w(rng, n):
    return rng.standard_normal(2 * n) + 1j * rng.standard_normal(2 * n)


def feasible_start(channels, budget, seed=0):
    """A random strictly feasible physical solution for ``channels``."""
    from relaycast import cccp

    data = model.build(channels)
    ndata, nbudget, norm = model.normalize(data, budget)
    st = cccp.initial_point(ndata, nbudget, seed)
    return norm.solution_to_physical(model.BeamformerSolution(st.w, st.a, st.t))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def desk_geometry():
    return scenario.NetworkGeometry(relay_count=10, destination_count=10)


@pytest.fixture(scope="session")
def budget_20dbm():
    return model.PowerBudget.from_total(float(scenario.dbm_to_watt(20.0)))


def real_tiny_channels(rng, M=2):
    """R = 2 real channels without direct links (see :func:`grid_optimum`)."""
    return scenario.ChannelRealization(f=rng.standard_normal(2), g=rng.standard_normal((M, 2)),
                                       d=np.zeros(M), sigma_nu_sq=1.0, sigma_eta_sq=1.0)


def grid_optimum(channels, budget, n_disk=301, n_a=160, a_max=None):
    """Exhaustive-grid max-min SNR for two relays, real channels and d = 0.

    With real data every SNR and power depends on the weights only through
    the real 2x2 Gram matrix X = w1 w1^T + w2 w2^T, which ranges over the
    whole PSD cone.  X = s X0 with trace(X0) = 1 is gridded over the disk of
    X0 and a log grid of a; the scale s is set to its largest feasible value
    in closed form, since every SNR grows with s.
    """
    f, g = channels.f.real, channels.g.real
    s_nu, s_eta = channels.sigma_nu_sq, channels.sigma_eta_sq
    u = np.linspace(-1, 1, n_disk)
    y, z = np.meshgrid(u, u)
    keep = y ** 2 + z ** 2 <= 1
    x11, x22, x12 = (1 + z[keep]) / 2, (1 - z[keep]) / 2, y[keep] / 2
    q = g * f[None, :]
    num = (q[:, 0, None] ** 2 * x11 + q[:, 1, None] ** 2 * x22
           + 2 * q[:, 0, None] * q[:, 1, None] * x12)
    den = s_eta * (g[:, 0, None] ** 2 * x11 + g[:, 1, None] ** 2 * x22)
    caps = [v for v in (budget.P_S_max, budget.P_T_max) if v is not None]
    a_lo = 2.0 / min(caps)
    a_hi = a_max if a_max is not None else 2.0e6 / budget.P_S_max
    best = 0.0
    for a in a_lo * np.geomspace(1.0 + 1e-9, a_hi / a_lo, n_a):
        c = f ** 2 / a + s_eta
        p1, p2 = x11 * c[0], x22 * c[1]
        lim = [budget.p_r_max / np.maximum(p1, 1e-300), budget.p_r_max / np.maximum(p2, 1e-300),
               budget.P_R_max / (p1 + p2)]
        if budget.P_T_max is not None:
            lim.append((budget.P_T_max - 2.0 / a) / (2 * (p1 + p2)))
        s = np.min(lim, axis=0)
        snr = s * num / ((s * den + s_nu) * a)
        best = max(best, float(np.min(snr, axis=0).max()))
    return best


ACCEPTANCE_LINES = []


def acceptance_report(number, title, ok, detail):
    """Print and remember one pass/fail line of the acceptance run."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
