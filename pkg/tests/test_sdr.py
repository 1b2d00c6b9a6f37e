import csv

import numpy as np
import pytest
from conftest import random_channels
from hypothesis import given, settings, strategies as st

from relaycast import cccp, model, sdr
from relaycast.model import PowerBudget

seeds = st.integers(0, 2**32 - 1)


@pytest.fixture(scope="module")
def small():
    """Normalized R = 3, M = 4 instance with a bisected boundary at a0."""
    rng = np.random.default_rng(21)
    data = model.build(random_channels(rng, R=3, M=4))
    budget = PowerBudget.from_total(10.0)
    ndata, nbudget, _ = model.normalize(data, budget)
    a0 = nbudget.min_a() * 1.5
    res = sdr.bisect_t(a0, ndata, nbudget, eps=1e-2)
    return data, budget, ndata, nbudget, a0, res


@pytest.fixture(scope="module")
def outcome():
    rng = np.random.default_rng(1)
    data = model.build(random_channels(rng, R=4, M=6))
    budget = PowerBudget.from_total(10.0)
    return data, budget, sdr.search(data, budget, grid_size=21)


def _snr_trace_form(X, a, ndata):
    """Per-destination SNR of the relaxed point X = X1 (one-matrix form)."""
    s2 = ndata.sigma_nu_sq
    num = np.einsum("mi,ij,mj->m", ndata.q1.conj(), X, ndata.q1).real
    den = ndata.r_diag @ np.diag(X).real
    return num / ((den + s2) * a) + ndata.d_sq / (s2 * a)


# -- feasibility oracle -----------------------------------------------------------

def test_huge_t_feasible(small):
    _, _, ndata, nbudget, a0, _ = small
    res = sdr.sdr_feasible(1e12, a0, ndata, nbudget)
    assert res.feasible
    assert np.trace(res.X[0]).real >= 0


def test_tiny_t_infeasible(small):
    _, _, ndata, nbudget, a0, _ = small
    assert sdr.sdr_feasible(1e-9, a0, ndata, nbudget).status == "infeasible"


def test_sdr_feasible_rejects_bad_arguments(small):
    _, _, ndata, nbudget, _, _ = small
    with pytest.raises(ValueError):
        sdr.sdr_feasible(0.0, 1.0, ndata, nbudget)


def test_boundary_bracketing(small):
    _, _, ndata, nbudget, a0, res = small
    assert sdr.sdr_feasible(1.01 * res.t_best, a0, ndata, nbudget).feasible
    assert not sdr.sdr_feasible(0.99 * res.t_best, a0, ndata, nbudget).feasible


def test_feasible_point_satisfies_constraints(small):
    _, _, ndata, nbudget, a0, res = small
    X, t = res.X, res.t_best
    assert np.linalg.eigvalsh(X).min() >= -1e-7 * np.trace(X).real
    snr = _snr_trace_form(X, a0, ndata)
    assert snr.min() >= (1 / t) * (1 - 1e-6)


def test_feasibility_monotone_in_t(small):
    _, _, ndata, nbudget, a0, res = small
    ts = res.t_best * np.geomspace(0.5, 4.0, 9)
    verdicts = [sdr.sdr_feasible(t, a0, ndata, nbudget).feasible for t in ts]
    first = verdicts.index(True)
    assert all(verdicts[first:])


def test_bisection_deterministic(small):
    _, _, ndata, nbudget, a0, res = small
    again = sdr.bisect_t(a0, ndata, nbudget, eps=1e-2)
    assert again.t_best == res.t_best and again.n_sdp == res.n_sdp


def test_bisection_matches_dense_scan():
    rng = np.random.default_rng(4)
    data = model.build(random_channels(rng, R=2, M=2))
    ndata, nbudget, _ = model.normalize(data, PowerBudget.from_total(10.0))
    a = nbudget.min_a() * 2.0
    res = sdr.bisect_t(a, ndata, nbudget, eps=1e-2)
    scan = res.t_best * np.geomspace(0.9, 1.1, 41)
    feasible = [t for t in scan if sdr.sdr_feasible(t, a, ndata, nbudget).feasible]
    assert res.t_best <= min(feasible) * 1.01
    assert res.t_best >= min(feasible) / 1.01


# -- grid search ---------------------------------------------------------------------

def test_single_point_grid_reduces_to_bisection(small):
    data, budget, ndata, nbudget, a0, res = small
    out = sdr.search(data, budget, grid=[a0 / ndata.normalization.p0])
    # the brackets start differently, so the two agree to the bisection precision
    assert res.t_best / 1.01 <= out.t_star <= res.t_best * 1.01
    assert out.a_star_n == pytest.approx(a0, rel=1e-12)


def test_grid_refinement_never_worsens(outcome):
    data, budget, coarse = outcome
    fine = sdr.search(data, budget, grid_size=41)  # contains every coarse point
    assert fine.snr_star >= coarse.snr_star / (1 + 1e-2)
    assert fine.bound_snr <= coarse.bound_snr * (1 + 1e-9)


def test_search_outcome_consistency(outcome):
    data, budget, out = outcome
    assert out.status == "ok"
    assert out.bound_snr >= out.snr_star
    assert out.a_star >= 2 / budget.P_S_max
    lam = np.linalg.eigvalsh(out.X1_star_n)
    assert lam.min() >= -1e-7 * lam.max()
    assert out.rank == sdr.numerical_rank(out.X1_star_n)
    assert out.n_sdp == sum(r.n_sdp for r in out.records)
    assert len(out.records) == 21


def test_search_bounds_cccp(outcome):
    data, budget, out = outcome
    rep = cccp.run(data, budget, cccp.CccpOptions(n_starts=3, epsilon=1e-4))
    assert out.bound_snr >= rep.min_snr * (1 - 1e-7)


def test_search_requires_source_budget(small):
    data = small[0]
    with pytest.raises(ValueError):
        sdr.search(data, PowerBudget(p_r_max=1.0))
    with pytest.raises(ValueError):
        sdr.search(data, small[1], grid_size=1)


def test_grid_csv(tmp_path, outcome):
    path = tmp_path / "grid.csv"
    sdr.write_grid_csv(outcome[2], path)
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == 21 and rows[0].keys() == {"a", "t_best", "t_lo", "status", "n_sdp",
                                                   "n_indeterminate"}


# -- rank analysis ---------------------------------------------------------------------

def test_numerical_rank_examples(rng):
    assert sdr.numerical_rank(np.eye(5)) == 5
    u = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    assert sdr.numerical_rank(np.outer(u, u.conj())) == 1
    Q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    X = 3.0 * np.outer(Q[:, 0], Q[:, 0]) + 3e-9 * np.outer(Q[:, 1], Q[:, 1])
    assert sdr.numerical_rank(X, 1e-6) == 1
    assert sdr.numerical_rank(np.zeros((3, 3))) == 0


def test_decompose_rank_one(rng):
    data = model.build(random_channels(rng, R=3, M=2))
    u = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    w1, w2 = sdr.decompose_rank_two(np.outer(u, u.conj()), data)
    assert np.all(w2 == 0)
    np.testing.assert_allclose(np.outer(w1, w1.conj()), np.outer(u, u.conj()), atol=1e-12)


def test_decompose_rejects_rank_three(rng):
    data = model.build(random_channels(rng, R=3, M=2))
    with pytest.raises(ValueError):
        sdr.decompose_rank_two(np.eye(4), data)


@given(seeds)
def test_decomposition_reproduces_trace_form(seed):
    rng = np.random.default_rng(seed)
    data = model.build(random_channels(rng, R=3, M=4))
    w1 = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    w2h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    X = np.outer(w1, w1.conj()) + np.outer(w2h, w2h.conj())
    v1, v2 = sdr.decompose_rank_two(X, data)
    w = np.concatenate([v1, v2])
    np.testing.assert_allclose(model.snr_all(w, 1.7, data), _snr_trace_form(X, 1.7, data),
                               rtol=1e-9)
    np.testing.assert_allclose(model.relay_powers(w, 1.7, data),
                               np.diag(X).real[:-1] * (data.d_diag / 1.7 + data.e_diag),
                               rtol=1e-9)


@given(seeds)
def test_unitary_remixing_leaves_trace_form_unchanged(seed):
    rng = np.random.default_rng(seed)
    data = model.build(random_channels(rng, R=3, M=4))
    W = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
    U, _ = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
    X, Y = W @ W.conj().T, (W @ U) @ (W @ U).conj().T
    for c1, c2 in zip(sdr.snr_constraints(0.5, 1.2, data), sdr.snr_constraints(0.5, 1.2, data)):
        assert np.trace(c1.coeffs[0] @ X).real == pytest.approx(
            np.trace(c2.coeffs[0] @ Y).real, rel=1e-10, abs=1e-12)


# -- randomization ---------------------------------------------------------------------

def test_rank_one_randomization_ties_bound(rng):
    data = model.build(random_channels(rng, R=3, M=1))
    budget = PowerBudget.from_total(10.0)
    out = sdr.search(data, budget, grid_size=11)
    ndata, nbudget, _ = model.normalize(data, budget)
    assert out.rank == 1
    res = sdr.randomize(out.X1_star_n, out.a_star_n, ndata, nbudget, 50, "rank1", seed=0)
    w1, _ = sdr.decompose_rank_two(out.X1_star_n, ndata)
    direct = model.max_feasible_scale(np.concatenate([w1, 0 * w1]), out.a_star_n, nbudget, ndata)
    exact = model.min_snr(direct * np.concatenate([w1, 0 * w1]), out.a_star_n, ndata)[0]
    # every candidate is a random phase times the same vector, so all tie
    assert res.min_snr == pytest.approx(exact, rel=1e-6)
    assert res.min_snr <= out.bound_snr * (1 + 1e-9)


def test_scaling_monotone_in_beta(outcome):
    data, budget, out = outcome
    ndata, nbudget, _ = model.normalize(data, budget)
    res = sdr.randomize(out.X1_star_n, out.a_star_n, ndata, nbudget, 20, "rank1", seed=3)
    w = res.solution.w
    snr = [model.min_snr(b * w, out.a_star_n, ndata)[0] for b in np.linspace(0.05, 1.0, 30)]
    assert np.all(np.diff(snr) >= 0)
    assert model.feasible(w, out.a_star_n, nbudget, ndata, rtol=1e-9) == []
    assert model.feasible(1.01 * w, out.a_star_n, nbudget, ndata) != []


def test_randomization_deterministic_and_below_bound(outcome):
    data, budget, out = outcome
    ndata, nbudget, _ = model.normalize(data, budget)
    for mode in ("rank1", "rank2"):
        a = sdr.randomize(out.X1_star_n, out.a_star_n, ndata, nbudget, 30, mode, seed=5)
        b = sdr.randomize(out.X1_star_n, out.a_star_n, ndata, nbudget, 30, mode, seed=5)
        np.testing.assert_array_equal(a.solution.w, b.solution.w)
        assert a.min_snr <= out.bound_snr * (1 + 1e-9)
        assert model.feasible(a.solution.w, out.a_star_n, nbudget, ndata, rtol=1e-9) == []
        if mode == "rank1":
            assert np.all(a.solution.w2_tilde == 0)


def test_rank_two_randomization_close_to_decomposition():
    rng = np.random.default_rng(1)
    data = model.build(random_channels(rng, R=4, M=6))
    budget = PowerBudget.from_total(10.0)
    out = sdr.search(data, budget, grid_size=11)
    assert out.rank == 2
    ndata, nbudget, _ = model.normalize(data, budget)
    sol, how = sdr.recover(out, data, budget, "rank2")
    assert how == "decomposition"
    ref = model.min_snr(sol.w, sol.a, data)[0]
    assert ref >= out.snr_star * (1 - 1e-5)
    for seed in range(20):
        res = sdr.randomize(out.X1_star_n, out.a_star_n, ndata, nbudget, 200, "rank2", seed)
        assert res.min_snr >= 0.97 * ref


def test_recover_modes(outcome):
    data, budget, out = outcome
    for mode in ("rank1", "rank2"):
        sol, how = sdr.recover(out, data, budget, mode, n_candidates=30)
        assert how in ("decomposition", "randomization")
        assert model.feasible(sol.w, sol.a, budget, data, rtol=1e-9) == []
        assert model.min_snr(sol.w, sol.a, data)[0] <= out.bound_snr * (1 + 1e-9)
        if mode == "rank1":
            assert np.all(sol.w2_tilde == 0)


# -- equivalence of the two relaxations ------------------------------------------------

@settings(max_examples=3)
@given(seeds)
def test_one_and_two_matrix_forms_agree(seed):
    rng = np.random.default_rng(seed)
    data = model.build(random_channels(rng, R=2, M=3))
    ndata, nbudget, _ = model.normalize(data, PowerBudget.from_total(10.0))
    t0 = sdr.bisect_t(nbudget.min_a() * 2, ndata, nbudget).t_best
    for _ in range(10):
        t = t0 * np.exp(rng.uniform(-1.5, 1.5))
        a = nbudget.min_a() * np.exp(rng.uniform(0.0, 2.0))
        one = sdr.sdr_feasible(t, a, ndata, nbudget, "one").status
        two = sdr.sdr_feasible(t, a, ndata, nbudget, "two").status
        direct = sdr.sdr_feasible(t, a, ndata, nbudget, "two-direct").status
        if "indeterminate" not in (one, two, direct):
            assert one == two == direct
