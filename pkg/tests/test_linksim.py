import csv

import numpy as np
import pytest
from conftest import feasible_start, unit_channels
from scipy.stats import norm

from relaycast import linksim, model, scenario
from relaycast.linksim import DetectionError, TransmissionBatch
from relaycast.model import BeamformerSolution


@pytest.fixture(scope="module")
def desk(desk_geometry, budget_20dbm):
    ch = scenario.generate(desk_geometry, 11)
    sol = feasible_start(ch, budget_20dbm, seed=11)
    return ch, sol, model.build(ch)


@pytest.fixture(scope="module")
def long_run(desk):
    ch, sol, _ = desk
    return linksim.measure(sol, ch, TransmissionBatch(n_pairs=10**6, seed=3), covariances=False)


@pytest.fixture(scope="module")
def cov_run(desk):
    ch, sol, _ = desk
    return linksim.measure(sol, ch, TransmissionBatch(n_pairs=200_000, seed=4), m=[0, 1, 2])


def test_constellations_unit_energy():
    for name in linksim.CONSTELLATIONS:
        b = TransmissionBatch(name)
        assert np.mean(np.abs(b.points) ** 2) == pytest.approx(1.0)
        assert b.points.size == 2 ** b.bits_per_symbol
    with pytest.raises(ValueError):
        TransmissionBatch("8PSK")


def test_noiseless_received_equals_channel_times_symbols(desk):
    ch, sol, _ = desk
    batch = TransmissionBatch(n_pairs=500, noiseless=True)
    sig = linksim.transmit(sol, ch, batch)
    H = linksim.equivalent_channel(sol, ch)
    np.testing.assert_allclose(sig.y, np.einsum("mij,nj->mni", H, sig.s), rtol=1e-12, atol=0)
    for m in range(ch.destination_count):
        s_hat, dec = linksim.detect(sig.y[m], sol, ch, m, batch)
        np.testing.assert_allclose(s_hat, sig.s, atol=1e-12)
        np.testing.assert_array_equal(dec, sig.s)


def test_noiseless_error_rate_zero(desk):
    ch, sol, _ = desk
    stats = linksim.measure(sol, ch, TransmissionBatch(n_pairs=2000, noiseless=True),
                            covariances=False)
    assert np.all(stats.symbol_error_rate == 0) and np.all(stats.bit_error_rate == 0)


def test_relay_signals_follow_alamouti_mapping(desk):
    ch, sol, _ = desk
    batch = TransmissionBatch(n_pairs=300, seed=2)
    sig = linksim.transmit(sol, ch, batch)
    # received relay signals are recovered from the relay transmissions
    W1, W2 = np.conj(sol.w1)[:, None], np.conj(sol.w2)[:, None]
    t3, t4 = sig.t
    # [t3; t4*] = [[W1, W2], [-W2*, W1*]] [x1; x2*]; invert per relay
    det = np.abs(W1) ** 2 + np.abs(W2) ** 2
    x1 = (np.conj(W1) * t3 - W2 * np.conj(t4)) / det
    x2c = (np.conj(W2) * t3 + W1 * np.conj(t4)) / det
    a1 = sol.alpha1
    noise1 = x1 - a1 * ch.f[:, None] * sig.s[:, 0]
    noise2 = np.conj(x2c) - a1 * ch.f[:, None] * np.conj(sig.s[:, 1])
    # whatever is left is relay noise of the right power
    p = np.mean(np.abs(np.concatenate([noise1, noise2])) ** 2)
    assert p == pytest.approx(ch.sigma_eta_sq, rel=0.1)


def test_silent_relays_leave_direct_terms(desk):
    ch, _, _ = desk
    R = ch.relay_count
    w = np.zeros(2 * (R + 1), dtype=complex)
    w[R], w[-1] = 0.3 + 0.1j, -0.2j
    sol = BeamformerSolution(w, 2.0e1)
    sig = linksim.transmit(sol, ch, TransmissionBatch(n_pairs=400, seed=1))
    assert np.all(sig.t == 0)
    s1, s2 = sig.s[:, 0], sig.s[:, 1]
    y3 = ch.d[:, None] * (sol.alpha3 * s1 + sol.alpha4 * s2)
    np.testing.assert_allclose(sig.y[:, :, 2] - sig.n[:, :, 2], y3, atol=1e-15)
    # with w = 0 altogether slots 3-4 carry noise only
    sig0 = linksim.transmit(BeamformerSolution(np.zeros_like(w), 2.0e1), ch,
                            TransmissionBatch(n_pairs=400, seed=1))
    np.testing.assert_array_equal(sig0.y[:, :, 2:], sig0.n[:, :, 2:])


def test_swapped_symbols_swap_estimates(desk):
    ch, sol, _ = desk
    H = linksim.equivalent_channel(sol, ch)
    s = TransmissionBatch().points[[0, 3]]
    for m in range(3):
        est, _ = linksim.detect((H[m] @ s)[None], sol, ch, m)
        est_sw, _ = linksim.detect((H[m] @ s[::-1])[None], sol, ch, m)
        np.testing.assert_allclose(est[0], s, atol=1e-12)
        np.testing.assert_allclose(est_sw[0], s[::-1], atol=1e-12)


def test_zero_equivalent_channel_raises():
    ch = unit_channels(R=1, M=1, d=0.0)
    sol = BeamformerSolution(np.zeros(4), 1.0)
    with pytest.raises(DetectionError):
        linksim.detect(np.zeros((1, 4)), sol, ch, 0)


@pytest.mark.parametrize("name", ["QPSK", "BPSK", "16QAM"])
def test_symbolwise_detection_equals_joint_ml(desk, name):
    ch, sol, _ = desk
    batch = TransmissionBatch(name, n_pairs=10_000 if name != "16QAM" else 2000, seed=9)
    sig = linksim.transmit(sol, ch, batch, m=[0, 1])
    for i, m in enumerate([0, 1]):
        _, dec = linksim.detect(sig.y[i], sol, ch, m, batch)
        np.testing.assert_array_equal(dec, linksim.joint_ml(sig.y[i], sol, ch, m, batch))


def test_snr_matches_closed_form(desk, long_run):
    _, sol, data = desk
    closed = 10 * np.log10(model.snr_all(sol.w, sol.a, data))
    assert np.max(np.abs(long_run.snr_db - closed[:, None])) <= 0.1
    gap_min = abs(10 * np.log10(long_run.min_snr()) - 10 * np.log10(model.min_snr(
        sol.w, sol.a, data)[0]))
    assert gap_min <= 0.15
    # both components see the same SNR
    z = (long_run.snr[:, 0] - long_run.snr[:, 1]) / np.hypot(*long_run.snr_stderr.T)
    assert np.all(np.abs(z) <= 5)


def test_powers_match_model(desk, long_run):
    _, sol, data = desk
    pr = model.relay_powers(sol.w, sol.a, data)
    np.testing.assert_allclose(long_run.relay_power[:, 0], pr, rtol=0.01)
    np.testing.assert_allclose(long_run.relay_power[:, 1], pr, rtol=0.01)
    assert long_run.source_power.sum() == pytest.approx(model.source_power(sol.w, sol.a, data),
                                                        rel=0.01)


def test_qpsk_ber_matches_gaussian_formula(long_run):
    snr = long_run.snr.mean(axis=1)
    expected = norm.sf(np.sqrt(snr))
    # the sample error is zero when no bit was hit; fall back on the binomial
    # error under the formula's own rate
    n_bits = 4 * long_run.n_samples
    se = np.maximum(long_run.ber_stderr, np.sqrt(expected * (1 - expected) / n_bits))
    assert np.all(np.abs(long_run.bit_error_rate - expected) <= 3 * se)


def test_noise_covariance_structure(desk, cov_run):
    ch, sol, _ = desk
    s34 = model.noise_power_34(sol, ch)[:3]
    for i in range(3):
        C, se = cov_run.noise_cov[i], cov_run.noise_cov_stderr[i]
        expected = np.diag([ch.sigma_nu_sq] * 2 + [s34[i]] * 2)
        z_re = np.abs(C.real - expected) / se.real
        off = ~np.eye(4, dtype=bool)
        assert np.all(z_re <= 5)
        assert np.all(np.abs(C.imag[off]) / se.imag[off] <= 5)
        Cs = cov_run.scaled_noise_cov[i]
        np.testing.assert_allclose(np.diag(Cs).real, s34[i], rtol=0.02)
        E = cov_run.error_cov[i]
        assert abs(E[0, 1]) <= 5 * abs(cov_run.error_cov_stderr[i][0, 1])
        np.testing.assert_allclose(C, C.conj().T, atol=1e-30)


def test_reproducible_and_destination_independent(desk):
    ch, sol, _ = desk
    batch = TransmissionBatch(n_pairs=3000, seed=5, chunk_size=1000)
    full = linksim.transmit(sol, ch, batch)
    part = linksim.transmit(sol, ch, batch, m=[4])
    np.testing.assert_allclose(full.y[4], part.y[0], rtol=1e-13)
    again = linksim.measure(sol, ch, batch, covariances=False)
    np.testing.assert_array_equal(again.snr, linksim.measure(sol, ch, batch,
                                                             covariances=False).snr)


def test_chunking_does_not_change_streams(desk):
    ch, sol, _ = desk
    a = linksim.transmit(sol, ch, TransmissionBatch(n_pairs=3000, seed=5, chunk_size=1000))
    b = linksim.transmit(sol, ch, TransmissionBatch(n_pairs=3000, seed=5, chunk_size=1000))
    np.testing.assert_array_equal(a.y, b.y)


def test_stats_csv_and_sample_dump(tmp_path, desk):
    ch, sol, _ = desk
    stats = linksim.measure(sol, ch, TransmissionBatch(n_pairs=1000), covariances=False)
    linksim.write_stats_csv(stats, tmp_path / "stats.csv")
    rows = list(csv.DictReader(open(tmp_path / "stats.csv")))
    assert len(rows) == ch.destination_count
    linksim.dump_samples(sol, ch, TransmissionBatch(n_pairs=50_000), tmp_path / "raw.csv")
    assert sum(1 for _ in open(tmp_path / "raw.csv")) == 10_001
