import math

import numpy as np
import pytest

from relaycast import scenario
from relaycast.scenario import NetworkGeometry, generate, pathloss_db


def test_generate_deterministic_and_seed_sensitive():
    geo = NetworkGeometry(relay_count=4, destination_count=6)
    a, b, c = generate(geo, 3), generate(geo, 3), generate(geo, 4)
    assert a.equal(b)
    assert not a.equal(c)


def test_streams_independent_of_destination_count():
    a = generate(NetworkGeometry(destination_count=5), 7)
    b = generate(NetworkGeometry(destination_count=9), 7)
    np.testing.assert_array_equal(a.f, b.f)


def test_pathloss_values():
    assert pathloss_db(1.0) == pytest.approx(34.53)
    assert pathloss_db(470.0) - pathloss_db(47.0) == pytest.approx(38.0)
    # 34.53 + 38 log10(250) worked by hand
    assert pathloss_db(250.0, "source-relay") == pytest.approx(125.65172034, abs=1e-7)
    with pytest.raises(ValueError):
        pathloss_db(0.0)


def test_pathloss_monotone():
    d = np.geomspace(1, 1e4, 200)
    assert np.all(np.diff(pathloss_db(d)) > 0)


def test_relay_placement():
    geo = NetworkGeometry(relay_count=7)
    pos = geo.relay_positions()
    np.testing.assert_allclose(np.hypot(pos[:, 0], pos[:, 1]), geo.relay_radius)
    ang = np.unwrap(np.arctan2(pos[:, 1], pos[:, 0]))
    np.testing.assert_allclose(np.diff(ang), 2 * np.pi / 7)


def test_destination_radii_in_range():
    ch = generate(NetworkGeometry(destination_count=500), 1)
    r = np.hypot(ch.destination_positions[:, 0], ch.destination_positions[:, 1])
    assert r.min() >= 600 and r.max() <= 800


def _fixed_radius(M, shadowing_db):
    return NetworkGeometry(relay_count=2, destination_count=M, destination_radius_min=700.0,
                           destination_radius_max=700.0, shadowing_db=shadowing_db)


def test_direct_link_mean_gain_without_shadowing():
    geo = _fixed_radius(10**4, 0.0)
    ch = generate(geo, 5)
    dist = math.hypot(700.0, geo.source_height - geo.destination_height)
    expected = 10 ** (-pathloss_db(dist, "source-destination") / 10)
    assert np.mean(np.abs(ch.d) ** 2) == pytest.approx(expected, rel=0.03)


def test_direct_link_mean_gain_with_shadowing_log_domain():
    # with 10 dB shadowing the linear sample mean is too heavy-tailed for a
    # percent-level check at 1e4 draws; the dB mean of the shadowing is not
    geo = _fixed_radius(10**4, 10.0)
    ch = generate(geo, 5)
    amp = np.abs(ch.d) / np.abs(generate(_fixed_radius(10**4, 0.0), 5).d)
    shadow_db = 20 * np.log10(amp)
    assert abs(shadow_db.mean()) < 4 * 10.0 / 100
    assert shadow_db.std() == pytest.approx(10.0, rel=0.03)


def test_fading_unit_variance():
    geo = NetworkGeometry(relay_count=10, destination_count=10**4, shadowing_db=0.0)
    ch = generate(geo, 2)
    pos = ch.relay_positions
    dist = np.linalg.norm(ch.destination_positions[:, None, :] - pos[None], axis=2)
    fading = ch.g / 10 ** (-pathloss_db(dist) / 20)
    assert np.mean(np.abs(fading) ** 2) == pytest.approx(1.0, rel=0.02)


def test_no_shadowing_on_source_relay_links():
    a = generate(NetworkGeometry(shadowing_db=0.0), 9)
    b = generate(NetworkGeometry(shadowing_db=10.0), 9)
    np.testing.assert_array_equal(a.f, b.f)
    assert not np.array_equal(a.d, b.d)


def test_geometry_validation():
    with pytest.raises(ValueError):
        NetworkGeometry(relay_count=0)
    with pytest.raises(ValueError):
        NetworkGeometry(destination_radius_min=900.0)
    with pytest.raises(ValueError):
        NetworkGeometry(relay_height=0.0)


def test_channel_csv_round_trip(tmp_path):
    ch = generate(NetworkGeometry(relay_count=3, destination_count=4), 0)
    path = tmp_path / "ch.csv"
    scenario.write_channels_csv(ch, path)
    back = scenario.read_channels_csv(path, ch.sigma_nu_sq, ch.sigma_eta_sq)
    assert back.equal(ch)


def test_dbm_conversion():
    assert scenario.dbm_to_watt(30.0) == pytest.approx(1.0)
    assert scenario.watt_to_dbm(1e-3) == pytest.approx(0.0)
