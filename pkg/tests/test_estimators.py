import numpy as np
import pytest
from conftest import random_channels
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from relaycast import RelayBeamformer, model, scenario


@pytest.fixture(scope="module")
def channels():
    return scenario.generate(scenario.NetworkGeometry(relay_count=4, destination_count=5), 0)


def test_fit_predict_score_cccp(channels):
    est = RelayBeamformer(P_T_dbm=20, n_starts=2).fit(channels)
    snr = est.predict(channels)
    assert snr.shape == (5,)
    assert est.score(channels) == pytest.approx(10 * np.log10(snr.min()))
    assert est.min_snr_ == pytest.approx(snr.min())
    assert model.feasible(est.solution_.w, est.solution_.a, est.budget_,
                          model.build(channels), rtol=1e-9) == []
    assert est.n_relays_ == 4 and est.n_iter_ >= 1


def test_fit_sdr_rank_one(channels):
    est = RelayBeamformer(method="sdr", rank=1, grid_size=11, n_candidates=20).fit(channels)
    assert np.all(est.solution_.w2_tilde == 0)
    assert est.n_iter_ == est.result_.n_sdp


def test_accepts_mapping(channels):
    X = dict(f=channels.f, g=channels.g, d=channels.d, sigma_nu_sq=channels.sigma_nu_sq,
             sigma_eta_sq=channels.sigma_eta_sq)
    a = RelayBeamformer(max_iter=3).fit(X).solution_.w
    b = RelayBeamformer(max_iter=3).fit(channels).solution_.w
    np.testing.assert_array_equal(a, b)


def test_params_and_clone():
    est = RelayBeamformer(rank=1, epsilon=1e-3)
    params = est.get_params()
    assert params["rank"] == 1 and params["epsilon"] == 1e-3
    assert clone(est).get_params() == params


def test_validation(channels, rng):
    with pytest.raises(ValueError):
        RelayBeamformer(method="magic").fit(channels)
    with pytest.raises(ValueError):
        RelayBeamformer(rank=3).fit(channels)
    with pytest.raises(ValueError):
        RelayBeamformer(grid_size=0).fit(channels)
    with pytest.raises(TypeError):
        RelayBeamformer(budget=5.0).fit(channels)
    with pytest.raises(TypeError):
        RelayBeamformer().fit(np.zeros(3))
    with pytest.raises(ValueError):
        RelayBeamformer().fit({"f": channels.f})
    with pytest.raises(NotFittedError):
        RelayBeamformer().predict(channels)
    est = RelayBeamformer(max_iter=2).fit(channels)
    with pytest.raises(ValueError):
        est.predict(random_channels(rng, R=3, M=2))


def test_explicit_budget(channels):
    budget = model.PowerBudget.from_total(0.5)
    est = RelayBeamformer(budget=budget, max_iter=3).fit(channels)
    assert est.budget_ is budget
