"""Estimator-style front end: ``fit`` designs a beamformer for a network.

>>> est = RelayBeamformer(method="cccp", P_T_dbm=20).fit(channels)
>>> est.predict(channels)        # per-destination SNR
>>> est.score(channels)          # minimum SNR in dB
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import cccp, model, sdr
from ._validation import (
    check_budget,
    check_channels,
    check_choice,
    check_positive,
    check_solution,
)

__all__ = ["RelayBeamformer"]


class RelayBeamformer(BaseEstimator):
    """Max-min SNR relay beamformer.

    Parameters
    ----------
    method : {"cccp", "sdr"}
        Iterative convex approximation or relaxed 2D search with recovery.
    rank : {1, 2}
        Two Alamouti-coupled weight vectors, or a single vector.
    P_T_dbm : float
        Total budget; the other limits follow the default ratios.  Ignored
        when ``budget`` is given.
    budget : PowerBudget, optional
    epsilon : float
        Relative progress tolerance (CCCP) or bisection accuracy (SDR).
    max_iter, n_starts : int
        CCCP iteration limit and number of random starts.
    grid_size, n_candidates : int
        SDR grid points over a and randomization candidates.
    random_state : int

    Attributes
    ----------
    solution_ : BeamformerSolution
        Physical weights and power factor.
    min_snr_ : float
    n_iter_ : int
        CCCP iterations or SDP solves.
    result_ : CccpReport or SdrOutcome
    budget_ : PowerBudget
    """

    def __init__(self, method="cccp", rank=2, P_T_dbm=20.0, budget=None, epsilon=1e-2,
                 max_iter=50, n_starts=1, grid_size=200, n_candidates=200, random_state=0):
        self.method = method
        self.rank = rank
        self.P_T_dbm = P_T_dbm
        self.budget = budget
        self.epsilon = epsilon
        self.max_iter = max_iter
        self.n_starts = n_starts
        self.grid_size = grid_size
        self.n_candidates = n_candidates
        self.random_state = random_state

    def _validate(self):
        check_choice("method", self.method, ("cccp", "sdr"))
        check_choice("rank", self.rank, (1, 2))
        for name in ("max_iter", "n_starts", "grid_size", "n_candidates"):
            check_positive(name, getattr(self, name), integer=True)
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be non-negative")
        return check_budget(self.budget, self.P_T_dbm)

    def fit(self, X, y=None):
        """Design the beamformer for channel realization ``X``; ``y`` is ignored."""
        budget = self._validate()
        channels = check_channels(X)
        data = model.build(channels)
        if self.method == "cccp":
            opts = cccp.CccpOptions(epsilon=self.epsilon, max_iter=self.max_iter,
                                    seed=self.random_state, n_starts=self.n_starts,
                                    rank=self.rank)
            rep = cccp.run(data, budget, opts)
            sol, n_iter = rep.solution, rep.iterations
        else:
            rep = sdr.search(data, budget, grid_size=self.grid_size, eps=self.epsilon)
            sol, _ = sdr.recover(rep, data, budget, "rank2" if self.rank == 2 else "rank1",
                                 self.n_candidates, self.random_state)
            n_iter = rep.n_sdp
        self.solution_ = sol
        self.min_snr_ = model.min_snr(sol.w, sol.a, data)[0]
        self.n_iter_ = n_iter
        self.result_ = rep
        self.budget_ = budget
        self.n_relays_ = channels.relay_count
        return self

    def predict(self, X):
        """Per-destination SNR of the fitted beamformer on channels ``X``."""
        check_is_fitted(self, "solution_")
        channels = check_channels(X)
        check_solution(self.solution_, channels)
        return model.snr_all(self.solution_.w, self.solution_.a, model.build(channels))

    def score(self, X, y=None):
        """Minimum SNR in dB on channels ``X``."""
        return float(10.0 * np.log10(np.min(self.predict(X))))
