"""Input validation shared by the estimator API and the harness."""

import numpy as np

from .model import BeamformerSolution, PowerBudget
from .scenario import ChannelRealization

__all__ = ["check_channels", "check_budget", "check_solution", "check_choice", "check_positive"]


def check_channels(X):
    """Return a :class:`ChannelRealization` built from ``X``.

    ``X`` may be a realization or a mapping with keys ``f, g, d,
    sigma_nu_sq, sigma_eta_sq``.
    """
    if isinstance(X, ChannelRealization):
        return X
    if isinstance(X, dict):
        missing = {"f", "g", "d", "sigma_nu_sq", "sigma_eta_sq"} - set(X)
        if missing:
            raise ValueError(f"channel mapping lacks {sorted(missing)}")
        return ChannelRealization(f=X["f"], g=X["g"], d=X["d"], sigma_nu_sq=X["sigma_nu_sq"],
                                  sigma_eta_sq=X["sigma_eta_sq"])
    raise TypeError(f"expected ChannelRealization or mapping, got {type(X).__name__}")


def check_budget(budget=None, P_T_dbm=None):
    """A :class:`PowerBudget` from an explicit budget or a total in dBm."""
    if budget is not None:
        if not isinstance(budget, PowerBudget):
            raise TypeError("budget must be a PowerBudget")
        return budget
    if P_T_dbm is None:
        raise ValueError("either budget or P_T_dbm is required")
    return PowerBudget.from_total(float(10.0 ** ((float(P_T_dbm) - 30.0) / 10.0)))


def check_solution(solution, channels):
    """Check that ``solution`` fits ``channels`` dimensionally."""
    if not isinstance(solution, BeamformerSolution):
        raise TypeError("solution must be a BeamformerSolution")
    if solution.n != channels.relay_count + 1:
        raise ValueError(f"solution has {solution.n - 1} relays, channels have "
                         f"{channels.relay_count}")
    if not np.all(np.isfinite(solution.w)):
        raise ValueError("solution has non-finite weights")
    return solution


def check_choice(name, value, choices):
    if value not in choices:
        raise ValueError(f"{name} must be one of {list(choices)}, got {value!r}")
    return value


def check_positive(name, value, integer=False):
    if integer and int(value) != value:
        raise ValueError(f"{name} must be an integer")
    if not value > 0:
        raise ValueError(f"{name} must be positive")
    return int(value) if integer else float(value)
