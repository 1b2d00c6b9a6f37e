"""Rank-two amplify-and-forward relay multicast beamforming."""

from . import cccp, conic, harness, linalg, linksim, model, scenario, sdr
from .estimators import RelayBeamformer
from .model import BeamformerSolution, PowerBudget, ProblemData
from .scenario import ChannelRealization, NetworkGeometry

__version__ = "0.1.0"

__all__ = [
    "BeamformerSolution",
    "ChannelRealization",
    "NetworkGeometry",
    "PowerBudget",
    "ProblemData",
    "RelayBeamformer",
    "cccp",
    "conic",
    "harness",
    "linalg",
    "linksim",
    "model",
    "scenario",
    "sdr",
]
