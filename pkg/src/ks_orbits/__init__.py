"""Regularized Kepler dynamics, Hopf lifts and generalized periodic orbits."""

from . import errors, flow, kepler, ksreg, pathlift, porbit, quat, rtbp
from .estimators import CollisionAsymptoteFit, HopfLift, PeriodicOrbitFinder
from .ksreg import KSState
from .kepler import PhysState

__all__ = [
    "errors", "flow", "kepler", "ksreg", "pathlift", "porbit", "quat", "rtbp",
    "CollisionAsymptoteFit", "HopfLift", "PeriodicOrbitFinder", "KSState", "PhysState",
]

__version__ = "0.1.0"
