"""Spiking-network conductance scaling, sparse storage and occupancy tools."""

from .model import NetworkSpec, build_izhikevich_net, build_mbody_net, validate
from .engine import run
from .fitting import FitResult, fit_gscale, predict

__all__ = [
    "NetworkSpec", "build_izhikevich_net", "build_mbody_net", "validate",
    "run", "FitResult", "fit_gscale", "predict",
]
__version__ = "0.1.0"
