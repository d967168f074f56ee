"""Simulation and analysis of three-mode optomechanical back-action-evading force sensing."""

from .model import (
    DerivedCouplings, ParameterError, SignalPulse, SystemParams,
    detuning_kernel, pump_parameter, thermal_occupancy, xi_factor,
)
from .freq_solver import QuadratureState, TransferMatrix, output_psd, transfer_matrix
from .estimator import CombinationWeights, Sector, bae_weights, force_referred_psd

__version__ = "0.1.0"

__all__ = [
    "CombinationWeights", "DerivedCouplings", "ParameterError", "QuadratureState", "Sector",
    "SignalPulse", "SystemParams", "TransferMatrix", "bae_weights", "detuning_kernel",
    "force_referred_psd", "output_psd", "pump_parameter", "thermal_occupancy",
    "transfer_matrix", "xi_factor", "__version__",
]
