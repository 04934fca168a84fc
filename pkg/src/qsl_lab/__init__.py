"""Exact system-reservoir dynamics and quantum speed limit bounds on leakage and fidelity loss."""

from .bounds import (
    BoundSeries,
    ISResult,
    QSLTimes,
    Thresholds,
    induced_splitting,
    infidelity_bound,
    leakage_bound,
    modified_hamiltonian_bound,
    omega,
    optimize_shift,
    qsl_times,
    resonance_tau_bound,
    shifted_bound_family,
    tau_fid_lower,
    tau_leak_lower,
    universal_bound,
)
from .dynamics import TimeGrid, Trajectory, fidelity_series, ideal_trajectory, leakage_series, propagate
from .models import (
    Constant,
    ModelSpec,
    Ramp,
    ResonanceParams,
    Schedule,
    Sinusoid,
    SpectralSector,
    constant_model,
    resonance_model,
    resonance_sector,
    rotating_frame_shift,
    sector_analysis,
)
from .operators import ProductSpace

__version__ = "0.1.0"

__all__ = [
    "BoundSeries",
    "Constant",
    "ISResult",
    "ModelSpec",
    "ProductSpace",
    "QSLTimes",
    "Ramp",
    "ResonanceParams",
    "Schedule",
    "Sinusoid",
    "SpectralSector",
    "Thresholds",
    "TimeGrid",
    "Trajectory",
    "constant_model",
    "fidelity_series",
    "ideal_trajectory",
    "induced_splitting",
    "infidelity_bound",
    "leakage_bound",
    "leakage_series",
    "modified_hamiltonian_bound",
    "omega",
    "optimize_shift",
    "propagate",
    "qsl_times",
    "resonance_model",
    "resonance_sector",
    "resonance_tau_bound",
    "rotating_frame_shift",
    "sector_analysis",
    "shifted_bound_family",
    "tau_fid_lower",
    "tau_leak_lower",
    "universal_bound",
]
