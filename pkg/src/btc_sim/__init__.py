"""Simulation toolkit for a driven-dissipative spin-1 chain with long-range
interactions, centered on its boundary-time-crystal phase.

Backends: mean-field dynamics (meanfield), exact permutation-symmetric
Liouvillian analysis (permsym), second-order cumulant expansion (cumulant),
and quantum-jump trajectories (trajectory), all sharing the model definitions
in model and cross-validated against its dense oracle.
"""

__version__ = "0.1.0"

from .model import ModelParams, ModelError, build_local_operators, \
    resolve_interactions
from .meanfield import MeanFieldState, integrate, detect_limit_cycle, \
    find_fixed_points, classify_phase, scan_phase_diagram
from .permsym import build_sym_liouvillian, steady_state, low_spectrum, \
    gather_spectrum, two_time_correlation, fluctuations, fit_gap_scaling, \
    fit_damped_cosine, meanfield_frequency
from .cumulant import cme_integrate, all_ground, run_lifetime, \
    settle_and_measure, compare_interaction_tails, fit_scaling_collapse
from .trajectory import run_ensemble, fourier_spectrum, fit_exponential_sum

__all__ = [
    "__version__",
    "ModelParams", "ModelError", "build_local_operators",
    "resolve_interactions",
    "MeanFieldState", "integrate", "detect_limit_cycle",
    "find_fixed_points", "classify_phase", "scan_phase_diagram",
    "build_sym_liouvillian", "steady_state", "low_spectrum",
    "gather_spectrum", "two_time_correlation", "fluctuations",
    "fit_gap_scaling", "fit_damped_cosine", "meanfield_frequency",
    "cme_integrate", "all_ground", "run_lifetime", "settle_and_measure",
    "compare_interaction_tails", "fit_scaling_collapse",
    "run_ensemble", "fourier_spectrum", "fit_exponential_sum",
]
