"""Relational event models with global covariates.

Global (dyad-independent) effects cancel from an ordinary partial likelihood.
Shifting every dyad's events by an independent random delay makes risk-set
members sit at different real times, so those effects become estimable by a
nested case-control partial likelihood, fitted here as a degenerate logistic
additive model.
"""

__version__ = "0.1.0"

from .design import TermSpec, assemble_difference_design, build_basis
from .events import ALL_PAIRS, NO_SELF_LOOPS, CovariateCatalog, EventSequence, IntensitySpec, RiskPolicy
from .fitter import FitResult, fit_degenerate_logistic, firth_adjust, predict_smooth, select_smoothing
from .timeshift import draw_shifts, draw_shifts_for, sample_case_control, shift_process

__all__ = [
    "ALL_PAIRS", "NO_SELF_LOOPS", "CovariateCatalog", "EventSequence", "FitResult", "IntensitySpec",
    "RiskPolicy", "TermSpec", "assemble_difference_design", "build_basis", "draw_shifts",
    "draw_shifts_for", "fit_degenerate_logistic", "firth_adjust", "predict_smooth",
    "sample_case_control", "select_smoothing", "shift_process",
]
