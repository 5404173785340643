"""Exact Bayesian change-point posteriors and cross-series comparison.

Locations are 1-based: a change-point ``t`` is the first index of the new
segment, and a K-segment partition runs ``1 = tau_0 < ... < tau_K = n + 1``.
"""
from .comparison import (CommonChangePointQuery, ComparisonResult, DegenerateEventError,
                         InconsistentEvidenceError, ShiftDistribution, log_q0_prior,
                         posterior_common, q0_prior, shift_credible_interval, shift_posterior)
from .dispersion import DispersionError, DispersionEstimate, estimate_dispersion
from .emission import CountSeries, EmissionModel, Family, log_segment_marginal
from .segmentation import (ChangePointPosterior, CredibleInterval, PowerTables,
                           build_segment_matrix, changepoint_posterior, credible_interval,
                           log_evidence, power_tables, segment)

__version__ = "0.1.0"

__all__ = [
    "ChangePointPosterior", "CommonChangePointQuery", "ComparisonResult", "CountSeries",
    "CredibleInterval", "DegenerateEventError", "DispersionError", "DispersionEstimate",
    "EmissionModel", "Family", "InconsistentEvidenceError", "PowerTables", "ShiftDistribution",
    "build_segment_matrix", "changepoint_posterior", "credible_interval", "estimate_dispersion",
    "log_evidence", "log_q0_prior", "log_segment_marginal", "posterior_common", "power_tables",
    "q0_prior", "segment", "shift_credible_interval", "shift_posterior",
]
