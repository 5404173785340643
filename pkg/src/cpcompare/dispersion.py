"""Sliding-window method-of-moments estimate of the NB dispersion."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .emission import CountSeries


class DispersionError(ValueError):
    """The series carries no information about overdispersion."""


@dataclass(frozen=True)
class DispersionEstimate:
    """Result of :func:`estimate_dispersion`.

    When ``fallback_applied`` is set the window outgrew the series before the
    median turned positive. ``phi_hat`` is then ``inf``: the data look no more
    dispersed than Poisson, and the Poisson model should be used instead.
    """

    phi_hat: float
    window_used: int
    windows_evaluated: int
    fallback_applied: bool = False

    @property
    def recommend_poisson(self) -> bool:
        return self.fallback_applied


def window_estimates(values: np.ndarray, window: int) -> np.ndarray:
    """mean^2 / (var - mean) for every window position; nan where var == mean."""
    views = sliding_window_view(np.asarray(values, dtype=float), window)
    mean = views.mean(axis=1)
    var = views.var(axis=1, ddof=1)
    excess = var - mean
    with np.errstate(divide="ignore", invalid="ignore"):
        est = np.where(excess != 0.0, mean * mean / excess, np.nan)
    return est


def estimate_dispersion(series: CountSeries, initial_window: int = 15) -> DispersionEstimate:
    """Median of per-window moment estimates, doubling the window while it is <= 0.

    Windows where the sample variance equals the sample mean have no defined
    estimate and are left out of the median; negative estimates stay in.
    """
    series.check_counts()
    y = series.values
    n = y.size
    if initial_window < 2:
        raise ValueError(f"window must hold at least 2 points, got {initial_window}")
    if n < initial_window:
        raise DispersionError(f"series of length {n} is shorter than the window {initial_window}")
    if np.ptp(y) == 0:
        raise DispersionError("constant series: no overdispersion to estimate, use the Poisson model")

    window = initial_window
    last = window
    while window <= n:
        est = window_estimates(y, window)
        defined = est[~np.isnan(est)]
        median = float(np.median(defined)) if defined.size else math.nan
        last = window
        if median > 0:
            return DispersionEstimate(median, window, n - window + 1)
        window *= 2
    return DispersionEstimate(math.inf, last, n - last + 1, fallback_applied=True)
