"""Closed-form segment marginal likelihoods under conjugate priors.

Every supported family integrates its segment parameter against a conjugate
prior, so the log marginal of a segment depends on the data only through a
handful of additive sufficient statistics: the segment length, the sum of
the values, the sum of squares (Gaussian families) and a data-only log
constant (the combinatorial or factorial part of count pmfs).

Locations follow the 1-based, half-open convention used throughout the
package: segment ``[i, j)`` holds points ``i, ..., j - 1`` and
``1 <= i < j <= n + 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import betaln, gammaln

_LOG_2PI = math.log(2.0 * math.pi)


class Family(str, Enum):
    NEGATIVE_BINOMIAL = "nb"
    POISSON = "poisson"
    GAUSSIAN_KNOWN_VARIANCE = "gauss-known-var"
    GAUSSIAN_HETEROSCEDASTIC = "gauss-hetero"

    @property
    def is_count(self) -> bool:
        return self in (Family.NEGATIVE_BINOMIAL, Family.POISSON)


@dataclass(frozen=True)
class BetaPrior:
    """Beta(alpha, beta) prior on the NB success probability."""

    alpha: float = 0.5
    beta: float = 0.5


@dataclass(frozen=True)
class GammaPrior:
    """Gamma(a, b) prior on the Poisson rate (shape a, rate b)."""

    a: float = 0.5
    b: float = 0.5


@dataclass(frozen=True)
class NormalPrior:
    """Normal(mu0, v0 * sigma2) prior on a Gaussian mean with known variance."""

    mu0: float = 0.0
    v0: float = 1.0


@dataclass(frozen=True)
class NormalInverseGammaPrior:
    """mu | s2 ~ Normal(mu0, v0 * s2), s2 ~ InvGamma(a0, b0)."""

    mu0: float = 0.0
    v0: float = 1.0
    a0: float = 0.5
    b0: float = 0.5


HyperParams = BetaPrior | GammaPrior | NormalPrior | NormalInverseGammaPrior

_PRIOR_FOR = {
    Family.NEGATIVE_BINOMIAL: BetaPrior,
    Family.POISSON: GammaPrior,
    Family.GAUSSIAN_KNOWN_VARIANCE: NormalPrior,
    Family.GAUSSIAN_HETEROSCEDASTIC: NormalInverseGammaPrior,
}


def _positive_fields(hyper) -> dict[str, float]:
    if isinstance(hyper, BetaPrior):
        return {"alpha": hyper.alpha, "beta": hyper.beta}
    if isinstance(hyper, GammaPrior):
        return {"a": hyper.a, "b": hyper.b}
    if isinstance(hyper, NormalPrior):
        return {"v0": hyper.v0}
    return {"v0": hyper.v0, "a0": hyper.a0, "b0": hyper.b0}


@dataclass(frozen=True)
class EmissionModel:
    """Emission family, its conjugate prior and the fixed nuisance parameter.

    Use the named constructors (:meth:`negative_binomial`, :meth:`poisson`,
    :meth:`gaussian`, :meth:`gaussian_hetero`) rather than the raw fields.
    """

    family: Family
    hyper: HyperParams
    phi: float | None = None
    sigma2: float | None = None

    def __post_init__(self):
        family = Family(self.family)
        object.__setattr__(self, "family", family)
        if not isinstance(self.hyper, _PRIOR_FOR[family]):
            raise ValueError(
                f"{family.value} needs a {_PRIOR_FOR[family].__name__} prior, "
                f"got {type(self.hyper).__name__}")
        for name, value in _positive_fields(self.hyper).items():
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"hyperparameter {name} must be positive, got {value}")
        if family is Family.NEGATIVE_BINOMIAL:
            if self.phi is None or not (self.phi > 0 and math.isfinite(self.phi)):
                raise ValueError(f"negative binomial needs a finite dispersion phi > 0, got {self.phi}")
        if family is Family.GAUSSIAN_KNOWN_VARIANCE:
            if self.sigma2 is None or not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
                raise ValueError(f"known-variance Gaussian needs sigma2 > 0, got {self.sigma2}")

    @classmethod
    def negative_binomial(cls, phi: float, alpha: float = 0.5, beta: float = 0.5):
        return cls(Family.NEGATIVE_BINOMIAL, BetaPrior(alpha, beta), phi=phi)

    @classmethod
    def poisson(cls, a: float = 0.5, b: float = 0.5):
        return cls(Family.POISSON, GammaPrior(a, b))

    @classmethod
    def gaussian(cls, sigma2: float, mu0: float = 0.0, v0: float = 1.0):
        return cls(Family.GAUSSIAN_KNOWN_VARIANCE, NormalPrior(mu0, v0), sigma2=sigma2)

    @classmethod
    def gaussian_hetero(cls, mu0: float = 0.0, v0: float = 1.0, a0: float = 0.5, b0: float = 0.5):
        return cls(Family.GAUSSIAN_HETEROSCEDASTIC, NormalInverseGammaPrior(mu0, v0, a0, b0))

    def describe(self) -> dict:
        """Plain-dict form used in reports."""
        out = {"family": self.family.value, "hyper": dict(vars(self.hyper))}
        if self.phi is not None:
            out["phi"] = self.phi
        if self.sigma2 is not None:
            out["sigma2"] = self.sigma2
        return out


@dataclass(frozen=True)
class CountSeries:
    """One observed profile. Values are counts or reals depending on the model."""

    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("a series must be one-dimensional")
        if values.size < 2:
            raise ValueError(f"a series needs at least 2 points, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise ValueError("series contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    @property
    def n(self) -> int:
        return self.values.size

    def check_counts(self) -> None:
        bad = np.flatnonzero((self.values < 0) | (self.values != np.round(self.values)))
        if bad.size:
            t = int(bad[0]) + 1
            raise ValueError(
                f"series {self.label!r}: value {self.values[bad[0]]!r} at position {t} "
                "is not a non-negative integer count")


@dataclass(frozen=True)
class PrefixStatistics:
    """Cumulative sufficient statistics of a series.

    Entry ``p`` (0-based) holds the statistics of the first ``p`` points, so the
    statistics of segment ``[i, j)`` are ``stat[j - 1] - stat[i - 1]``.
    """

    total: np.ndarray
    squares: np.ndarray
    log_const: np.ndarray
    model: EmissionModel = field(repr=False)

    @property
    def n(self) -> int:
        return self.total.size - 1

    def segment(self, i: int, j: int) -> tuple[int, float, float, float]:
        """(length, sum, sum of squares, log data constant) of ``[i, j)``."""
        _check_segment(i, j, self.n)
        a, b = i - 1, j - 1
        return (j - i, self.total[b] - self.total[a],
                self.squares[b] - self.squares[a],
                self.log_const[b] - self.log_const[a])


def _check_segment(i: int, j: int, n: int) -> None:
    if not (1 <= i < j <= n + 1):
        raise IndexError(f"segment [{i}, {j}) outside 1 <= i < j <= {n + 1}")


def point_log_const(y: np.ndarray, model: EmissionModel) -> np.ndarray:
    """Data-only part of the per-point log pmf: log C(y+phi-1, y) or -log y!."""
    y = np.asarray(y, dtype=float)
    if model.family is Family.NEGATIVE_BINOMIAL:
        phi = model.phi
        return gammaln(y + phi) - gammaln(phi) - gammaln(y + 1.0)
    if model.family is Family.POISSON:
        return -gammaln(y + 1.0)
    return np.zeros_like(y)


def cumulative_statistics(series: CountSeries, model: EmissionModel) -> PrefixStatistics:
    if model.family.is_count:
        series.check_counts()
    y = series.values
    zero = np.zeros(1)
    total = np.concatenate([zero, np.cumsum(y)])
    squares = np.concatenate([zero, np.cumsum(y * y)])
    log_const = np.concatenate([zero, np.cumsum(point_log_const(y, model))])
    for arr in (total, squares, log_const):
        arr.setflags(write=False)
    return PrefixStatistics(total, squares, log_const, model)


def log_marginal_from_stats(model: EmissionModel, length, total, squares, log_const):
    """Log marginal likelihood of segments given their sufficient statistics.

    Broadcasts over array arguments; this is the single formula used both for
    individual segments and for the full segment matrix.
    """
    m = np.asarray(length, dtype=float)
    s = np.asarray(total, dtype=float)
    h = model.hyper
    if model.family is Family.NEGATIVE_BINOMIAL:
        return log_const + betaln(h.alpha + m * model.phi, h.beta + s) - betaln(h.alpha, h.beta)
    if model.family is Family.POISSON:
        return (log_const + h.a * math.log(h.b) - gammaln(h.a)
                + gammaln(h.a + s) - (h.a + s) * np.log(h.b + m))
    centred = squares - 2.0 * h.mu0 * s + m * h.mu0 ** 2
    kappa0 = 1.0 / h.v0
    shrink = (s - m * h.mu0) ** 2 / (kappa0 + m)
    if model.family is Family.GAUSSIAN_KNOWN_VARIANCE:
        sigma2 = model.sigma2
        return (-0.5 * m * (_LOG_2PI + math.log(sigma2))
                - 0.5 * np.log1p(m * h.v0)
                - 0.5 * (centred - shrink) / sigma2)
    a_n = h.a0 + 0.5 * m
    b_n = h.b0 + 0.5 * np.maximum(centred - shrink, 0.0)
    return (gammaln(a_n) - math.lgamma(h.a0) + h.a0 * math.log(h.b0) - a_n * np.log(b_n)
            - 0.5 * np.log1p(m * h.v0) - 0.5 * m * _LOG_2PI)


def log_segment_marginal(series: CountSeries, i: int, j: int, model: EmissionModel,
                         stats: PrefixStatistics | None = None) -> float:
    """log P(Y_[i,j)) with the segment parameter integrated out.

    Pass ``stats`` from :func:`cumulative_statistics` to make repeated calls O(1).
    """
    if stats is None:
        _check_segment(i, j, series.n)
        stats = cumulative_statistics(series, model)
    length, total, squares, log_const = stats.segment(i, j)
    return float(log_marginal_from_stats(model, length, total, squares, log_const))


def log_pmf(y, theta: float, model: EmissionModel) -> np.ndarray:
    """Per-point log pmf/pdf at a fixed segment parameter.

    ``theta`` is p for NB, the rate for Poisson and the mean for the
    known-variance Gaussian.
    """
    y = np.asarray(y, dtype=float)
    if model.family is Family.NEGATIVE_BINOMIAL:
        return point_log_const(y, model) + model.phi * math.log(theta) + y * math.log1p(-theta)
    if model.family is Family.POISSON:
        return point_log_const(y, model) + y * math.log(theta) - theta
    if model.family is Family.GAUSSIAN_KNOWN_VARIANCE:
        return -0.5 * (_LOG_2PI + math.log(model.sigma2)) - 0.5 * (y - theta) ** 2 / model.sigma2
    raise ValueError("log_pmf needs a single-parameter family")
