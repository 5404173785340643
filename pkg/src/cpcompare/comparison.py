"""Comparing designated change-points across independent series.

Two tools: the posterior of the shift between two change-points (a discrete
cross-correlation of their posteriors), and the posterior probability that
the designated change-points of I >= 2 series share one location.

The common-location posterior is obtained from a surrogate model in which
all partitions are drawn uniformly and independently; under it the joint
probability of the data and the event "all designated change-points
coincide" is a single sum over locations of products of the per-series
forward and backward tables. A change of measure then moves from the
surrogate prior probability of the event (``q0``) to the user's ``p0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .segmentation import (ChangePointPosterior, CredibleInterval, PowerTables,
                           log_evidence, minimal_window)

# slack allowed on Q(Y, E0) <= Q(Y) before calling it an internal error
_JOINT_EXCESS_TOL = 1e-9


class DegenerateEventError(ArithmeticError):
    """The common change-point event is impossible or certain a priori."""


class InconsistentEvidenceError(ArithmeticError):
    """Q(Y, E0 | K) came out larger than Q(Y | K)."""


@dataclass(frozen=True)
class ShiftDistribution:
    """Posterior of ``tau^1_{k1} - tau^2_{k2}`` on ``-(n-1)..(n-1)``."""

    k1: int
    k2: int
    n: int
    probs: np.ndarray = field(repr=False)

    @property
    def support(self) -> np.ndarray:
        return np.arange(-(self.n - 1), self.n)

    def prob(self, d: int) -> float:
        idx = d + self.n - 1
        return float(self.probs[idx]) if 0 <= idx < self.probs.size else 0.0

    def sparse(self) -> dict[int, float]:
        return {int(d): float(p) for d, p in zip(self.support, self.probs) if p > 0.0}


def shift_posterior(p1: ChangePointPosterior, p2: ChangePointPosterior) -> ShiftDistribution:
    """delta(d) = sum_t p1(t) p2(t - d).

    Each term is summed with ``math.fsum`` so the result is correctly rounded
    and swapping the series mirrors the distribution exactly.
    """
    if p1.n != p2.n:
        raise ValueError(f"series lengths differ: {p1.n} vs {p2.n}")
    n = p1.n
    a, b = p1.probs, p2.probs
    size = a.size
    probs = np.zeros(2 * n - 1)
    for idx, d in enumerate(range(-(n - 1), n)):
        if d >= 0:
            terms = a[d:] * b[:size - d]
        else:
            terms = a[:size + d] * b[-d:]
        probs[idx] = math.fsum(terms)
    probs.setflags(write=False)
    return ShiftDistribution(p1.k, p2.k, n, probs)


@dataclass(frozen=True)
class ShiftCredibleInterval(CredibleInterval):
    contains_zero: bool = False

    def as_dict(self) -> dict:
        out = super().as_dict()
        out["contains_zero"] = self.contains_zero
        return out


def shift_credible_interval(delta: ShiftDistribution, level: float = 0.95) -> ShiftCredibleInterval:
    ci = minimal_window(delta.support, delta.probs, level)
    return ShiftCredibleInterval(ci.level, ci.lo, ci.hi, ci.attained_mass,
                                 contains_zero=ci.lo <= 0 <= ci.hi)


def _log_comb(n, k):
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    ok = (k >= 0) & (n >= k)
    with np.errstate(invalid="ignore"):
        out = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    return np.where(ok, out, -np.inf)


def _check_specs(n: int, specs: Sequence[tuple[int, int]]) -> None:
    if not specs:
        raise ValueError("need at least one (K, k) pair")
    for K, k in specs:
        if not 1 <= K <= n:
            raise ValueError(f"segment count K={K} outside 1..{n}")
        if not 1 <= k <= K - 1:
            raise ValueError(f"change-point index k={k} outside 1..{K - 1}")


def log_q0_prior(n: int, specs: Sequence[tuple[int, int]]) -> float:
    """log of the surrogate prior probability that all change-points coincide."""
    _check_specs(n, specs)
    if len(specs) == 1:
        # a lone change-point always coincides with itself
        return 0.0
    t = np.arange(2, n + 1)
    total = np.zeros(t.size)
    for K, k in specs:
        total += (_log_comb(t - 2, k - 1) + _log_comb(n - t, K - k - 1)
                  - _log_comb(n - 1, K - 1))
    return float(logsumexp(total))


def q0_prior(n: int, specs: Sequence[tuple[int, int]]) -> float:
    return math.exp(log_q0_prior(n, specs))


def _check_tables(tables: Sequence[PowerTables], specs: Sequence[tuple[int, int]]) -> int:
    if len(tables) != len(specs):
        raise ValueError(f"{len(tables)} tables for {len(specs)} (K, k) specs")
    n = tables[0].n
    for tab, (K, _) in zip(tables, specs):
        if tab.n != n:
            raise ValueError(f"series lengths differ: {n} vs {tab.n}")
        if tab.K != K:
            raise ValueError(f"tables built with K={tab.K} but spec asks K={K}")
    _check_specs(n, specs)
    return n


def log_joint_E0(tables: Sequence[PowerTables], specs: Sequence[tuple[int, int]]) -> float:
    """log sum_t prod_l [A_l^{k_l}]_{1,t} [A_l^{K_l-k_l}]_{t,n+1}.

    Same scale as the sum of the per-series :func:`log_evidence` values, so
    their difference is the surrogate posterior log-probability of the event.
    """
    _check_tables(tables, specs)
    total = sum(tab.forward[k] + tab.backward[K - k] for tab, (K, k) in zip(tables, specs))
    return float(logsumexp(total))


@dataclass(frozen=True)
class CommonChangePointQuery:
    n: int
    specs: tuple[tuple[int, int], ...]
    p0: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple((int(K), int(k)) for K, k in self.specs))
        if len(self.specs) < 2:
            raise ValueError("comparing change-points needs at least two series")
        if not 0.0 < self.p0 < 1.0:
            raise ValueError(f"p0 must lie in (0, 1), got {self.p0}")
        _check_specs(self.n, self.specs)


@dataclass(frozen=True)
class ComparisonResult:
    posterior_E0: float
    bayes_factor: float
    log_bayes_factor: float
    p0: float
    q0: float
    log_Q_joint: float
    log_Q_marg: float

    def as_dict(self) -> dict:
        return dict(vars(self))


def _log1mexp(x: float) -> float:
    """log(1 - exp(x)) for x <= 0."""
    if x == 0.0:
        return -math.inf
    if x > -math.log(2.0):
        return math.log(-math.expm1(x))
    return math.log1p(-math.exp(x))


def posterior_common(query: CommonChangePointQuery,
                     tables: Sequence[PowerTables]) -> ComparisonResult:
    if _check_tables(tables, query.specs) != query.n:
        raise ValueError(f"tables are for length {tables[0].n}, query says {query.n}")
    log_q0 = log_q0_prior(query.n, query.specs)
    q0 = math.exp(log_q0)
    if log_q0 == -math.inf or q0 >= 1.0:
        raise DegenerateEventError(
            f"prior probability of a common change-point is {q0}; nothing to compare")
    log_1mq0 = _log1mexp(log_q0)

    log_joint = log_joint_E0(tables, query.specs)
    log_marg = sum(log_evidence(tab) for tab in tables)
    log_ratio = log_joint - log_marg
    if log_ratio > _JOINT_EXCESS_TOL:
        raise InconsistentEvidenceError(
            f"Q(Y, E0) exceeds Q(Y) by a factor exp({log_ratio:.3g})")
    log_ratio = min(log_ratio, 0.0)
    log_rest = _log1mexp(log_ratio)

    p0 = query.p0
    log_e0 = math.log(p0) - log_q0 + log_ratio
    log_e1 = math.log1p(-p0) - log_1mq0 + log_rest
    if log_e1 == -math.inf:
        posterior = 1.0
    elif log_e0 == -math.inf:
        posterior = 0.0
    else:
        posterior = 1.0 / (1.0 + math.exp(log_e1 - log_e0))

    log_bf = log_1mq0 - log_q0 + log_ratio - log_rest
    bf = math.exp(log_bf) if log_bf < 709.0 else math.inf
    return ComparisonResult(posterior, bf, log_bf, p0, q0, log_joint, log_marg)
