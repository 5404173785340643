"""Exact posterior inference over segmentations with a fixed number of segments.

The segment matrix holds ``log P(Y_[i,j))`` for every segment of the series.
Sums over all partitions are powers of that matrix: ``[A^k]_{1,t}`` sums the
probabilities of every way to cover ``[1, t)`` with ``k`` segments and
``[A^k]_{t,n+1}`` does the same for ``[t, n+1)``. Only the first row of the
forward powers and the last column of the backward powers are ever needed,
so the tables cost O(K n) memory and O(K n^2) time.

Array convention: position ``t`` (1-based, ``1 <= t <= n + 1``) lives at
index ``t - 1``.  A change-point ``tau_k = t`` means segment ``k + 1`` starts
at point ``t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.special import betaln, gammaln

from .emission import (CountSeries, EmissionModel, Family, cumulative_statistics,
                       log_marginal_from_stats)


def log_num_partitions(n: int, K: int) -> float:
    """log C(n-1, K-1), the size of the uniform partition prior's support."""
    if not 1 <= K <= n:
        raise ValueError(f"need 1 <= K <= n, got K={K}, n={n}")
    return float(gammaln(n) - gammaln(K) - gammaln(n - K + 1))


@dataclass(frozen=True)
class SegmentMatrix:
    """Strict upper-triangular table of segment log marginals.

    ``logA[i - 1, j - 1]`` is ``log P(Y_[i,j))`` for ``1 <= i < j <= n + 1``;
    every other entry is ``-inf``.
    """

    n: int
    logA: np.ndarray = field(repr=False)
    model: EmissionModel

    def entry(self, i: int, j: int) -> float:
        if not (1 <= i < j <= self.n + 1):
            raise IndexError(f"segment [{i}, {j}) outside 1 <= i < j <= {self.n + 1}")
        return float(self.logA[i - 1, j - 1])


# largest integer total for which lgamma tables beat direct evaluation
_TABLE_CAP = 5_000_000


def _lgamma_table(offset: float, upper: int) -> np.ndarray:
    return gammaln(offset + np.arange(upper + 1))


def _triangle(stats, model: EmissionModel, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Log marginals of segments [i+1, j+1) for 0-based boundary arrays i < j.

    Count families use lookup tables over the integer segment sums; the result
    equals :func:`log_marginal_from_stats` up to rounding.
    """
    length = j - i
    total = stats.total[j] - stats.total[i]
    log_const = stats.log_const[j] - stats.log_const[i]
    n = stats.n
    grand = stats.total[-1]
    if model.family.is_count and grand <= _TABLE_CAP:
        sums = total.astype(np.int64)
        h = model.hyper
        if model.family is Family.NEGATIVE_BINOMIAL:
            phi = model.phi
            by_len = gammaln(h.alpha + phi * np.arange(n + 1))
            by_sum = _lgamma_table(h.beta, int(grand))
            return (log_const + by_len[length] + by_sum[sums]
                    - gammaln(h.alpha + h.beta + phi * length + total)
                    - betaln(h.alpha, h.beta))
        by_sum = _lgamma_table(h.a, int(grand))
        log_rate = np.log(h.b + np.arange(n + 1))
        return (log_const + h.a * math.log(h.b) - math.lgamma(h.a)
                + by_sum[sums] - (h.a + total) * log_rate[length])
    squares = stats.squares[j] - stats.squares[i]
    return log_marginal_from_stats(model, length, total, squares, log_const)


def build_segment_matrix(series: CountSeries, model: EmissionModel) -> SegmentMatrix:
    stats = cumulative_statistics(series, model)
    n = series.n
    i, j = np.triu_indices(n + 1, k=1)
    logA = np.full((n + 1, n + 1), -np.inf)
    logA[i, j] = _triangle(stats, model, i, j)
    if not np.all(np.isfinite(logA[i, j])):
        raise FloatingPointError("non-finite segment marginal; check the series scale and model")
    logA.setflags(write=False)
    return SegmentMatrix(n, logA, model)


@njit(cache=True)
def _forward_rows(logA, K):
    n1 = logA.shape[0]
    F = np.full((K + 1, n1), -np.inf)
    F[0, 0] = 0.0
    # streaming log-sum-exp per column: running max and rescaled sum
    peak = np.empty(n1)
    acc = np.empty(n1)
    for k in range(1, K + 1):
        peak[:] = -np.inf
        acc[:] = 0.0
        for s in range(k - 1, n1 - 1):
            base = F[k - 1, s]
            if base == -np.inf:
                continue
            for t in range(s + 1, n1):
                v = base + logA[s, t]
                if v > peak[t]:
                    acc[t] = acc[t] * math.exp(peak[t] - v) + 1.0
                    peak[t] = v
                else:
                    acc[t] += math.exp(v - peak[t])
        for t in range(n1):
            if acc[t] > 0.0:
                F[k, t] = peak[t] + math.log(acc[t])
    return F


@njit(cache=True)
def _backward_cols(logA, K):
    n1 = logA.shape[0]
    B = np.full((K + 1, n1), -np.inf)
    B[0, n1 - 1] = 0.0
    for j in range(1, K + 1):
        for s in range(n1 - 1 - j, -1, -1):
            peak = -np.inf
            acc = 0.0
            for t in range(s + 1, n1):
                tail = B[j - 1, t]
                if tail == -np.inf:
                    continue
                v = logA[s, t] + tail
                if v > peak:
                    acc = acc * math.exp(peak - v) + 1.0
                    peak = v
                else:
                    acc += math.exp(v - peak)
            if acc > 0.0:
                B[j, s] = peak + math.log(acc)
    return B


@dataclass(frozen=True)
class PowerTables:
    """Log first-row and last-column powers of the segment matrix.

    ``forward[k, t - 1] = log [A^k]_{1,t}`` and
    ``backward[j, t - 1] = log [A^j]_{t,n+1}``, for ``0 <= k, j <= K``
    (row 0 is the identity power).
    """

    K: int
    n: int
    forward: np.ndarray = field(repr=False)
    backward: np.ndarray = field(repr=False)

    @property
    def log_num_partitions(self) -> float:
        return log_num_partitions(self.n, self.K)

    def F(self, k: int, t: int) -> float:
        return float(self.forward[k, t - 1])

    def B(self, j: int, t: int) -> float:
        return float(self.backward[j, t - 1])


def power_tables(A: SegmentMatrix, K: int) -> PowerTables:
    if not 1 <= K <= A.n:
        raise ValueError(f"need 1 <= K <= n={A.n}, got K={K}")
    logA = np.ascontiguousarray(A.logA)
    forward = _forward_rows(logA, K)
    backward = _backward_cols(logA, K)
    forward.setflags(write=False)
    backward.setflags(write=False)
    return PowerTables(K, A.n, forward, backward)


def segment(series: CountSeries, model: EmissionModel, K: int) -> PowerTables:
    """Shortcut: segment matrix then power tables."""
    return power_tables(build_segment_matrix(series, model), K)


def log_evidence(tables: PowerTables) -> float:
    """``log sum_m prod_J P(Y_J)`` over all K-segment partitions.

    The uniform partition prior contributes the constant
    ``-tables.log_num_partitions``; ``log P(Y | K)`` is the difference.
    """
    return float(tables.forward[tables.K, tables.n])


@dataclass(frozen=True)
class ChangePointPosterior:
    """Posterior of the k-th change-point over locations ``1..n+1``."""

    k: int
    K: int
    probs: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.probs.size - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(1, self.n + 2)

    def prob(self, t: int) -> float:
        return float(self.probs[t - 1]) if 1 <= t <= self.n + 1 else 0.0

    def mode(self) -> int:
        return int(np.argmax(self.probs)) + 1

    def sparse(self) -> dict[int, float]:
        return {int(t) + 1: float(p) for t, p in enumerate(self.probs) if p > 0.0}


def changepoint_posterior(tables: PowerTables, k: int) -> ChangePointPosterior:
    K = tables.K
    if not 1 <= k <= K - 1:
        raise ValueError(f"change-point index k={k} outside 1..{K - 1}")
    logp = tables.forward[k] + tables.backward[K - k] - log_evidence(tables)
    probs = np.exp(logp)
    probs /= math.fsum(probs)
    probs.setflags(write=False)
    return ChangePointPosterior(k, K, probs)


@dataclass(frozen=True)
class CredibleInterval:
    level: float
    lo: int
    hi: int
    attained_mass: float

    def contains(self, x) -> bool:
        return self.lo <= x <= self.hi

    def as_dict(self) -> dict:
        return {"level": self.level, "lo": self.lo, "hi": self.hi,
                "attained_mass": self.attained_mass}


def minimal_window(support: np.ndarray, probs: np.ndarray, level: float) -> CredibleInterval:
    """Narrowest contiguous run of ``support`` holding at least ``level`` mass.

    Ties go to the window with the smaller lower end.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    nz = np.flatnonzero(probs > 0)
    first, last = int(nz[0]), int(nz[-1])
    p = np.asarray(probs[first:last + 1], dtype=float)
    cum = np.concatenate([[0.0], np.cumsum(p)])
    for width in range(1, p.size + 1):
        mass = cum[width:] - cum[:-width]
        hits = np.flatnonzero(mass >= level)
        if hits.size:
            lo = int(hits[0])
            return CredibleInterval(level, int(support[first + lo]),
                                    int(support[first + lo + width - 1]),
                                    float(mass[lo]))
    # rounding left the full support a hair below level
    return CredibleInterval(level, int(support[first]), int(support[last]), float(cum[-1]))


def credible_interval(post: ChangePointPosterior, level: float = 0.95) -> CredibleInterval:
    return minimal_window(post.support, post.probs, level)
