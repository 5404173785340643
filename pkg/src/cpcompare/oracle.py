"""Brute-force references by exhaustive partition enumeration.

Everything here is a literal sum over partitions (or tuples of partitions)
and shares nothing with the dynamic program except the per-segment
marginals. Only usable on small series.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import comb, logsumexp

from .emission import CountSeries, EmissionModel, cumulative_statistics, log_segment_marginal

ENUMERATION_CAP = 10**6


def _check_cap(count: int) -> None:
    if count > ENUMERATION_CAP:
        raise OverflowError(f"{count} partitions exceed the enumeration cap {ENUMERATION_CAP}")


def enumerate_partitions(n: int, K: int) -> list[tuple[int, ...]]:
    """All ``(1, tau_1, ..., tau_{K-1}, n+1)`` with strictly increasing entries."""
    if not 1 <= K <= n:
        raise ValueError(f"need 1 <= K <= n, got K={K}, n={n}")
    _check_cap(comb(n - 1, K - 1, exact=True))
    return [(1, *inner, n + 1) for inner in itertools.combinations(range(2, n + 1), K - 1)]


def partition_log_likelihoods(series: CountSeries, model: EmissionModel, K: int):
    """Partitions and ``sum_J log P(Y_J)`` for each of them."""
    stats = cumulative_statistics(series, model)
    parts = enumerate_partitions(series.n, K)
    cache: dict[tuple[int, int], float] = {}
    logliks = np.empty(len(parts))
    for idx, m in enumerate(parts):
        total = 0.0
        for i, j in zip(m[:-1], m[1:]):
            if (i, j) not in cache:
                cache[(i, j)] = log_segment_marginal(series, i, j, model, stats)
            total += cache[(i, j)]
        logliks[idx] = total
    return parts, logliks


def brute_evidence(series: CountSeries, model: EmissionModel, K: int) -> float:
    """log P(Y | K) under the uniform partition prior."""
    parts, logliks = partition_log_likelihoods(series, model, K)
    return float(logsumexp(logliks) - math.log(len(parts)))


def brute_changepoint_posterior(series: CountSeries, model: EmissionModel,
                                K: int, k: int) -> np.ndarray:
    """Dense posterior of tau_k over positions ``1..n+1``."""
    if not 1 <= k <= K - 1:
        raise ValueError(f"k={k} outside 1..{K - 1}")
    parts, logliks = partition_log_likelihoods(series, model, K)
    norm = logsumexp(logliks)
    probs = np.zeros(series.n + 1)
    taus = np.array([m[k] for m in parts])
    for t in np.unique(taus):
        probs[t - 1] = math.exp(logsumexp(logliks[taus == t]) - norm)
    return probs


def brute_shift_posterior(series1: CountSeries, series2: CountSeries,
                          model1: EmissionModel, model2: EmissionModel,
                          K1: int, k1: int, K2: int, k2: int) -> dict[int, float]:
    """P(tau^1_{k1} - tau^2_{k2} = d) by enumerating partition pairs."""
    parts1, ll1 = partition_log_likelihoods(series1, model1, K1)
    parts2, ll2 = partition_log_likelihoods(series2, model2, K2)
    _check_cap(len(parts1) * len(parts2))
    joint = ll1[:, None] + ll2[None, :]
    diff = np.array([m[k1] for m in parts1])[:, None] - np.array([m[k2] for m in parts2])[None, :]
    norm = logsumexp(joint)
    return {int(d): math.exp(logsumexp(joint[diff == d]) - norm) for d in np.unique(diff)}


@dataclass(frozen=True)
class BruteComparison:
    posterior_E0: float
    bayes_factor: float
    q0: float
    log_sum_E0: float
    log_sum_all: float


def brute_common_posterior(series: Sequence[CountSeries],
                           models: EmissionModel | Sequence[EmissionModel],
                           specs: Sequence[tuple[int, int]], p0: float) -> BruteComparison:
    """Posterior of a common change-point under the hierarchical model, literally.

    Partition tuples are split into those where all designated change-points
    coincide (E0) and the rest (E1); within each event the tuples are equally
    likely a priori, and the event itself has prior ``p0``.
    """
    if isinstance(models, EmissionModel):
        models = [models] * len(series)
    logliks, taus = [], []
    size = 1
    for ser, model, (K, k) in zip(series, models, specs):
        parts, ll = partition_log_likelihoods(ser, model, K)
        logliks.append(ll)
        taus.append(np.array([m[k] for m in parts]))
        size *= len(parts)
    _check_cap(size)

    dims = len(series)
    joint = np.zeros([1] * dims)
    first_tau = None
    same = np.ones([1] * dims, dtype=bool)
    for axis, (ll, tau) in enumerate(zip(logliks, taus)):
        shape = [1] * dims
        shape[axis] = ll.size
        joint = joint + ll.reshape(shape)
        tau = tau.reshape(shape)
        if first_tau is None:
            first_tau = tau
        else:
            same = same & (tau == first_tau)
    same = np.broadcast_to(same, joint.shape)

    n_e0 = int(same.sum())
    n_all = joint.size
    n_e1 = n_all - n_e0
    log_sum_e0 = float(logsumexp(joint[same])) if n_e0 else -math.inf
    log_sum_e1 = float(logsumexp(joint[~same])) if n_e1 else -math.inf
    log_sum_all = float(logsumexp(joint))

    log_mean_e0 = log_sum_e0 - math.log(n_e0) if n_e0 else -math.inf
    log_mean_e1 = log_sum_e1 - math.log(n_e1) if n_e1 else -math.inf
    log_y_e0 = math.log(p0) + log_mean_e0
    log_y_e1 = math.log1p(-p0) + log_mean_e1
    posterior = math.exp(log_y_e0 - np.logaddexp(log_y_e0, log_y_e1))
    log_bf = log_mean_e0 - log_mean_e1
    return BruteComparison(posterior, math.exp(log_bf) if log_bf < 709 else math.inf,
                           n_e0 / n_all, log_sum_e0, log_sum_all)
