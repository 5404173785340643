import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpcompare.comparison import (CommonChangePointQuery, DegenerateEventError, log_joint_E0,
                                  log_q0_prior, posterior_common, q0_prior,
                                  shift_credible_interval, shift_posterior)
from cpcompare.emission import CountSeries, EmissionModel
from cpcompare.oracle import brute_common_posterior, brute_shift_posterior
from cpcompare.segmentation import (ChangePointPosterior, changepoint_posterior, log_evidence,
                                    segment)

from conftest import random_series


def point_mass(n, t):
    probs = np.zeros(n + 1)
    probs[t - 1] = 1.0
    return ChangePointPosterior(1, 2, probs)


def uniform_on(n, ts):
    probs = np.zeros(n + 1)
    probs[np.array(ts) - 1] = 1.0 / len(ts)
    return ChangePointPosterior(1, 2, probs)


def test_identical_point_masses():
    delta = shift_posterior(point_mass(10, 5), point_mass(10, 5))
    assert delta.sparse() == {0: 1.0}


def test_constant_shift():
    assert shift_posterior(point_mass(10, 7), point_mass(10, 4)).sparse() == {3: 1.0}


def test_two_by_two_uniform():
    delta = shift_posterior(uniform_on(10, [4, 5]), uniform_on(10, [4, 5]))
    assert delta.sparse() == {-1: 0.25, 0: 0.5, 1: 0.25}


def test_shift_support_and_mismatch():
    delta = shift_posterior(point_mass(6, 2), point_mass(6, 7))
    assert delta.support[0] == -5 and delta.support[-1] == 5
    assert delta.prob(-5) == 1.0 and delta.prob(40) == 0.0
    with pytest.raises(ValueError):
        shift_posterior(point_mass(6, 2), point_mass(7, 2))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 20), min_size=4, max_size=14), st.data())
def test_shift_antisymmetry(values, data):
    n = len(values)
    other = data.draw(st.lists(st.integers(0, 20), min_size=n, max_size=n))
    model = EmissionModel.poisson()
    p1 = changepoint_posterior(segment(CountSeries(values), model, 3), 1)
    p2 = changepoint_posterior(segment(CountSeries(other), model, 2), 1)
    forward, backward = shift_posterior(p1, p2), shift_posterior(p2, p1)
    assert np.array_equal(forward.probs, backward.probs[::-1])
    assert math.fsum(forward.probs) == pytest.approx(1.0, abs=1e-12)


def test_shift_matches_enumeration(rng):
    s1, s2 = random_series(rng, "poisson", 8), random_series(rng, "poisson", 8)
    model = EmissionModel.poisson()
    p1 = changepoint_posterior(segment(s1, model, 3), 2)
    p2 = changepoint_posterior(segment(s2, model, 2), 1)
    want = brute_shift_posterior(s1, s2, model, model, 3, 2, 2, 1)
    got = shift_posterior(p1, p2)
    for d, p in want.items():
        assert got.prob(d) == pytest.approx(p, rel=1e-9, abs=1e-15)


def test_shift_intervals():
    zero = shift_posterior(point_mass(10, 5), point_mass(10, 5))
    ci = shift_credible_interval(zero, 0.95)
    assert (ci.lo, ci.hi, ci.contains_zero) == (0, 0, True)
    far = shift_posterior(point_mass(20, 15), point_mass(20, 3))
    ci = shift_credible_interval(far, 0.95)
    assert (ci.lo, ci.hi, ci.contains_zero) == (12, 12, False)


def test_shifted_step_data_interval_excludes_zero():
    rng = np.random.default_rng(5)
    n = 120
    rates1 = np.where(np.arange(1, n + 1) < 40, 1.0, 12.0)
    rates2 = np.where(np.arange(1, n + 1) < 72, 1.0, 12.0)
    model = EmissionModel.poisson()
    p1, p2 = (changepoint_posterior(segment(CountSeries(rng.poisson(r)), model, 2), 1)
              for r in (rates1, rates2))
    delta = shift_posterior(p1, p2)
    ci = shift_credible_interval(delta, 0.95)
    # exhaustive window scan over the shift support
    best = None
    for a in range(delta.probs.size):
        mass = np.cumsum(delta.probs[a:])
        hit = np.flatnonzero(mass >= 0.95)
        if hit.size and (best is None or hit[0] < best[0]):
            best = (int(hit[0]), a)
    width, a = best
    assert (ci.lo, ci.hi) == (int(delta.support[a]), int(delta.support[a + width]))
    assert not ci.contains_zero and ci.lo <= -32 + 3 and ci.hi >= -32 - 3


def test_q0_examples():
    assert q0_prior(3, [(2, 1), (2, 1)]) == pytest.approx(0.5)
    assert q0_prior(9, [(4, 2)]) == 1.0


def test_q0_monte_carlo():
    rng = np.random.default_rng(11)
    n, draws = 8, 10**6
    # tau_1 of a uniform K=3 partition: smaller of two distinct draws from 2..n
    inner = np.sort(rng.random((draws, n - 1)).argsort(axis=1)[:, :2], axis=1) + 2
    tau_a = inner[:, 0]
    tau_b = rng.integers(2, n + 1, draws)
    freq = float(np.mean(tau_a == tau_b))
    se = math.sqrt(freq * (1 - freq) / draws)
    assert abs(freq - q0_prior(n, [(3, 1), (2, 1)])) < 3 * se


def test_q0_spec_errors():
    with pytest.raises(ValueError):
        log_q0_prior(5, [(2, 2)])
    with pytest.raises(ValueError):
        log_q0_prior(5, [(7, 1)])


def test_single_series_joint_is_evidence(rng):
    tab = segment(random_series(rng, "nb", 9), EmissionModel.negative_binomial(2.0), 3)
    assert log_joint_E0([tab], [(3, 2)]) == pytest.approx(log_evidence(tab), rel=1e-12)


@pytest.mark.parametrize("Ks", [((2, 1), (2, 1)), ((3, 1), (2, 1)), ((2, 1), (2, 1), (2, 1)),
                                ((3, 2), (4, 2), (3, 1))])
def test_common_posterior_matches_enumeration(rng, Ks):
    n = 8 if len(Ks) == 3 else 9
    model = EmissionModel.poisson()
    series = [random_series(rng, "poisson", n) for _ in Ks]
    tables = [segment(s, model, K) for s, (K, _) in zip(series, Ks)]
    for p0 in (0.5, 0.9, 0.01):
        res = posterior_common(CommonChangePointQuery(n, Ks, p0), tables)
        want = brute_common_posterior(series, model, Ks, p0)
        assert res.posterior_E0 == pytest.approx(want.posterior_E0, rel=1e-8)
        assert res.bayes_factor == pytest.approx(want.bayes_factor, rel=1e-8)
        assert res.q0 == pytest.approx(want.q0, rel=1e-12)


def test_identical_strong_breaks():
    series = [CountSeries([0, 1, 0, 0, 12, 9, 11, 10])] * 2
    model = EmissionModel.poisson()
    tables = [segment(s, model, 2) for s in series]
    res = posterior_common(CommonChangePointQuery(8, [(2, 1)] * 2, 0.5), tables)
    want = brute_common_posterior(series, model, [(2, 1)] * 2, 0.5)
    assert res.posterior_E0 == pytest.approx(want.posterior_E0, rel=1e-8)
    assert res.posterior_E0 > 0.9


def _tables(rng, n=10):
    model = EmissionModel.negative_binomial(2.0)
    return [segment(random_series(rng, "nb", n), model, 3) for _ in range(3)]


def test_prior_equal_to_q0_collapses(rng):
    tables = _tables(rng)
    specs = [(3, 1)] * 3
    q0 = q0_prior(10, specs)
    res = posterior_common(CommonChangePointQuery(10, specs, q0), tables)
    assert res.posterior_E0 == pytest.approx(math.exp(res.log_Q_joint - res.log_Q_marg), rel=1e-12)


def test_odds_identity_and_monotonicity(rng):
    tables = _tables(rng)
    specs = [(3, 2)] * 3
    last = 0.0
    for p0 in (0.01, 0.1, 0.5, 0.9, 0.99):
        res = posterior_common(CommonChangePointQuery(10, specs, p0), tables)
        post_odds = res.posterior_E0 / (1 - res.posterior_E0)
        assert post_odds == pytest.approx(res.bayes_factor * p0 / (1 - p0), rel=1e-10)
        assert 0.0 <= res.posterior_E0 <= 1.0
        assert res.posterior_E0 > last
        last = res.posterior_E0


def test_degenerate_and_invalid_queries(rng):
    with pytest.raises(ValueError):
        CommonChangePointQuery(10, [(3, 1)], 0.5)
    with pytest.raises(ValueError):
        CommonChangePointQuery(10, [(3, 1)] * 2, 1.0)
    # n=2, K=2: the only change-point is 2 in every series, so E0 is certain
    tables = [segment(CountSeries([1, 5]), EmissionModel.poisson(), 2)] * 2
    with pytest.raises(DegenerateEventError):
        posterior_common(CommonChangePointQuery(2, [(2, 1)] * 2, 0.5), tables)
    with pytest.raises(ValueError):
        posterior_common(CommonChangePointQuery(9, [(3, 1)] * 3, 0.5), _tables(rng))
