import numpy as np
import pytest

from cpcompare.emission import CountSeries, EmissionModel, Family


def random_model(rng, family):
    family = Family(family)
    if family is Family.NEGATIVE_BINOMIAL:
        return EmissionModel.negative_binomial(float(rng.choice([0.5, 2.0, 10.0])))
    if family is Family.POISSON:
        return EmissionModel.poisson()
    if family is Family.GAUSSIAN_KNOWN_VARIANCE:
        return EmissionModel.gaussian(float(rng.uniform(0.5, 2.0)), mu0=0.0, v0=4.0)
    return EmissionModel.gaussian_hetero()


def random_series(rng, family, n, label=""):
    """Short series with a step in the middle so posteriors are not flat."""
    family = Family(family)
    half = n // 2
    if family.is_count:
        rates = np.r_[np.full(half, rng.uniform(0.5, 3)), np.full(n - half, rng.uniform(2, 9))]
        return CountSeries(rng.poisson(rates), label)
    means = np.r_[np.zeros(half), np.full(n - half, rng.normal(0, 3))]
    return CountSeries(means + rng.normal(0, 1, n), label)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
