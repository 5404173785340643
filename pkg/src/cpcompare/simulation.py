"""Three-profile benchmark and the abacus study of P(E0 | Y, K).

Profiles have 700 points and 7 segments. Profiles 1 and 2 break at
``1, 101, ..., 701``; profile 3 moves its k-th change-point right by
``2**(k-1)``. Odd segments are drawn from the base distribution, even ones
from the distribution whose odds are ``s`` times smaller. A control draw of
profile 3 on the unshifted breaks provides the ``d = 0`` rows.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .comparison import CommonChangePointQuery, posterior_common
from .dispersion import DispersionError, estimate_dispersion
from .emission import CountSeries, EmissionModel, Family
from .segmentation import segment

N_POINTS = 700
N_SEGMENTS = 7
BASE_BREAKS = (1, 101, 201, 301, 401, 501, 601, 701)
ODD_RATIOS = (4, 8, 16)
# dispersion rows of the design table, keyed by the base success probability
PHI_GRID = {
    0.8: (5.0, math.sqrt(5.0), 0.8, 0.64),
    0.5: (0.08 ** (1 / 8), 0.08 ** (1 / 4), 0.08 ** (1 / 2), 0.08),
}
# Poisson limits of the least dispersed NB rows: 5 * 0.2 / 0.8 and 0.08**(1/8)
POISSON_LAMBDA0 = (1.25, 0.08 ** (1 / 8))
THREADS_ENV = "CPCOMPARE_THREADS"


def odds(p: float) -> float:
    return p / (1.0 - p)


def shifted_breaks() -> tuple[int, ...]:
    inner = tuple(tau + 2 ** (k - 1) for k, tau in enumerate(BASE_BREAKS[1:-1], start=1))
    return (BASE_BREAKS[0], *inner, BASE_BREAKS[-1])


@dataclass(frozen=True)
class SimulationConfig:
    """One cell of the design.

    NB cells set ``p0_level`` and ``phi``; Poisson cells set ``lambda0``.
    """

    family: Family
    s: float
    p0_level: float | None = None
    lambda0: float | None = None
    phi: float | None = None
    replicates: int = 100
    seed: int = 0
    use_true_phi: bool = False

    def __post_init__(self):
        family = Family(self.family)
        object.__setattr__(self, "family", family)
        if self.s <= 0:
            raise ValueError(f"odd-ratio must be positive, got {self.s}")
        if self.replicates < 1:
            raise ValueError("need at least one replicate")
        if family is Family.NEGATIVE_BINOMIAL:
            if self.p0_level is None or not 0 < self.p0_level < 1:
                raise ValueError(f"NB cell needs p0_level in (0, 1), got {self.p0_level}")
            if self.phi is None or not self.phi > 0:
                raise ValueError(f"NB cell needs phi > 0, got {self.phi}")
        elif family is Family.POISSON:
            if self.lambda0 is None or not self.lambda0 > 0:
                raise ValueError(f"Poisson cell needs lambda0 > 0, got {self.lambda0}")
        else:
            raise ValueError("simulations support the nb and poisson families only")

    @property
    def p1(self) -> float:
        target = odds(self.p0_level) / self.s
        return target / (1.0 + target)

    @property
    def lambda1(self) -> float:
        return self.s * self.lambda0

    @property
    def base_value(self) -> float:
        return self.p0_level if self.family is Family.NEGATIVE_BINOMIAL else self.lambda0


def _draw(rng: np.random.Generator, config: SimulationConfig, breaks) -> np.ndarray:
    out = np.empty(N_POINTS, dtype=np.int64)
    for idx, (start, stop) in enumerate(zip(breaks[:-1], breaks[1:])):
        even = idx % 2 == 1
        size = stop - start
        if config.family is Family.POISSON:
            rate = config.lambda1 if even else config.lambda0
            out[start - 1:stop - 1] = rng.poisson(rate, size)
        else:
            p = config.p1 if even else config.p0_level
            # gamma-Poisson mixture: mean phi (1 - p) / p
            lam = rng.gamma(config.phi, (1.0 - p) / p, size)
            out[start - 1:stop - 1] = rng.poisson(lam)
    return out


def _replicate_draws(config: SimulationConfig, replicate: int):
    rng = np.random.default_rng([config.seed, replicate])
    base = BASE_BREAKS
    return (_draw(rng, config, base), _draw(rng, config, base),
            _draw(rng, config, shifted_breaks()), _draw(rng, config, base))


def generate_profiles(config: SimulationConfig, replicate: int = 0,
                      shifted: bool = True) -> tuple[CountSeries, CountSeries, CountSeries]:
    """Profiles 1-3 of one replicate; ``shifted=False`` gives the control draw.

    Both designs share profiles 1 and 2 of the replicate.
    """
    y1, y2, y3, y3c = _replicate_draws(config, replicate)
    third = y3 if shifted else y3c
    return tuple(CountSeries(y, label=f"profile{i}") for i, y in enumerate((y1, y2, third), 1))


@dataclass(frozen=True)
class AbacusRow:
    replicate: int
    k: int
    d: int
    posterior_E0: float
    phi_hat: tuple[float | None, ...] = (None, None, None)
    fallback: tuple[bool, ...] = (False, False, False)


def _profile_model(series: CountSeries, config: SimulationConfig):
    """Emission model for one profile, the phi used and whether we fell back."""
    if config.family is Family.POISSON:
        return EmissionModel.poisson(), None, False
    if config.use_true_phi:
        return EmissionModel.negative_binomial(config.phi), config.phi, False
    try:
        est = estimate_dispersion(series)
    except DispersionError:
        return EmissionModel.poisson(), math.inf, True
    if est.fallback_applied:
        return EmissionModel.poisson(), est.phi_hat, True
    return EmissionModel.negative_binomial(est.phi_hat), est.phi_hat, False


def _common_rows(replicate, tables, d_of_k, phis, flags):
    rows = []
    for k in range(1, N_SEGMENTS):
        query = CommonChangePointQuery(N_POINTS, [(N_SEGMENTS, k)] * 3, p0=0.5)
        res = posterior_common(query, tables)
        rows.append(AbacusRow(replicate, k, d_of_k(k), res.posterior_E0, phis, flags))
    return rows


def run_replicate(config: SimulationConfig, replicate: int, designs=("control", "shifted")):
    """Abacus rows of one replicate for the requested designs."""
    y1, y2, y3, y3c = _replicate_draws(config, replicate)
    fitted = {}

    def fit(key, values):
        # profiles 1 and 2 are segmented once and reused by both designs
        if key not in fitted:
            series = CountSeries(values)
            model, phi, flag = _profile_model(series, config)
            fitted[key] = (segment(series, model, N_SEGMENTS), phi, flag)
        return fitted[key]

    rows = []
    for design in designs:
        third = ("3", y3) if design == "shifted" else ("3c", y3c)
        parts = [fit("1", y1), fit("2", y2), fit(*third)]
        tables = [tab for tab, _, _ in parts]
        phis = tuple(phi for _, phi, _ in parts)
        flags = tuple(flag for _, _, flag in parts)
        d_of_k = (lambda k: 2 ** (k - 1)) if design == "shifted" else (lambda k: 0)
        rows.extend(_common_rows(replicate, tables, d_of_k, phis, flags))
    return rows


def _worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def run_abacus(config: SimulationConfig, designs=("control", "shifted"),
               workers: int | None = None) -> list[AbacusRow]:
    """All abacus rows for a cell, sorted by (replicate, d, k).

    Replicates run in ``workers`` processes (default from ``CPCOMPARE_THREADS``);
    each draws from its own seed so the output does not depend on the split.
    """
    workers = _worker_count() if workers is None else workers
    reps = range(config.replicates)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run_replicate, [config] * len(reps), reps,
                                   [designs] * len(reps)))
    else:
        chunks = [run_replicate(config, r, designs) for r in reps]
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (r.replicate, r.d, r.k))
    return rows


CSV_HEADER = ("family", "p0_or_lambda0", "s", "phi", "use_true_phi", "replicate", "k", "d",
              "posterior_E0", "phi_hat_1", "phi_hat_2", "phi_hat_3",
              "fallback_1", "fallback_2", "fallback_3")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def abacus_records(config: SimulationConfig, rows):
    for row in rows:
        yield [_fmt(v) for v in (
            config.family.value, float(config.base_value), float(config.s),
            None if config.phi is None else float(config.phi), config.use_true_phi,
            row.replicate, row.k, row.d, float(row.posterior_E0),
            *(None if p is None else float(p) for p in row.phi_hat), *row.fallback)]


def write_abacus_csv(config: SimulationConfig, rows, handle) -> None:
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    writer.writerows(abacus_records(config, rows))


def design_cells(replicates: int = 100, seed: int = 0, use_true_phi: bool = False):
    """Every cell of the design table plus the two Poisson panels."""
    cells = []
    for lam in POISSON_LAMBDA0:
        for s in ODD_RATIOS:
            cells.append(SimulationConfig(Family.POISSON, s, lambda0=lam,
                                          replicates=replicates, seed=seed))
    for p0, phis in PHI_GRID.items():
        for phi in phis:
            for s in ODD_RATIOS:
                cells.append(SimulationConfig(Family.NEGATIVE_BINOMIAL, s, p0_level=p0, phi=phi,
                                              replicates=replicates, seed=seed,
                                              use_true_phi=use_true_phi))
    return cells
