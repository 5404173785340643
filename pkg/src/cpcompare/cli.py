"""Command-line entry point: ``cpcompare <command> [options] FILE...``.

All locations are 1-based. A change-point ``t`` is the first point of the new
segment, so a series of length n has candidate locations 2..n.

Input files hold one series per file (one value per line) or several series
as a tab-separated table whose header names the conditions.

Exit codes: 0 success, 2 invalid input, 3 numerical degeneracy.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .comparison import (CommonChangePointQuery, DegenerateEventError, InconsistentEvidenceError,
                         posterior_common, shift_credible_interval, shift_posterior)
from .dispersion import DispersionError, estimate_dispersion
from .emission import CountSeries, EmissionModel, Family
from .segmentation import changepoint_posterior, credible_interval, log_evidence, segment
from .simulation import (THREADS_ENV, SimulationConfig, abacus_records, design_cells,
                         run_abacus, CSV_HEADER)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


class InputError(ValueError):
    """Bad file contents or inconsistent options."""


# --- input -----------------------------------------------------------------

def _number(text: str, where: str, counts: bool = False) -> float:
    try:
        value = float(text)
    except ValueError:
        raise InputError(f"{where}: not a number: {text!r}") from None
    if not math.isfinite(value):
        raise InputError(f"{where}: non-finite value {text!r}")
    if counts and (value < 0 or value != math.floor(value)):
        raise InputError(f"{where}: expected a non-negative integer count, got {text!r}")
    return value


def read_series(path: str | Path, counts: bool = False) -> list[CountSeries]:
    """Series in ``path``: a single column of values, or a TSV with a header row.

    With ``counts`` every value must be a non-negative integer.
    """
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    rows = [(no, line.strip()) for no, line in enumerate(lines, 1) if line.strip()]
    if not rows:
        raise InputError(f"{path}: no data")
    first = rows[0][1].split("\t")
    try:
        [float(cell) for cell in first]
        header = None
    except ValueError:
        header = [cell.strip() for cell in first]
        rows = rows[1:]
    width = len(header) if header else len(first)
    columns = [[] for _ in range(width)]
    for no, line in rows:
        cells = line.split("\t")
        if len(cells) != width:
            raise InputError(f"{path}:{no}: expected {width} fields, found {len(cells)}")
        for col, cell in zip(columns, cells):
            col.append(_number(cell.strip(), f"{path}:{no}", counts))
    labels = header or ([path.stem] if width == 1 else [f"{path.stem}:{c + 1}" for c in range(width)])
    if len(columns[0]) < 2:
        raise InputError(f"{path}: need at least two values per series")
    return [CountSeries(np.array(col), label) for col, label in zip(columns, labels)]


def load_inputs(paths, family: Family) -> list[CountSeries]:
    return [s for path in paths for s in read_series(path, family.is_count)]


# --- models ----------------------------------------------------------------

_HYPER_KEYS = {
    Family.NEGATIVE_BINOMIAL: ("alpha", "beta"),
    Family.POISSON: ("a", "b"),
    Family.GAUSSIAN_KNOWN_VARIANCE: ("mu0", "v0"),
    Family.GAUSSIAN_HETEROSCEDASTIC: ("mu0", "v0", "a0", "b0"),
}


def parse_hyper(text: str | None, family: Family) -> dict[str, float]:
    if not text:
        return {}
    out = {}
    for item in text.split(","):
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or key not in _HYPER_KEYS[family]:
            raise InputError(f"--hyper: expected one of {', '.join(_HYPER_KEYS[family])} "
                             f"as key=value, got {item!r}")
        out[key] = _number(value, "--hyper")
    return out


def build_model(args, series: CountSeries) -> tuple[EmissionModel, dict]:
    """Emission model for one series plus a note on how phi was obtained."""
    family = Family(args.model)
    hyper = parse_hyper(args.hyper, family)
    if family is Family.POISSON:
        return EmissionModel.poisson(**hyper), {}
    if family is Family.GAUSSIAN_KNOWN_VARIANCE:
        if args.sigma2 is None:
            raise InputError("--model gauss-known-var needs --sigma2")
        return EmissionModel.gaussian(args.sigma2, **hyper), {}
    if family is Family.GAUSSIAN_HETEROSCEDASTIC:
        return EmissionModel.gaussian_hetero(**hyper), {}
    if args.phi is not None:
        return EmissionModel.negative_binomial(args.phi, **hyper), {"phi_source": "given"}
    est = estimate_dispersion(series)
    note = {"phi_source": "estimated", "phi_hat": est.phi_hat, "window": est.window_used}
    if est.fallback_applied:
        # no detectable overdispersion: switch to the Poisson limit
        note["fallback"] = "poisson"
        return EmissionModel.poisson(), note
    return EmissionModel.negative_binomial(est.phi_hat, **hyper), note


def _broadcast(values, count: int, flag: str):
    if not values:
        raise InputError(f"{flag} is required")
    if len(values) == 1:
        return list(values) * count
    if len(values) != count:
        raise InputError(f"{flag} given {len(values)} times for {count} series")
    return list(values)


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InputError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def _segment_all(jobs):
    """Power tables for (series, model, K) jobs, in input order."""
    workers = min(_thread_count(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(segment, *zip(*jobs)))
    return [segment(*job) for job in jobs]


def _prepare(args, count_required=None):
    family = Family(args.model)
    series = load_inputs(args.inputs, family)
    if count_required == "pair" and len(series) != 2:
        raise InputError(f"compare-shift needs exactly two series, found {len(series)}")
    if count_required == "many" and len(series) < 2:
        raise InputError(f"compare-common needs at least two series, found {len(series)}")
    if count_required and len({s.n for s in series}) > 1:
        lengths = ", ".join(f"{s.label}={s.n}" for s in series)
        raise InputError(f"series lengths differ: {lengths}")
    Ks = _broadcast(args.K, len(series), "--K")
    models, notes = zip(*(build_model(args, s) for s in series))
    for s, K in zip(series, Ks):
        if not 1 <= K <= s.n:
            raise InputError(f"--K {K} outside 1..{s.n} for series {s.label}")
    tables = _segment_all(list(zip(series, models, Ks)))
    return series, models, notes, Ks, tables


# --- serialization ---------------------------------------------------------

def _log10(p: float) -> float:
    return math.log10(p) if p > 0 else -math.inf


def _prob(p: float) -> dict:
    return {"p": float(p), "log10_p": _log10(p)}


def _sparse(support, probs) -> list[dict]:
    return [{"at": int(x), **_prob(p)} for x, p in zip(support, probs) if p > 0.0]


def _clean(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def dumps(report: dict) -> str:
    """Deterministic JSON: sorted keys, non-finite floats as strings."""
    return json.dumps(_clean(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _series_block(s: CountSeries, model: EmissionModel, note: dict, K: int) -> dict:
    return {"label": s.label, "n": s.n, "K": K, "model": model.describe(), **note}


# --- commands --------------------------------------------------------------

def cmd_segment(args) -> dict:
    series, models, notes, Ks, tables = _prepare(args)
    blocks = []
    for s, model, note, K, tab in zip(series, models, notes, Ks, tables):
        block = _series_block(s, model, note, K)
        block["log_evidence"] = log_evidence(tab) - tab.log_num_partitions
        cps = []
        for k in range(1, K):
            post = changepoint_posterior(tab, k)
            ci = credible_interval(post, args.level)
            cps.append({"k": k, "mode": post.mode(), "interval": ci.as_dict(),
                        "posterior": _sparse(post.support, post.probs)})
        block["changepoints"] = cps
        blocks.append(block)
    return {"command": "segment", "series": blocks}


def _parse_k(text: str, count: int) -> list[int]:
    try:
        ks = [int(x) for x in text.split(",")]
    except ValueError:
        raise InputError(f"--k: expected an integer or comma list, got {text!r}") from None
    if len(ks) == 1:
        return ks * count
    if len(ks) != count:
        raise InputError(f"--k {text!r} lists {len(ks)} indices for {count} series")
    return ks


def _check_k(ks, Ks, series):
    for k, K, s in zip(ks, Ks, series):
        if not 1 <= k <= K - 1:
            raise InputError(f"--k {k} outside 1..{K - 1} for series {s.label} (K={K})")


def cmd_compare_shift(args) -> dict:
    series, models, notes, Ks, tables = _prepare(args, "pair")
    comparisons = []
    for text in args.k or ["1"]:
        ks = _parse_k(text, 2)
        _check_k(ks, Ks, series)
        p1, p2 = (changepoint_posterior(tab, k) for tab, k in zip(tables, ks))
        delta = shift_posterior(p1, p2)
        ci = shift_credible_interval(delta, args.level)
        comparisons.append({"k": ks, "interval": ci.as_dict(), "zero_in_interval": ci.contains_zero,
                            "shift": _sparse(delta.support, delta.probs)})
    return {"command": "compare-shift",
            "series": [_series_block(*row) for row in zip(series, models, notes, Ks)],
            "comparisons": comparisons}


def parse_p0(values, keys) -> dict[str, float]:
    """Per-query prior: ``0.5`` sets the default, ``KEY=0.9`` overrides one --k."""
    default, by_key = 0.5, {}
    for item in values or []:
        key, sep, value = item.rpartition("=")
        p = _number(value, "--p0")
        if not 0.0 < p < 1.0:
            raise InputError(f"--p0 must lie in (0, 1), got {value}")
        if sep:
            if key not in keys:
                raise InputError(f"--p0 {item!r} names no --k selection")
            by_key[key] = p
        else:
            default = p
    return {key: by_key.get(key, default) for key in keys}


def cmd_compare_common(args) -> dict:
    series, models, notes, Ks, tables = _prepare(args, "many")
    keys = args.k or ["1"]
    priors = parse_p0(args.p0, keys)
    comparisons = []
    for text in keys:
        ks = _parse_k(text, len(series))
        _check_k(ks, Ks, series)
        query = CommonChangePointQuery(series[0].n, list(zip(Ks, ks)), priors[text])
        res = posterior_common(query, tables)
        out = res.as_dict()
        out["log10_posterior_E0"] = _log10(res.posterior_E0)
        out["log10_posterior_E1"] = _log10(1.0 - res.posterior_E0)
        out["log10_bayes_factor"] = res.log_bayes_factor / math.log(10.0)
        comparisons.append({"k": ks, **out})
    return {"command": "compare-common",
            "series": [_series_block(*row) for row in zip(series, models, notes, Ks)],
            "comparisons": comparisons}


def cmd_estimate_phi(args) -> dict:
    series = load_inputs(args.inputs, Family.NEGATIVE_BINOMIAL)
    blocks = []
    for s in series:
        est = estimate_dispersion(s, args.window)
        blocks.append({"label": s.label, "n": s.n, "phi_hat": est.phi_hat,
                       "window_used": est.window_used,
                       "windows_evaluated": est.windows_evaluated,
                       "fallback_applied": est.fallback_applied,
                       "recommend_poisson": est.recommend_poisson})
    return {"command": "estimate-phi", "series": blocks}


def _simulation_cells(args):
    if args.all_cells:
        return design_cells(args.replicates, args.seed, args.use_true_phi)
    family = Family(args.model)
    if family is Family.POISSON:
        if args.lambda0 is None:
            raise InputError("simulate --model poisson needs --lambda0")
        return [SimulationConfig(family, args.s, lambda0=args.lambda0,
                                 replicates=args.replicates, seed=args.seed)]
    if args.p0_level is None or args.phi is None:
        raise InputError("simulate --model nb needs --p0-level and --phi")
    return [SimulationConfig(family, args.s, p0_level=args.p0_level, phi=args.phi,
                             replicates=args.replicates, seed=args.seed,
                             use_true_phi=args.use_true_phi)]


def cmd_simulate(args, handle) -> None:
    import csv

    cells = _simulation_cells(args)
    designs = tuple(args.design.split(","))
    if not set(designs) <= {"control", "shifted"}:
        raise InputError(f"--design must list control and/or shifted, got {args.design!r}")
    workers = _thread_count()
    if args.format == "csv":
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for cell in cells:
            writer.writerows(abacus_records(cell, run_abacus(cell, designs, workers)))
            handle.flush()
        return
    records = []
    for cell in cells:
        for rec in abacus_records(cell, run_abacus(cell, designs, workers)):
            records.append(dict(zip(CSV_HEADER, rec)))
    handle.write(dumps({"command": "simulate", "rows": records}))


# --- argument parsing ------------------------------------------------------

def _add_model_args(p, with_k=True, with_level=True):
    p.add_argument("inputs", nargs="+", metavar="FILE", help="series file(s)")
    p.add_argument("--model", default="nb", choices=[f.value for f in Family])
    p.add_argument("--phi", type=float, help="NB dispersion; estimated per series when omitted")
    p.add_argument("--estimate-phi", action="store_true",
                   help="estimate phi per series (the default when --phi is absent)")
    p.add_argument("--sigma2", type=float, help="known variance for gauss-known-var")
    p.add_argument("--hyper", help="prior overrides, e.g. alpha=1,beta=1 or mu0=0,v0=4")
    p.add_argument("--K", type=int, action="append", required=True,
                   help="segments per series; once for all series or once per series")
    if with_k:
        p.add_argument("--k", action="append",
                       help="change-point index, or comma list with one index per series; "
                            "repeat for several comparisons")
    if with_level:
        p.add_argument("--level", type=float, default=0.95, help="credible mass (default 0.95)")


def _add_io_args(p, default):
    # accepted before or after the command; the subcommand copy must not clobber the global one
    p.add_argument("--out", default=default, help="output file (default stdout)")
    p.add_argument("--format", choices=["json", "csv"], default=default,
                   help="json for analyses, csv (default) or json for simulate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpcompare",
        description="Exact change-point posteriors and cross-series comparison. "
                    "Locations are 1-based; a change-point is the first point of the new segment.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_io_args(parser, None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="change-point posteriors of each series")
    _add_model_args(p, with_k=False)
    _add_io_args(p, argparse.SUPPRESS)
    p = sub.add_parser("compare-shift", help="posterior of the shift between two change-points")
    _add_model_args(p)
    _add_io_args(p, argparse.SUPPRESS)
    p = sub.add_parser("compare-common", help="posterior probability of a common change-point")
    _add_model_args(p, with_level=False)
    _add_io_args(p, argparse.SUPPRESS)
    p.add_argument("--p0", action="append",
                   help="prior of a common change-point: VALUE, or KEY=VALUE for one --k")
    p = sub.add_parser("estimate-phi", help="moment estimate of the NB dispersion")
    p.add_argument("inputs", nargs="+", metavar="FILE")
    p.add_argument("--window", type=int, default=15, help="initial window (default 15)")
    _add_io_args(p, argparse.SUPPRESS)

    p = sub.add_parser("simulate", help="three-profile benchmark, one row per (replicate, k)")
    p.add_argument("--model", default="nb", choices=["nb", "poisson"])
    p.add_argument("--p0-level", type=float, help="NB success probability of odd segments")
    p.add_argument("--lambda0", type=float, help="Poisson rate of odd segments")
    p.add_argument("--phi", type=float, help="NB dispersion of the simulated data")
    p.add_argument("--s", type=float, default=16.0, help="odd-ratio between segments")
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--use-true-phi", action="store_true",
                   help="fit with the simulating phi instead of estimating it")
    p.add_argument("--design", default="control,shifted")
    p.add_argument("--all-cells", action="store_true", help="run every cell of the design")
    _add_io_args(p, argparse.SUPPRESS)
    return parser


_COMMANDS = {"segment": cmd_segment, "compare-shift": cmd_compare_shift,
             "compare-common": cmd_compare_common, "estimate-phi": cmd_estimate_phi}


def _validate(args) -> None:
    if getattr(args, "estimate_phi", False) and args.phi is not None:
        raise InputError("--phi and --estimate-phi are mutually exclusive")
    level = getattr(args, "level", None)
    if level is not None and not 0.0 < level < 1.0:
        raise InputError(f"--level must lie in (0, 1), got {level}")
    if args.command != "simulate" and args.format == "csv":
        raise InputError(f"{args.command} writes JSON only")


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        _validate(args)
        if args.command == "simulate":
            args.format = args.format or "csv"
            if args.out:
                with open(args.out, "w", newline="") as handle:
                    cmd_simulate(args, handle)
            else:
                cmd_simulate(args, stdout)
            return EXIT_OK
        text = dumps(_COMMANDS[args.command](args))
    except (DegenerateEventError, InconsistentEvidenceError, FloatingPointError,
            DispersionError) as exc:
        print(f"cpcompare: numerical degeneracy: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, ValueError, IndexError) as exc:
        print(f"cpcompare: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.out:
        Path(args.out).write_text(text)
    else:
        stdout.write(text)
    return EXIT_OK


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
