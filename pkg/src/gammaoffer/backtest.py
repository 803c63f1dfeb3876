"""Rolling-window backtest of zero-price offers over (unit, J, gamma)."""

from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .offering import ZeroPriceOffer, gamma_offering_run
from .prices import BacktestWindow, DeviationClampWarning, PriceSeries, make_windows, stats_from_observations
from .solver import SolverConfig
from .units import UnitSpec, profit

log = logging.getLogger(__name__)

RECORD_HEADER = ("unit", "trim", "gamma", "window", "profit_eur")
REPORT_HEADER = (
    "unit", "trim", "pct_excluded", "gamma_best", "profit_best_eur",
    "gamma_low", "delta_low_eur", "delta_low_pct", "gamma_high", "delta_high_eur", "delta_high_pct",
)


@dataclass(frozen=True)
class ProfitRecord:
    unit: str
    trim: int
    gamma: int
    window: int
    profit: float
    daily: tuple = field(default=(), compare=False)


@dataclass(frozen=True)
class FailedCell:
    unit: str
    trim: int
    gamma: int
    window: int
    reason: str


def evaluate_offer(unit: UnitSpec, offer: ZeroPriceOffer, realized) -> ProfitRecord:
    """Weekly profit of one daily offer applied to each evaluation day.

    Every day is settled on its own with the offer's schedule, startup
    costs included, so days do not interact.
    """
    days = np.atleast_2d(np.asarray(realized, dtype=float))
    if days.shape[1] != offer.horizon:
        raise ValueError(f"realized prices have {days.shape[1]} hours, the offer {offer.horizon}")
    if np.isnan(days).any():
        raise ValueError("missing realized prices")
    daily = tuple(profit(unit, offer.schedule, day) for day in days)
    prov = offer.provenance
    return ProfitRecord(prov.unit, prov.trim, prov.gamma, prov.window if prov.window is not None else 0, float(sum(daily)), daily)


@dataclass(frozen=True)
class ReportRow:
    unit: str
    trim: int
    pct_excluded: float
    yearly: dict  # gamma -> EUR
    gamma_best: int
    gamma_low: int
    gamma_high: int

    @property
    def best(self) -> float:
        return self.yearly[self.gamma_best]

    def delta(self, gamma: int) -> tuple[float, float]:
        base = self.yearly[gamma]
        diff = self.best - base
        pct = 100.0 * diff / abs(base) if base != 0 else math.nan
        return diff, pct


@dataclass(frozen=True)
class BacktestReport:
    records: tuple
    failures: tuple
    rows: tuple
    observations: int = 0
    clamped_hours: int = 0


def _window_cells(args):
    unit, window, train, evaluate, trims, gammas, solver_config = args
    records, failures, clamped = [], [], 0
    for trim in trims:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DeviationClampWarning)
                stats = stats_from_observations(train, trim)
        except ValueError as exc:
            failures += [FailedCell(unit.name, trim, g, window, f"{type(exc).__name__}: {exc}") for g in gammas]
            continue
        clamped += int(stats.clamped.sum())
        for gamma in gammas:
            try:
                offer = gamma_offering_run(unit, stats, trim, gamma, solver_config, window=window)
                records.append(evaluate_offer(unit, offer, evaluate))
            except Exception as exc:  # a failed cell is reported, never imputed
                failures.append(FailedCell(unit.name, trim, gamma, window, f"{type(exc).__name__}: {exc}"))
    return records, failures, clamped


def aggregate(records: Sequence[ProfitRecord], failures: Sequence[FailedCell] = (), observations: int = 0) -> list[ReportRow]:
    """Yearly profit per (unit, J, gamma) and the best gamma against the extreme budgets."""
    yearly: dict[tuple[str, int], dict[int, float]] = {}
    for r in sorted(records, key=lambda r: (r.unit, r.trim, r.gamma, r.window)):
        cell = yearly.setdefault((r.unit, r.trim), {})
        cell[r.gamma] = cell.get(r.gamma, 0.0) + r.profit
    failed = {(f.unit, f.trim, f.gamma) for f in failures}
    rows = []
    for (unit, trim), by_gamma in sorted(yearly.items()):
        # a gamma with any failed window is not comparable with the others
        by_gamma = {g: v for g, v in by_gamma.items() if (unit, trim, g) not in failed}
        if not by_gamma:
            continue
        gammas = sorted(by_gamma)
        best = max(gammas, key=lambda g: (by_gamma[g], -g))
        pct = 100.0 * trim / observations if observations else math.nan
        rows.append(ReportRow(unit, trim, pct, dict(sorted(by_gamma.items())), best, gammas[0], gammas[-1]))
    return rows


def backtest_run(
    units: Sequence[UnitSpec],
    series: PriceSeries,
    trims: Sequence[int],
    gammas: Sequence[int],
    solver_config: SolverConfig | None = None,
    zone: str | None = None,
    windows: Sequence[BacktestWindow] | None = None,
    jobs: int = 1,
) -> BacktestReport:
    windows = list(windows) if windows is not None else make_windows(series, zone)
    names = [u.name for u in units]
    if len(set(names)) != len(names):
        raise ValueError("unit names must be unique")
    trims = sorted(set(int(j) for j in trims))
    gammas = sorted(set(int(g) for g in gammas))
    tasks = []
    observations = 0
    for unit in units:
        for w in windows:
            train = series.day_matrix(w.train_dates, zone)
            evaluate = series.day_matrix(w.eval_dates, zone)
            observations = train.shape[0]
            tasks.append((unit, w.index, train, evaluate, trims, gammas, solver_config))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_window_cells, tasks))
    else:
        outputs = [_window_cells(t) for t in tasks]
    records, failures, clamped = [], [], 0
    for rec, fail, c in outputs:
        records.extend(rec)
        failures.extend(fail)
        clamped += c
    for f in failures:
        log.warning("cell failed: unit %s J=%d gamma=%d window %d: %s", f.unit, f.trim, f.gamma, f.window, f.reason)
    records.sort(key=lambda r: (r.unit, r.trim, r.gamma, r.window))
    failures.sort(key=lambda f: (f.unit, f.trim, f.gamma, f.window))
    rows = aggregate(records, failures, observations)
    return BacktestReport(tuple(records), tuple(failures), tuple(rows), observations, clamped)


def _num(x: float, digits: int = 2) -> str:
    return "nan" if math.isnan(x) else f"{x:.{digits}f}"


def report_table(report: BacktestReport) -> list[tuple[str, ...]]:
    out = []
    for row in report.rows:
        lo, lo_pct = row.delta(row.gamma_low)
        hi, hi_pct = row.delta(row.gamma_high)
        out.append((
            row.unit, str(row.trim), _num(row.pct_excluded, 1), str(row.gamma_best), _num(row.best),
            str(row.gamma_low), _num(lo), _num(lo_pct), str(row.gamma_high), _num(hi), _num(hi_pct),
        ))
    return out


def format_report(report: BacktestReport) -> tuple[str, str]:
    """The report as (aligned text table, CSV)."""
    rows = report_table(report)
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(REPORT_HEADER)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(REPORT_HEADER, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows]
    if report.failures:
        lines.append("")
        lines.append(f"{len(report.failures)} failed cell(s), excluded from the totals:")
        lines += [f"  unit {f.unit} J={f.trim} gamma={f.gamma} window {f.window}: {f.reason}" for f in report.failures]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    writer.writerows(rows)
    return "\n".join(lines) + "\n", buf.getvalue()


def format_records(records: Sequence[ProfitRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORD_HEADER)
    for r in records:
        writer.writerow((r.unit, r.trim, r.gamma, r.window, repr(r.profit)))
    return buf.getvalue()


def format_yearly(report: BacktestReport) -> str:
    """Yearly profit for every (unit, J, gamma) as CSV."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("unit", "trim", "gamma", "profit_eur"))
    for row in report.rows:
        for g, v in row.yearly.items():
            writer.writerow((row.unit, row.trim, g, repr(v)))
    return buf.getvalue()
