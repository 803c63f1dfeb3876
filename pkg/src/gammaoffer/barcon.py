"""Offering curves from a ladder of full-protection solves, and an auditor for them.

Iteration k solves the fully protected problem with every hourly price
shifted down to lambda_max - d^k, where d^k = (k-1) * delta * (lambda_max -
lambda_min).  Hour t of the curve then offers p_t^k at that price.  Merging
the K solutions hour by hour ignores the coupling between hours, so the
dispatch a market accepts from such curves can break ramp limits or earn
less than the ex-post optimum.  ``audit_curves`` finds those cases.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .robust import UncertaintyModel, build_nominal, build_robust, worst_case_equivalent
from .solver import OPTIMAL, SolveResult, SolverConfig, solve
from .units import UnitSpec, ViolationReport, check_feasibility, profit, schedule_from_dispatch

log = logging.getLogger(__name__)

CURVE_HEADER = ("hour", "step", "quantity_mw", "price_eur_mwh")
MARKET_STEP_LIMIT = 4

# Three price configurations for the 3-hour example unit, highest first.
EXAMPLE_PRICES = ((54.0, 55.0, 61.0), (53.0, 54.0, 60.0), (52.0, 53.0, 59.0))
EXAMPLE_SCENARIOS = ((52.0, 53.0, 61.0), (54.0, 53.0, 59.0))


class BarConError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class BarConConfig:
    price_min: np.ndarray
    price_max: np.ndarray
    delta: float
    iterations: int

    def __post_init__(self):
        lo = np.array(self.price_min, dtype=float)
        hi = np.array(self.price_max, dtype=float)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("price_min and price_max must be equal-length vectors")
        if np.any(lo > hi):
            raise ValueError("price_min must not exceed price_max")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ValueError("iterations must be a positive integer")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        if (self.iterations - 1) * self.delta > 1.0 + 1e-12:
            raise ValueError("(iterations - 1) * delta must not exceed 1")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "price_min", lo)
        object.__setattr__(self, "price_max", hi)
        object.__setattr__(self, "iterations", int(self.iterations))

    @property
    def horizon(self) -> int:
        return len(self.price_max)

    def shortfall(self, k: int) -> np.ndarray:
        """Price shortfall d^k for iteration k = 1..K."""
        return (k - 1) * self.delta * (self.price_max - self.price_min)

    def ladder(self, k: int) -> np.ndarray:
        return self.price_max - self.shortfall(k)


def example_config() -> BarConConfig:
    top = np.array(EXAMPLE_PRICES[0])
    return BarConConfig(top - 2.0, top, 0.5, 3)


@dataclass(frozen=True)
class OfferingCurve:
    """Per hour, a tuple of (quantity MW, price EUR/MWh) steps in increasing price order."""

    steps: tuple
    diagnostics: tuple = field(default=(), compare=False)

    def __post_init__(self):
        steps = tuple(tuple((float(q), float(p)) for q, p in hour) for hour in self.steps)
        for t, hour in enumerate(steps, start=1):
            if not hour:
                raise ValueError(f"hour {t} has no steps")
            qs = [q for q, _ in hour]
            ps = [p for _, p in hour]
            if any(q < 0 for q in qs):
                raise ValueError(f"hour {t}: negative quantity")
            if any(b <= a for a, b in zip(ps, ps[1:])):
                raise ValueError(f"hour {t}: step prices must be strictly increasing")
            if any(b < a for a, b in zip(qs, qs[1:])):
                raise ValueError(f"hour {t}: step quantities must be non-decreasing")
        object.__setattr__(self, "steps", steps)

    @property
    def horizon(self) -> int:
        return len(self.steps)

    def over_limit(self, limit: int = MARKET_STEP_LIMIT) -> list[int]:
        """Hours (1-based) whose curve has more steps than the market allows."""
        return [t for t, hour in enumerate(self.steps, start=1) if len(hour) > limit]


def merge_curves(prices: Sequence[Sequence[float]], quantities: Sequence[Sequence[float]]) -> OfferingCurve:
    """Assemble per-hour curves from K (price vector, quantity vector) pairs.

    Steps are sorted by price.  A quantity lower than an earlier step's is
    lifted to the running maximum, and steps sharing one price collapse to
    their largest quantity; both repairs are recorded as diagnostics.
    """
    prices = np.asarray(prices, dtype=float)
    quantities = np.asarray(quantities, dtype=float)
    if prices.shape != quantities.shape or prices.ndim != 2:
        raise ValueError("prices and quantities must both be (K, T) arrays")
    notes = []
    hours = []
    for t in range(prices.shape[1]):
        order = np.argsort(prices[:, t], kind="stable")
        steps: list[list[float]] = []
        top = 0.0
        for k in order:
            price, qty = prices[k, t], quantities[k, t]
            if qty < top:
                notes.append(f"hour {t + 1}: quantity {qty:g} at {price:g} raised to {top:g}")
                qty = top
            top = qty
            if steps and steps[-1][1] == price:
                steps[-1][0] = max(steps[-1][0], qty)
            else:
                steps.append([qty, price])
        hours.append(tuple((q, p) for q, p in steps))
    for note in notes:
        log.info("curve repair: %s", note)
    return OfferingCurve(tuple(hours), tuple(notes))


def barcon_run(
    unit: UnitSpec,
    config: BarConConfig,
    solver_config: SolverConfig | None = None,
    via_robust: bool = False,
) -> tuple[list[SolveResult], OfferingCurve]:
    """Solve the K full-protection problems and merge them into curves.

    With ``via_robust`` each iteration goes through the dualised budgeted
    counterpart at gamma = T instead of the shifted-price shortcut.
    """
    T = config.horizon
    results = []
    for k in range(1, config.iterations + 1):
        model = UncertaintyModel(config.price_max, config.shortfall(k), T)
        problem = build_robust(unit, model) if via_robust else worst_case_equivalent(unit, model)
        res = solve(problem, solver_config)
        if res.status != OPTIMAL:
            raise BarConError(f"iteration {k} ended with status {res.status}")
        results.append(res)
    ladders = [config.ladder(k) for k in range(1, config.iterations + 1)]
    curve = merge_curves(ladders, [r.p for r in results])
    return results, curve


def simulate_acceptance(curve: OfferingCurve, realized: Sequence[float]) -> np.ndarray:
    """Accepted MW per hour: the highest step priced at or below the realized price."""
    realized = np.asarray(realized, dtype=float)
    if realized.shape != (curve.horizon,):
        raise ValueError(f"got {realized.size} realized prices for a {curve.horizon}-hour curve")
    out = np.zeros(curve.horizon)
    for t, hour in enumerate(curve.steps):
        for qty, price in hour:
            if price <= realized[t]:
                out[t] = qty
    return out


@dataclass(frozen=True, eq=False)
class AuditFinding:
    realized: np.ndarray
    accepted: np.ndarray
    kind: str  # "ramp-infeasible", "infeasible" or "suboptimal"
    achieved: float
    optimum: float
    violations: ViolationReport
    optimum_schedule: object = None

    def describe(self) -> str:
        prices = ", ".join(f"{x:g}" for x in self.realized)
        qty = ", ".join(f"{x:g}" for x in self.accepted)
        head = f"{self.kind} at prices ({prices}): accepted ({qty}) MW"
        tail = f"profit {self.achieved:.2f} EUR vs ex-post optimum {self.optimum:.2f} EUR"
        if self.violations:
            return f"{head}; {tail}\n{self.violations.describe()}"
        return f"{head}; {tail}"


RAMP_FAMILIES = {"ramp-up", "ramp-down"}


def audit_curves(
    unit: UnitSpec,
    curve: OfferingCurve,
    scenarios: Sequence[Sequence[float]],
    solver_config: SolverConfig | None = None,
    rel_tol: float = 1e-6,
) -> list[AuditFinding]:
    """Clear the curves in every scenario and report infeasible or suboptimal dispatches."""
    findings = []
    for realized in scenarios:
        realized = np.asarray(realized, dtype=float)
        accepted = simulate_acceptance(curve, realized)
        dispatch = schedule_from_dispatch(unit, accepted)
        report = check_feasibility(unit, dispatch)
        achieved = profit(unit, dispatch, realized)
        best = solve(build_nominal(unit, realized), solver_config)
        if best.status != OPTIMAL:
            raise BarConError(f"ex-post solve ended with status {best.status}")
        if report:
            kind = "ramp-infeasible" if report.families & RAMP_FAMILIES else "infeasible"
        elif achieved < best.objective - rel_tol * max(1.0, abs(best.objective)):
            kind = "suboptimal"
        else:
            continue
        findings.append(AuditFinding(realized, accepted, kind, achieved, best.objective, report, best.schedule))
    return findings


def format_curve(curve: OfferingCurve) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_HEADER)
    for t, hour in enumerate(curve.steps, start=1):
        for s, (qty, price) in enumerate(hour, start=1):
            writer.writerow((t, s, repr(qty), repr(price)))
    return buf.getvalue()
