"""Zero-price offers from one budgeted robust solve."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .prices import PriceStats, stats_from_observations
from .robust import UncertaintyModel, build_robust
from .solver import OPTIMAL, SolveResult, SolverConfig, SolverError, solve
from .units import Schedule, UnitSpec

OFFER_HEADER = ("hour", "quantity_mw", "price_eur_mwh")


@dataclass(frozen=True)
class Provenance:
    trim: int
    gamma: int
    window: int | None = None
    unit: str = "unit"


@dataclass(frozen=True, eq=False)
class ZeroPriceOffer:
    """Hourly quantities offered at price 0, with the commitment that produces them."""

    schedule: Schedule
    objective: float
    provenance: Provenance
    result: SolveResult | None = None

    @property
    def quantities(self) -> np.ndarray:
        return self.schedule.p

    @property
    def prices(self) -> np.ndarray:
        return np.zeros(self.schedule.horizon)

    @property
    def horizon(self) -> int:
        return self.schedule.horizon


def gamma_offering_run(
    unit: UnitSpec,
    data,
    trim: int,
    gamma: int,
    solver_config: SolverConfig | None = None,
    window: int | None = None,
) -> ZeroPriceOffer:
    """Average and trimmed deviation per hour, one robust solve, zero-price offers.

    ``data`` is either an (I, T) array of past observations or a ready
    ``PriceStats`` from another estimator; ``trim`` is then only recorded.
    """
    stats = data if isinstance(data, PriceStats) else stats_from_observations(data, trim)
    model = UncertaintyModel(stats.nominal, stats.deviation, gamma)
    result = solve(build_robust(unit, model), solver_config)
    if result.status != OPTIMAL or result.schedule is None:
        raise SolverError(f"robust solve ended with status {result.status}")
    provenance = Provenance(int(stats.trim), int(gamma), window, unit.name)
    return ZeroPriceOffer(result.schedule, result.objective, provenance, result)


def format_offer(offer: ZeroPriceOffer) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(OFFER_HEADER)
    for t, qty in enumerate(offer.quantities.tolist(), start=1):
        writer.writerow((t, repr(qty), "0.0"))
    return buf.getvalue()
