"""Uncertainty model, problem variants and worst-case deviation evaluators.

All variants of the offering problem are one ``RobustProblem`` type:

* nominal: maximise sum(price*p - cost) over the unit's feasible set;
* robust: the compact budgeted counterpart with dual variables z, q_t and
  constraints z + q_t >= d_t p_t, objective reduced by gamma*z + sum(q);
* worst-case: full protection written as the nominal problem at prices
  nominal - deviation (no dual variables).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .units import Schedule, UnitSpec, generation_cost


class Flavor(str, enum.Enum):
    NOMINAL = "nominal"
    ROBUST = "robust"
    WORST_CASE = "worst-case"


@dataclass(frozen=True)
class UncertaintyModel:
    nominal: np.ndarray
    deviations: np.ndarray
    gamma: int

    def __post_init__(self):
        nominal = np.array(self.nominal, dtype=float)
        dev = np.array(self.deviations, dtype=float)
        if nominal.ndim != 1 or dev.shape != nominal.shape:
            raise ValueError(f"nominal prices {nominal.shape} and deviations {dev.shape} must be equal-length vectors")
        if np.any(dev < 0):
            raise ValueError("deviations must be non-negative")
        if int(self.gamma) != self.gamma or not 0 <= self.gamma <= len(nominal):
            raise ValueError(f"gamma must be an integer in 0..{len(nominal)}, got {self.gamma}")
        nominal.setflags(write=False)
        dev.setflags(write=False)
        object.__setattr__(self, "nominal", nominal)
        object.__setattr__(self, "deviations", dev)
        object.__setattr__(self, "gamma", int(self.gamma))

    @property
    def horizon(self) -> int:
        return len(self.nominal)

    def __eq__(self, other):
        if not isinstance(other, UncertaintyModel):
            return NotImplemented
        return (
            self.gamma == other.gamma
            and np.array_equal(self.nominal, other.nominal)
            and np.array_equal(self.deviations, other.deviations)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class RobustProblem:
    unit: UnitSpec
    model: UncertaintyModel
    flavor: Flavor
    # Bar-Con style auxiliary variables y_t >= p_t carrying the deviation term.
    link_aux: bool = False

    def __post_init__(self):
        object.__setattr__(self, "flavor", Flavor(self.flavor))
        m = self.model
        if self.flavor is Flavor.NOMINAL and not (m.gamma == 0 or not m.deviations.any()):
            raise ValueError("a nominal problem needs gamma = 0 or all-zero deviations")
        if self.flavor is Flavor.WORST_CASE and m.gamma != m.horizon:
            raise ValueError("the worst-case equivalent requires gamma = horizon")
        if self.link_aux and self.flavor is not Flavor.ROBUST:
            raise ValueError("auxiliary linking variables only exist in the robust flavor")

    @property
    def horizon(self) -> int:
        return self.model.horizon

    @property
    def objective_prices(self) -> np.ndarray:
        """Prices multiplying p in the objective (shifted down for the worst case)."""
        if self.flavor is Flavor.WORST_CASE:
            return self.model.nominal - self.model.deviations
        return self.model.nominal

    def objective_at(self, schedule: Schedule) -> float:
        """Exact objective of a schedule, with the deviation term re-optimised for its output."""
        cost, _ = generation_cost(self.unit, schedule)
        value = float(self.objective_prices @ schedule.p) - cost
        if self.flavor is Flavor.ROBUST:
            value -= eval_dev(self.model.deviations, schedule.p, self.model.gamma)
        return value


def build_nominal(unit: UnitSpec, prices: Sequence[float]) -> RobustProblem:
    prices = np.asarray(prices, dtype=float)
    if prices.ndim != 1 or len(prices) == 0:
        raise ValueError("prices must be a non-empty vector")
    if np.any(prices < 0):
        raise ValueError("prices must be non-negative")
    model = UncertaintyModel(prices, np.zeros_like(prices), 0)
    return RobustProblem(unit, model, Flavor.NOMINAL)


def build_robust(unit: UnitSpec, model: UncertaintyModel, link_aux: bool = False) -> RobustProblem:
    return RobustProblem(unit, model, Flavor.ROBUST, link_aux=link_aux)


def worst_case_equivalent(unit: UnitSpec, model: UncertaintyModel) -> RobustProblem:
    if model.gamma != model.horizon:
        raise ValueError(f"full protection needs gamma = {model.horizon}, got {model.gamma}")
    return RobustProblem(unit, model, Flavor.WORST_CASE)


def _check_dev_args(d, p, gamma):
    d = np.asarray(d, dtype=float)
    p = np.asarray(p, dtype=float)
    if d.shape != p.shape:
        raise ValueError("deviations and outputs must have equal length")
    if int(gamma) != gamma or not 0 <= gamma <= len(d):
        raise ValueError(f"gamma must be an integer in 0..{len(d)}, got {gamma}")
    return d, p, int(gamma)


def eval_dev(d: Sequence[float], p: Sequence[float], gamma: int) -> float:
    """Worst-case revenue loss: the sum of the gamma largest products d_t * p_t."""
    d, p, gamma = _check_dev_args(d, p, gamma)
    loss = d * p
    # stable sort keeps the earliest hour first among ties
    order = np.argsort(-loss, kind="stable")
    if gamma == 0:
        return 0.0
    # sequential sums keep the value exactly non-decreasing in gamma
    return float(np.cumsum(loss[order])[gamma - 1])


def eval_dev_dual(d: Sequence[float], p: Sequence[float], gamma: int) -> tuple[float, float, np.ndarray]:
    """Solve min gamma*z + sum(q) s.t. z + q_t >= d_t p_t, z, q >= 0.

    The piecewise-linear objective in z is minimised by scanning its
    breakpoints {0} U {d_t p_t}.  Among tied minimisers the returned z is
    the gamma-th largest product (0 under full protection).
    """
    d, p, gamma = _check_dev_args(d, p, gamma)
    loss = d * p
    breaks = np.unique(np.concatenate([[0.0], loss]))
    values = gamma * breaks + np.maximum(loss[None, :] - breaks[:, None], 0.0).sum(axis=1)
    best = float(values.min())
    if gamma == len(loss):
        z = 0.0
    elif gamma == 0:
        z = float(breaks[-1])
    else:
        z = float(np.sort(loss)[::-1][gamma - 1])
    q = np.maximum(loss - z, 0.0)
    # the canonical z must be one of the scanned minimisers
    assert abs(gamma * z + q.sum() - best) <= 1e-9 * max(1.0, abs(best))
    return best, z, q
