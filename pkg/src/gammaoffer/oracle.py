"""Exhaustive ground truth for short horizons.

Every commitment sequence allowed by the minimum up/down times is enumerated;
for each one the outputs are optimised by dynamic programming over a uniform
MW grid with ramp-feasible transitions only.  The budgeted deviation term is
handled by scanning the dual variable z over every value d_t * g the grid can
produce: for fixed z the problem separates by hour.

Nothing here shares code with the branch-and-bound path beyond the problem
data types; the transition rules are written from the physical meaning of
each ramp limit rather than from the constraint rows.
"""

from __future__ import annotations

import itertools
import math
import time

import numpy as np

from .robust import Flavor, RobustProblem, eval_dev_dual
from .solver import OPTIMAL, INFEASIBLE, SolveResult
from .units import UnitSpec, schedule_from_commitment

MAX_HORIZON = 8


def _runs_ok(unit: UnitSpec, u: tuple[int, ...]) -> bool:
    """Minimum up/down check by run lengths, the pre-horizon run included."""
    state = int(unit.initial_on)
    length = unit.initial_hours
    for x in u:
        if x == state:
            length += 1
            continue
        need = unit.min_up if state else unit.min_down
        if length < need:
            return False
        state, length = x, 1
    # a run still open at the horizon end is never cut short
    return True


def _startup_cost(unit: UnitSpec, u: tuple[int, ...]) -> float:
    total = 0.0
    off = 0 if unit.initial_on else unit.initial_hours
    prev = int(unit.initial_on)
    for x in u:
        if x and not prev and unit.suc_schedule:
            total += unit.suc_schedule[min(off, len(unit.suc_schedule)) - 1]
        off = off + 1 if not x else 0
        prev = x
    return total


def commitments(unit: UnitSpec, horizon: int):
    for u in itertools.product((0, 1), repeat=horizon):
        if _runs_ok(unit, u):
            yield u


def output_grid(unit: UnitSpec, step: float) -> np.ndarray:
    grid = np.arange(unit.p_min, unit.p_max + 1e-9, step)
    if unit.p_max - grid[-1] > 1e-9:
        grid = np.append(grid, unit.p_max)
    return grid


def _range_max(values: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """max(values[:, lo_j..hi_j]) for each j (inclusive), -inf for empty ranges; sparse table."""
    n = values.shape[1]
    table = [values]
    span = 1
    while 2 * span <= n:
        prev = table[-1]
        table.append(np.maximum(prev[:, : n - 2 * span + 1], prev[:, span : n - span + 1]))
        span *= 2
    out = np.full((values.shape[0], len(lo)), -np.inf)
    ok = hi >= lo
    length = np.where(ok, hi - lo + 1, 1)
    level = np.floor(np.log2(length)).astype(int)
    for k in np.unique(level[ok]):
        j = np.flatnonzero(ok & (level == k))
        row = table[k]
        out[:, j] = np.maximum(row[:, lo[j]], row[:, hi[j] - (1 << k) + 1])
    return out


def _windows(unit: UnitSpec, grid: np.ndarray):
    """Index range of predecessors g' with g - ramp_up <= g' <= g + ramp_down, per target g."""
    eps = 1e-9
    lo = np.searchsorted(grid, grid - unit.ramp_up - eps, side="left")
    hi = np.searchsorted(grid, grid + unit.ramp_down + eps, side="right") - 1
    return lo, hi


def _forward(unit, u, hour_values, grid, lo, hi):
    """Forward DP over hour_values (shape (T, Z, N)) along ramp-feasible paths for commitment u.

    Returns per-hour value arrays: (Z, N) for on-hours, (Z,) for off-hours.
    """
    Z = hour_values.shape[1]
    eps = 1e-9
    if unit.initial_on:
        # the initial output is on the grid by construction
        prev = np.where(np.abs(grid - unit.initial_output) <= eps, 0.0, -np.inf)[None, :].repeat(Z, axis=0)
    else:
        prev = np.zeros(Z)
    prev_on = bool(unit.initial_on)
    out = []
    for t, x in enumerate(u):
        if x and prev_on:
            cur = _range_max(prev, lo, hi) + hour_values[t]
        elif x:
            cur = np.where(grid <= unit.ramp_startup + eps, prev[:, None], -np.inf) + hour_values[t]
        elif prev_on:
            cur = np.where(grid <= unit.ramp_shutdown + eps, prev, -np.inf).max(axis=1)
        else:
            cur = prev
        out.append(cur)
        prev, prev_on = cur, bool(x)
    return out


def _trace_back(unit, u, values, grid, lo, hi):
    """Outputs along an optimal path, from single-slice forward values."""
    eps = 1e-9
    T = len(u)
    p = np.zeros(T)
    idx = int(np.argmax(values[-1][0])) if u[-1] else None
    for t in range(T - 1, -1, -1):
        if u[t]:
            p[t] = grid[idx]
        if t == 0:
            break
        if not u[t - 1]:
            idx = None
            continue
        prev = values[t - 1][0]
        if u[t]:
            allowed = np.zeros(len(grid), dtype=bool)
            allowed[lo[idx] : hi[idx] + 1] = True
        else:
            allowed = grid <= unit.ramp_shutdown + eps
        idx = int(np.argmax(np.where(allowed, prev, -np.inf)))
    return p


def oracle_solve(problem: RobustProblem, grid_step: float = 1.0, max_horizon: int = MAX_HORIZON) -> SolveResult:
    """Best schedule with outputs on the grid p_min + k * grid_step (plus p_max)."""
    if grid_step <= 0:
        raise ValueError("grid step must be positive")
    T = problem.horizon
    if T > max_horizon:
        raise ValueError(f"horizon {T} exceeds the oracle limit {max_horizon}")
    start = time.perf_counter()
    unit = problem.unit
    grid = output_grid(unit, grid_step)
    if unit.initial_on:
        grid = np.unique(np.append(grid, unit.initial_output))
    prices = problem.objective_prices
    base = (prices[:, None] - unit.cost_b) * grid[None, :] - unit.cost_a * grid[None, :] ** 2 - unit.cost_fixed

    if problem.flavor is Flavor.ROBUST and problem.model.gamma > 0 and problem.model.deviations.any():
        d = problem.model.deviations
        gamma = problem.model.gamma
        zs = np.unique(np.concatenate([[0.0], (d[:, None] * grid[None, :]).ravel()]))
        loss = np.maximum(d[:, None, None] * grid[None, None, :] - zs[None, :, None], 0.0)
        hour_values = base[:, None, :] - loss
        z_charge = gamma * zs
    else:
        zs = np.zeros(1)
        hour_values = base[:, None, :]
        z_charge = np.zeros(1)

    lo, hi = _windows(unit, grid)
    best = (-math.inf, None, None)
    count = 0
    for u in commitments(unit, T):
        count += 1
        last = _forward(unit, u, hour_values, grid, lo, hi)[-1]
        totals = (last.max(axis=1) if u[-1] else last) - z_charge - _startup_cost(unit, u)
        k = int(np.argmax(totals))
        if totals[k] > best[0]:
            best = (float(totals[k]), u, k)

    value, u, k = best
    if u is None:
        return SolveResult(None, -math.inf, -math.inf, math.inf, INFEASIBLE, count, time.perf_counter() - start)
    values = _forward(unit, u, hour_values[:, k : k + 1, :], grid, lo, hi)
    p = _trace_back(unit, u, values, grid, lo, hi)
    schedule = schedule_from_commitment(unit, p, np.array(u, dtype=float))
    objective = problem.objective_at(schedule)
    z = q = None
    if problem.flavor is Flavor.ROBUST:
        _, z, q = eval_dev_dual(problem.model.deviations, p, problem.model.gamma)
    return SolveResult(schedule, objective, objective, 0.0, OPTIMAL, count, time.perf_counter() - start, z, q)


def grid_error_bound(problem: RobustProblem, grid_step: float) -> float:
    """Largest profit the grid can lose against the continuous optimum.

    Rounding each output down to the grid moves it by less than one step;
    profit changes by at most the largest hourly slope times the step per
    hour.  Valid when every MW parameter of the unit is a multiple of the
    step (so rounding keeps ramp feasibility).
    """
    unit = problem.unit
    prices = problem.objective_prices
    slope = np.maximum(np.abs(prices - unit.cost_b), np.abs(prices - unit.cost_b - 2 * unit.cost_a * unit.p_max))
    if problem.flavor is Flavor.ROBUST:
        slope = slope + problem.model.deviations
    return float(slope.max()) * grid_step * problem.horizon
