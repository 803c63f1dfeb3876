"""Branch-and-bound over commitment binaries with convex QP relaxations.

Only u_t is branched on: once u is integral, the convex-hull minimum up/down
rows together with the logical link force v and w to be integral too.  Each
node's continuous relaxation is a convex QP (diagonal Hessian 2a on the
outputs) solved by the Clarabel interior-point solver; the model is set up
once per solve and nodes only change the bounds of the u columns.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field

import clarabel
import numpy as np
from scipy import sparse

from .robust import Flavor, RobustProblem, eval_dev_dual
from .units import Schedule, check_feasibility, schedule_from_commitment

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
NODE_LIMIT = "node-limit"
TIME_LIMIT = "time-limit"
INFEASIBLE = "infeasible"


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    gap_tol: float = 1e-6
    feas_tol: float = 1e-6
    node_limit: int = 10**6
    time_limit: float = 10.0
    branching: str = "most-fractional"
    # keep (node, parent, bound) triples for inspection
    trace: bool = False

    def __post_init__(self):
        if not (self.gap_tol > 0 and self.feas_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.branching != "most-fractional":
            raise ValueError(f"unknown branching rule {self.branching!r}")


@dataclass(frozen=True, eq=False)
class SolveResult:
    schedule: Schedule | None
    objective: float
    bound: float
    gap: float
    status: str
    nodes: int
    wall_time: float
    z: float | None = None
    q: np.ndarray | None = None
    trace: tuple = field(default=(), repr=False)

    @property
    def p(self) -> np.ndarray:
        return self.schedule.p


def relative_gap(bound: float, objective: float) -> float:
    if not math.isfinite(objective):
        return math.inf
    return max(0.0, bound - objective) / max(1.0, abs(objective))


@dataclass(frozen=True)
class _Layout:
    T: int
    robust: bool
    aux: bool

    @property
    def p(self):
        return np.arange(0, self.T)

    @property
    def u(self):
        return np.arange(self.T, 2 * self.T)

    @property
    def v(self):
        return np.arange(2 * self.T, 3 * self.T)

    @property
    def w(self):
        return np.arange(3 * self.T, 4 * self.T)

    @property
    def suc(self):
        return np.arange(4 * self.T, 5 * self.T)

    @property
    def z(self):
        return 5 * self.T

    @property
    def q(self):
        return np.arange(5 * self.T + 1, 6 * self.T + 1)

    @property
    def y(self):
        return np.arange(6 * self.T + 1, 7 * self.T + 1)

    @property
    def n(self):
        if not self.robust:
            return 5 * self.T
        return 7 * self.T + 1 if self.aux else 6 * self.T + 1


class _Rows:
    def __init__(self, n):
        self.n = n
        self.data, self.rows, self.cols = [], [], []
        self.lo, self.hi = [], []

    def add(self, coeffs, lo=-math.inf, hi=math.inf):
        r = len(self.lo)
        for j, a in coeffs:
            if a != 0:
                self.rows.append(r)
                self.cols.append(int(j))
                self.data.append(float(a))
        self.lo.append(lo)
        self.hi.append(hi)

    def matrix(self):
        return sparse.csc_matrix((self.data, (self.rows, self.cols)), shape=(len(self.lo), self.n))


def build_arrays(problem: RobustProblem):
    """Minimisation form of the problem: (layout, cost, hessian diag, A, row bounds, column bounds)."""
    unit = problem.unit
    T = problem.horizon
    robust = problem.flavor is Flavor.ROBUST
    L = _Layout(T, robust, problem.link_aux)
    n = L.n
    p, u, v, w, suc = L.p, L.u, L.v, L.w, L.suc

    cost = np.zeros(n)
    hess = np.zeros(n)
    cost[p] = unit.cost_b - problem.objective_prices
    hess[p] = 2.0 * unit.cost_a
    cost[u] = unit.cost_fixed
    cost[suc] = 1.0
    col_lo = np.zeros(n)
    col_hi = np.full(n, math.inf)
    col_hi[p] = unit.p_max
    col_hi[u] = col_hi[v] = col_hi[w] = 1.0
    if robust:
        gamma = problem.model.gamma
        cost[L.z] = gamma
        cost[L.q] = 1.0
        if problem.link_aux:
            col_hi[L.y] = unit.p_max

    rows = _Rows(n)
    u0 = unit.u0
    for t in range(T):
        # startup-cost linking, pre-horizon statuses moved to the bound
        pre = 0.0
        for tau, c in enumerate(unit.suc_schedule, start=1):
            if t - tau < 0:
                pre += unit.pre_status(t - tau + 1)
            if c == 0 or pre >= 1:
                continue
            row = [(suc[t], 1.0), (u[t], -c)]
            row += [(u[t - j], c) for j in range(1, tau + 1) if t - j >= 0]
            rows.add(row, lo=-c * pre)

        rows.add([(p[t], 1.0), (u[t], -unit.p_min)], lo=0.0)
        rows.add([(p[t], 1.0), (u[t], -unit.p_max)], hi=0.0)

        up = [(p[t], 1.0), (u[t], -unit.ramp_up), (v[t], -(unit.ramp_startup - unit.ramp_up))]
        down = [(p[t], 1.0), (w[t], -(unit.ramp_down - unit.ramp_shutdown))]
        if t > 0:
            rows.add(up + [(p[t - 1], -1.0)], hi=0.0)
            rows.add(down + [(p[t - 1], -1.0), (u[t - 1], unit.ramp_down)], lo=0.0)
        else:
            rows.add(up, hi=unit.initial_output)
            rows.add(down, lo=unit.initial_output - unit.ramp_down * u0)

        pre_v = sum(unit.pre_startup(k + 1) for k in range(t - unit.min_up + 1, 0))
        rows.add([(v[k], 1.0) for k in range(max(0, t - unit.min_up + 1), t + 1)] + [(u[t], -1.0)], hi=-pre_v)
        pre_w = sum(unit.pre_shutdown(k + 1) for k in range(t - unit.min_down + 1, 0))
        rows.add([(w[k], 1.0) for k in range(max(0, t - unit.min_down + 1), t + 1)] + [(u[t], 1.0)], hi=1.0 - pre_w)

        if t > 0:
            rows.add([(w[t], 1.0), (v[t], -1.0), (u[t - 1], -1.0), (u[t], 1.0)], lo=0.0, hi=0.0)
        else:
            rows.add([(w[t], 1.0), (v[t], -1.0), (u[t], 1.0)], lo=float(u0), hi=float(u0))

        if robust:
            d = problem.model.deviations[t]
            carrier = L.y[t] if problem.link_aux else p[t]
            rows.add([(L.z, 1.0), (L.q[t], 1.0), (carrier, -d)], lo=0.0)
            if problem.link_aux:
                rows.add([(p[t], 1.0), (L.y[t], -1.0)], hi=0.0)

    return L, cost, hess, rows.matrix(), np.array(rows.lo), np.array(rows.hi), col_lo, col_hi


class _Relaxation:
    """The continuous relaxation as a Clarabel conic QP; nodes only rebound u.

    Clarabel is set up once per problem and re-solved after rewriting the
    right-hand sides of the u bound rows.
    """

    def __init__(self, problem: RobustProblem):
        L, cost, hess, A, row_lo, row_hi, col_lo, col_hi = build_arrays(problem)
        self.layout = L
        n = L.n
        eq = np.isfinite(row_lo) & (row_lo == row_hi)
        up = ~eq & np.isfinite(row_hi)
        lo = ~eq & np.isfinite(row_lo)
        eye = sparse.identity(n, format="csr")
        has_hi = np.isfinite(col_hi)
        blocks = [A[eq], A[up], -A[lo], eye[has_hi], -eye]
        rhs = [row_hi[eq], row_hi[up], -row_lo[lo], col_hi[has_hi], -col_lo]
        self.A = sparse.vstack(blocks).tocsc()
        self.b = np.concatenate(rhs)
        offset = int(eq.sum() + up.sum() + lo.sum())
        hi_pos = offset + np.cumsum(has_hi) - 1
        self.u_hi_rows = hi_pos[L.u]
        self.u_lo_rows = offset + int(has_hi.sum()) + L.u
        P = sparse.diags(hess, format="csc")
        cones = [clarabel.ZeroConeT(int(eq.sum())), clarabel.NonnegativeConeT(self.A.shape[0] - int(eq.sum()))]
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.presolve_enable = False
        self.solver = clarabel.DefaultSolver(P, cost, self.A, self.b, cones, settings)
        self.solves = 0
        self.n_eq = int(eq.sum())
        self.hess = hess
        self.cost = cost

    def rhs(self, fixed: dict[int, int]) -> np.ndarray:
        b = self.b.copy()
        for t, val in fixed.items():
            b[self.u_hi_rows[t]] = val
            b[self.u_lo_rows[t]] = -val
        return b

    def refine(self, fixed: dict[int, int], x: np.ndarray, tol: float = 1e-4) -> np.ndarray | None:
        """Re-solve the KKT system on the rows active at x, removing interior-point round-off.

        Returns None when the refined point leaves the feasible region.
        """
        A = self.A.toarray()
        b = self.rhs(fixed)
        slack = b - A @ x
        active = (np.arange(len(b)) < self.n_eq) | (slack <= tol * np.maximum(1.0, np.abs(b)))
        Aa = A[active]
        n, m = len(x), int(active.sum())
        kkt = np.block([[np.diag(self.hess), Aa.T], [Aa, np.zeros((m, m))]])
        rhs = np.concatenate([-self.cost, b[active]])
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        sol += np.linalg.lstsq(kkt, rhs - kkt @ sol, rcond=None)[0]
        xr = sol[:n]
        resid = A @ xr - b
        if np.any(resid[self.n_eq :] > 1e-9) or np.any(np.abs(resid[: self.n_eq]) > 1e-9):
            return None
        return xr

    def solve(self, fixed: dict[int, int]):
        """Bound and solution vector for a partial fixing of u, or (-inf, None) if infeasible."""
        b = self.rhs(fixed)
        self.solver.update(b=b)
        sol = self.solver.solve()
        self.solves += 1
        status = str(sol.status)
        if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            return -math.inf, None
        if status not in ("Solved", "AlmostSolved"):
            raise SolverError(f"relaxation solve ended with status {status}")
        # the dual objective keeps the bound on the safe side of solver round-off
        bound = -min(sol.obj_val, sol.obj_val_dual)
        return bound, np.array(sol.x)


def qp_relaxation(problem: RobustProblem, fixed: dict[int, int] | None = None):
    """Upper bound over all completions of a partial u assignment (hour index -> 0/1).

    Returns ``(bound, x)`` with x the relaxed solution vector, or
    ``(-inf, None)`` when the fixing admits no relaxed solution (prune).
    """
    return _Relaxation(problem).solve(dict(fixed or {}))


def _commitment(x, layout, tol):
    u = x[layout.u]
    frac = np.abs(u - np.round(u))
    return u, frac


def _polish(problem: RobustProblem, rel: _Relaxation, u_int: np.ndarray, refine: bool = False):
    """Exact dispatch optimum for an integral commitment, as a clean schedule."""
    fixed = {t: int(val) for t, val in enumerate(u_int)}
    bound, x = rel.solve(fixed)
    if x is None:
        return None
    if refine:
        x = rel.refine(fixed, x)
        if x is None:
            return None
    unit = problem.unit
    p = np.clip(x[rel.layout.p], 0.0, unit.p_max) * u_int
    # snap onto the output band lost to solver round-off
    p = np.where(u_int > 0, np.clip(p, unit.p_min, unit.p_max), 0.0)
    schedule = schedule_from_commitment(unit, p, u_int)
    return schedule, problem.objective_at(schedule)


def solve(problem: RobustProblem, config: SolverConfig | None = None) -> SolveResult:
    config = config or SolverConfig()
    start = time.perf_counter()
    rel = _Relaxation(problem)
    L = rel.layout
    T = L.T
    trace = []

    root_bound, x = rel.solve({})
    if x is None:
        return SolveResult(None, -math.inf, -math.inf, math.inf, INFEASIBLE, 1, time.perf_counter() - start)

    best_obj = -math.inf
    best_sched = None
    best_key = None
    tried: set[tuple] = set()

    def offer(u_int):
        nonlocal best_obj, best_sched, best_key
        key = tuple(int(v) for v in u_int)
        if key in tried:
            return
        tried.add(key)
        got = _polish(problem, rel, np.array(key, dtype=float))
        if got is None:
            return
        sched, obj = got
        if check_feasibility(problem.unit, sched, config.feas_tol):
            log.debug("discarding polished schedule that fails the feasibility check")
            return
        # deterministic incumbent: best objective, then lexicographically smallest schedule
        if obj > best_obj + 1e-9 or (abs(obj - best_obj) <= 1e-9 and best_key is not None and tuple(sched.p) < best_key):
            best_obj, best_sched, best_key = obj, sched, tuple(sched.p)

    counter = 0
    heap = [(-root_bound, counter, {}, x, root_bound)]
    nodes = 1
    if config.trace:
        trace.append((0, None, root_bound))
    status = OPTIMAL
    # largest bound among nodes discarded by the gap test rather than by bound
    dropped = -math.inf

    while heap:
        neg_bound, node_id, fixed, x, bound = heapq.heappop(heap)
        if math.isfinite(best_obj) and relative_gap(bound, best_obj) <= config.gap_tol:
            # best-first order: every open node is at least this close
            dropped = max(dropped, bound)
            heap.clear()
            break
        u, frac = _commitment(x, L, config.feas_tol)
        candidates = [t for t in range(T) if t not in fixed and frac[t] > 1e-6]
        # rounding heuristic gives an incumbent early
        offer(np.round(u))
        if not candidates:
            continue
        if nodes >= config.node_limit or time.perf_counter() - start > config.time_limit:
            status = NODE_LIMIT if nodes >= config.node_limit else TIME_LIMIT
            heapq.heappush(heap, (neg_bound, node_id, fixed, x, bound))
            break
        # most fractional, earliest hour on ties
        t_branch = min(candidates, key=lambda t: (abs(u[t] - 0.5), t))
        for val in (0, 1):
            child = dict(fixed)
            child[t_branch] = val
            child_bound, cx = rel.solve(child)
            nodes += 1
            counter += 1
            if cx is None:
                continue
            child_bound = min(child_bound, bound)
            if config.trace:
                trace.append((counter, node_id, child_bound))
            if math.isfinite(best_obj) and relative_gap(child_bound, best_obj) <= config.gap_tol:
                dropped = max(dropped, child_bound)
                continue
            heapq.heappush(heap, (-child_bound, counter, child, cx, child_bound))

    final_bound = max([dropped, best_obj] + [h[4] for h in heap])

    if best_sched is None:
        if status == OPTIMAL:
            status = INFEASIBLE
        return SolveResult(None, -math.inf, final_bound, math.inf, status, nodes, time.perf_counter() - start, trace=tuple(trace))

    # clean up interior-point round-off on the winning commitment
    got = _polish(problem, rel, best_sched.u, refine=True)
    if got is not None and not check_feasibility(problem.unit, got[0], config.feas_tol):
        if got[1] >= best_obj - 1e-7 * max(1.0, abs(best_obj)):
            best_sched, best_obj = got
            final_bound = max(final_bound, best_obj)

    z = q = None
    if problem.flavor is Flavor.ROBUST:
        _, z, q = eval_dev_dual(problem.model.deviations, best_sched.p, problem.model.gamma)
    gap = relative_gap(final_bound, best_obj)
    return SolveResult(
        best_sched, best_obj, final_bound, gap, status, nodes, time.perf_counter() - start, z, q, tuple(trace)
    )
