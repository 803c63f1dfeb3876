"""Generation-unit data model, generation cost and schedule feasibility.

The feasible set is the single-unit commitment polytope with startup-cost
linking, output bounds, ramp limits (with separate startup/shutdown limits),
convex-hull minimum up/down inequalities and the status/startup/shutdown
logical link.  Hours are numbered 1..T in messages and 0..T-1 in arrays.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import MISSING, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FAMILIES = (
    "domain",
    "startup-cost",
    "output-bounds",
    "ramp-up",
    "ramp-down",
    "min-up",
    "min-down",
    "logical",
)


class UnitFileError(ValueError):
    """A unit file could not be parsed or violates the schema."""

    def __init__(self, source: str, line: int | None, message: str):
        self.source = source
        self.line = line
        self.message = message
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class UnitSpec:
    p_min: float
    p_max: float
    ramp_up: float
    ramp_down: float
    ramp_startup: float
    ramp_shutdown: float
    min_up: int
    min_down: int
    cost_a: float
    cost_b: float
    cost_fixed: float
    suc_schedule: tuple[float, ...] = ()
    initial_on: bool = False
    initial_hours: int = 1
    initial_output: float = 0.0
    name: str = "unit"
    zone: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "suc_schedule", tuple(float(c) for c in self.suc_schedule))
        problems = self.problems()
        if problems:
            key, msg = problems[0]
            raise ValueError(f"{key}: {msg}")
        if self.ramp_startup < self.p_min:
            warnings.warn(
                f"unit {self.name!r}: ramp_startup {self.ramp_startup} < p_min {self.p_min}, "
                "the unit can never start",
                stacklevel=3,
            )

    def problems(self) -> list[tuple[str, str]]:
        """Return (field, message) pairs for every violated invariant."""
        out = []
        if not (0 <= self.p_min <= self.p_max):
            out.append(("p_min", "need 0 <= p_min <= p_max"))
        for key in ("ramp_up", "ramp_down", "ramp_startup", "ramp_shutdown"):
            if not getattr(self, key) > 0:
                out.append((key, "ramp limits must be > 0"))
        for key in ("min_up", "min_down"):
            if int(getattr(self, key)) != getattr(self, key) or getattr(self, key) < 1:
                out.append((key, "must be an integer >= 1"))
        if self.cost_a < 0:
            out.append(("cost_a", "quadratic cost coefficient must be >= 0"))
        suc = self.suc_schedule
        if any(c < 0 for c in suc):
            out.append(("suc_schedule", "startup costs must be >= 0"))
        elif any(b < a for a, b in zip(suc, suc[1:])):
            out.append(("suc_schedule", "startup costs must be non-decreasing in off-duration"))
        if self.initial_hours < 1:
            out.append(("initial_hours", "must be >= 1"))
        if self.initial_on and not (self.p_min <= self.initial_output <= self.p_max):
            out.append(("initial_output", "an online unit needs p_min <= initial_output <= p_max"))
        if not self.initial_on and self.initial_output != 0:
            out.append(("initial_output", "an offline unit must have initial_output = 0"))
        return out

    @property
    def u0(self) -> int:
        return int(self.initial_on)

    def pre_status(self, t: int) -> int:
        """Commitment status at a pre-horizon hour t <= 0.

        The unit has been in its initial state for ``initial_hours`` hours and
        in the opposite state before that.
        """
        inside = t > -self.initial_hours
        return int(self.initial_on) if inside else int(not self.initial_on)

    def pre_startup(self, t: int) -> int:
        return int(self.initial_on and t == 1 - self.initial_hours)

    def pre_shutdown(self, t: int) -> int:
        return int((not self.initial_on) and t == 1 - self.initial_hours)

    def status_at(self, u: Sequence[float], t: int) -> float:
        """u_t for array index t, falling back to the pre-horizon history for t < 0."""
        return u[t] if t >= 0 else self.pre_status(t + 1)


@dataclass(frozen=True)
class Schedule:
    p: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    suc: np.ndarray

    def __post_init__(self):
        n = len(self.p)
        for name in ("p", "u", "v", "w", "suc"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"schedule field {name} has shape {arr.shape}, expected ({n},)")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def horizon(self) -> int:
        return len(self.p)

    def __eq__(self, other):
        if not isinstance(other, Schedule):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("p", "u", "v", "w", "suc"))

    __hash__ = None


@dataclass(frozen=True)
class Violation:
    family: str
    hour: int
    lhs: float
    rhs: float
    slack: float


@dataclass(frozen=True)
class ViolationReport:
    violations: tuple[Violation, ...] = ()

    def __bool__(self):
        return bool(self.violations)

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    @property
    def families(self) -> set[str]:
        return {v.family for v in self.violations}

    def describe(self) -> str:
        return "; ".join(
            f"{v.family} at hour {v.hour}: {v.lhs:g} vs {v.rhs:g} (slack {v.slack:g})" for v in self.violations
        )


def startup_costs(unit: UnitSpec, u: Sequence[float]) -> np.ndarray:
    """Smallest startup-cost values satisfying the linking constraints for commitment u."""
    u = np.asarray(u, dtype=float)
    out = np.zeros(len(u))
    for t in range(len(u)):
        best = 0.0
        running = 0.0
        for tau, c in enumerate(unit.suc_schedule, start=1):
            running += unit.status_at(u, t - tau)
            best = max(best, c * (u[t] - running))
        out[t] = best
    return out


def schedule_from_commitment(unit: UnitSpec, p: Sequence[float], u: Sequence[float]) -> Schedule:
    """Complete (p, u) with startup/shutdown indicators and minimal startup costs."""
    u = np.asarray(u, dtype=float)
    prev = np.concatenate([[unit.u0], u[:-1]])
    v = np.maximum(u - prev, 0.0)
    w = np.maximum(prev - u, 0.0)
    return Schedule(np.asarray(p, dtype=float), u, v, w, startup_costs(unit, u))


def schedule_from_dispatch(unit: UnitSpec, p: Sequence[float], tol: float = 1e-9) -> Schedule:
    """Infer the commitment from a dispatch vector: on wherever output is positive."""
    p = np.asarray(p, dtype=float)
    return schedule_from_commitment(unit, p, (p > tol).astype(float))


def generation_cost(unit: UnitSpec, schedule: Schedule) -> tuple[float, np.ndarray]:
    """Total and hourly cost a*p^2 + b*p + c_F*u + suc."""
    p, u, suc = schedule.p, schedule.u, schedule.suc
    if not (len(p) == len(u) == len(suc)):
        raise ValueError("schedule vectors have mismatched horizon lengths")
    hourly = unit.cost_a * p * p + unit.cost_b * p + unit.cost_fixed * u + suc
    return float(hourly.sum()), hourly


def profit(unit: UnitSpec, schedule: Schedule, prices: Sequence[float]) -> float:
    """Revenue at the given prices minus generation cost."""
    prices = np.asarray(prices, dtype=float)
    if prices.shape != schedule.p.shape:
        raise ValueError(f"got {len(prices)} prices for a {schedule.horizon}-hour schedule")
    cost, _ = generation_cost(unit, schedule)
    return float(prices @ schedule.p) - cost


def check_feasibility(unit: UnitSpec, schedule: Schedule, tol: float = 1e-6) -> ViolationReport:
    p, u, v, w, suc = schedule.p, schedule.u, schedule.v, schedule.w, schedule.suc
    T = schedule.horizon
    found: list[Violation] = []

    def le(family, t, lhs, rhs):
        if lhs > rhs + tol:
            found.append(Violation(family, t + 1, float(lhs), float(rhs), float(rhs - lhs)))

    def ge(family, t, lhs, rhs):
        if lhs < rhs - tol:
            found.append(Violation(family, t + 1, float(lhs), float(rhs), float(lhs - rhs)))

    def v_at(t):
        return v[t] if t >= 0 else unit.pre_startup(t + 1)

    def w_at(t):
        return w[t] if t >= 0 else unit.pre_shutdown(t + 1)

    for t in range(T):
        for name, arr in (("u", u), ("v", v), ("w", w)):
            if min(abs(arr[t]), abs(arr[t] - 1)) > tol:
                found.append(Violation("domain", t + 1, float(arr[t]), float(round(arr[t])), -abs(arr[t] - round(arr[t]))))
        ge("domain", t, p[t], 0.0)
        ge("domain", t, suc[t], 0.0)

        running = 0.0
        for tau, c in enumerate(unit.suc_schedule, start=1):
            running += unit.status_at(u, t - tau)
            ge("startup-cost", t, suc[t], c * (u[t] - running))

        ge("output-bounds", t, p[t], unit.p_min * u[t])
        le("output-bounds", t, p[t], unit.p_max * u[t])

        p_prev = p[t - 1] if t > 0 else unit.initial_output
        u_prev = unit.status_at(u, t - 1)
        le("ramp-up", t, p[t], p_prev + unit.ramp_up * u[t] + (unit.ramp_startup - unit.ramp_up) * v[t])
        ge("ramp-down", t, p[t], p_prev - unit.ramp_down * u_prev + (unit.ramp_down - unit.ramp_shutdown) * w[t])

        le("min-up", t, sum(v_at(k) for k in range(t - unit.min_up + 1, t + 1)), u[t])
        le("min-down", t, sum(w_at(k) for k in range(t - unit.min_down + 1, t + 1)), 1 - u[t])

        lhs = w[t]
        rhs = v[t] + u_prev - u[t]
        if abs(lhs - rhs) > tol:
            found.append(Violation("logical", t + 1, float(lhs), float(rhs), -abs(lhs - rhs)))
    return ViolationReport(tuple(found))


# Three cost points implied by the worked three-hour example: per-hour costs
# backed out of the profits of its three full-protection solutions.
EXAMPLE_COST_POINTS = ((160.0, 8768.0), (215.0, 11752.0), (270.0, 14917.0))


def calibrate_example_unit() -> UnitSpec:
    """The 440 MW example unit, with a quadratic cost through the implied cost points."""
    pts = np.array(EXAMPLE_COST_POINTS)
    vander = np.column_stack([pts[:, 0] ** 2, pts[:, 0], np.ones(3)])
    a, b, c = np.linalg.solve(vander, pts[:, 1])
    return UnitSpec(
        p_min=160.0,
        p_max=440.0,
        ramp_up=55.0,
        ramp_down=440.0,
        ramp_startup=160.0,
        ramp_shutdown=440.0,
        min_up=1,
        min_down=1,
        cost_a=float(a),
        cost_b=float(b),
        cost_fixed=float(c),
        suc_schedule=(0.0,),
        initial_on=False,
        initial_hours=1,
        initial_output=0.0,
        name="example1",
    )


# -- unit files ---------------------------------------------------------------

_FLOAT_KEYS = {
    "p_min", "p_max", "ramp_up", "ramp_down", "ramp_startup", "ramp_shutdown",
    "cost_a", "cost_b", "cost_fixed", "initial_output",
}
_INT_KEYS = {"min_up", "min_down", "initial_hours"}
_REQUIRED = {
    "p_min", "p_max", "ramp_up", "ramp_down", "ramp_startup", "ramp_shutdown",
    "min_up", "min_down", "cost_a", "cost_b", "cost_fixed",
}


def parse_unit(text: str, source: str = "<unit>") -> UnitSpec:
    """Parse the ``key = value`` unit format; '#' starts a comment.

    ``suc_schedule`` is a comma-separated list, ``initial_on`` a boolean
    (true/false/1/0).  ``name`` defaults to the file stem.
    """
    values: dict = {}
    lines: dict[str, int] = {}
    known = {f.name for f in fields(UnitSpec)}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UnitFileError(source, lineno, f"expected 'key = value', got {raw.strip()!r}")
        key, _, val = (s.strip() for s in line.partition("="))
        if key not in known:
            raise UnitFileError(source, lineno, f"unknown key {key!r}")
        if key in values:
            raise UnitFileError(source, lineno, f"duplicate key {key!r}")
        try:
            values[key] = _convert(key, val)
        except ValueError as exc:
            raise UnitFileError(source, lineno, f"bad value for {key}: {exc}") from None
        lines[key] = lineno
    missing = sorted(_REQUIRED - values.keys())
    if missing:
        n = len(text.splitlines())
        raise UnitFileError(source, n, f"missing required key(s): {', '.join(missing)}")
    values.setdefault("name", Path(source).stem)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        probe = object.__new__(UnitSpec)
        for f in fields(UnitSpec):
            default = f.default if f.default is not MISSING else None
            object.__setattr__(probe, f.name, values.get(f.name, default))
        object.__setattr__(probe, "suc_schedule", tuple(values.get("suc_schedule", ())))
        problems = probe.problems()
    if problems:
        key, msg = problems[0]
        raise UnitFileError(source, lines.get(key), f"{key}: {msg}")
    return UnitSpec(**values)


def _convert(key: str, val: str):
    if key in _FLOAT_KEYS:
        x = float(val)
        if not math.isfinite(x):
            raise ValueError("not a finite number")
        return x
    if key in _INT_KEYS:
        return int(val)
    if key == "suc_schedule":
        return tuple(float(s) for s in val.split(",") if s.strip()) if val else ()
    if key == "initial_on":
        low = val.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {val!r}")
    return val


def read_unit(path: str | Path) -> UnitSpec:
    path = Path(path)
    return parse_unit(path.read_text(), str(path))


def format_unit(unit: UnitSpec) -> str:
    out = []
    for f in fields(UnitSpec):
        val = getattr(unit, f.name)
        if val is None:
            continue
        if f.name == "suc_schedule":
            val = ", ".join(repr(c) for c in val)
        elif isinstance(val, bool):
            val = "true" if val else "false"
        elif isinstance(val, float):
            val = repr(val)
        out.append(f"{f.name} = {val}")
    return "\n".join(out) + "\n"


def read_units(paths: Iterable[str | Path]) -> list[UnitSpec]:
    return [read_unit(p) for p in paths]
