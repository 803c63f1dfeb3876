"""Random unit-commitment instances shared by the property tests."""

import numpy as np

from gammaoffer.robust import UncertaintyModel
from gammaoffer.units import UnitSpec


def random_unit(rng, scale=5.0, max_capacity=300):
    """A unit whose MW parameters are multiples of ``scale``."""
    step = lambda lo, hi: float(scale * rng.integers(int(lo // scale), int(hi // scale) + 1))
    p_min = step(20, max_capacity * 0.4)
    p_max = p_min + step(scale, max_capacity * 0.6)
    on = bool(rng.random() < 0.5)
    suc = np.sort(rng.uniform(0, 800, size=rng.integers(1, 4))).round(1)
    return UnitSpec(
        p_min=p_min,
        p_max=p_max,
        ramp_up=step(scale, p_max / 2),
        ramp_down=step(scale, p_max / 2),
        ramp_startup=max(p_min, step(scale, p_max)),
        ramp_shutdown=max(p_min, step(scale, p_max)),
        min_up=int(rng.integers(1, 5)),
        min_down=int(rng.integers(1, 5)),
        cost_a=float(rng.uniform(0.002, 0.05)).__round__(4),
        cost_b=float(rng.uniform(25, 45)).__round__(2),
        cost_fixed=float(rng.uniform(0, 800)).__round__(1),
        suc_schedule=tuple(float(c) for c in suc),
        initial_on=on,
        initial_hours=int(rng.integers(1, 6)),
        initial_output=p_min if on else 0.0,
        name="rand",
    )


def random_model(rng, unit, horizon=24, gamma=None):
    """Prices around the unit's break-even price at mid output, with deviations."""
    mid = 0.5 * (unit.p_min + unit.p_max)
    breakeven = unit.cost_b + unit.cost_a * mid + unit.cost_fixed / mid
    phase = rng.uniform(0, 2 * np.pi)
    shape = 6.0 * np.sin(np.arange(horizon) * 2 * np.pi / 24 + phase)
    nominal = (breakeven + shape + rng.normal(2.0, 5.0, horizon)).clip(0).round(2)
    dev = (rng.uniform(0, 0.25, horizon) * nominal).round(2)
    if gamma is None:
        gamma = int(rng.integers(0, horizon + 1))
    return UncertaintyModel(nominal, dev, gamma)
