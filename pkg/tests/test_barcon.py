import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gammaoffer.barcon import (
    EXAMPLE_PRICES,
    BarConConfig,
    OfferingCurve,
    audit_curves,
    barcon_run,
    example_config,
    format_curve,
    merge_curves,
    simulate_acceptance,
)
from gammaoffer.robust import build_nominal
from gammaoffer.solver import solve
from gammaoffer.units import calibrate_example_unit, check_feasibility

from instances import random_model, random_unit

TABLE = (
    ((0, 52), (0, 53), (160, 54)),
    ((0, 53), (160, 54), (215, 55)),
    ((160, 59), (215, 60), (270, 61)),
)


@pytest.fixture(scope="module")
def example():
    unit = calibrate_example_unit()
    results, curve = barcon_run(unit, example_config())
    return unit, results, curve


def test_curves_match_example(example):
    _, results, curve = example
    assert curve.steps == TABLE
    assert [round(r.objective, 6) for r in results] == [1498, 1020, 672]


def test_shortcut_equals_dualised_form(example):
    unit, results, _ = example
    forced, _ = barcon_run(unit, example_config(), via_robust=True)
    for a, b in zip(results, forced):
        assert a.objective == pytest.approx(b.objective, rel=1e-6)


@pytest.mark.parametrize(
    "realized, accepted",
    [((52, 53, 61), (0, 0, 270)), ((54, 53, 59), (160, 0, 160)), ((100, 100, 100), (160, 215, 270)), ((0, 0, 0), (0, 0, 0))],
)
def test_acceptance(example, realized, accepted):
    assert simulate_acceptance(example[2], realized).tolist() == list(accepted)


def test_audit_findings(example):
    unit, _, curve = example
    findings = audit_curves(unit, curve, [(52, 53, 61), (54, 53, 59), EXAMPLE_PRICES[0]])
    assert [f.kind for f in findings] == ["ramp-infeasible", "suboptimal"]
    infeasible, sub = findings
    assert infeasible.accepted.tolist() == [0, 0, 270]
    assert [(v.family, v.hour) for v in infeasible.violations] == [("ramp-up", 3)]
    assert sub.achieved == pytest.approx(544, rel=0.01)
    assert sub.optimum == pytest.approx(672, rel=0.01)
    assert not check_feasibility(unit, sub.optimum_schedule)


def test_single_iteration_is_nominal():
    unit = calibrate_example_unit()
    top = np.array(EXAMPLE_PRICES[0])
    results, curve = barcon_run(unit, BarConConfig(top - 2, top, 0.5, 1))
    nominal = solve(build_nominal(unit, top))
    assert [h[0] for h in curve.steps] == [(q, p) for q, p in zip(nominal.p, top)]
    assert all(len(h) == 1 for h in curve.steps)


def test_zero_shortfall_collapses():
    unit = calibrate_example_unit()
    top = np.array(EXAMPLE_PRICES[0])
    _, curve = barcon_run(unit, BarConConfig(top - 2, top, 0.0, 3))
    assert all(len(h) == 1 for h in curve.steps)


def test_merge_repairs_decreasing_quantities():
    curve = merge_curves([[50.0], [49.0], [48.0]], [[100.0], [120.0], [90.0]])
    assert curve.steps == (((90.0, 48.0), (120.0, 49.0), (120.0, 50.0)),)
    assert curve.diagnostics


def test_config_invariants():
    with pytest.raises(ValueError):
        BarConConfig([50], [40], 0.1, 2)
    with pytest.raises(ValueError):
        BarConConfig([40], [50], 0.6, 3)
    with pytest.raises(ValueError):
        BarConConfig([40], [50], 0.1, 0)


def test_curve_invariants():
    with pytest.raises(ValueError):
        OfferingCurve((((10, 50), (5, 51)),))
    with pytest.raises(ValueError):
        OfferingCurve((((10, 50), (15, 50)),))


def test_step_limit_flag():
    curve = merge_curves([[50.0 + k] for k in range(5)], [[10.0 * k] for k in range(5)])
    assert curve.over_limit() == [1]
    assert curve.over_limit(5) == []


def test_curve_csv(example):
    text = format_curve(example[2])
    lines = text.splitlines()
    assert lines[0] == "hour,step,quantity_mw,price_eur_mwh"
    assert lines[1] == "1,1,0.0,52.0"
    assert len(lines) == 10


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), a=st.floats(0, 120), b=st.floats(0, 120))
def test_acceptance_monotone_in_price(seed, a, b):
    rng = np.random.default_rng(seed)
    K, T = 4, 3
    prices = np.sort(rng.uniform(20, 80, (K, T)), axis=0)
    qty = rng.uniform(0, 300, (K, T))
    curve = merge_curves(prices, qty)
    lo, hi = min(a, b), max(a, b)
    assert np.all(simulate_acceptance(curve, [lo] * T) <= simulate_acceptance(curve, [hi] * T))


def test_random_audit_optimum_is_feasible():
    rng = np.random.default_rng(42)
    unit = random_unit(rng, max_capacity=200)
    model = random_model(rng, unit, 6)
    top = model.nominal + model.deviations
    _, curve = barcon_run(unit, BarConConfig(np.maximum(top - 10, 0), top, 0.25, 4))
    scenarios = [model.nominal + rng.normal(0, 5, 6).clip(-model.nominal) for _ in range(5)]
    for f in audit_curves(unit, curve, scenarios):
        assert not check_feasibility(unit, f.optimum_schedule)
        if f.kind == "suboptimal":
            assert f.achieved < f.optimum
