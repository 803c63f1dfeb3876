"""Acceptance criteria 1-8, one test each, with a PASS/FAIL line per criterion."""

import time
import warnings

import numpy as np
import pytest

from gammaoffer import barcon
from gammaoffer.backtest import backtest_run, format_report
from gammaoffer.cli import main, resolve_unit_path
from gammaoffer.oracle import grid_error_bound, oracle_solve
from gammaoffer.prices import gen_synthetic, make_windows, stats_from_observations
from gammaoffer.robust import (
    Flavor,
    RobustProblem,
    UncertaintyModel,
    build_nominal,
    build_robust,
    eval_dev,
    eval_dev_dual,
    worst_case_equivalent,
)
from gammaoffer.solver import OPTIMAL, SolverConfig, solve
from gammaoffer.units import calibrate_example_unit, check_feasibility, read_unit

from instances import random_model, random_unit

TIGHT = SolverConfig(gap_tol=1e-9)


def rel(a, b):
    return abs(a - b) / max(1.0, abs(a), abs(b))


def test_criterion_1_example(verdict):
    unit = calibrate_example_unit()
    cfg = barcon.example_config()
    expected = [((160, 215, 270), 1498), ((0, 160, 215), 1020), ((0, 0, 160), 672)]
    problems = []
    slowest = 0.0
    for k, (outputs, value) in enumerate(expected, start=1):
        model = UncertaintyModel(cfg.price_max, cfg.shortfall(k), cfg.horizon)
        start = time.perf_counter()
        res = solve(worst_case_equivalent(unit, model))
        elapsed = time.perf_counter() - start
        slowest = max(slowest, elapsed)
        if res.p.tolist() != list(outputs):
            problems.append(f"C{k} outputs {res.p.tolist()}")
        if abs(res.objective - value) > 0.01 * value:
            problems.append(f"C{k} profit {res.objective:.2f}")
        if elapsed >= 1.0:
            problems.append(f"C{k} took {elapsed:.2f} s")
    ok = verdict(1, not problems, "; ".join(problems) or f"outputs and profits match, slowest solve {slowest * 1e3:.1f} ms")
    assert ok, problems


def test_criterion_2_barcon_audit(verdict, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("GOFFER_DATA_DIR", str(tmp_path))
    code = main(["barcon-demo"])
    out = capsys.readouterr().out
    unit = calibrate_example_unit()
    _, curve = barcon.barcon_run(unit, barcon.example_config())
    table = (
        ((0, 52), (0, 53), (160, 54)),
        ((0, 53), (160, 54), (215, 55)),
        ((160, 59), (215, 60), (270, 61)),
    )
    findings = barcon.audit_curves(unit, curve, barcon.EXAMPLE_SCENARIOS)
    infeasible, sub = findings
    checks = {
        "exit code": code == 0,
        "curves": curve.steps == table,
        "infeasible kind": infeasible.kind == "ramp-infeasible",
        "infeasible dispatch": infeasible.accepted.tolist() == [0, 0, 270],
        "violation": [(v.family, v.hour) for v in infeasible.violations] == [("ramp-up", 3)],
        "suboptimal kind": sub.kind == "suboptimal",
        "achieved": abs(sub.achieved - 544) <= 5.44,
        "optimum": abs(sub.optimum - 672) <= 6.72,
        "printed": "ramp-infeasible" in out and "544.00" in out and "672.00" in out,
    }
    bad = [k for k, v in checks.items() if not v]
    ok = verdict(2, not bad, f"failed checks: {bad}" if bad else f"curves match, achieved {sub.achieved:.2f} vs {sub.optimum:.2f} EUR")
    assert ok


def test_criterion_3_equivalences(verdict):
    rng = np.random.default_rng(2024)
    worst = {"a": 0.0, "b": 0.0, "c": 0.0}
    for _ in range(50):
        unit = random_unit(rng)
        model = random_model(rng, unit, 24)
        zero = UncertaintyModel(model.nominal, model.deviations, 0)
        a1 = solve(build_robust(unit, zero), TIGHT).objective
        a2 = solve(build_nominal(unit, model.nominal), TIGHT).objective
        full = UncertaintyModel(model.nominal, model.deviations, 24)
        b1 = solve(build_robust(unit, full), TIGHT).objective
        b2 = solve(worst_case_equivalent(unit, full), TIGHT).objective
        c1 = solve(build_robust(unit, model), TIGHT).objective
        c2 = solve(build_robust(unit, model, link_aux=True), TIGHT).objective
        worst["a"] = max(worst["a"], rel(a1, a2))
        worst["b"] = max(worst["b"], rel(b1, b2))
        worst["c"] = max(worst["c"], rel(c1, c2))
    ok = verdict(3, max(worst.values()) <= 1e-6, "50 instances, worst relative gaps " + ", ".join(f"({k}) {v:.1e}" for k, v in worst.items()))
    assert ok


def test_criterion_4_strong_duality(verdict):
    rng = np.random.default_rng(7)
    worst_gap = 0.0
    monotone = homogeneous = True
    for _ in range(1000):
        T = int(rng.integers(1, 25))
        d = rng.uniform(0, 30, T) * (rng.random(T) < 0.8)
        p = rng.uniform(0, 500, T) * (rng.random(T) < 0.8)
        gamma = int(rng.integers(0, T + 1))
        primal = eval_dev(d, p, gamma)
        dual, _, _ = eval_dev_dual(d, p, gamma)
        worst_gap = max(worst_gap, abs(primal - dual) / max(1.0, abs(primal)))
        values = [eval_dev(d, p, g) for g in range(T + 1)]
        monotone &= all(b >= a for a, b in zip(values, values[1:]))
        k = rng.uniform(0, 5)
        homogeneous &= rel(eval_dev(d, k * p, gamma), k * primal) <= 1e-9
    ok = verdict(4, worst_gap <= 1e-9 and monotone and homogeneous, f"1000 cases, worst relative gap {worst_gap:.1e}, monotone {monotone}, homogeneous {homogeneous}")
    assert ok


def test_criterion_5_oracle(verdict):
    rng = np.random.default_rng(5)
    flavors = [Flavor.ROBUST, Flavor.NOMINAL, Flavor.WORST_CASE]
    failures = []
    config = SolverConfig()
    for i in range(200):
        unit = random_unit(rng, max_capacity=150)
        T = int(rng.integers(2, 7))
        model = random_model(rng, unit, T)
        flavor = flavors[i % 3]
        if flavor is Flavor.NOMINAL:
            model = UncertaintyModel(model.nominal, model.deviations, 0)
        elif flavor is Flavor.WORST_CASE:
            model = UncertaintyModel(model.nominal, model.deviations, T)
        problem = RobustProblem(unit, model, flavor)
        res = solve(problem, config)
        ref = oracle_solve(problem, 1.0)
        err = grid_error_bound(problem, 1.0)
        low = ref.objective - config.gap_tol * max(1.0, abs(ref.objective))
        if res.status != OPTIMAL or not (low <= res.objective <= ref.objective + err):
            failures.append(f"#{i}: bb {res.objective:.4f} oracle {ref.objective:.4f} grid {err:.3f}")
        if check_feasibility(unit, res.schedule) or check_feasibility(unit, ref.schedule):
            failures.append(f"#{i}: infeasible schedule")
    ok = verdict(5, not failures, "; ".join(failures[:3]) or "200 instances inside [oracle - gap, oracle + grid error], all schedules feasible")
    assert ok


def test_criterion_6_price_of_robustness(verdict):
    rng = np.random.default_rng(66)
    config = SolverConfig()
    bad = []
    for i in range(50):
        unit = random_unit(rng)
        model = random_model(rng, unit, 24)
        values = [solve(build_robust(unit, UncertaintyModel(model.nominal, model.deviations, g)), config).objective for g in range(25)]
        for g in range(24):
            # each value is optimal up to the relative gap tolerance
            if values[g + 1] > values[g] + config.gap_tol * max(1.0, abs(values[g])):
                bad.append(f"#{i} gamma {g}->{g + 1}: {values[g]:.4f} -> {values[g + 1]:.4f}")
    ok = verdict(6, not bad, "; ".join(bad[:3]) or "50 instances, robust optimum non-increasing over gamma 0..24")
    assert ok


@pytest.fixture(scope="module")
def sweep():
    unit = read_unit(resolve_unit_path("ccgt"))
    series = gen_synthetic(2014)
    start = time.perf_counter()
    report = backtest_run([unit], series, [0, 2, 4], range(25))
    return unit, series, report, time.perf_counter() - start


def test_criterion_7_backtest_accounting(verdict, sweep):
    unit, series, report, elapsed = sweep
    windows = {w.index: w for w in make_windows(series)}
    problems = []
    if len(report.records) != 1800 or report.failures:
        problems.append(f"{len(report.records)} records, {len(report.failures)} failures")
    offers = {}
    for rec in report.records:
        w = windows[rec.window]
        key = (rec.trim, rec.gamma, rec.window)
        if key not in offers:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                stats = stats_from_observations(series.day_matrix(w.train_dates), rec.trim)
            offers[key] = solve(build_robust(unit, UncertaintyModel(stats.nominal, stats.deviation, rec.gamma))).schedule
        s = offers[key]
        hourly_cost = unit.cost_a * s.p**2 + unit.cost_b * s.p + unit.cost_fixed * s.u + s.suc
        expected = sum(float(np.dot(day, s.p) - hourly_cost.sum()) for day in series.day_matrix(w.eval_dates))
        if rel(rec.profit, expected) > 1e-9:
            problems.append(f"record {key}: {rec.profit} vs {expected}")
    for row in report.rows:
        for g, total in row.yearly.items():
            weekly = sum(r.profit for r in report.records if (r.trim, r.gamma) == (row.trim, g))
            if rel(total, weekly) > 1e-12:
                problems.append(f"yearly J={row.trim} gamma={g}")
    if elapsed >= 600:
        problems.append(f"sweep took {elapsed:.0f} s")
    ok = verdict(7, not problems, "; ".join(problems[:3]) or f"1800 records recompute, yearly sums consistent, sweep {elapsed:.0f} s")
    assert ok


def test_criterion_8_gamma_best_observation(verdict, sweep):
    _, _, report, _ = sweep
    text, _ = format_report(report)
    print(text)
    best = {row.trim: row.gamma_best for row in report.rows}
    consistent = all(row.best >= max(row.yearly[0], row.yearly[24]) for row in report.rows)
    inside = sorted(j for j, g in best.items() if 1 <= g <= 4)
    detail = (
        "reference euro figures not reproduced (proprietary units and prices); "
        f"synthetic year gamma_best by J: {best}, inside 1..4 for J in {inside or 'none'}"
    )
    # the location of gamma_best is reported, not asserted; the argmax property is
    ok = verdict(8, consistent and len(report.rows) == 3, detail)
    assert ok
