"""Command-line entry point: ``gammaoffer <command> ...``.

Each run writes its outputs and a ``manifest.json`` into a directory named
after a digest of the command, its resolved configuration and the input
file contents.  ``gammaoffer replay`` re-runs a manifest and checks that
every output comes out byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from importlib import metadata, resources
from pathlib import Path

import numpy as np

from . import barcon, plotting
from .backtest import backtest_run, format_records, format_report, format_yearly
from .offering import format_offer, gamma_offering_run
from .prices import (
    InsufficientDataError,
    PriceFileError,
    format_prices,
    gen_synthetic,
    make_windows,
    read_prices,
    trim_for_pct,
    trim_stats,
)
from .robust import Flavor, RobustProblem, UncertaintyModel
from .solver import INFEASIBLE, NODE_LIMIT, OPTIMAL, TIME_LIMIT, SolverConfig, SolverError, solve
from .units import UnitFileError, calibrate_example_unit, read_unit

log = logging.getLogger("gammaoffer")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_LIMIT = 3
EXIT_INFEASIBLE = 4

DATA_DIR_ENV = "GOFFER_DATA_DIR"
BUNDLED_UNITS = ("example1", "ccgt")
# options that change where or how fast a run happens, not what it produces
_NOT_CONFIG = {"func", "jobs", "out_dir", "data_dir", "verbose", "command"}


class InputError(Exception):
    pass


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _bundled(name: str) -> Path:
    return Path(str(resources.files("gammaoffer") / "data" / f"{name}.unit"))


def resolve_unit_path(spec: str) -> Path:
    if spec in BUNDLED_UNITS:
        return _bundled(spec)
    path = Path(spec)
    if not path.is_file():
        raise InputError(f"unit file not found: {spec}")
    return path.resolve()


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"bad {what} list: {text!r}") from None


def _ints(text: str, what: str) -> list[int]:
    """Comma-separated integers with a-b ranges, e.g. ``0-4,8,24``."""
    out = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part:
                a, b = part.split("-", 1)
                out.extend(range(int(a), int(b) + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise InputError(f"bad {what} list: {text!r}") from None
    if not out:
        raise InputError(f"empty {what} list")
    return sorted(set(out))


def _solver_config(args) -> SolverConfig:
    return SolverConfig(gap_tol=args.gap, node_limit=args.node_limit, time_limit=args.time_limit)


def _csv(rows, header) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _status_code(status: str) -> int:
    if status == INFEASIBLE:
        return EXIT_INFEASIBLE
    if status in (NODE_LIMIT, TIME_LIMIT):
        return EXIT_LIMIT
    return EXIT_OK


def _load_prices(path: str):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"price file not found: {path}")
    return read_prices(p), p.resolve()


def _training_dates(series, args):
    if args.train_start or args.train_end:
        if not (args.train_start and args.train_end):
            raise InputError("give both --train-start and --train-end")
        lo, hi = np.datetime64(args.train_start, "D"), np.datetime64(args.train_end, "D")
        dates = series.available_dates(args.zone)
        dates = [d for d in dates if lo <= d <= hi and d.astype(object).weekday() < 5]
        if not dates:
            raise InputError(f"no weekday prices between {args.train_start} and {args.train_end}")
        return dates
    windows = make_windows(series, args.zone)
    if not 1 <= args.window <= len(windows):
        raise InputError(f"window must be in 1..{len(windows)}")
    return list(windows[args.window - 1].train_dates)


# -- commands -----------------------------------------------------------------
# Each returns (outputs: name -> bytes, input paths, exit code, console text).


def cmd_solve(args):
    unit_path = resolve_unit_path(args.unit)
    unit = read_unit(unit_path)
    inputs = [unit_path]
    if args.price_file:
        series, ppath = _load_prices(args.price_file)
        inputs.append(ppath)
        stats = trim_stats(series, _training_dates(series, args), args.trim, args.zone)
        nominal, dev = stats.nominal, stats.deviation
    elif args.prices:
        nominal = np.array(_floats(args.prices, "price"))
        dev = np.array(_floats(args.deviations, "deviation")) if args.deviations else np.zeros_like(nominal)
    else:
        raise InputError("give --prices or --price-file")
    if len(dev) != len(nominal):
        raise InputError(f"{len(nominal)} prices but {len(dev)} deviations")
    flavor = Flavor(args.flavor)
    T = len(nominal)
    if flavor is Flavor.WORST_CASE:
        gamma = T if args.gamma is None else args.gamma
    elif flavor is Flavor.NOMINAL:
        gamma = 0 if args.gamma is None else args.gamma
    else:
        gamma = T if args.gamma is None else args.gamma
    try:
        problem = RobustProblem(unit, UncertaintyModel(nominal, dev, gamma), flavor)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    res = solve(problem, _solver_config(args))
    outputs = {"objective.txt": f"{res.objective:.6f}\n"}
    if res.schedule is not None:
        s = res.schedule
        rows = [(t + 1, f"{s.p[t]:.6f}", int(s.u[t]), int(s.v[t]), int(s.w[t]), f"{s.suc[t]:.6f}") for t in range(T)]
        outputs["schedule.csv"] = _csv(rows, ("hour", "p_mw", "u", "v", "w", "startup_cost_eur"))
        if res.z is not None:
            rows = [("z", "", f"{res.z:.6f}")] + [("q", t + 1, f"{x:.6f}") for t, x in enumerate(res.q)]
            outputs["dual.csv"] = _csv(rows, ("variable", "hour", "value"))
    outputs["status.txt"] = f"{res.status}\n"
    text = f"status {res.status}, objective {res.objective:.2f} EUR"
    if res.schedule is not None:
        text += "\noutput MW: " + ", ".join(f"{x:g}" for x in np.round(res.p, 6))
    return outputs, inputs, _status_code(res.status), text


def cmd_offer(args):
    unit_path = resolve_unit_path(args.unit)
    unit = read_unit(unit_path)
    series, ppath = _load_prices(args.price_file)
    dates = _training_dates(series, args)
    stats = trim_stats(series, dates, args.trim, args.zone)
    window = None if args.train_start else args.window
    offer = gamma_offering_run(unit, stats, args.trim, args.gamma, _solver_config(args), window=window)
    text = f"offer for {unit.name}, J={args.trim}, gamma={args.gamma}: robust objective {offer.objective:.2f} EUR"
    return {"offer.csv": format_offer(offer)}, [unit_path, ppath], EXIT_OK, text


def cmd_barcon_demo(args):
    unit = calibrate_example_unit()
    cfg = barcon.example_config()
    results, curve = barcon.barcon_run(unit, cfg, _solver_config(args))
    scenarios = list(barcon.EXAMPLE_SCENARIOS) + [barcon.EXAMPLE_PRICES[0]]
    findings = barcon.audit_curves(unit, curve, scenarios, _solver_config(args))
    lines = ["full-protection solves:"]
    for k, res in enumerate(results, start=1):
        prices = ", ".join(f"{x:g}" for x in cfg.ladder(k))
        qty = ", ".join(f"{x:g}" for x in np.round(res.p, 6))
        lines.append(f"  k={k} prices ({prices}): output ({qty}) MW, profit {res.objective:.2f} EUR")
    lines.append("offering curves (MW @ EUR/MWh):")
    for t, hour in enumerate(curve.steps, start=1):
        lines.append(f"  hour {t}: " + ", ".join(f"({q:g} @ {p:g})" for q, p in hour))
    lines.append("audit:")
    for f in findings:
        lines += ["  " + x for x in f.describe().splitlines()]
    text = "\n".join(lines)
    png = io.BytesIO()
    plotting.plot_curves(curve, png)
    outputs = {"curves.csv": barcon.format_curve(curve), "audit.txt": text + "\n", "curves.png": png.getvalue()}
    return outputs, [], EXIT_OK, text


def _unit_paths(spec: str) -> list[Path]:
    if spec in BUNDLED_UNITS:
        return [_bundled(spec)]
    path = Path(spec)
    if path.is_dir():
        found = sorted(path.glob("*.unit"))
        if not found:
            raise InputError(f"no .unit files in {spec}")
        return [p.resolve() for p in found]
    return [resolve_unit_path(spec)]


def cmd_backtest(args):
    paths = _unit_paths(args.units)
    units = [read_unit(p) for p in paths]
    series, ppath = _load_prices(args.price_file)
    windows = make_windows(series, args.zone)
    gammas = _ints(args.gammas, "gamma")
    if args.pct_excluded:
        count = len(windows[0].train_dates)
        trims = sorted({trim_for_pct(count, x) for x in _floats(args.pct_excluded, "percentage")})
    else:
        trims = _ints(args.trims, "trim")
    report = backtest_run(units, series, trims, gammas, _solver_config(args), args.zone, windows, jobs=args.jobs)
    text, table = format_report(report)
    png = io.BytesIO()
    plotting.plot_profit_vs_gamma(report, png)
    outputs = {
        "report.txt": text,
        "report.csv": table,
        "records.csv": format_records(report.records),
        "yearly.csv": format_yearly(report),
        "profit_vs_gamma.png": png.getvalue(),
    }
    code = EXIT_OK if not report.failures else EXIT_LIMIT
    return outputs, paths + [ppath], code, text.rstrip("\n")


def cmd_gen_prices(args):
    series = gen_synthetic(args.seed, args.year, args.zones)
    data = format_prices(series)
    if args.out:
        Path(args.out).write_text(data)
    text = f"{len(series)} hourly prices for {args.year}, zones {', '.join(series.zone_ids)}"
    return {"prices.csv": data}, [], EXIT_OK, text


def cmd_replay(args):
    path = Path(args.manifest)
    if not path.is_file():
        raise InputError(f"manifest not found: {args.manifest}")
    manifest = json.loads(path.read_text())
    for name, digest in manifest["inputs"].items():
        if not Path(name).is_file() or sha256_bytes(Path(name).read_bytes()) != digest:
            raise InputError(f"input {name} is missing or changed since the run")
    ns = argparse.Namespace(**manifest["config"], jobs=args.jobs)
    ns.func = COMMANDS[manifest["command"]]
    outputs, _, code, _ = ns.func(ns)
    bad = [n for n, d in manifest["outputs"].items() if n not in outputs or sha256_bytes(_as_bytes(outputs[n])) != d]
    bad += [n for n in outputs if n not in manifest["outputs"]]
    if bad:
        return {}, [], 1, "replay differs in: " + ", ".join(sorted(bad))
    return {}, [], code, f"replay of {manifest['command']} reproduced {len(outputs)} output(s) byte for byte"


COMMANDS = {
    "solve": cmd_solve,
    "offer": cmd_offer,
    "barcon-demo": cmd_barcon_demo,
    "backtest": cmd_backtest,
    "gen-prices": cmd_gen_prices,
    "replay": cmd_replay,
}


# -- plumbing -----------------------------------------------------------------


def _as_bytes(data) -> bytes:
    return data if isinstance(data, bytes) else data.encode()


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_CONFIG}


def run_digest(command: str, config: dict, inputs: dict) -> str:
    blob = json.dumps({"command": command, "config": config, "inputs": inputs, "version": tool_version()}, sort_keys=True)
    return sha256_bytes(blob.encode())


def _add_solver_args(p):
    p.add_argument("--gap", type=float, default=1e-6, help="relative optimality gap (default 1e-6)")
    p.add_argument("--node-limit", type=int, default=10**6)
    p.add_argument("--time-limit", type=float, default=60.0, help="seconds per solve")


def _add_window_args(p):
    p.add_argument("--zone", default=None, help="zone id (needed when the file has several)")
    p.add_argument("--window", type=int, default=1, help="backtest window whose training weeks are used (1..24)")
    p.add_argument("--train-start", default=None, help="first training date, ISO format (overrides --window)")
    p.add_argument("--train-end", default=None, help="last training date, ISO format")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gammaoffer", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("--data-dir", default=None, help=f"base directory for run outputs (env {DATA_DIR_ENV}, default ./runs)")
    common.add_argument("--out-dir", default=None, help="write outputs here instead of a digest-named run directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="solve one offering problem")
    p.add_argument("--unit", required=True, help="unit file, or a bundled name: " + ", ".join(BUNDLED_UNITS))
    p.add_argument("--prices", help="comma-separated nominal prices")
    p.add_argument("--deviations", help="comma-separated price deviations (default all 0)")
    p.add_argument("--price-file", help="historical prices; nominal and deviations come from trimmed statistics")
    p.add_argument("--trim", type=int, default=0, help="smallest observations excluded per hour (with --price-file)")
    p.add_argument("--flavor", choices=[f.value for f in Flavor], default="robust")
    p.add_argument("--gamma", type=int, default=None, help="budget of uncertainty (default: 0 nominal, T otherwise)")
    _add_window_args(p)
    _add_solver_args(p)

    p = sub.add_parser("offer", parents=[common], help="zero-price offers from historical prices")
    p.add_argument("--unit", required=True)
    p.add_argument("--price-file", required=True)
    p.add_argument("--trim", type=int, default=0)
    p.add_argument("--gamma", type=int, required=True)
    _add_window_args(p)
    _add_solver_args(p)

    p = sub.add_parser("barcon-demo", parents=[common], help="curves from the ladder method on the worked example, and their audit")
    _add_solver_args(p)

    p = sub.add_parser("backtest", parents=[common], help="rolling-window backtest over trims and budgets")
    p.add_argument("--units", required=True, help="directory of .unit files, one unit file, or a bundled name")
    p.add_argument("--price-file", required=True)
    p.add_argument("--trims", default="0,2,4", help="trim counts J, e.g. 0,2,4")
    p.add_argument("--pct-excluded", default=None, help="trim levels as percentages, e.g. 0,10,20 (overrides --trims)")
    p.add_argument("--gammas", default="0-24", help="budgets, e.g. 0-24 or 0,1,24")
    p.add_argument("--zone", default=None)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="parallel worker processes")
    _add_solver_args(p)

    p = sub.add_parser("gen-prices", parents=[common], help="write a synthetic year of hourly prices")
    p.add_argument("--seed", type=int, default=2014)
    p.add_argument("--year", type=int, default=2014)
    p.add_argument("--zones", type=int, default=1)
    p.add_argument("--out", default=None, help="also copy the price file here")

    p = sub.add_parser("replay", parents=[common], help="re-run a manifest and compare outputs byte for byte")
    p.add_argument("manifest")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)

    for name, func in COMMANDS.items():
        sub.choices[name].set_defaults(func=func)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    try:
        outputs, inputs, code, text = args.func(args)
    except (InputError, UnitFileError, PriceFileError, InsufficientDataError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, barcon.BarConError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    if text:
        print(text)
    if args.command == "replay":
        return code

    config = _config(args)
    digests = {str(p): sha256_bytes(Path(p).read_bytes()) for p in inputs}
    digest = run_digest(args.command, config, digests)
    if args.out_dir:
        run_dir = Path(args.out_dir)
    else:
        base = Path(args.data_dir or os.environ.get(DATA_DIR_ENV) or "runs")
        run_dir = base / f"{args.command}-{digest[:12]}"
    run_dir.mkdir(parents=True, exist_ok=True)
    for name, data in outputs.items():
        (run_dir / name).write_bytes(_as_bytes(data))
    manifest = {
        "command": args.command,
        "config": config,
        "inputs": digests,
        "seed": config.get("seed"),
        "version": tool_version(),
        "digest": digest,
        "outputs": {n: sha256_bytes(_as_bytes(d)) for n, d in sorted(outputs.items())},
        "exit_code": code,
        "wall_time_s": round(time.perf_counter() - start, 3),
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"outputs in {run_dir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
