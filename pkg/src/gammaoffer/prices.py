"""Hourly price data: file I/O, trimmed statistics, backtest windows, synthetic years."""

from __future__ import annotations

import csv
import datetime as dt
import io
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

HEADER = ("date", "hour", "zone", "price_eur_mwh")
HOURS = 24


class PriceFileError(ValueError):
    def __init__(self, source: str, line: int | None, message: str):
        self.source = source
        self.line = line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


class DeviationClampWarning(UserWarning):
    """The trimmed-worst price exceeded the average, so the deviation was set to 0."""


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PriceSeries:
    """Hourly prices per zone, in file order."""

    dates: np.ndarray  # datetime64[D]
    hours: np.ndarray  # 1..24
    zones: np.ndarray  # str
    prices: np.ndarray

    def __post_init__(self):
        n = len(self.prices)
        arrays = {
            "dates": np.asarray(self.dates, dtype="datetime64[D]"),
            "hours": np.asarray(self.hours, dtype=int),
            "zones": np.asarray(self.zones, dtype=str),
            "prices": np.asarray(self.prices, dtype=float),
        }
        for name, arr in arrays.items():
            if arr.shape != (n,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if n and (self.hours.min() < 1 or self.hours.max() > HOURS):
            raise ValueError("hours must lie in 1..24")
        if np.any(self.prices < 0):
            raise ValueError("prices must be non-negative")
        keys = set(zip(self.dates.tolist(), self.hours.tolist(), self.zones.tolist()))
        if len(keys) != n:
            raise ValueError("duplicate (date, hour, zone) records")

    def __len__(self):
        return len(self.prices)

    def __eq__(self, other):
        if not isinstance(other, PriceSeries):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("dates", "hours", "zones", "prices"))

    __hash__ = None

    @property
    def zone_ids(self) -> list[str]:
        return sorted(set(self.zones.tolist()))

    def resolve_zone(self, zone: str | None) -> str:
        ids = self.zone_ids
        if zone is None:
            if len(ids) != 1:
                raise ValueError(f"series has zones {ids}; name one")
            return ids[0]
        if zone not in ids:
            raise ValueError(f"zone {zone!r} not in series (zones: {ids})")
        return zone

    def day_matrix(self, dates: Sequence, zone: str | None = None) -> np.ndarray:
        """Prices as a (len(dates), 24) array, NaN where a record is missing."""
        zone = self.resolve_zone(zone)
        dates = np.asarray(dates, dtype="datetime64[D]")
        index = {d: i for i, d in enumerate(dates.tolist())}
        out = np.full((len(dates), HOURS), np.nan)
        sel = self.zones == zone
        for d, h, p in zip(self.dates[sel].tolist(), self.hours[sel], self.prices[sel]):
            i = index.get(d)
            if i is not None:
                out[i, h - 1] = p
        return out

    def available_dates(self, zone: str | None = None) -> np.ndarray:
        """Dates carrying all 24 hours for the zone, sorted."""
        zone = self.resolve_zone(zone)
        sel = self.zones == zone
        dates, counts = np.unique(self.dates[sel], return_counts=True)
        return dates[counts == HOURS]


def read_prices(path: str | Path) -> PriceSeries:
    path = Path(path)
    with open(path, newline="") as fh:
        return parse_prices(fh, str(path))


def parse_prices(stream: Iterable[str], source: str = "<prices>") -> PriceSeries:
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise PriceFileError(source, 1, "empty file, expected a header") from None
    if tuple(h.strip() for h in header) != HEADER:
        raise PriceFileError(source, 1, f"header must be {','.join(HEADER)}")
    dates, hours, zones, prices = [], [], [], []
    seen: dict[tuple, int] = {}
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise PriceFileError(source, line, f"expected 4 fields, got {len(row)}")
        raw_date, raw_hour, zone, raw_price = (c.strip() for c in row)
        try:
            date = dt.date.fromisoformat(raw_date)
        except ValueError:
            raise PriceFileError(source, line, f"bad ISO date {raw_date!r}") from None
        try:
            hour = int(raw_hour)
        except ValueError:
            raise PriceFileError(source, line, f"bad hour {raw_hour!r}") from None
        if not 1 <= hour <= HOURS:
            raise PriceFileError(source, line, f"hour {hour} outside 1..24")
        if not zone:
            raise PriceFileError(source, line, "empty zone")
        try:
            price = float(raw_price)
        except ValueError:
            raise PriceFileError(source, line, f"bad price {raw_price!r}") from None
        if not np.isfinite(price):
            raise PriceFileError(source, line, f"price {raw_price!r} is not finite")
        if price < 0:
            raise PriceFileError(source, line, f"negative price {price}")
        key = (date, hour, zone)
        if key in seen:
            raise PriceFileError(source, line, f"duplicate record for {date} hour {hour} zone {zone} (first at line {seen[key]})")
        seen[key] = line
        dates.append(np.datetime64(date, "D"))
        hours.append(hour)
        zones.append(zone)
        prices.append(price)
    return PriceSeries(np.array(dates, dtype="datetime64[D]"), hours, np.array(zones, dtype=str), prices)


def format_prices(series: PriceSeries) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for d, h, z, p in zip(series.dates.tolist(), series.hours.tolist(), series.zones.tolist(), series.prices.tolist()):
        writer.writerow((d.isoformat(), h, z, repr(p)))
    return buf.getvalue()


def write_prices(series: PriceSeries, path: str | Path) -> None:
    Path(path).write_text(format_prices(series))


# -- statistics ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PriceStats:
    nominal: np.ndarray
    trimmed_worst: np.ndarray
    deviation: np.ndarray
    count: int
    trim: int
    clamped: np.ndarray

    @property
    def excluded_pct(self) -> float:
        return 100.0 * self.trim / self.count


def stats_from_observations(observations, trim: int) -> PriceStats:
    """Average, (trim+1)-th smallest and their difference, per column (hour).

    ``observations`` is (I, T).  The average runs over all I observations.
    """
    obs = np.asarray(observations, dtype=float)
    if obs.ndim != 2:
        raise ValueError("observations must be an (I, T) array")
    count = obs.shape[0]
    if np.isnan(obs).any():
        raise InsufficientDataError("observations contain gaps")
    if not 0 <= trim < count:
        raise InsufficientDataError(f"need more than {trim} observations per hour, got {count}")
    nominal = obs.mean(axis=0)
    worst = np.sort(obs, axis=0)[trim]
    raw = nominal - worst
    clamped = raw < 0
    if clamped.any():
        hours = ", ".join(str(h + 1) for h in np.flatnonzero(clamped))
        warnings.warn(f"trimmed worst price above the average in hour(s) {hours}; deviation set to 0", DeviationClampWarning, stacklevel=2)
    return PriceStats(nominal, worst, np.maximum(raw, 0.0), count, int(trim), clamped)


def trim_stats(series: PriceSeries, dates: Sequence, trim: int, zone: str | None = None) -> PriceStats:
    obs = series.day_matrix(dates, zone)
    missing = np.isnan(obs)
    if missing.any():
        bad = [str(np.asarray(dates, dtype="datetime64[D]")[i]) for i in np.flatnonzero(missing.any(axis=1))]
        raise InsufficientDataError(f"missing hourly prices on {', '.join(bad[:5])}")
    return stats_from_observations(obs, trim)


def trim_for_pct(count: int, pct: float) -> int:
    """Number of smallest observations excluded for a percentage."""
    return int(round(count * pct / 100.0))


# -- backtest windows ---------------------------------------------------------


@dataclass(frozen=True)
class BacktestWindow:
    index: int
    train_dates: tuple
    eval_dates: tuple


def weekday_weeks(dates: Sequence) -> list[tuple]:
    """Complete Monday-Friday weeks among the dates, in order.

    Week 1 is the first week whose Monday is on or after the first date.
    """
    dates = np.asarray(dates, dtype="datetime64[D]")
    if len(dates) == 0:
        return []
    have = set(dates.tolist())
    first = dates.min().tolist()
    monday = first + dt.timedelta(days=(7 - first.weekday()) % 7)
    last = dates.max().tolist()
    weeks = []
    while monday + dt.timedelta(days=4) <= last:
        days = tuple(monday + dt.timedelta(days=k) for k in range(5))
        if all(d in have for d in days):
            weeks.append(days)
        else:
            # a gap ends the run of consecutive weeks
            break
        monday += dt.timedelta(days=7)
    return weeks


def make_windows(series: PriceSeries, zone: str | None = None, count: int = 24, train_weeks: int = 4) -> list[BacktestWindow]:
    """Rolling windows: window w trains on weeks w..w+train_weeks-1 and evaluates the next week."""
    weeks = weekday_weeks(series.available_dates(zone))
    need = count + train_weeks
    if len(weeks) < need:
        raise InsufficientDataError(f"{len(weeks)} complete weekday weeks available, {need} needed for {count} windows")
    out = []
    for w in range(count):
        train = tuple(d for week in weeks[w : w + train_weeks] for d in week)
        out.append(BacktestWindow(w + 1, train, weeks[w + train_weeks]))
    return out


# -- synthetic prices ---------------------------------------------------------


@dataclass(frozen=True)
class PriceProfile:
    """Shape and noise of a synthetic price year (EUR/MWh)."""

    base: float = 45.0
    morning_peak: float = 14.0
    morning_hour: float = 9.5
    evening_peak: float = 20.0
    evening_hour: float = 19.5
    peak_width: float = 2.2
    night_dip: float = 8.0
    noise_sd: float = 6.0
    noise_ar: float = 0.8
    seasonal_amplitude: float = 6.0
    weekend_factor: float = 0.85
    trough_prob: float = 0.06
    trough_depth: float = 30.0
    zone_spread: float = 3.0

    def hourly_shape(self) -> np.ndarray:
        """Expected price per hour 1..24 before seasonal, weekend and trough effects."""
        h = np.arange(1, HOURS + 1, dtype=float)
        bump = lambda centre: np.exp(-0.5 * ((h - centre) / self.peak_width) ** 2)
        night = np.exp(-0.5 * ((h - 4.0) / 2.5) ** 2)
        return self.base + self.morning_peak * bump(self.morning_hour) + self.evening_peak * bump(self.evening_hour) - self.night_dip * night

    @property
    def stationary_sd(self) -> float:
        return self.noise_sd / np.sqrt(1.0 - self.noise_ar**2)


def gen_synthetic(seed: int, year: int = 2014, zones: int = 1, profile: PriceProfile | None = None) -> PriceSeries:
    """A deterministic synthetic year of hourly prices, zones named Z1..Zn.

    Daily double-peak shape, AR(1) hourly noise, a seasonal swing, cheaper
    weekends and occasional midday troughs (a renewables surplus) that push
    prices below thermal marginal cost.  Prices are floored at 0 and rounded
    to cents.
    """
    profile = profile or PriceProfile()
    rng = np.random.default_rng(seed)
    start = dt.date(year, 1, 1)
    ndays = (dt.date(year + 1, 1, 1) - start).days
    days = np.arange(ndays)
    shape = profile.hourly_shape()
    midday = np.exp(-0.5 * ((np.arange(1, HOURS + 1) - 13.5) / 3.0) ** 2)
    all_dates, all_hours, all_zones, all_prices = [], [], [], []
    for z in range(zones):
        season = profile.seasonal_amplitude * np.cos(2 * np.pi * (days - 15) / 365.0)
        weekday = np.array([(start + dt.timedelta(days=int(d))).weekday() for d in days])
        factor = np.where(weekday >= 5, profile.weekend_factor, 1.0)
        level = (shape[None, :] + season[:, None] + z * profile.zone_spread) * factor[:, None]
        n = ndays * HOURS
        eps = rng.normal(0.0, profile.noise_sd, n)
        noise = np.empty(n)
        noise[0] = rng.normal(0.0, profile.stationary_sd)
        for k in range(1, n):
            noise[k] = profile.noise_ar * noise[k - 1] + eps[k]
        troughs = (rng.random(ndays) < profile.trough_prob) * rng.uniform(0.5, 1.0, ndays) * profile.trough_depth
        prices = level + noise.reshape(ndays, HOURS) - troughs[:, None] * midday[None, :]
        prices = np.round(np.maximum(prices, 0.0), 2) + 0.0
        all_prices.append(prices.ravel())
        all_dates.append(np.repeat(np.datetime64(start, "D") + days, HOURS))
        all_hours.append(np.tile(np.arange(1, HOURS + 1), ndays))
        all_zones.append(np.full(n, f"Z{z + 1}"))
    return PriceSeries(
        np.concatenate(all_dates), np.concatenate(all_hours), np.concatenate(all_zones), np.concatenate(all_prices)
    )
