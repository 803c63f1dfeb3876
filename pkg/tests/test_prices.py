import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gammaoffer.prices import (
    DeviationClampWarning,
    InsufficientDataError,
    PriceFileError,
    PriceProfile,
    format_prices,
    gen_synthetic,
    make_windows,
    parse_prices,
    read_prices,
    stats_from_observations,
    trim_for_pct,
    trim_stats,
    write_prices,
)

OBS = np.array([[40.0], [42.0], [50.0], [58.0], [60.0]])


@pytest.fixture(scope="module")
def year():
    return gen_synthetic(2014)


def test_trim_examples():
    s = stats_from_observations(OBS, 2)
    assert (s.nominal[0], s.trimmed_worst[0], s.deviation[0]) == (50, 50, 0)
    s = stats_from_observations(OBS, 0)
    assert (s.nominal[0], s.trimmed_worst[0], s.deviation[0]) == (50, 40, 10)


def test_trim_counts_for_twenty_observations():
    assert [trim_for_pct(20, x) for x in (0, 10, 20)] == [0, 2, 4]


def test_clamp_warns():
    with pytest.warns(DeviationClampWarning):
        s = stats_from_observations(OBS, 3)
    assert s.deviation[0] == 0 and s.clamped[0]


def test_insufficient_observations():
    with pytest.raises(InsufficientDataError):
        stats_from_observations(OBS, 5)


@settings(max_examples=100, deadline=None)
@given(
    obs=st.lists(st.floats(0, 300), min_size=2, max_size=30),
    seed=st.integers(0, 1000),
)
def test_trim_properties(obs, seed):
    arr = np.array(obs)[:, None]
    with np.testing.suppress_warnings() as sup:
        sup.filter(DeviationClampWarning)
        base = stats_from_observations(arr, 0)
        assert base.deviation[0] == pytest.approx(arr.mean() - arr.min(), abs=1e-9)
        perm = np.random.default_rng(seed).permutation(len(obs))
        assert stats_from_observations(arr[perm], 1).deviation[0] == pytest.approx(stats_from_observations(arr, 1).deviation[0], abs=1e-9)
        devs = [stats_from_observations(arr, j).deviation[0] for j in range(len(obs))]
    assert all(b <= a + 1e-9 for a, b in zip(devs, devs[1:]))


def test_round_trip_is_exact(tmp_path, year):
    path = tmp_path / "p.csv"
    write_prices(year, path)
    again = read_prices(path)
    assert again == year
    assert len(again) == 8760
    assert format_prices(again) == path.read_text()


def _parse(text):
    return parse_prices(text.splitlines(True), "p.csv")


def test_two_rows():
    s = _parse("date,hour,zone,price_eur_mwh\n2014-01-01,1,N,50.5\n2014-01-01,2,N,51\n")
    assert len(s) == 2 and s.prices.tolist() == [50.5, 51.0]


@pytest.mark.parametrize(
    "row, fragment",
    [
        ("2014-01-01,25,N,50", "hour 25"),
        ("2014-01-01,1,N,-3", "negative"),
        ("2014-13-01,1,N,50", "date"),
        ("2014-01-01,1,N", "4 fields"),
        ("2014-01-01,1,N,abc", "bad price"),
    ],
)
def test_bad_rows_name_the_line(row, fragment):
    with pytest.raises(PriceFileError, match=fragment) as info:
        _parse(f"date,hour,zone,price_eur_mwh\n2014-01-01,2,N,50\n{row}\n")
    assert info.value.line == 3
    assert "p.csv:3" in str(info.value)


def test_duplicate_rejected():
    with pytest.raises(PriceFileError, match="duplicate"):
        _parse("date,hour,zone,price_eur_mwh\n2014-01-01,1,N,50\n2014-01-01,1,N,51\n")


def test_bad_header():
    with pytest.raises(PriceFileError):
        _parse("when,hour,zone,price\n")


def test_windows(year):
    windows = make_windows(year)
    assert len(windows) == 24
    first = windows[0]
    assert len(first.train_dates) == 20 and len(first.eval_dates) == 5
    assert first.train_dates[0] == dt.date(2014, 1, 6)
    evaluated = []
    for w in windows:
        assert not set(w.train_dates) & set(w.eval_dates)
        assert all(d.weekday() < 5 for d in w.train_dates + w.eval_dates)
        assert w.eval_dates[0] - w.train_dates[-1] == dt.timedelta(days=3)
        evaluated += list(w.eval_dates)
    assert len(evaluated) == len(set(evaluated)) == 120
    # evaluation weeks are weeks 5..28 counted from the first Monday
    assert evaluated[0] == dt.date(2014, 1, 6) + dt.timedelta(weeks=4)
    assert evaluated[-1] == dt.date(2014, 1, 6) + dt.timedelta(weeks=27, days=4)
    stats = trim_stats(year, first.train_dates, 0)
    assert stats.count == 20


def test_windows_need_enough_weeks(year):
    short = _parse("date,hour,zone,price_eur_mwh\n" + "".join(f"2014-01-0{d},{h},N,50\n" for d in range(6, 10) for h in range(1, 25)))
    with pytest.raises(InsufficientDataError):
        make_windows(short)


def test_synthetic_deterministic_and_floored():
    a, b = gen_synthetic(5), gen_synthetic(5)
    assert a == b
    assert format_prices(a) == format_prices(b)
    assert a.prices.min() >= 0
    assert gen_synthetic(6) != a
    two = gen_synthetic(5, zones=2)
    assert two.zone_ids == ["Z1", "Z2"] and len(two) == 2 * 8760


def test_synthetic_mean_follows_profile():
    profile = PriceProfile(seasonal_amplitude=0.0, weekend_factor=1.0, trough_prob=0.0)
    series = gen_synthetic(11, profile=profile)
    days = series.prices.reshape(-1, 24)
    tol = 3 * profile.stationary_sd / np.sqrt(days.shape[0])
    assert np.all(np.abs(days.mean(axis=0) - profile.hourly_shape()) <= tol)


def test_synthetic_has_troughs(year):
    days = year.prices.reshape(-1, 24)
    assert (days[:, 10:16].min(axis=1) < 20).any()
