import io
from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustmdp.ambiguity import cov_estimator
from robustmdp.data import (
    ReturnPanel,
    build_windows,
    compute_returns,
    estimate_sigma_r,
    load_prices,
    prices_from_returns,
    select_period,
    split_metadata,
    synthetic_prices,
    train_test_split,
    write_prices,
)
from robustmdp.errors import NonMonotoneDates, NonPositivePrice, ParseError, SplitOutOfRange, TooShort


def csv_text(*rows, header="date,AAA"):
    return io.StringIO("\n".join([header, *rows]) + "\n")


def test_load_two_rows():
    panel = load_prices(csv_text("2020-01-01,100", "2020-01-02,105"))
    assert panel.prices.shape == (2, 1)
    assert panel.tickers == ("AAA",)
    assert panel.dates[1] == date(2020, 1, 2)


def test_zero_price_rejected_with_row():
    with pytest.raises(NonPositivePrice, match="row 1"):
        load_prices(csv_text("2020-01-01,100", "2020-01-02,0"))


def test_duplicate_date_rejected():
    with pytest.raises(NonMonotoneDates):
        load_prices(csv_text("2020-01-01,100", "2020-01-01,101"))


@pytest.mark.parametrize("rows", [
    ("2020-01-01,100,3",),
    ("2020-13-01,100",),
    ("2020-01-01,",),
    ("2020-01-01,abc",),
])
def test_malformed_rows(rows):
    with pytest.raises(ParseError):
        load_prices(csv_text(*rows))


def test_empty_file():
    with pytest.raises(ParseError):
        load_prices(io.StringIO(""))
    with pytest.raises(ParseError):
        load_prices(csv_text())


def test_csv_round_trip(tmp_path):
    panel = synthetic_prices(30, D=3, seed=1)
    write_prices(tmp_path / "p.csv", panel)
    back = load_prices(tmp_path / "p.csv")
    np.testing.assert_array_equal(back.prices, panel.prices)
    assert back.dates == panel.dates


def test_returns_examples():
    panel = load_prices(csv_text("2020-01-01,100", "2020-01-02,105"))
    assert compute_returns(panel).returns[0, 0] == pytest.approx(0.05, abs=1e-15)
    r = compute_returns(synthetic_prices(5, D=2, vol=0.0, drift=0.0))
    assert r.returns.shape == (4, 2)
    np.testing.assert_array_equal(r.returns, 0.0)
    with pytest.raises(TooShort):
        compute_returns(load_prices(csv_text("2020-01-01,100")))


def test_returns_round_trip():
    panel = synthetic_prices(200, D=3, seed=4)
    rebuilt = prices_from_returns(panel.prices[0], compute_returns(panel).returns)
    np.testing.assert_allclose(rebuilt, panel.prices, rtol=1e-10)


def test_windows_single_pair():
    pairs = build_windows(np.arange(4.0).reshape(4, 1), 3)
    assert len(pairs) == 1
    np.testing.assert_array_equal(pairs[0].window.returns[:, 0], [0, 1, 2])
    assert pairs[0].next_return[0] == 3.0


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 12), st.integers(0, 30), st.integers(1, 3))
def test_window_count_and_overlap(m, extra, D):
    rows = m + 1 + extra
    r = np.random.default_rng(rows).normal(0, 0.05, (rows, D))
    pairs = build_windows(r, m)
    assert len(pairs) == rows - m
    for p, q in zip(pairs, pairs[1:]):
        assert np.array_equal(p.window.returns[1:], q.window.returns[:-1])
        assert np.array_equal(p.next_return, q.window.returns[-1])


def test_windows_too_short():
    with pytest.raises(TooShort):
        build_windows(np.zeros((10, 1)), 10)


def test_sigma_examples():
    np.testing.assert_array_equal(estimate_sigma_r(np.full((6, 2), 0.01)), np.zeros((2, 2)))
    np.testing.assert_allclose(estimate_sigma_r(np.array([[0.0], [0.2]])), [[0.02]], rtol=1e-12)
    with pytest.raises(TooShort):
        estimate_sigma_r(np.zeros((1, 2)))


def test_sigma_matches_two_pass_and_window_estimator():
    r = 0.01 + 1e-4 * np.random.default_rng(0).normal(size=(500, 3)) + 1e6
    mean = [sum(r[:, j]) / len(r) for j in range(3)]
    direct = np.array([[sum((r[s, i] - mean[i]) * (r[s, j] - mean[j]) for s in range(len(r))) / (len(r) - 1)
                        for j in range(3)] for i in range(3)])
    np.testing.assert_allclose(estimate_sigma_r(r), direct, atol=1e-12)
    np.testing.assert_allclose(estimate_sigma_r(r), cov_estimator(r), atol=1e-12)


def dated_panel(n=100, D=1):
    start = date(2018, 1, 1)
    dates = tuple(start + timedelta(days=i) for i in range(n))
    return ReturnPanel(dates, np.random.default_rng(0).normal(0, 0.01, (n, D)), tuple("A" * D))


def test_split_fractions():
    panel = dated_panel()
    train, tests = train_test_split(panel, 1.0)
    assert train.rows == 100 and tests == []
    train, tests = train_test_split(panel, 0.5)
    assert train.rows == 50 and len(tests) == 1 and tests[0].rows == 50
    with pytest.raises(SplitOutOfRange):
        train_test_split(panel, 0.0)
    with pytest.raises(SplitOutOfRange):
        train_test_split(panel, 1.5)


def test_split_three_dates_with_warmup():
    panel = dated_panel()
    bounds = [date(2018, 2, 1), date(2018, 3, 1), date(2018, 3, 20)]
    train, tests = train_test_split(panel, bounds, warmup=5)
    assert len(tests) == 3
    assert train.dates[-1] < bounds[0]
    assert [t.warmup for t in tests] == [5, 5, 5]
    body = [t.dates[t.warmup:] for t in tests]
    assert body[0][0] == bounds[0] and body[1][0] == bounds[1] and body[2][0] == bounds[2]
    assert body[0][-1] < bounds[1] and body[2][-1] == panel.dates[-1]
    assert train.rows + sum(len(b) for b in body) == panel.rows
    # context rows are the rows right before each period
    np.testing.assert_array_equal(tests[0].returns[:5], train.returns[-5:])
    flagged = [p.uses_warmup for p in build_windows(tests[0], 5)]
    assert flagged == [True] * 5 + [False] * (len(flagged) - 5)


def test_split_out_of_range():
    panel = dated_panel()
    with pytest.raises(SplitOutOfRange):
        train_test_split(panel, [date(2017, 1, 1)])
    with pytest.raises(SplitOutOfRange):
        train_test_split(panel, [date(2030, 1, 1)])
    with pytest.raises(SplitOutOfRange):
        train_test_split(panel, [date(2018, 3, 1), date(2018, 2, 1)])


def test_select_period_and_metadata():
    panel = dated_panel()
    p = select_period(panel, date(2018, 2, 1), date(2018, 2, 10), warmup=3)
    assert p.rows == 13 and p.warmup == 3
    meta = split_metadata(panel, [p], np.eye(1))
    assert meta["tests"][0] == {"start": "2018-02-01", "end": "2018-02-10", "rows": 10, "warmup_rows": 3}
