"""Price panels, simple returns, sliding windows and train/test splits."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

from .core import StateWindow
from .errors import NonMonotoneDates, NonPositivePrice, ParseError, SplitOutOfRange, TooShort


@dataclass(frozen=True)
class PricePanel:
    dates: tuple
    prices: np.ndarray
    tickers: tuple

    def __post_init__(self):
        prices = np.array(self.prices, dtype=float)
        if prices.ndim != 2 or prices.shape != (len(self.dates), len(self.tickers)):
            raise ParseError(f"price matrix shape {prices.shape} does not match dates/tickers")
        bad = np.argwhere(~(prices > 0))
        if bad.size:
            row = int(bad[0, 0])
            raise NonPositivePrice(f"row {row} ({self.dates[row]}): non-positive price")
        _check_dates(self.dates)
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "tickers", tuple(self.tickers))


@dataclass(frozen=True)
class ReturnPanel:
    """Simple returns; row ``t`` is dated at the end of its period.

    The first ``warmup`` rows precede the period the panel stands for and only
    serve as window context.
    """

    dates: tuple
    returns: np.ndarray
    tickers: tuple
    warmup: int = 0

    def __post_init__(self):
        r = np.array(self.returns, dtype=float)
        if r.ndim == 1:
            r = r.reshape(-1, 1)
        if not np.all(np.isfinite(r)) or np.any(r <= -1):
            raise ValueError("returns must be finite and > -1")
        r.setflags(write=False)
        object.__setattr__(self, "returns", r)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "tickers", tuple(self.tickers))

    @property
    def rows(self) -> int:
        return self.returns.shape[0]

    @property
    def D(self) -> int:
        return self.returns.shape[1]

    @classmethod
    def from_array(cls, returns, tickers=None) -> "ReturnPanel":
        r = np.asarray(returns, dtype=float)
        if r.ndim == 1:
            r = r.reshape(-1, 1)
        tickers = tickers or tuple(f"A{i}" for i in range(r.shape[1]))
        return cls(tuple(range(r.shape[0])), r, tuple(tickers))


def _check_dates(dates):
    for i in range(1, len(dates)):
        if not dates[i] > dates[i - 1]:
            raise NonMonotoneDates(f"row {i}: date {dates[i]} does not follow {dates[i - 1]}")


def load_prices(source) -> PricePanel:
    """Read ``date,TICKER1,...,TICKERD`` CSV from a path or text stream."""
    if isinstance(source, (str, Path)):
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ParseError(f"{source}: {exc.strerror}") from exc
    else:
        text = source.read()
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    if not rows:
        raise ParseError("empty price file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0].lower() != "date":
        raise ParseError("header must be 'date,TICKER1,...'")
    tickers = header[1:]
    dates, prices = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            dates.append(date.fromisoformat(row[0].strip()))
            prices.append([float(cell) for cell in row[1:]])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
    if not prices:
        raise ParseError("price file has a header but no rows")
    prices = np.asarray(prices)
    if not np.all(np.isfinite(prices)):
        raise ParseError("missing or non-finite price")
    return PricePanel(tuple(dates), prices, tuple(tickers))


def write_prices(path, panel: PricePanel) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", *panel.tickers])
        for d, row in zip(panel.dates, panel.prices):
            writer.writerow([d.isoformat(), *(repr(float(p)) for p in row)])


def compute_returns(panel: PricePanel) -> ReturnPanel:
    if panel.prices.shape[0] < 2:
        raise TooShort("need at least two price rows")
    p = panel.prices
    return ReturnPanel(panel.dates[1:], (p[1:] - p[:-1]) / p[:-1], panel.tickers)


def prices_from_returns(first_prices, returns) -> np.ndarray:
    """Inverse of :func:`compute_returns` given the first price row."""
    growth = np.cumprod(1.0 + np.asarray(returns, dtype=float), axis=0)
    first = np.asarray(first_prices, dtype=float)
    return np.vstack([first, first * growth])


@dataclass(frozen=True)
class WindowPair:
    window: StateWindow
    next_return: np.ndarray
    uses_warmup: bool = False


def build_windows(r: Union[ReturnPanel, np.ndarray], m: int) -> List[WindowPair]:
    """Overlapping length-``m`` windows, each paired with the return after it."""
    panel = r if isinstance(r, ReturnPanel) else ReturnPanel.from_array(r)
    if m < 1:
        raise ValueError("m must be >= 1")
    if panel.rows < m + 1:
        raise TooShort(f"{panel.rows} rows cannot form a window of {m} plus one next return")
    ret = panel.returns
    return [
        WindowPair(StateWindow(ret[t:t + m]), ret[t + m].copy(), t < panel.warmup)
        for t in range(panel.rows - m)
    ]


def windows_array(pairs: Sequence[WindowPair]):
    """Stack pairs into ``(N, m, D)`` windows and ``(N, D)`` next returns."""
    return (np.stack([p.window.returns for p in pairs]), np.stack([p.next_return for p in pairs]))


def estimate_sigma_r(r: Union[ReturnPanel, np.ndarray]) -> np.ndarray:
    """Unbiased sample covariance of the return rows (two-pass)."""
    ret = r.returns if isinstance(r, ReturnPanel) else np.asarray(r, dtype=float)
    if ret.ndim == 1:
        ret = ret.reshape(-1, 1)
    n = ret.shape[0]
    if n < 2:
        raise TooShort("covariance needs at least two returns")
    dev = ret - ret.mean(axis=0)
    cov = dev.T @ dev / (n - 1)
    return 0.5 * (cov + cov.T)


def _slice(panel: ReturnPanel, lo: int, hi: int, warmup: int) -> ReturnPanel:
    start = max(lo - warmup, 0)
    return ReturnPanel(panel.dates[start:hi], panel.returns[start:hi], panel.tickers, lo - start)


def train_test_split(r: ReturnPanel, split, warmup: int = 0):
    """Chronological split into a training panel and test panels.

    ``split`` is either a fraction in ``(0, 1]`` (one test panel holding the
    remaining rows, none at 1.0) or a sequence of boundary dates
    ``d1 < d2 < ...``: training ends before ``d1`` and the test panels are
    ``[d1, d2), [d2, d3), ..., [dk, end]``. Each test panel is prefixed with
    up to ``warmup`` earlier rows as window context.
    """
    n = r.rows
    if isinstance(split, (int, float)) and not isinstance(split, bool):
        if not 0 < split <= 1:
            raise SplitOutOfRange(f"fraction must lie in (0, 1], got {split}")
        cut = int(round(split * n))
        if cut < 1:
            raise SplitOutOfRange(f"fraction {split} leaves no training rows")
        tests = [_slice(r, cut, n, warmup)] if cut < n else []
        return _slice(r, 0, cut, 0), tests

    bounds = list(split)
    if not bounds:
        raise SplitOutOfRange("need at least one boundary date")
    if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
        raise SplitOutOfRange("boundary dates must be strictly increasing")
    idx = [int(np.searchsorted(np.asarray(r.dates, dtype=object), b, side="left")) for b in bounds]
    if bounds[0] <= r.dates[0] or bounds[-1] > r.dates[-1]:
        raise SplitOutOfRange(f"boundaries must lie within ({r.dates[0]}, {r.dates[-1]}]")
    edges = idx + [n]
    tests = [_slice(r, lo, hi, warmup) for lo, hi in zip(edges[:-1], edges[1:])]
    return _slice(r, 0, idx[0], 0), tests


def select_period(r: ReturnPanel, start, end, warmup: int = 0) -> ReturnPanel:
    """Rows dated in ``[start, end]`` with ``warmup`` context rows before them."""
    dates = np.asarray(r.dates, dtype=object)
    lo = int(np.searchsorted(dates, start, side="left"))
    hi = int(np.searchsorted(dates, end, side="right"))
    if lo >= hi:
        raise SplitOutOfRange(f"no rows between {start} and {end}")
    return _slice(r, lo, hi, warmup)


def split_metadata(train: ReturnPanel, tests: Sequence[ReturnPanel], sigma_r) -> dict:
    def span(p):
        body = p.dates[p.warmup:]
        return {
            "start": str(body[0]) if body else None,
            "end": str(body[-1]) if body else None,
            "rows": len(body),
            "warmup_rows": p.warmup,
        }

    return {
        "tickers": list(train.tickers),
        "train": span(train),
        "tests": [span(p) for p in tests],
        "sigma_r": np.asarray(sigma_r).tolist(),
    }


def write_split_metadata(path, train, tests, sigma_r) -> None:
    Path(path).write_text(json.dumps(split_metadata(train, tests, sigma_r), indent=1, sort_keys=True) + "\n")


def momentum_series(n: int, D: int = 1, step: float = 0.01, flip_every: int = 50) -> np.ndarray:
    """Deterministic sign-momentum returns: each return repeats the sign of the last.

    The sign of asset ``j`` flips every ``flip_every`` periods (offset by
    ``j``) so the series is not constant.
    """
    t = np.arange(n)[:, None]
    phase = (t + np.arange(D)[None, :] * (flip_every // max(D, 1))) // flip_every
    return step * np.where(phase % 2 == 0, 1.0, -1.0)


def synthetic_prices(n: int, D: int = 1, seed: int = 0, drift: float = 2e-4, vol: float = 0.01,
                     start=date(2015, 1, 1)) -> PricePanel:
    """Geometric random-walk prices on consecutive calendar days, for demos and tests."""
    from datetime import timedelta

    rng = np.random.default_rng(seed)
    rets = drift + vol * rng.standard_normal((n - 1, D))
    prices = prices_from_returns(np.full(D, 100.0), rets)
    dates = tuple(start + timedelta(days=i) for i in range(n))
    return PricePanel(dates, prices, tuple(f"S{j}" for j in range(D)))
