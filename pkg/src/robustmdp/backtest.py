"""Policy backtests and performance metrics.

Ratios are per period with a zero risk-free rate and no annualization; the
standard deviation is the population one. A zero denominator yields 0.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import RewardSpec, reward_from_returns
from .errors import DimensionMismatch, EmptyTestSet, TooShort

ZERO_DENOMINATOR = 1e-15


def sharpe(profits) -> float:
    p = np.asarray(profits, dtype=float)
    if p.size < 2:
        raise TooShort("sharpe needs at least two profits")
    sd = p.std()
    return 0.0 if sd < ZERO_DENOMINATOR else float(p.mean() / sd)


def sortino(profits) -> float:
    p = np.asarray(profits, dtype=float)
    if p.size < 2:
        raise TooShort("sortino needs at least two profits")
    downside = np.sqrt(np.mean(np.minimum(p, 0.0) ** 2))
    return 0.0 if downside < ZERO_DENOMINATOR else float(p.mean() / downside)


@dataclass(frozen=True)
class BacktestResult:
    profits: np.ndarray
    cumulative: np.ndarray
    overall_profit: float
    average_profit: float
    pct_profitable: float
    sharpe: float
    sortino: float

    @classmethod
    def from_profits(cls, profits) -> "BacktestResult":
        p = np.asarray(profits, dtype=float)
        if p.size == 0:
            raise EmptyTestSet("no periods to evaluate")
        overall = float(p.sum())
        ratios = (sharpe(p), sortino(p)) if p.size >= 2 else (0.0, 0.0)
        return cls(p, np.cumsum(p), overall, overall / p.size, float(np.mean(p > 0)), *ratios)

    def metrics(self) -> dict:
        return {
            "overall_profit": self.overall_profit,
            "average_profit": self.average_profit,
            "pct_profitable": self.pct_profitable,
            "sharpe": self.sharpe,
            "sortino": self.sortino,
            "periods": int(self.profits.size),
        }

    def to_dict(self) -> dict:
        return dict(self.metrics(), profits=self.profits.tolist(), cumulative=self.cumulative.tolist())


def run_backtest(policy: Callable, windows, next_returns, reward_spec: RewardSpec) -> BacktestResult:
    """Apply ``policy`` to each window and book the reward on the realized next return.

    ``policy`` maps an ``(m, D)`` window to a length-``D`` action; an
    :class:`~robustmdp.neural.MlpNetwork` action net is accepted directly.
    """
    from .neural import MlpNetwork, policy_function

    if isinstance(policy, MlpNetwork):
        policy = policy_function(policy)
    windows = [np.asarray(getattr(w, "returns", w), dtype=float) for w in windows]
    nxt = np.asarray(next_returns, dtype=float)
    if not windows:
        raise EmptyTestSet("no test windows")
    if nxt.ndim == 1:
        nxt = nxt.reshape(len(windows), -1)
    if len(windows) != len(nxt):
        raise DimensionMismatch(f"{len(windows)} windows but {len(nxt)} next returns")
    profits = np.empty(len(windows))
    for t, (w, r) in enumerate(zip(windows, nxt)):
        a = np.asarray(policy(w), dtype=float).reshape(-1)
        if a.size != reward_spec.D or r.size != reward_spec.D:
            raise DimensionMismatch(f"action/return sizes {a.size}/{r.size}, expected {reward_spec.D}")
        profits[t] = reward_from_returns(a, r, reward_spec)
    return BacktestResult.from_profits(profits)


def write_report(path, result: BacktestResult, **extra) -> None:
    payload = dict(result.to_dict(), **extra)
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def write_curve(path, result: BacktestResult, dates: Sequence = None) -> None:
    """Cumulative profit per trading day as ``day,date,profit,cumulative`` CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day", "date", "profit", "cumulative"])
        for i, (p, c) in enumerate(zip(result.profits, result.cumulative)):
            d = "" if dates is None else str(dates[i])
            writer.writerow([i + 1, d, repr(float(p)), repr(float(c))])
