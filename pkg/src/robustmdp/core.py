"""Domain types, configuration and the standing-assumption checks.

States are sliding windows of the last ``m`` return vectors of ``D`` assets,
actions are monetary positions in the box ``[-C, C]^D`` and the one-period
reward is the realized trading gain minus a variance penalty.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import (
    DimensionMismatch,
    DiscountTooLarge,
    InvalidConfig,
    InvalidDimension,
    NegativeRadius,
    ParseError,
    WindowTooShort,
)

AMBIGUITY_MODES = ("non_robust", "wasserstein", "parametric")


@dataclass(frozen=True)
class StateWindow:
    """The last ``m`` return vectors, oldest row first."""

    returns: np.ndarray

    def __post_init__(self):
        arr = np.array(self.returns, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidDimension(f"window must be an m x D matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidConfig("window entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "returns", arr)

    @property
    def m(self) -> int:
        return self.returns.shape[0]

    @property
    def D(self) -> int:
        return self.returns.shape[1]

    @property
    def flat(self) -> np.ndarray:
        return self.returns.reshape(-1)

    @property
    def last(self) -> np.ndarray:
        return self.returns[-1]


WindowLike = Union[StateWindow, np.ndarray]


def as_window_array(x: WindowLike) -> np.ndarray:
    """Return ``x`` as an ``(m, D)`` float array."""
    if isinstance(x, StateWindow):
        return x.returns
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected an (m, D) window, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ActionVector:
    allocations: np.ndarray
    budget: float = 1.0

    def __post_init__(self):
        a = np.array(self.allocations, dtype=float).reshape(-1)
        if np.any(np.abs(a) > self.budget):
            raise InvalidConfig(f"allocations must lie in [-{self.budget}, {self.budget}]")
        a.setflags(write=False)
        object.__setattr__(self, "allocations", a)


@dataclass(frozen=True)
class RewardSpec:
    """Risk aversion and the return covariance used by the variance penalty."""

    lambda_risk: float
    sigma_r: np.ndarray

    def __post_init__(self):
        s = np.array(self.sigma_r, dtype=float)
        if s.ndim == 0:
            s = s.reshape(1, 1)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise DimensionMismatch(f"sigma_r must be square, got shape {s.shape}")
        if self.lambda_risk < 0:
            raise InvalidConfig("lambda_risk must be >= 0")
        if np.max(np.abs(s - s.T), initial=0.0) > 1e-12:
            raise InvalidConfig("sigma_r must be symmetric")
        if np.linalg.eigvalsh(s).min() < -1e-10:
            raise InvalidConfig("sigma_r must be positive semidefinite")
        s.setflags(write=False)
        object.__setattr__(self, "sigma_r", s)

    @property
    def D(self) -> int:
        return self.sigma_r.shape[0]

    @classmethod
    def zero(cls, D: int, lambda_risk: float = 0.0) -> "RewardSpec":
        return cls(lambda_risk, np.zeros((D, D)))


@dataclass(frozen=True)
class MdpConfig:
    """Run configuration.

    ``c_p`` may be left as ``None``; it is then derived from the ambiguity
    mode (1 for the compactly supported Wasserstein and non-robust modes,
    the closed-form Gaussian growth constant for the parametric mode).
    """

    alpha: float = 0.45
    c_p: Optional[float] = None
    epsilon: float = 0.0
    q: int = 1
    lambda_risk: float = 0.0
    budget: float = 1.0
    m: int = 10
    D: int = 1
    n_measures: int = 10
    n_mc: int = 8
    batch: int = 256
    epochs: int = 50
    iter_a: int = 10
    iter_v: int = 10
    lr: float = 1e-3
    seed: int = 0
    ambiguity: str = "wasserstein"
    tilde_epsilon: float = 1e-9
    hidden: int = 128

    @property
    def growth_exponent(self) -> int:
        return 1 if self.ambiguity == "parametric" else 0

    @property
    def growth_constant(self) -> float:
        if self.c_p is not None:
            return float(self.c_p)
        if self.ambiguity == "parametric":
            from .ambiguity import cp_bound

            return cp_bound(self.epsilon, self.m)
        return 1.0

    def replace(self, **changes) -> "MdpConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MdpConfig":
        if not isinstance(data, dict):
            raise ParseError("configuration must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ParseError(f"unknown configuration keys: {', '.join(unknown)}")
        return cls(**data)


def load_config(path) -> MdpConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from exc
    return MdpConfig.from_dict(data)


def config_hash(cfg: MdpConfig) -> str:
    import hashlib

    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _positive_int(cfg, name):
    value = getattr(cfg, name)
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
        raise InvalidConfig(f"{name} must be a positive integer, got {value!r}")


def validate_config(cfg: MdpConfig, *, myopic_ok: bool = False) -> MdpConfig:
    """Check the standing assumptions and return ``cfg`` unchanged.

    ``myopic_ok`` admits ``alpha == 0`` (pure one-step optimization), which
    the discount condition ``0 < alpha`` otherwise excludes.
    """
    if cfg.m < 1 or cfg.D < 1:
        raise InvalidDimension(f"m and D must be >= 1 (m={cfg.m}, D={cfg.D})")
    if cfg.epsilon < 0:
        raise NegativeRadius(f"epsilon must be >= 0, got {cfg.epsilon}")
    if cfg.ambiguity not in AMBIGUITY_MODES:
        raise InvalidConfig(f"ambiguity must be one of {AMBIGUITY_MODES}, got {cfg.ambiguity!r}")
    if cfg.ambiguity == "parametric" and cfg.m < 2:
        raise WindowTooShort("parametric ambiguity needs m >= 2")
    if cfg.c_p is not None and cfg.c_p < 1:
        raise InvalidConfig(f"c_p must be >= 1, got {cfg.c_p}")
    for name in ("q", "n_measures", "n_mc", "batch", "iter_a", "iter_v", "hidden"):
        _positive_int(cfg, name)
    if cfg.epochs < 0:
        raise InvalidConfig("epochs must be >= 0")
    if cfg.lambda_risk < 0:
        raise InvalidConfig("lambda_risk must be >= 0")
    if not cfg.budget > 0:
        raise InvalidConfig("budget must be > 0")
    if not cfg.lr > 0:
        raise InvalidConfig("lr must be > 0")
    if not cfg.tilde_epsilon > 0:
        raise InvalidConfig("tilde_epsilon must be > 0")

    lower_ok = cfg.alpha >= 0 if myopic_ok else cfg.alpha > 0
    if not lower_ok:
        raise DiscountTooLarge(f"alpha must be > 0, got {cfg.alpha}")
    cp = cfg.growth_constant
    if cfg.alpha * cp >= 1:
        raise DiscountTooLarge(f"alpha * C_P = {cfg.alpha * cp:.6g} must be < 1")
    return cfg


def reward(x: WindowLike, a, x_next: WindowLike, spec: RewardSpec) -> float:
    """Trading gain over one period minus the variance penalty.

    Only the last row of ``x_next`` (the realized next return) enters.
    """
    a = np.asarray(getattr(a, "allocations", a), dtype=float).reshape(-1)
    nxt = as_window_array(x_next)
    cur = as_window_array(x)
    if nxt.shape[1] != a.size or cur.shape[1] != a.size or spec.D != a.size:
        raise DimensionMismatch(
            f"action has {a.size} assets, windows have {cur.shape[1]}/{nxt.shape[1]}, sigma_r has {spec.D}"
        )
    return float(reward_from_returns(a, nxt[-1], spec))


def reward_from_returns(a: np.ndarray, next_returns: np.ndarray, spec: RewardSpec) -> np.ndarray:
    """Vectorized reward; ``next_returns`` may carry leading batch axes."""
    gain = next_returns @ a
    penalty = spec.lambda_risk * float(a @ spec.sigma_r @ a)
    return gain - penalty
