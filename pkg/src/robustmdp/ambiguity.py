"""Ambiguity sets for the next-period return.

Two data-driven constructions are provided, both acting on the return vector
only while the overlapping part of the state window is carried over
deterministically:

* an empirical nearest-window kernel, optionally surrounded by a
  q-Wasserstein ball;
* a family of multivariate normals whose mean and covariance lie near the
  window's sample estimates.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import sparse
from scipy.optimize import linprog

from .core import WindowLike, as_window_array
from .errors import (
    DimensionMismatch,
    HistoryTooShort,
    NegativeRadius,
    SupportTooLarge,
    WindowTooShort,
)

MAX_LP_SUPPORT = 512
DEFAULT_TILDE_EPSILON = 1e-9
CHOLESKY_FLOOR = 1e-12


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely supported probability measure on R^D."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms.reshape(-1, 1)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if atoms.ndim != 2 or atoms.shape[0] != weights.size or weights.size < 1:
            raise DimensionMismatch(
                f"need K >= 1 atoms matching K weights, got {atoms.shape} and {weights.shape}"
            )
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def D(self) -> int:
        return self.atoms.shape[1]

    @property
    def size(self) -> int:
        return self.weights.size

    @classmethod
    def dirac(cls, point) -> "DiscreteMeasure":
        return cls(np.asarray(point, dtype=float).reshape(1, -1), [1.0])

    def mean(self) -> np.ndarray:
        return self.weights @ self.atoms

    def to_dict(self) -> dict:
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteMeasure":
        return cls(data["atoms"], data["weights"])


@dataclass(frozen=True)
class GaussianSpec:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).reshape(-1)
        sigma = np.array(self.sigma, dtype=float).reshape(mu.size, mu.size)
        if np.max(np.abs(sigma - sigma.T), initial=0.0) > 1e-12:
            raise ValueError("sigma must be symmetric")
        if np.linalg.eigvalsh(sigma).min() < -1e-10:
            raise ValueError("sigma must be positive semidefinite")
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def D(self) -> int:
        return self.mu.size

    @cached_property
    def factor(self) -> np.ndarray:
        """A matrix ``L`` with ``L @ L.T == sigma``.

        Cholesky for well-conditioned covariances; rank-deficient ones (for
        instance from constant windows) use the symmetric square root with
        clipped eigenvalues so that a zero covariance yields a point mass.
        """
        evals, evecs = np.linalg.eigh(self.sigma)
        if evals.min() >= CHOLESKY_FLOOR:
            return np.linalg.cholesky(self.sigma)
        return evecs * np.sqrt(np.clip(evals, 0.0, None))

    def to_dict(self) -> dict:
        return {"mu": self.mu.tolist(), "sigma": self.sigma.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "GaussianSpec":
        return cls(data["mu"], data["sigma"])


Measure = Union[DiscreteMeasure, GaussianSpec]


# -- ambiguity modes ---------------------------------------------------------


class _HistoryMixin:
    @cached_property
    def _history_windows(self):
        hist = np.asarray(self.history, dtype=float)
        if hist.ndim == 1:
            hist = hist.reshape(-1, 1)
        n, d = hist.shape
        if n < self.m + 1:
            raise HistoryTooShort(f"history has {n} returns, need at least m + 1 = {self.m + 1}")
        # window s covers rows s .. s+m-1 and is followed by row s+m
        windows = sliding_window_view(hist[:-1], (self.m, d)).reshape(n - self.m, self.m * d)
        return windows, hist[self.m:]

    def reference(self, x: WindowLike) -> DiscreteMeasure:
        windows, atoms = self._history_windows
        return _kernel_from_windows(as_window_array(x), windows, atoms, self.tilde_epsilon)


@dataclass(frozen=True, eq=False)
class NonRobust(_HistoryMixin):
    """The empirical kernel alone (zero ambiguity)."""

    history: np.ndarray
    m: int
    tilde_epsilon: float = DEFAULT_TILDE_EPSILON


@dataclass(frozen=True, eq=False)
class WassersteinBall(_HistoryMixin):
    history: np.ndarray
    m: int
    epsilon: float
    q: int = 1
    tilde_epsilon: float = DEFAULT_TILDE_EPSILON

    def __post_init__(self):
        if self.epsilon < 0:
            raise NegativeRadius(f"epsilon must be >= 0, got {self.epsilon}")
        if self.q < 1 or self.tilde_epsilon <= 0:
            raise ValueError("need q >= 1 and tilde_epsilon > 0")


@dataclass(frozen=True)
class ParametricGaussian:
    epsilon: float

    def __post_init__(self):
        if self.epsilon < 0:
            raise NegativeRadius(f"epsilon must be >= 0, got {self.epsilon}")


AmbiguityMode = Union[NonRobust, WassersteinBall, ParametricGaussian]


def make_mode(cfg, history=None) -> AmbiguityMode:
    """Build the ambiguity mode named by ``cfg.ambiguity``."""
    if cfg.ambiguity == "parametric":
        return ParametricGaussian(cfg.epsilon)
    if history is None:
        raise ValueError(f"{cfg.ambiguity} ambiguity needs a return history")
    if cfg.ambiguity == "non_robust":
        return NonRobust(history, cfg.m, cfg.tilde_epsilon)
    return WassersteinBall(history, cfg.m, cfg.epsilon, cfg.q, cfg.tilde_epsilon)


def sample_measures(mode: AmbiguityMode, x: WindowLike, n: int, rng: np.random.Generator) -> list:
    """Pick ``n`` members of the ambiguity set at ``x`` (independently, with replacement).

    Singleton sets (non-robust, or radius zero) return a single measure.
    """
    if isinstance(mode, NonRobust) or (isinstance(mode, WassersteinBall) and mode.epsilon == 0):
        return [mode.reference(x)]
    if isinstance(mode, WassersteinBall):
        ref = mode.reference(x)
        return [wasserstein_ball_sample(ref, mode.epsilon, mode.q, rng) for _ in range(n)]
    if isinstance(mode, ParametricGaussian):
        if mode.epsilon == 0:
            return [gaussian_ambiguity_sample(x, 0.0, rng)]
        return [gaussian_ambiguity_sample(x, mode.epsilon, rng) for _ in range(n)]
    raise TypeError(f"unknown ambiguity mode {mode!r}")


# -- empirical kernel --------------------------------------------------------


def _kernel_from_windows(x, windows, atoms, tilde_epsilon) -> DiscreteMeasure:
    if windows.shape[1] != x.size:
        raise DimensionMismatch(f"state has {x.size} entries, history windows have {windows.shape[1]}")
    dist = np.linalg.norm(windows - x.reshape(1, -1), axis=1)
    inv = 1.0 / (dist + tilde_epsilon)
    weights = inv / inv.sum()
    return DiscreteMeasure(atoms, weights)


def empirical_kernel(x: WindowLike, history, tilde_epsilon: float = DEFAULT_TILDE_EPSILON) -> DiscreteMeasure:
    """Inverse-distance weighted measure over historical next returns.

    Every length-``m`` stretch of ``history`` that is followed by another
    return contributes that following return as an atom, weighted by
    ``1 / (||stretch - x|| + tilde_epsilon)`` before normalization.
    """
    if tilde_epsilon <= 0:
        raise ValueError("tilde_epsilon must be > 0")
    x = as_window_array(x)
    return NonRobust(history, x.shape[0], tilde_epsilon).reference(x)


# -- Wasserstein distance and ball sampling ---------------------------------


def _quantile_wasserstein(p: DiscreteMeasure, r: DiscreteMeasure, q: int) -> float:
    ia, ib = np.argsort(p.atoms[:, 0], kind="stable"), np.argsort(r.atoms[:, 0], kind="stable")
    xa, wa = p.atoms[ia, 0], p.weights[ia]
    xb, wb = r.atoms[ib, 0], r.weights[ib]
    ca, cb = np.cumsum(wa), np.cumsum(wb)
    ca[-1] = cb[-1] = 1.0
    levels = np.union1d(ca, cb)
    widths = np.diff(np.concatenate(([0.0], levels)))
    # quantile function value on each level band (upper end inclusive)
    qa = xa[np.minimum(np.searchsorted(ca, levels, side="left"), xa.size - 1)]
    qb = xb[np.minimum(np.searchsorted(cb, levels, side="left"), xb.size - 1)]
    return float(np.sum(widths * np.abs(qa - qb) ** q) ** (1.0 / q))


@lru_cache(maxsize=256)
def _marginal_constraints(k1: int, k2: int):
    rows = sparse.kron(sparse.identity(k1), np.ones((1, k2)))
    cols = sparse.kron(np.ones((1, k1)), sparse.identity(k2))
    return sparse.vstack([rows, cols]).tocsc()


def wasserstein_distance(p: DiscreteMeasure, q_measure: DiscreteMeasure, q: int = 1, method: str = "lp") -> float:
    """Exact q-Wasserstein distance between two discrete measures.

    ``method="lp"`` solves the transportation problem on the coupling
    polytope; ``method="quantile"`` (D = 1 only) matches quantile functions.
    """
    if p.D != q_measure.D:
        raise DimensionMismatch(f"measures live in R^{p.D} and R^{q_measure.D}")
    if q < 1:
        raise ValueError("order q must be >= 1")
    if method == "quantile":
        if p.D != 1:
            raise DimensionMismatch("quantile method requires D = 1")
        return _quantile_wasserstein(p, q_measure, q)
    if method != "lp":
        raise ValueError(f"unknown method {method!r}")

    k1, k2 = p.size, q_measure.size
    if max(k1, k2) > MAX_LP_SUPPORT:
        raise SupportTooLarge(f"support sizes {k1}, {k2} exceed {MAX_LP_SUPPORT}")
    diff = p.atoms[:, None, :] - q_measure.atoms[None, :, :]
    cost = np.linalg.norm(diff, axis=2) ** q
    if k1 == 1 or k2 == 1:
        # the product coupling is the only one
        total = float(np.sum(np.outer(p.weights, q_measure.weights) * cost))
        return total ** (1.0 / q)

    a_eq = _marginal_constraints(k1, k2)
    b_eq = np.concatenate([p.weights, q_measure.weights])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    plan = np.clip(res.x, 0.0, None)
    total = max(float(plan @ cost.ravel()), 0.0)
    return total ** (1.0 / q)


def wasserstein_ball_sample(reference: DiscreteMeasure, epsilon: float, q: int, rng: np.random.Generator) -> DiscreteMeasure:
    """Draw a measure inside the q-Wasserstein ball of radius ``epsilon``.

    Atoms keep their weights and are displaced along independent Gaussian
    directions, jointly scaled so that the transport cost of the identity
    coupling equals ``rho * epsilon`` with ``rho ~ U[0, 1]``. That coupling
    bounds the distance from above, so membership holds by construction.
    """
    if epsilon < 0:
        raise NegativeRadius(f"epsilon must be >= 0, got {epsilon}")
    if epsilon == 0:
        return reference
    directions = rng.standard_normal(reference.atoms.shape)
    rho = rng.random()
    norms = np.linalg.norm(directions, axis=1)
    base = float(np.sum(reference.weights * norms**q)) ** (1.0 / q)
    if base == 0.0 or rho == 0.0:
        return reference
    # shave a relative 1e-12 so rounding in the scaled cost cannot exceed rho * epsilon
    scale = rho * epsilon / base * (1.0 - 1e-12)
    return DiscreteMeasure(reference.atoms + scale * directions, reference.weights)


def coupling_cost(reference: DiscreteMeasure, moved: DiscreteMeasure, q: int) -> float:
    """Identity-coupling transport cost between two measures with matched atoms."""
    disp = np.linalg.norm(moved.atoms - reference.atoms, axis=1)
    return float(np.sum(reference.weights * disp**q)) ** (1.0 / q)


# -- parametric Gaussian family ----------------------------------------------


def mean_estimator(x: WindowLike) -> np.ndarray:
    return as_window_array(x).mean(axis=0)


def cov_estimator(x: WindowLike) -> np.ndarray:
    """Unbiased sample covariance of the window rows."""
    x = as_window_array(x)
    m = x.shape[0]
    if m < 2:
        raise WindowTooShort(f"covariance needs m >= 2, got m = {m}")
    dev = x - x.mean(axis=0)
    cov = dev.T @ dev / (m - 1)
    return 0.5 * (cov + cov.T)


def cp_bound(epsilon: float, m: int) -> float:
    """Growth constant of the Gaussian ambiguity family."""
    if m < 2:
        raise WindowTooShort(f"cp_bound needs m >= 2, got m = {m}")
    if epsilon < 0:
        raise NegativeRadius(f"epsilon must be >= 0, got {epsilon}")
    e2 = epsilon * epsilon
    return 1.0 + float(np.sqrt(e2 + 1.0 / m + 4.0 * (e2 + 1.0) / (m - 1)))


def _ball_point(dim: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    u = rng.standard_normal(dim)
    norm = np.linalg.norm(u)
    rho = rng.random()
    if norm == 0.0:
        return np.zeros(dim)
    return u / norm * (rho * radius)


def gaussian_ambiguity_sample(x: WindowLike, epsilon: float, rng: np.random.Generator) -> GaussianSpec:
    """Draw admissible normal parameters near the window's estimates.

    The mean is moved by at most ``epsilon``; the covariance is the sample
    covariance of a window perturbed by at most ``epsilon`` in Frobenius norm.
    """
    x = as_window_array(x)
    if x.shape[0] < 2:
        raise WindowTooShort(f"parametric ambiguity needs m >= 2, got m = {x.shape[0]}")
    if epsilon < 0:
        raise NegativeRadius(f"epsilon must be >= 0, got {epsilon}")
    if epsilon == 0:
        return GaussianSpec(mean_estimator(x), cov_estimator(x))
    shift = _ball_point(x.shape[1], epsilon, rng)
    y = x + _ball_point(x.size, epsilon, rng).reshape(x.shape)
    return GaussianSpec(mean_estimator(x) + shift, cov_estimator(y))


# -- transitions -------------------------------------------------------------


def draw_returns(measure: Measure, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. return vectors from ``measure`` as an ``(n, D)`` array."""
    if isinstance(measure, DiscreteMeasure):
        if measure.size == 1:
            return np.repeat(measure.atoms, n, axis=0)
        cdf = np.cumsum(measure.weights)
        idx = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
        return measure.atoms[np.minimum(idx, measure.size - 1)]
    if isinstance(measure, GaussianSpec):
        z = rng.standard_normal((n, measure.D))
        return measure.mu + z @ measure.factor.T
    raise TypeError(f"cannot sample from {type(measure).__name__}")


def shift_windows(x: np.ndarray, new_rows: np.ndarray) -> np.ndarray:
    """Drop the oldest row of ``x`` and append each of ``new_rows``: ``(n, m, D)``."""
    n = new_rows.shape[0]
    out = np.empty((n,) + x.shape)
    out[:, :-1, :] = x[1:]
    out[:, -1, :] = new_rows
    return out


def sample_next_state(x: WindowLike, measure: Measure, rng: np.random.Generator) -> np.ndarray:
    """One transition: keep rows 2..m of ``x`` and append a draw from ``measure``."""
    x = as_window_array(x)
    if measure.D != x.shape[1]:
        raise DimensionMismatch(f"window has D = {x.shape[1]}, measure has D = {measure.D}")
    return shift_windows(x, draw_returns(measure, 1, rng))[0]


def measures_to_json(measures: Sequence[Measure]) -> list:
    return [dict(kind=type(mu).__name__, **mu.to_dict()) for mu in measures]
