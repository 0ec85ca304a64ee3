"""Robust Bellman operator: exact tabular form and Monte-Carlo estimate.

The tabular solver runs value iteration on finite MDPs whose ambiguity set at
every state-action pair is a finite list of transition vectors.
:func:`brute_force_value` recomputes the finite-horizon value by plain
recursion and brackets the infinite-horizon value with the geometric tail.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .ambiguity import AmbiguityMode, draw_returns, sample_measures, shift_windows
from .core import MdpConfig, RewardSpec, as_window_array
from .errors import DimensionMismatch, InvalidMdp, NoConvergence, ParseError, TooLarge

BRUTE_FORCE_CAP = 10**7


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """Finite robust MDP.

    ``ambiguity[s][a]`` is a ``(K, S)`` array whose rows are the admissible
    transition vectors out of ``(s, a)``.
    """

    reward: np.ndarray
    ambiguity: tuple

    def __post_init__(self):
        r = np.array(self.reward, dtype=float)
        if r.ndim != 3 or r.shape[0] != r.shape[2]:
            raise InvalidMdp(f"reward must have shape (S, A, S), got {r.shape}")
        if not np.all(np.isfinite(r)):
            raise InvalidMdp("rewards must be finite")
        S, A, _ = r.shape
        if len(self.ambiguity) != S or any(len(row) != A for row in self.ambiguity):
            raise InvalidMdp("ambiguity must be indexed [state][action]")
        amb = []
        for s in range(S):
            row = []
            for a in range(A):
                P = np.array(self.ambiguity[s][a], dtype=float)
                if P.ndim == 1:
                    P = P.reshape(1, -1)
                if P.ndim != 2 or P.shape[0] < 1 or P.shape[1] != S:
                    raise InvalidMdp(f"ambiguity[{s}][{a}] must be a non-empty (K, {S}) array")
                if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
                    raise InvalidMdp(f"ambiguity[{s}][{a}] rows must be probability vectors")
                P.setflags(write=False)
                row.append(P)
            amb.append(tuple(row))
        r.setflags(write=False)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "ambiguity", tuple(amb))

        k_max = max(P.shape[0] for row in amb for P in row)
        padded = np.zeros((S, A, k_max, S))
        counts = np.zeros((S, A), dtype=int)
        for s in range(S):
            for a in range(A):
                K = amb[s][a].shape[0]
                padded[s, a, :K] = amb[s][a]
                counts[s, a] = K
        object.__setattr__(self, "_kernels", padded)
        object.__setattr__(self, "_mask", np.arange(k_max)[None, None, :] >= counts[:, :, None])

    @property
    def n_states(self) -> int:
        return self.reward.shape[0]

    @property
    def n_actions(self) -> int:
        return self.reward.shape[1]

    @property
    def max_measures(self) -> int:
        return self._kernels.shape[2]

    def with_extra_measure(self, s: int, a: int, p) -> "FiniteMdp":
        amb = [[np.array(P) for P in row] for row in self.ambiguity]
        amb[s][a] = np.vstack([amb[s][a], np.asarray(p, dtype=float).reshape(1, -1)])
        return FiniteMdp(self.reward, amb)

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "reward": self.reward.tolist(),
            "ambiguity": [[P.tolist() for P in row] for row in self.ambiguity],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FiniteMdp":
        try:
            mdp = cls(data["reward"], data["ambiguity"])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidMdp):
                raise
            raise InvalidMdp(f"malformed MDP: {exc}") from exc
        for key, value in (("n_states", mdp.n_states), ("n_actions", mdp.n_actions)):
            if key in data and data[key] != value:
                raise InvalidMdp(f"{key}={data[key]} disagrees with reward shape")
        return mdp


def load_mdp(path) -> FiniteMdp:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from exc
    if not isinstance(data, dict):
        raise InvalidMdp("MDP file must hold a JSON object")
    return FiniteMdp.from_dict(data)


def random_finite_mdp(rng: np.random.Generator, n_states: int, n_actions: int, max_measures: int,
                      reward_scale: float = 1.0) -> FiniteMdp:
    """Random MDP with Dirichlet transition rows and 1..max_measures measures per pair."""
    reward = reward_scale * rng.uniform(-1.0, 1.0, (n_states, n_actions, n_states))
    amb = [
        [rng.dirichlet(np.ones(n_states), size=int(rng.integers(1, max_measures + 1)))
         for _ in range(n_actions)]
        for _ in range(n_states)
    ]
    return FiniteMdp(reward, amb)


@dataclass
class ValueTable:
    values: np.ndarray
    policy: np.ndarray
    worst_kernel: np.ndarray
    iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "values": self.values.tolist(),
            "policy": self.policy.tolist(),
            "worst_kernel": self.worst_kernel.tolist(),
            "iterations": self.iterations,
        }


def tabular_bellman(mdp: FiniteMdp, v, alpha: float):
    """One application of the robust operator.

    Returns ``(Tv, policy, worst)``: the updated values, the maximizing action
    per state and the index of the minimizing measure under that action.
    Exact ties go to the lowest index.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (mdp.n_states,):
        raise DimensionMismatch(f"value vector must have length {mdp.n_states}")
    target = mdp.reward + alpha * v[None, None, :]
    q = np.einsum("sakj,saj->sak", mdp._kernels, target)
    q = np.where(mdp._mask, np.inf, q)
    worst_k = np.argmin(q, axis=2)
    inner = np.take_along_axis(q, worst_k[:, :, None], axis=2)[:, :, 0]
    policy = np.argmax(inner, axis=1)
    states = np.arange(mdp.n_states)
    return inner[states, policy], policy, worst_k[states, policy]


def tabular_solve(mdp: FiniteMdp, alpha: float, tol: float = 1e-10, max_iter: int = 10**6) -> ValueTable:
    """Value iteration from zero to within ``tol`` (sup norm) of the fixed point."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not tol > 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    threshold = tol * (1 - alpha) / alpha
    v = np.zeros(mdp.n_states)
    for it in range(1, max_iter + 1):
        new, policy, worst = tabular_bellman(mdp, v, alpha)
        gap = np.max(np.abs(new - v))
        v = new
        if gap <= threshold:
            # greedy policy and worst kernel at the returned values
            _, policy, worst = tabular_bellman(mdp, v, alpha)
            return ValueTable(v, policy, worst, it)
    raise NoConvergence(f"no convergence after {max_iter} iterations (last gap {gap:.3e})")


def brute_force_value(mdp: FiniteMdp, s0: int, alpha: float, horizon: int):
    """Interval containing the robust value at ``s0``.

    The ``horizon``-step minimax value is computed by direct recursion over
    states, actions and measures, then widened by the largest possible
    discounted tail ``alpha**horizon * R_max / (1 - alpha)``.
    """
    S, A = mdp.n_states, mdp.n_actions
    work = horizon * S * S * A * mdp.max_measures
    if horizon < 0 or work > BRUTE_FORCE_CAP:
        raise TooLarge(f"enumeration size {work} exceeds cap {BRUTE_FORCE_CAP}")
    reward = mdp.reward.tolist()
    measures = [[[list(map(float, p)) for p in mdp.ambiguity[s][a]] for a in range(A)] for s in range(S)]

    @lru_cache(maxsize=None)
    def value(s, steps_left):
        if steps_left == 0:
            return 0.0
        best = -float("inf")
        for a in range(A):
            worst = float("inf")
            for p in measures[s][a]:
                total = 0.0
                for s_next in range(S):
                    if p[s_next] > 0.0:
                        total += p[s_next] * (reward[s][a][s_next] + alpha * value(s_next, steps_left - 1))
                worst = min(worst, total)
            best = max(best, worst)
        return best

    r_max = float(np.max(np.abs(mdp.reward)))
    tail = alpha**horizon * r_max / (1 - alpha)
    v_n = value(int(s0), int(horizon))
    # round outward: the bound is attained exactly when |r| is constant
    slack = 64 * np.finfo(float).eps * (abs(v_n) + tail)
    return v_n - tail - slack, v_n + tail + slack


def stationary_policy_bounds(mdp: FiniteMdp, table: ValueTable, s0: int, alpha: float, horizon: int):
    """Bracket the value of the stationary greedy policy against the worst kernel.

    The expectation of the discounted reward over ``horizon`` steps is computed
    exactly by propagating the state distribution; the remaining tail is
    bounded by ``alpha**horizon * R_max / (1 - alpha)``.
    """
    S = mdp.n_states
    kernel = np.empty((S, S))
    step_reward = np.empty(S)
    for s in range(S):
        a = int(table.policy[s])
        p = mdp.ambiguity[s][a][int(table.worst_kernel[s])]
        kernel[s] = p
        step_reward[s] = p @ mdp.reward[s, a]
    dist = np.zeros(S)
    dist[s0] = 1.0
    total = 0.0
    for t in range(horizon):
        total += alpha**t * float(dist @ step_reward)
        dist = dist @ kernel
    r_max = float(np.max(np.abs(mdp.reward)))
    tail = alpha**horizon * r_max / (1 - alpha)
    return total - tail, total + tail


# -- Monte-Carlo operator on the portfolio state space -----------------------

ValueFn = Callable[[np.ndarray], np.ndarray]


def zero_value(windows: np.ndarray) -> np.ndarray:
    return np.zeros(len(windows))


def max_workers() -> int:
    try:
        return max(1, int(os.environ.get("ROBUSTMDP_THREADS", "1")))
    except ValueError:
        return 1


def _sample_transitions(x, mode, n_measures, n_mc, rng):
    measures = sample_measures(mode, x, n_measures, rng)
    return np.stack([draw_returns(mu, n_mc, rng) for mu in measures])


def bellman_targets(xs: np.ndarray, actions: np.ndarray, v: ValueFn, mode: AmbiguityMode,
                    cfg: MdpConfig, rngs: Sequence[np.random.Generator],
                    reward_spec: Optional[RewardSpec] = None):
    """Batched Monte-Carlo estimate of the robust operator.

    ``xs`` is ``(B, m, D)``, ``actions`` is ``(B, D)`` and ``rngs`` holds one
    generator per state, so each target depends only on its own stream.
    Returns the targets ``(B,)`` and, for each state, the average sampled
    next return under the minimizing measure ``(B, D)`` (the action gradient
    of the gain term).
    """
    xs = np.asarray(xs, dtype=float)
    actions = np.asarray(actions, dtype=float)
    B, m, D = xs.shape
    if actions.shape != (B, D) or len(rngs) != B:
        raise DimensionMismatch(f"need {B} actions of length {D} and {B} generators")
    spec = reward_spec if reward_spec is not None else RewardSpec.zero(D, cfg.lambda_risk)
    if spec.D != D:
        raise DimensionMismatch(f"reward spec has D = {spec.D}, states have D = {D}")

    jobs = [(xs[i], mode, cfg.n_measures, cfg.n_mc, rngs[i]) for i in range(B)]
    workers = max_workers()
    if workers > 1 and B > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            draws = list(pool.map(lambda job: _sample_transitions(*job), jobs))
    else:
        draws = [_sample_transitions(*job) for job in jobs]

    if cfg.alpha != 0:
        windows = np.concatenate([shift_windows(xs[i], d.reshape(-1, D)) for i, d in enumerate(draws)])
        cont = np.asarray(v(windows), dtype=float).reshape(-1)
    else:
        cont = np.zeros(sum(d.shape[0] * d.shape[1] for d in draws))

    targets = np.empty(B)
    argmin_returns = np.empty((B, D))
    offset = 0
    for i, d in enumerate(draws):
        n_p, n_mc, _ = d.shape
        a = actions[i]
        penalty = spec.lambda_risk * float(a @ spec.sigma_r @ a)
        cont_i = cont[offset:offset + n_p * n_mc].reshape(n_p, n_mc)
        offset += n_p * n_mc
        avg = np.mean(d @ a - penalty + cfg.alpha * cont_i, axis=1)
        k = int(np.argmin(avg))
        targets[i] = avg[k]
        argmin_returns[i] = d[k].mean(axis=0)
    return targets, argmin_returns


def mc_bellman_target(x, a, v: ValueFn, mode: AmbiguityMode, cfg: MdpConfig, rng: np.random.Generator,
                      reward_spec: Optional[RewardSpec] = None) -> float:
    """Estimate the robust operator at one state for one action.

    Samples ``cfg.n_measures`` members of the ambiguity set, ``cfg.n_mc``
    next states from each, and returns the smallest sample mean of
    ``r + alpha * v``.
    """
    x = as_window_array(x)
    a = np.asarray(getattr(a, "allocations", a), dtype=float).reshape(1, -1)
    targets, _ = bellman_targets(x[None], a, v, mode, cfg, [rng], reward_spec)
    return float(targets[0])
