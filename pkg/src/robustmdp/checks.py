"""Independent reference computations and the self-test suites.

These deliberately avoid the vectorized code paths they check.
"""

from __future__ import annotations

import numpy as np

from .bellman import (
    brute_force_value,
    random_finite_mdp,
    stationary_policy_bounds,
    tabular_bellman,
    tabular_solve,
)


def classical_value_iteration(reward, kernel, alpha, tol=1e-12, max_iter=100000):
    """Textbook (non-robust) value iteration with loops.

    ``kernel[s][a]`` is one transition vector. Returns ``(values, policy)``.
    """
    S, A = len(kernel), len(kernel[0])
    v = [0.0] * S
    for _ in range(max_iter):
        new = []
        for s in range(S):
            new.append(max(
                sum(kernel[s][a][j] * (reward[s][a][j] + alpha * v[j]) for j in range(S))
                for a in range(A)
            ))
        gap = max(abs(x - y) for x, y in zip(new, v))
        v = new
        if gap < tol:
            break
    policy = []
    for s in range(S):
        q = [sum(kernel[s][a][j] * (reward[s][a][j] + alpha * v[j]) for j in range(S)) for a in range(A)]
        policy.append(int(np.argmax(q)))
    return np.array(v), np.array(policy)


def classical_bellman(reward, kernel, v, alpha):
    S, A = len(kernel), len(kernel[0])
    return np.array([
        max(sum(kernel[s][a][j] * (reward[s][a][j] + alpha * v[j]) for j in range(S)) for a in range(A))
        for s in range(S)
    ])


def myopic_action(next_return, lambda_risk, sigma_r, budget):
    """Maximizer of ``a . R - lambda a' Sigma a`` over the box ``[-C, C]^D``.

    With ``lambda = 0`` (or diagonal ``Sigma``) the problem separates by
    coordinate; the general case falls back to a bounded quadratic solve.
    """
    R = np.asarray(next_return, dtype=float).reshape(-1)
    sigma = np.asarray(sigma_r, dtype=float)
    if lambda_risk == 0:
        return budget * np.sign(R)
    if np.allclose(sigma, np.diag(np.diag(sigma))):
        d = np.diag(sigma)
        with np.errstate(divide="ignore", invalid="ignore"):
            interior = np.where(d > 0, R / (2.0 * lambda_risk * d), np.sign(R) * np.inf)
        return np.clip(np.nan_to_num(interior, nan=0.0), -budget, budget)
    from scipy.optimize import minimize

    res = minimize(lambda a: -(a @ R - lambda_risk * a @ sigma @ a),
                   np.zeros_like(R), jac=lambda a: -(R - 2 * lambda_risk * sigma @ a),
                   bounds=[(-budget, budget)] * R.size, method="L-BFGS-B")
    return res.x


# -- self-test suites ---------------------------------------------------------


def oracle_equivalence(n_mdps=200, seed=0, horizon=6, tol=1e-10):
    rng = np.random.default_rng(seed)
    failures = 0
    for i in range(n_mdps):
        mdp = random_finite_mdp(rng, int(rng.integers(1, 6)), int(rng.integers(1, 4)), 4)
        alpha = (0.3, 0.45, 0.9)[i % 3]
        table = tabular_solve(mdp, alpha, tol)
        for s in range(mdp.n_states):
            lo, hi = brute_force_value(mdp, s, alpha, horizon)
            if not lo <= table.values[s] <= hi:
                failures += 1
    return failures == 0, f"{n_mdps} MDPs, {failures} interval violations"


def contraction(n_pairs=100, seed=1):
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(n_pairs):
        mdp = random_finite_mdp(rng, int(rng.integers(1, 6)), int(rng.integers(1, 4)), 4)
        alpha = float(rng.uniform(0.05, 0.95))
        v, w = rng.normal(0, 5, mdp.n_states), rng.normal(0, 5, mdp.n_states)
        lhs = np.max(np.abs(tabular_bellman(mdp, v, alpha)[0] - tabular_bellman(mdp, w, alpha)[0]))
        worst = max(worst, lhs - alpha * np.max(np.abs(v - w)))
    return worst <= 1e-12, f"max excess over alpha*||v-w|| = {worst:.3e}"


def nonrobust_reduction(n_mdps=50, seed=2):
    rng = np.random.default_rng(seed)
    err = 0.0
    for _ in range(n_mdps):
        S, A = int(rng.integers(1, 6)), int(rng.integers(1, 4))
        mdp = random_finite_mdp(rng, S, A, 1)
        alpha = float(rng.uniform(0.1, 0.9))
        kernel = [[mdp.ambiguity[s][a][0].tolist() for a in range(A)] for s in range(S)]
        ref, _ = classical_value_iteration(mdp.reward.tolist(), kernel, alpha)
        err = max(err, float(np.max(np.abs(tabular_solve(mdp, alpha, 1e-11).values - ref))))
    return err <= 1e-8, f"max |robust - classical| = {err:.3e}"


def local_to_global(n_mdps=50, seed=3, horizon=40):
    rng = np.random.default_rng(seed)
    misses = 0
    for _ in range(n_mdps):
        mdp = random_finite_mdp(rng, int(rng.integers(1, 6)), int(rng.integers(1, 4)), 4)
        alpha = float(rng.uniform(0.1, 0.9))
        table = tabular_solve(mdp, alpha, 1e-11)
        for s in range(mdp.n_states):
            lo, hi = stationary_policy_bounds(mdp, table, s, alpha, horizon)
            if not lo - 1e-9 <= table.values[s] <= hi + 1e-9:
                misses += 1
    return misses == 0, f"{misses} states outside the policy-value bracket"


SUITES = {
    "oracle_equivalence": oracle_equivalence,
    "contraction": contraction,
    "nonrobust_reduction": nonrobust_reduction,
    "local_to_global": local_to_global,
}


def run_selftest():
    """Run every suite; returns a list of ``(name, passed, detail)``."""
    return [(name, *fn()) for name, fn in SUITES.items()]
