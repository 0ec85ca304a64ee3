"""The two data-driven ambiguity sets.

A nonparametric set: a Wasserstein ball around the empirical kernel of past
windows. A parametric set: normal laws whose mean and covariance sit near
their window estimates.
"""

# %%
import numpy as np

from robustmdp import (
    WassersteinBall,
    cp_bound,
    empirical_kernel,
    gaussian_ambiguity_sample,
    sample_measures,
    wasserstein_ball_sample,
    wasserstein_distance,
)
from robustmdp.data import compute_returns, synthetic_prices

returns = compute_returns(synthetic_prices(300, D=2, seed=1)).returns
m = 10
x = returns[-m:]

# %% empirical kernel: next returns weighted by how close their window is to x
kernel = empirical_kernel(x, returns)
top = np.argsort(kernel.weights)[::-1][:3]
print("atoms", kernel.size, "largest weights", np.round(kernel.weights[top], 4))

# %% perturbed kernels stay inside the ball, certified by an exact transport LP
rng = np.random.default_rng(0)
for eps in (0.01, 0.05, 0.1, 0.3):
    moved = wasserstein_ball_sample(kernel, eps, 1, rng)
    print(f"eps={eps:4.2f}  W1={wasserstein_distance(kernel, moved, 1):.6f}")

# %% measures the solver would see for one state
mode = WassersteinBall(returns, m, epsilon=0.05, q=2)
for mu in sample_measures(mode, x, 5, rng):
    print("mean next return", np.round(mu.mean(), 5))

# %% parametric family and its growth constant
for eps in (0.005, 0.025, 0.05, 0.15):
    spec = gaussian_ambiguity_sample(x, eps, rng)
    print(f"eps={eps:5.3f}  mu={np.round(spec.mu, 4)}  trace={np.trace(spec.sigma):.2e}  "
          f"C_P={cp_bound(eps, m):.4f}  largest discount={1 / cp_bound(eps, m):.4f}")
