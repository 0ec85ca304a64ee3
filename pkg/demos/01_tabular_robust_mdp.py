"""Robust value iteration on a small finite MDP.

Builds a random MDP whose transition law is only known up to a handful of
candidate kernels, solves the max-min Bellman equation, and checks the answer
against brute-force enumeration and against the nominal (single kernel) value.
"""

# %%
import numpy as np

from robustmdp import FiniteMdp, brute_force_value, random_finite_mdp, tabular_solve

rng = np.random.default_rng(0)
mdp = random_finite_mdp(rng, n_states=4, n_actions=2, max_measures=3)
alpha = 0.9

# %% solve
table = tabular_solve(mdp, alpha)
print("robust values  ", np.round(table.values, 4))
print("greedy policy  ", table.policy)
print("worst kernel   ", table.worst_kernel)
print("iterations     ", table.iterations)

# %% brute force over all adversary choices for a finite horizon
for s in range(mdp.n_states):
    lo, hi = brute_force_value(mdp, s, alpha, horizon=6)
    print(f"state {s}: {lo:8.4f} <= {table.values[s]:8.4f} <= {hi:8.4f}")

# %% the nominal problem only keeps the first candidate kernel
nominal = FiniteMdp(mdp.reward, [[k[:1] for k in row] for row in mdp.ambiguity])
gap = tabular_solve(nominal, alpha).values - table.values
print("price of robustness per state", np.round(gap, 4))
assert np.all(gap >= -1e-9)

# %% larger discount, slower convergence
for a in (0.3, 0.6, 0.9, 0.99):
    print(f"alpha={a:4.2f}  iterations={tabular_solve(mdp, a).iterations}")
