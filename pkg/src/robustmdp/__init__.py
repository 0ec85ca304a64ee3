"""Distributionally robust Markov decision processes with portfolio backtesting."""

from .ambiguity import (
    DiscreteMeasure,
    GaussianSpec,
    NonRobust,
    ParametricGaussian,
    WassersteinBall,
    cov_estimator,
    cp_bound,
    empirical_kernel,
    gaussian_ambiguity_sample,
    make_mode,
    mean_estimator,
    sample_measures,
    sample_next_state,
    wasserstein_ball_sample,
    wasserstein_distance,
)
from .backtest import BacktestResult, run_backtest, sharpe, sortino
from .bellman import (
    FiniteMdp,
    ValueTable,
    brute_force_value,
    bellman_targets,
    mc_bellman_target,
    random_finite_mdp,
    tabular_bellman,
    tabular_solve,
)
from .core import ActionVector, MdpConfig, RewardSpec, StateWindow, reward, validate_config
from .neural import (
    MlpNetwork,
    TrainReport,
    adam_step,
    forward,
    gradient,
    load_checkpoint,
    policy_function,
    save_checkpoint,
    train,
    value_function,
)

__all__ = [
    "ActionVector",
    "BacktestResult",
    "DiscreteMeasure",
    "FiniteMdp",
    "GaussianSpec",
    "MdpConfig",
    "MlpNetwork",
    "NonRobust",
    "ParametricGaussian",
    "RewardSpec",
    "StateWindow",
    "TrainReport",
    "ValueTable",
    "WassersteinBall",
    "adam_step",
    "bellman_targets",
    "brute_force_value",
    "cov_estimator",
    "cp_bound",
    "empirical_kernel",
    "forward",
    "gaussian_ambiguity_sample",
    "gradient",
    "load_checkpoint",
    "make_mode",
    "mc_bellman_target",
    "mean_estimator",
    "policy_function",
    "random_finite_mdp",
    "reward",
    "run_backtest",
    "sample_measures",
    "sample_next_state",
    "save_checkpoint",
    "sharpe",
    "sortino",
    "tabular_bellman",
    "tabular_solve",
    "train",
    "validate_config",
    "value_function",
    "wasserstein_ball_sample",
    "wasserstein_distance",
]

__version__ = "0.1.0"
