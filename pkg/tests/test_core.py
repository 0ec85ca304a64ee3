import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustmdp.ambiguity import cp_bound
from robustmdp.core import (
    ActionVector,
    MdpConfig,
    RewardSpec,
    StateWindow,
    load_config,
    reward,
    validate_config,
)
from robustmdp.errors import (
    DimensionMismatch,
    DiscountTooLarge,
    InvalidConfig,
    InvalidDimension,
    NegativeRadius,
    ParseError,
)


def test_default_discount_accepted():
    cfg = MdpConfig(alpha=0.45, c_p=1.0)
    assert validate_config(cfg) is cfg


@pytest.mark.parametrize("alpha, c_p", [(0.5, 2.0), (0.0, 1.0), (-0.1, 1.0), (1.0, 1.0)])
def test_discount_rejected(alpha, c_p):
    with pytest.raises(DiscountTooLarge):
        validate_config(MdpConfig(alpha=alpha, c_p=c_p))


def test_myopic_discount_allowed_when_requested():
    cfg = MdpConfig(alpha=0.0)
    assert validate_config(cfg, myopic_ok=True) is cfg


@pytest.mark.parametrize("changes, exc", [
    ({"m": 0}, InvalidDimension),
    ({"D": 0}, InvalidDimension),
    ({"epsilon": -0.01}, NegativeRadius),
    ({"ambiguity": "kl"}, InvalidConfig),
    ({"n_mc": 0}, InvalidConfig),
    ({"lr": 0.0}, InvalidConfig),
    ({"c_p": 0.5}, InvalidConfig),
])
def test_invalid_fields(changes, exc):
    with pytest.raises(exc):
        validate_config(MdpConfig().replace(**changes))


@pytest.mark.parametrize("eps", [0.0, 0.005, 0.025, 0.05, 0.1, 0.15])
def test_reference_configuration_passes_for_all_radii(eps):
    for mode in ("wasserstein", "parametric"):
        cfg = MdpConfig(alpha=0.45, epsilon=eps, m=10, ambiguity=mode)
        validate_config(cfg)
    assert MdpConfig(ambiguity="parametric", epsilon=eps).growth_constant == cp_bound(eps, 10)


def test_growth_exponent_follows_mode():
    assert MdpConfig(ambiguity="wasserstein").growth_exponent == 0
    assert MdpConfig(ambiguity="parametric").growth_exponent == 1
    assert MdpConfig(ambiguity="wasserstein").growth_constant == 1.0


def test_config_json_rejects_unknown_keys(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"alpha": 0.3, "gamma": 0.9}))
    with pytest.raises(ParseError):
        load_config(path)
    path.write_text(json.dumps({"alpha": 0.3, "m": 5}))
    assert load_config(path) == MdpConfig(alpha=0.3, m=5)


def test_state_window_shapes():
    w = StateWindow(np.zeros((10, 3)))
    assert (w.m, w.D, w.flat.size) == (10, 3, 30)
    with pytest.raises(InvalidDimension):
        StateWindow(np.zeros((0, 2)))
    with pytest.raises(InvalidConfig):
        StateWindow([[np.nan]])


def test_action_box():
    ActionVector([1.0, -1.0], budget=1.0)
    with pytest.raises(InvalidConfig):
        ActionVector([1.5], budget=1.0)


def test_reward_spec_checks():
    with pytest.raises(InvalidConfig):
        RewardSpec(0.1, [[1.0, 0.5], [0.4, 1.0]])
    with pytest.raises(InvalidConfig):
        RewardSpec(0.1, [[-1.0]])


def test_reward_zero_action():
    rng = np.random.default_rng(0)
    spec = RewardSpec(2.0, np.eye(3) * 0.01)
    assert reward(rng.normal(size=(4, 3)), np.zeros(3), rng.normal(size=(4, 3)), spec) == 0.0


def test_reward_single_asset_example():
    x = np.array([[0.0]])
    x_next = np.array([[0.05]])
    assert reward(x, [1.0], x_next, RewardSpec(0.5, [[0.04]])) == pytest.approx(0.03, abs=1e-15)


def test_reward_long_short_cancels():
    x_next = np.array([[0.0, 0.0], [0.02, 0.02]])
    assert reward(x_next, [1.0, -1.0], x_next, RewardSpec.zero(2)) == 0.0


def test_reward_uses_only_last_row():
    spec = RewardSpec.zero(1)
    assert reward([[0.3]], [1.0], [[9.0], [0.01]], spec) == pytest.approx(0.01)


def test_reward_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        reward(np.zeros((2, 2)), [1.0], np.zeros((2, 2)), RewardSpec.zero(2))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_reward_linear_and_bounded(D, seed):
    rng = np.random.default_rng(seed)
    spec = RewardSpec.zero(D)
    a = rng.uniform(-1, 1, D)
    x = rng.normal(size=(3, D))
    x1, x2 = rng.normal(0, 0.05, (3, D)), rng.normal(0, 0.05, (3, D))
    both = x1.copy()
    both[-1] = x1[-1] + x2[-1]
    r1, r2 = reward(x, a, x1, spec), reward(x, a, x2, spec)
    assert reward(x, a, both, spec) == pytest.approx(r1 + r2, abs=1e-14)
    assert abs(r1) <= np.linalg.norm(a) * np.linalg.norm(x1[-1]) + 1e-15
