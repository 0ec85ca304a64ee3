"""Small feedforward networks and neural value iteration.

Two networks are trained in alternation: an action network mapping a state
window to positions in ``[-C, C]^D`` (tanh output times ``C``) and a value
network. Each epoch freezes the previous value network, improves the action
network by ascending the Monte-Carlo robust Bellman estimate, then regresses
the value network onto that estimate.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from .ambiguity import AmbiguityMode
from .bellman import bellman_targets
from .core import MdpConfig, RewardSpec, config_hash, validate_config
from .errors import DimensionMismatch, EmptyTrainingSet, ParseError

BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8
CHECKPOINT_FORMAT = "robustmdp-checkpoint"
CHECKPOINT_VERSION = 1

# spawn-key tags for the per-purpose random streams
_INIT, _BATCH, _STATE = 0, 1, 2
_ACTOR, _CRITIC = 0, 1


@dataclass
class MlpNetwork:
    """Rectifier MLP with identity or scaled-tanh output.

    ``weights[i]`` has shape ``(fan_in, fan_out)``. Inputs are standardized
    with ``in_shift`` / ``in_scale`` before the first layer.
    """

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    output: str = "identity"
    scale: float = 1.0
    in_shift: Optional[np.ndarray] = None
    in_scale: Optional[np.ndarray] = None
    moment1: List[np.ndarray] = field(default_factory=list)
    moment2: List[np.ndarray] = field(default_factory=list)
    step: int = 0

    def __post_init__(self):
        if self.output not in ("identity", "tanh"):
            raise ValueError(f"unknown output activation {self.output!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (w.shape[1],):
                raise DimensionMismatch(f"layer {i}: bias {b.shape} vs weight {w.shape}")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise DimensionMismatch(f"layer {i} fan-in {w.shape[0]} != previous fan-out")
        if not self.moment1:
            self.moment1 = [np.zeros_like(p) for p in self.params()]
            self.moment2 = [np.zeros_like(p) for p in self.params()]

    @property
    def sizes(self) -> List[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def params(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "MlpNetwork":
        cp = lambda arrs: [a.copy() for a in arrs]
        return MlpNetwork(
            cp(self.weights), cp(self.biases), self.output, self.scale,
            None if self.in_shift is None else self.in_shift.copy(),
            None if self.in_scale is None else self.in_scale.copy(),
            cp(self.moment1), cp(self.moment2), self.step,
        )

    def to_dict(self) -> dict:
        return {
            "sizes": self.sizes,
            "output": self.output,
            "scale": self.scale,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "in_shift": None if self.in_shift is None else self.in_shift.tolist(),
            "in_scale": None if self.in_scale is None else self.in_scale.tolist(),
            "step": self.step,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MlpNetwork":
        arr = lambda v: None if v is None else np.asarray(v, dtype=float)
        weights = [np.asarray(w, dtype=float).reshape(a, b)
                   for w, a, b in zip(data["weights"], data["sizes"][:-1], data["sizes"][1:])]
        return cls(weights, [np.asarray(b, dtype=float) for b in data["biases"]],
                   data["output"], float(data["scale"]), arr(data["in_shift"]), arr(data["in_scale"]),
                   step=int(data.get("step", 0)))


def init_network(sizes: Sequence[int], rng: np.random.Generator, output: str = "identity",
                 scale: float = 1.0, in_shift=None, in_scale=None) -> MlpNetwork:
    """He-uniform weights (fan-in), zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpNetwork(weights, biases, output, scale, in_shift, in_scale)


def _standardize(net: MlpNetwork, x: np.ndarray) -> np.ndarray:
    if net.in_shift is not None:
        x = x - net.in_shift
    if net.in_scale is not None:
        x = x / net.in_scale
    return x


def _forward_trace(net: MlpNetwork, x: np.ndarray):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.sizes[0]:
        raise DimensionMismatch(f"network expects {net.sizes[0]} inputs, got {x.shape[-1]}")
    h = _standardize(net, x)
    inputs, pre = [], []
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < last else z
    if net.output == "tanh":
        h = net.scale * np.tanh(h)
    return h, inputs, pre


def forward(net: MlpNetwork, x) -> np.ndarray:
    """Evaluate the network on one input vector or a batch ``(n, d)``."""
    return _forward_trace(net, x)[0]


LossFn = Callable[[np.ndarray], tuple]


def gradient(net: MlpNetwork, x, loss_fn: LossFn):
    """Reverse-mode gradient of a scalar loss of the network output.

    ``loss_fn(out)`` returns ``(loss, dloss_dout)``. The result is
    ``(loss, grads)`` with ``grads`` aligned to :meth:`MlpNetwork.params`.
    The rectifier derivative is taken as 0 at the kink.
    """
    x = np.asarray(x, dtype=float)
    batched = x.ndim == 2
    out, inputs, pre = _forward_trace(net, x if batched else x[None])
    loss, g = loss_fn(out if batched else out[0])
    g = np.asarray(g, dtype=float).reshape(out.shape)
    if net.output == "tanh":
        t = out / net.scale
        g = g * net.scale * (1.0 - t * t)
    grads = [None] * (2 * len(net.weights))
    for i in range(len(net.weights) - 1, -1, -1):
        if i < len(net.weights) - 1:
            g = g * (pre[i] > 0.0)
        grads[2 * i] = inputs[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        if i:
            g = g @ net.weights[i].T
    return float(loss), grads


def adam_step(net: MlpNetwork, grads, lr: float) -> MlpNetwork:
    """Bias-corrected Adam update, in place; returns ``net``."""
    params = net.params()
    if len(grads) != len(params):
        raise DimensionMismatch("gradient list does not match parameters")
    net.step += 1
    c1 = 1.0 - BETA1**net.step
    c2 = 1.0 - BETA2**net.step
    for p, g, m1, m2 in zip(params, grads, net.moment1, net.moment2):
        if g.shape != p.shape:
            raise DimensionMismatch(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m1 *= BETA1
        m1 += (1.0 - BETA1) * g
        m2 *= BETA2
        m2 += (1.0 - BETA2) * g * g
        p -= lr * (m1 / c1) / (np.sqrt(m2 / c2) + ADAM_EPS)
    return net


def value_function(net: MlpNetwork):
    """Adapter: ``(n, m, D)`` windows -> ``(n,)`` values."""
    def v(windows):
        windows = np.asarray(windows, dtype=float)
        return forward(net, windows.reshape(len(windows), -1))[:, 0]
    return v


def policy_function(net: MlpNetwork):
    """Adapter: one ``(m, D)`` window -> action vector."""
    def policy(window):
        return forward(net, np.asarray(window, dtype=float).reshape(-1))
    return policy


# -- training -----------------------------------------------------------------


@dataclass
class TrainReport:
    actor_objective: List[float] = field(default_factory=list)
    critic_loss: List[float] = field(default_factory=list)
    wall_clock: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "actor_objective": self.actor_objective,
            "critic_loss": self.critic_loss,
            "wall_clock": self.wall_clock,
        }


def _generator(root: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(root, spawn_key=key))


def _root_seed(cfg: MdpConfig, rng) -> int:
    if rng is None:
        return int(cfg.seed)
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(2**63))
    return int(rng)


def init_networks(cfg: MdpConfig, windows: np.ndarray, seed: int):
    flat = windows.reshape(len(windows), -1)
    shift = flat.mean(axis=0)
    spread = flat.std(axis=0)
    spread = np.where(spread > 1e-12, spread, 1.0)
    d_in = cfg.m * cfg.D
    hidden = [cfg.hidden, cfg.hidden]
    init_rng = _generator(seed, _INIT)
    value = init_network([d_in, *hidden, 1], init_rng, "identity", 1.0, shift, spread)
    action = init_network([d_in, *hidden, cfg.D], init_rng, "tanh", cfg.budget, shift.copy(), spread.copy())
    return value, action


def train(cfg: MdpConfig, mode: AmbiguityMode, train_windows, reward_spec: RewardSpec, rng=None):
    """Neural value iteration.

    ``rng`` may be a seed, a generator (one integer is drawn from it) or
    ``None`` for ``cfg.seed``. All sampling uses streams derived from that
    seed and the (epoch, phase, iteration, batch position) indices, so
    results do not depend on evaluation order.
    """
    validate_config(cfg, myopic_ok=True)
    windows = np.asarray([getattr(w, "returns", w) for w in train_windows], dtype=float)
    if windows.size == 0 or len(windows) == 0:
        raise EmptyTrainingSet("no training windows")
    if windows.ndim != 3 or windows.shape[1:] != (cfg.m, cfg.D):
        raise DimensionMismatch(f"training windows must have shape (N, {cfg.m}, {cfg.D}), got {windows.shape}")
    if reward_spec.D != cfg.D:
        raise DimensionMismatch(f"reward spec has D = {reward_spec.D}, config has D = {cfg.D}")

    seed = _root_seed(cfg, rng)
    value, action = init_networks(cfg, windows, seed)
    report = TrainReport()
    n, B = len(windows), cfg.batch
    sigma = reward_spec.sigma_r
    lam = reward_spec.lambda_risk

    def batch(epoch, phase, it):
        idx = _generator(seed, _BATCH, epoch, phase, it).integers(0, n, B)
        rngs = [_generator(seed, _STATE, epoch, phase, it, i) for i in range(B)]
        return windows[idx], rngs

    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        frozen = value.copy()
        v_prev = value_function(frozen)

        objectives = []
        for it in range(cfg.iter_a):
            xs, rngs = batch(epoch, _ACTOR, it)
            flat = xs.reshape(B, -1)
            acts = forward(action, flat)
            targets, mean_next = bellman_targets(xs, acts, v_prev, mode, cfg, rngs, reward_spec)
            objectives.append(float(targets.mean()))
            # ascent on the batch-mean target; the continuation term does not depend on the action
            d_obj = (mean_next - 2.0 * lam * acts @ sigma) / B

            def actor_loss(out, d_obj=d_obj, targets=targets):
                return -float(targets.mean()), -d_obj

            _, grads = gradient(action, flat, actor_loss)
            adam_step(action, grads, cfg.lr)

        losses = []
        for it in range(cfg.iter_v):
            xs, rngs = batch(epoch, _CRITIC, it)
            flat = xs.reshape(B, -1)
            acts = forward(action, flat)
            targets, _ = bellman_targets(xs, acts, v_prev, mode, cfg, rngs, reward_spec)

            def critic_loss(out, targets=targets):
                resid = out[:, 0] - targets
                return float(np.mean(resid**2)), (2.0 / B) * resid[:, None]

            loss, grads = gradient(value, flat, critic_loss)
            losses.append(loss)
            adam_step(value, grads, cfg.lr)

        report.actor_objective.append(float(np.mean(objectives)))
        report.critic_loss.append(float(np.mean(losses)))
        report.wall_clock.append(time.perf_counter() - start)
    return value, action, report


# -- checkpoints --------------------------------------------------------------


def checkpoint_dict(value: MlpNetwork, action: MlpNetwork, cfg: MdpConfig, reward_spec: RewardSpec) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "m": cfg.m,
        "D": cfg.D,
        "reward": {"lambda_risk": reward_spec.lambda_risk, "sigma_r": reward_spec.sigma_r.tolist()},
        "value_net": value.to_dict(),
        "action_net": action.to_dict(),
    }


def save_checkpoint(path, value, action, cfg, reward_spec) -> None:
    text = json.dumps(checkpoint_dict(value, action, cfg, reward_spec), sort_keys=True, indent=1)
    Path(path).write_text(text + "\n")


def load_checkpoint(path):
    """Return ``(value_net, action_net, cfg, reward_spec)``."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from exc
    if data.get("format") != CHECKPOINT_FORMAT or data.get("version") != CHECKPOINT_VERSION:
        raise ParseError(f"{path}: not a version-{CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} file")
    cfg = MdpConfig.from_dict(data["config"])
    spec = RewardSpec(data["reward"]["lambda_risk"], np.asarray(data["reward"]["sigma_r"], dtype=float))
    return MlpNetwork.from_dict(data["value_net"]), MlpNetwork.from_dict(data["action_net"]), cfg, spec
