"""One-step planning over the full action set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import N_ACTIONS
from .nn import softmax

ALL_ACTIONS = np.arange(1, N_ACTIONS + 1)


class PlannerError(FloatingPointError):
    pass


@dataclass
class PlannerOutput:
    returns: np.ndarray       # estimated return per action, index 0 is action 1
    probs: np.ndarray
    value: float
    pred_states: np.ndarray   # (A, P, d)
    pred_rewards: np.ndarray  # (A,)


def soft_policy(returns, temperature=1.0):
    """Softmax policy over estimated returns and its expected return."""
    returns = np.asarray(returns, dtype=np.float64)
    probs = softmax(returns / temperature)
    return probs, float(np.dot(returns, probs))


def plan(state, model, model_params, critic, critic_params, gamma, temperature=1.0):
    """Evaluate every action through the model: G[a] = R_hat[a] + gamma * V(S_hat[a])."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    pred, _ = model.forward(model_params, state, ALL_ACTIONS)
    (_, _, values), _ = critic.forward(critic_params, pred.state)
    returns = pred.reward.astype(np.float64) + gamma * values.astype(np.float64)
    bad = np.flatnonzero(~np.isfinite(returns))
    if bad.size:
        raise PlannerError(f"non-finite estimated return for action(s) {(bad + 1).tolist()}: {returns[bad]}")
    probs, value = soft_policy(returns, temperature)
    return PlannerOutput(returns, probs, value, pred.state, pred.reward)


def sample_action(probs, rng):
    """Inverse-CDF draw of a 1-based action using a single uniform."""
    cdf = np.cumsum(probs)
    u = rng.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)) + 1


def greedy_action(values):
    """1-based argmax; ties go to the lowest action."""
    values = np.asarray(values)
    if values.size == 0:
        raise ValueError("greedy_action of an empty vector")
    return int(np.argmax(values)) + 1
