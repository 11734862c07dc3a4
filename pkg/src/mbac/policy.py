"""Actor-critic network with a shared convolutional trunk, and its losses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import N_POSITIONS
from .env import N_ACTIONS
from .nn import Conv1d, Linear, softmax, tanh_backward


class ActorCritic:
    def __init__(self, preset):
        self.preset = preset
        chans = (preset.state_dim, *preset.trunk)
        self.trunk = [Conv1d(f"ac.conv{i}", chans[i], chans[i + 1], preset.kernel, "same") for i in range(3)]
        flat = N_POSITIONS * preset.trunk[-1]
        self.policy_head = Linear("ac.pi", flat, N_ACTIONS)
        self.value_head = Linear("ac.v", flat, 1)

    def init_params(self, rng, dtype=np.float64):
        p = {}
        for layer in (*self.trunk, self.policy_head, self.value_head):
            p.update(layer.init(rng, dtype))
        return p

    def forward(self, params, state):
        """Return ``(logits, probs, value), cache`` for a (P, d) or (B, P, d) state."""
        h = state
        caches = []
        for layer in self.trunk:
            y, c = layer.forward(params, h)
            h = np.tanh(y)
            caches.append((c, h))
        flat = h.reshape(*h.shape[:-2], -1)
        logits, pc = self.policy_head.forward(params, flat)
        value, vc = self.value_head.forward(params, flat)
        value = value[..., 0]
        return (logits, softmax(logits), value), (caches, pc, vc, h.shape)

    def backward(self, params, cache, d_logits, d_value, grads):
        """Accumulate parameter gradients; returns the gradient w.r.t. the state."""
        caches, pc, vc, h_shape = cache
        d_flat = self.policy_head.backward(params, pc, d_logits, grads)
        d_flat = d_flat + self.value_head.backward(params, vc, np.asarray(d_value)[..., None], grads)
        dh = d_flat.reshape(h_shape)
        for layer, (c, h) in zip(reversed(self.trunk), reversed(caches)):
            dh = layer.backward(params, c, tanh_backward(h, dh), grads)
        return dh


@dataclass
class ActorCriticLosses:
    actor: float
    critic: float
    kl: float
    entropy: float


def _entropy_terms(probs):
    logp = np.log(np.maximum(probs, 1e-30))
    h = -float(np.sum(probs * logp))
    return logp, h


def mbac_losses(probs, value, planner_probs, planner_value, beta):
    """Distillation losses against a fixed planner target.

    Returns losses plus gradients w.r.t. the policy logits and the value:
    L_critic = (V - V_planner)^2 and L_actor = KL(pi || pi_planner) - beta H(pi).
    """
    logp, h = _entropy_terms(probs)
    logq = np.log(np.maximum(planner_probs, 1e-12))
    kl = float(np.sum(probs * (logp - logq)))
    actor = kl - beta * h
    # d/dlogit of sum_a pi_a ((1 + beta) log pi_a - log q_a)
    u = (1.0 + beta) * logp - logq
    d_logits = probs * (u - np.sum(probs * u))
    err = value - planner_value
    critic = float(err * err)
    return ActorCriticLosses(actor, critic, kl, h), d_logits, 2.0 * err


def nstep_returns(rewards, gamma, bootstrap=0.0):
    """Discounted returns for every step of a trajectory window."""
    out = np.empty(len(rewards))
    g = float(bootstrap)
    for t in reversed(range(len(rewards))):
        g = rewards[t] + gamma * g
        out[t] = g
    return out


def a2c_losses(probs, values, actions, returns, beta):
    """Policy-gradient and value losses over a trajectory.

    ``probs`` (T, A), ``values`` (T,), 1-based ``actions`` and ``returns``
    (T,).  The advantage ``returns - values`` is held fixed in the policy
    term.  Returns (policy_loss, value_loss, mean_entropy, d_logits, d_values).
    """
    probs = np.asarray(probs)
    adv = np.asarray(returns, dtype=probs.dtype) - values
    idx = np.asarray(actions) - 1
    t = np.arange(len(idx))
    logp = np.log(np.maximum(probs, 1e-30))
    ent = -np.sum(probs * logp, axis=1)
    policy_loss = float(-np.sum(adv * logp[t, idx]) - beta * np.sum(ent))
    value_loss = float(np.sum(adv * adv))
    onehot = np.zeros_like(probs)
    onehot[t, idx] = 1.0
    d_logits = -adv[:, None] * (onehot - probs) + beta * probs * (logp + ent[:, None])
    d_values = -2.0 * adv
    return policy_loss, value_loss, float(ent.mean()), d_logits, d_values
