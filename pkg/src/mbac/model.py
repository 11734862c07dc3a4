"""Action-conditioned one-step model of the agent state and reward.

Convolutional encoder over state positions, multiplicative action gating,
transposed-convolution decoder back to a state matrix, and a linear reward
head on the position-mean of the gated encoding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import N_ACTIONS
from .nn import Conv1d, Deconv1d, Linear, _uniform, tanh_backward


@dataclass
class ModelPrediction:
    state: np.ndarray   # (positions, state_dim), or (batch, positions, state_dim)
    reward: np.ndarray  # scalar, or (batch,)


class DynamicsModel:
    def __init__(self, preset):
        self.preset = preset
        k = preset.kernel
        chans = (preset.state_dim, *preset.encoder)
        self.encoder = [Conv1d(f"dm.enc{i}", chans[i], chans[i + 1], k, "same") for i in range(3)]
        dchans = (preset.encoder[-1], *preset.decoder)
        self.decoder = [Deconv1d(f"dm.dec{i}", dchans[i], dchans[i + 1], k, "same") for i in range(3)]
        self.project = Linear("dm.proj", preset.decoder[-1], preset.state_dim)
        self.reward_head = Linear("dm.reward", preset.encoder[-1], 1)
        self.gate_width = preset.encoder[-1]

    def init_params(self, rng, dtype=np.float64):
        p = {}
        for layer in (*self.encoder, *self.decoder, self.project, self.reward_head):
            p.update(layer.init(rng, dtype))
        p["dm.gate"] = _uniform(rng, (N_ACTIONS, self.gate_width), 1.0, dtype)
        return p

    def encode(self, params, state):
        caches = []
        h = state
        for layer in self.encoder:
            y, c = layer.forward(params, h)
            h = np.tanh(y)
            caches.append((c, h))
        return h, caches

    def forward(self, params, state, actions):
        """Predict for one state and one or more 1-based actions.

        ``actions`` may be an int (returns unbatched outputs) or a sequence
        (returns outputs with a leading action axis).
        """
        single = np.ndim(actions) == 0
        idx = np.atleast_1d(np.asarray(actions)) - 1
        if np.any(idx < 0) or np.any(idx >= N_ACTIONS):
            raise ValueError(f"actions must lie in [1, {N_ACTIONS}]")
        enc, enc_caches = self.encode(params, state)
        gates = params["dm.gate"][idx]                        # (B, C)
        gated = enc[None, :, :] * gates[:, None, :]           # (B, P, C)
        h = gated
        dec_caches = []
        for layer in self.decoder:
            y, c = layer.forward(params, h)
            h = np.tanh(y)
            dec_caches.append((c, h))
        s_hat, proj_cache = self.project.forward(params, h)
        pooled = gated.mean(axis=1)                           # (B, C)
        r_hat, head_cache = self.reward_head.forward(params, pooled)
        r_hat = r_hat[:, 0]
        cache = (idx, enc, enc_caches, gates, dec_caches, proj_cache, head_cache, gated.shape[1])
        if single:
            return ModelPrediction(s_hat[0], r_hat[0]), cache
        return ModelPrediction(s_hat, r_hat), cache

    def backward(self, params, cache, d_state, d_reward, grads):
        """Accumulate parameter gradients; returns the gradient w.r.t. the input state."""
        idx, enc, enc_caches, gates, dec_caches, proj_cache, head_cache, n_pos = cache
        d_state = np.asarray(d_state, dtype=enc.dtype).reshape(len(idx), n_pos, self.preset.state_dim)
        d_reward = np.asarray(d_reward, dtype=enc.dtype).reshape(len(idx), 1)
        d_pooled = self.reward_head.backward(params, head_cache, d_reward, grads)
        d_gated = np.repeat(d_pooled[:, None, :] / n_pos, n_pos, axis=1)
        dh = self.project.backward(params, proj_cache, d_state, grads)
        for layer, (c, h) in zip(reversed(self.decoder), reversed(dec_caches)):
            dh = layer.backward(params, c, tanh_backward(h, dh), grads)
        d_gated = d_gated + dh
        np.add.at(grads["dm.gate"], idx, (d_gated * enc[None]).sum(axis=1))
        d_enc = (d_gated * gates[:, None, :]).sum(axis=0)
        for layer, (c, h) in zip(reversed(self.encoder), reversed(enc_caches)):
            d_enc = layer.backward(params, c, tanh_backward(h, d_enc), grads)
        return d_enc


def model_loss(pred_state, pred_reward, next_state, reward):
    """(L_state, L_reward): Euclidean norm of the state error and squared reward error."""
    diff = np.asarray(pred_state, dtype=float) - np.asarray(next_state, dtype=float)
    return float(np.sqrt(np.sum(diff * diff))), float((float(pred_reward) - float(reward)) ** 2)


def model_loss_grads(pred_state, pred_reward, next_state, reward):
    """Losses plus their gradients w.r.t. the predictions (and, by sign, the targets)."""
    diff = pred_state - next_state
    norm = np.sqrt(np.sum(diff * diff))
    d_state = diff / norm if norm > 0 else np.zeros_like(diff)
    err = pred_reward - reward
    return float(norm), float(err * err), d_state, 2.0 * err
