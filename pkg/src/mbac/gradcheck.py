"""Finite-difference checks of every layer and of the full training losses."""

from __future__ import annotations

import numpy as np

from .config import N_POSITIONS, PRESETS
from .corpus import EmbeddingTable
from .env import Observation
from .model import DynamicsModel, model_loss_grads
from .nn import (BiGRUStack, Bilinear, Conv1d, Deconv1d, Embedding, Linear, finite_diff_check,
                 softmax, zeros_like)
from .policy import ActorCritic, a2c_losses, mbac_losses, nstep_returns
from .state import StateUpdater


def _with_input(params, x):
    p = dict(params)
    p["input"] = x
    return p


def _layer_case(layer, x, rng, extra=None):
    """Loss = <W, layer(x)> for a fixed random W; checks params and input."""
    params = layer.init(rng, np.float64)
    params = {k: v + rng.normal(0, 0.1, v.shape) for k, v in params.items()}
    y0, _ = layer.forward(params, x) if extra is None else layer.forward(params, x, extra)
    weights = rng.normal(size=np.shape(y0))

    def loss_fn(p):
        inp = p["input"]
        if extra is None:
            y, cache = layer.forward(p, inp)
        else:
            y, cache = layer.forward(p, inp, extra)
        g = zeros_like({k: v for k, v in p.items() if k != "input"})
        dy = weights
        if extra is None:
            dx = layer.backward(p, cache, dy, g)
        else:
            dx, _ = layer.backward(p, cache, dy, g)
        g["input"] = dx
        return np.sum(weights * y), g

    return loss_fn, _with_input(params, x)


def layer_cases(rng):
    cases = {
        "linear": (Linear("lin", 5, 4), rng.normal(size=(3, 5)), None),
        "conv1d-valid": (Conv1d("conv", 3, 4, 3, "valid"), rng.normal(size=(7, 3)), None),
        "conv1d-same-batched": (Conv1d("conv", 3, 4, 3, "same"), rng.normal(size=(2, 6, 3)), None),
        "deconv1d-same": (Deconv1d("deconv", 4, 3, 3, "same"), rng.normal(size=(2, 6, 4)), None),
        "deconv1d-valid": (Deconv1d("deconv", 2, 3, 3, "valid"), rng.normal(size=(5, 2)), None),
        "gru-bidirectional-stack": (BiGRUStack("gru", 4, 3, 2), rng.normal(size=(6, 4)), None),
        "bilinear": (Bilinear("bil", 5, 4, 3), rng.normal(size=5), rng.normal(size=4)),
    }
    out = {}
    for name, (layer, x, extra) in cases.items():
        out[name] = _layer_case(layer, x, rng, extra)

    emb = Embedding("emb", 6, 4)
    params = emb.init(rng, np.float64)
    w = rng.normal(size=4)

    def emb_loss(p):
        y, idx = emb.forward(p, 2)
        g = zeros_like(p)
        emb.backward(p, idx, w, g)
        return w @ y, g

    out["embedding-lookup"] = (emb_loss, params)
    return out


def _random_obs(rng, vocab, n_words):
    return Observation(tuple(vocab[i] for i in rng.integers(len(vocab), size=n_words)))


def _scaled(params, rng, scale=0.3):
    return {k: v + rng.normal(0, scale, v.shape) for k, v in params.items()}


def training_cases(preset_name="desk", seed=0):
    """Loss functions for the MBAC update set and the A2C update set (64-bit)."""
    rng = np.random.default_rng(seed)
    preset = PRESETS[preset_name]
    emb = EmbeddingTable(preset.embed_dim, seed=seed)
    vocab = [f"w{i}" for i in range(50)]
    su, ac, dm = StateUpdater(preset, emb), ActorCritic(preset), DynamicsModel(preset)
    params = {}
    params.update(_scaled(su.init_params(rng), rng))
    params.update(ac.init_params(rng))
    params.update(_scaled(dm.init_params(rng), rng))
    beta, gamma = 0.5, 0.9

    prev = su.init_state()
    prev.matrix = rng.uniform(-1, 1, prev.matrix.shape)
    obs = _random_obs(rng, vocab, 7)
    next_obs = _random_obs(rng, vocab, 5)
    action, reward = 4, -1.0
    planner_probs = softmax(rng.normal(size=15))
    planner_value = -1.7
    s_fixed, _ = su.forward(params, prev, 3, -1.0, obs)
    s_next_fixed, _ = su.forward(params, s_fixed, action, reward, next_obs)

    def actor_critic_loss(p):
        s, s_cache = su.forward(p, prev, 3, -1.0, obs)
        (_, probs, value), ac_cache = ac.forward(p, s.matrix)
        losses, d_logits, d_value = mbac_losses(probs, value, planner_probs, planner_value, beta)
        g = zeros_like(p)
        d_s = ac.backward(p, ac_cache, d_logits, d_value, g)
        su.backward(p, s_cache, d_s, g)
        # recomputed from arrays so the value keeps the caller's precision
        logp = np.log(probs)
        actor = np.sum(probs * (logp - np.log(planner_probs))) + beta * np.sum(probs * logp)
        return actor + (value - planner_value) ** 2, g

    def model_loss_fn(p, joint=False):
        g = zeros_like(p)
        if joint:
            s_in, s_cache = su.forward(p, prev, 3, -1.0, obs)
            s_next, next_cache = su.forward(p, s_fixed, action, reward, next_obs)
        else:
            s_in, s_next = s_fixed, s_next_fixed
        pred, m_cache = dm.forward(p, s_in.matrix, action)
        l_state, l_reward, d_ps, d_pr = model_loss_grads(pred.state, pred.reward, s_next.matrix, reward)
        d_in = dm.backward(p, m_cache, d_ps, d_pr, g)
        if joint:
            su.backward(p, s_cache, d_in, g)
            su.backward(p, next_cache, -d_ps, g)
        diff = pred.state - s_next.matrix
        return np.sqrt(np.sum(diff * diff)) + (pred.reward - reward) ** 2, g

    # a three-step A2C trajectory; previous states are held fixed (truncated gradients)
    traj_obs = [_random_obs(rng, vocab, n) for n in (9, 7, 4)]
    traj_actions = [2, 3, 6]
    traj_rewards = [-1.0, -2.0, -2.0]
    returns = nstep_returns(traj_rewards, gamma, 0.0)
    prevs = [su.init_state()]
    prev_actions, prev_rewards = [None], [0.0]
    for t in range(2):
        s_t, _ = su.forward(params, prevs[-1], prev_actions[-1], prev_rewards[-1], traj_obs[t])
        prevs.append(s_t)
        prev_actions.append(traj_actions[t])
        prev_rewards.append(traj_rewards[t])
    adv_fixed = None

    def a2c_forward(p):
        caches, probs, values = [], [], []
        for t in range(3):
            s, s_cache = su.forward(p, prevs[t], prev_actions[t], prev_rewards[t], traj_obs[t])
            (_, pr, v), ac_cache = ac.forward(p, s.matrix)
            caches.append((s_cache, ac_cache))
            probs.append(pr)
            values.append(v)
        return caches, np.stack(probs), np.array(values)

    def a2c_loss(p):
        caches, probs, values = a2c_forward(p)
        _, _, _, d_logits, d_values = a2c_losses(probs, values, traj_actions, returns, beta)
        idx = np.array(traj_actions) - 1
        logp = np.log(probs)
        ent = -np.sum(probs * logp, axis=1)
        policy_loss = -np.sum(adv_fixed * logp[np.arange(3), idx]) - beta * np.sum(ent)
        g = zeros_like(p)
        for t, (s_cache, ac_cache) in enumerate(caches):
            d_s = ac.backward(p, ac_cache, d_logits[t], d_values[t], g)
            su.backward(p, s_cache, d_s, g)
        return policy_loss + np.sum((returns - values) ** 2), g

    _, probs0, values0 = a2c_forward(params)
    adv_fixed = returns - values0
    assert probs0.shape == (3, 15) and N_POSITIONS == prevs[0].matrix.shape[0]

    return {
        "mbac-actor-critic": (actor_critic_loss, params),
        "mbac-model": (model_loss_fn, params),
        "mbac-model-joint-state": (lambda p: model_loss_fn(p, joint=True), params),
        "a2c-losses": (a2c_loss, params),
    }


def run_gradcheck(preset="desk", tolerance=1e-4, samples=150, seed=0, seeds=1):
    """Run every check; returns a list of ``(name, GradCheckReport)``."""
    results = []
    for s in range(seed, seed + seeds):
        rng = np.random.default_rng(s)
        for name, (fn, params) in layer_cases(rng).items():
            results.append((f"{name}[seed={s}]", finite_diff_check(fn, params, tolerance, samples, seed=s)))
    for name, (fn, params) in training_cases(preset, seed).items():
        results.append((name, finite_diff_check(fn, params, tolerance, samples, seed=seed)))
    return results
