"""Learning agents: model-based actor-critic and the A2C baseline.

Both agents share the state-update function and the actor-critic network.
The recurrent state is reset to all ones at the start of every interaction
and gradients are truncated at the previous state, so each step's backward
pass runs through a single application of the state-update function.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import env as edit_env
from .model import DynamicsModel, model_loss_grads
from .nn import Adam, clip_global_norm, zeros_like
from .planner import greedy_action, plan, sample_action
from .policy import ActorCritic, a2c_losses, mbac_losses, nstep_returns
from .state import AgentState, StateUpdater

log = logging.getLogger(__name__)

COMPONENTS = ("su", "ac", "dm")


@dataclass
class EpisodeLog:
    reward: float = 0.0
    actions: list = field(default_factory=list)
    intents: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    losses: dict = field(default_factory=dict)
    skipped: int = 0

    @property
    def steps(self):
        return len(self.actions)

    @property
    def abs_errors(self):
        return [abs(a - k) for a, k in zip(self.actions, self.intents)]


def _mean_losses(records):
    if not records:
        return {}
    keys = records[0].keys()
    return {k: float(np.mean([r[k] for r in records])) for k in keys}


class Agent:
    """Parameters, optimizers and per-interaction learning rules.

    ``algorithm`` is ``"mbac"`` or ``"a2c"``; an MBAC agent with
    ``lite=True`` carries no model and can only act from its actor.
    """

    def __init__(self, config, embeddings, init_rng=None, lite=False):
        self.config = config
        self.algorithm = config.algorithm
        self.preset = config.net
        self.dtype = np.dtype(config.dtype)
        self.lite = lite
        self.su = StateUpdater(self.preset, embeddings)
        self.ac = ActorCritic(self.preset)
        self.dm = DynamicsModel(self.preset) if self.has_model else None
        self.params = {}
        if init_rng is not None:
            self.params["su"] = self.su.init_params(init_rng, self.dtype)
            self.params["ac"] = self.ac.init_params(init_rng, self.dtype)
            if self.has_model:
                self.params["dm"] = self.dm.init_params(init_rng, self.dtype)
            self.reset_optimizers()

    @property
    def has_model(self):
        return self.algorithm == "mbac" and not self.lite

    def reset_optimizers(self):
        c = self.config
        self.opt = {
            "su": Adam(self.params["su"], lr=c.lr_actor),
            "ac": Adam(self.params["ac"], lr=c.lr_actor, lr_map={"ac.v.": c.lr_critic}),
        }
        if self.has_model:
            self.opt["dm"] = Adam(self.params["dm"], lr=c.lr_model)

    # ------------------------------------------------------------ helpers

    def initial_state(self):
        return self.su.init_state(self.dtype)

    def update_state(self, prev, prev_action, prev_reward, obs):
        return self.su.forward(self.params["su"], prev, prev_action, prev_reward, obs)

    def policy(self, state):
        (_, probs, value), _ = self.ac.forward(self.params["ac"], state.matrix)
        return probs, float(value)

    def plan(self, state):
        if not self.has_model:
            raise RuntimeError("planning needs a model; this agent has none")
        return plan(state.matrix, self.dm, self.params["dm"], self.ac, self.params["ac"],
                    self.config.gamma, self.config.temperature)

    def _apply(self, name, grads):
        grads, _ = clip_global_norm(grads, self.config.clip_norm)
        return self.opt[name].update(self.params[name], grads)

    # ------------------------------------------------------------ learning

    def run_episode(self, ep_state, obs, rng, trace=None, episode_index=0):
        if self.algorithm == "mbac":
            return self._mbac_episode(ep_state, obs, rng, trace, episode_index)
        return self._a2c_episode(ep_state, obs, rng, trace, episode_index)

    def mbac_update(self, state, cache, planner_probs, planner_value):
        """Regress the actor onto the planner policy and the critic onto its value.

        Gradients flow through the actor-critic and the state-update step
        that produced ``state``; returns ``(loss record, applied)``.
        """
        (_, probs, value), ac_cache = self.ac.forward(self.params["ac"], state.matrix)
        losses, d_logits, d_value = mbac_losses(probs, value, planner_probs, planner_value, self.config.beta)
        rec = {"l_actor": losses.actor, "l_critic": losses.critic, "kl": losses.kl, "entropy": losses.entropy}
        if not (np.isfinite(losses.actor) and np.isfinite(losses.critic)):
            log.warning("non-finite actor/critic loss; update skipped")
            return rec, False
        g_ac, g_su = zeros_like(self.params["ac"]), zeros_like(self.params["su"])
        d_state = self.ac.backward(self.params["ac"], ac_cache, d_logits, d_value, g_ac)
        if cache is not None:
            self.su.backward(self.params["su"], cache, d_state, g_su)
        ok = self._apply("ac", g_ac)
        if cache is not None:
            ok = self._apply("su", g_su) and ok
        return rec, ok

    def model_update(self, state, cache, action, reward, next_state=None, next_cache=None):
        """One online model step on the transition ``(state, action) -> (next_state, reward)``.

        ``next_state=None`` marks a terminal transition, whose state target is
        the zero matrix.  ``cache``/``next_cache`` are only used when
        ``joint_state_training`` is on.
        """
        target = np.zeros_like(state.matrix) if next_state is None else next_state.matrix
        pred, m_cache = self.dm.forward(self.params["dm"], state.matrix, action)
        l_state, l_reward, d_pred_state, d_pred_reward = model_loss_grads(pred.state, pred.reward, target, reward)
        rec = {"l_state": l_state, "l_reward": l_reward}
        if not (np.isfinite(l_state) and np.isfinite(l_reward)):
            log.warning("non-finite model loss; update skipped")
            return rec, False
        g_dm = zeros_like(self.params["dm"])
        d_input = self.dm.backward(self.params["dm"], m_cache, d_pred_state, d_pred_reward, g_dm)
        ok = self._apply("dm", g_dm)
        if self.config.joint_state_training and cache is not None:
            g_su = zeros_like(self.params["su"])
            self.su.backward(self.params["su"], cache, d_input, g_su)
            if next_cache is not None:
                self.su.backward(self.params["su"], next_cache, -d_pred_state, g_su)
            ok = self._apply("su", g_su) and ok
        return rec, ok

    def a2c_update(self, steps, actions, rewards):
        """One update from a finished interaction.

        ``steps`` holds ``(state_cache, ac_cache, probs, value)`` per step;
        returns are full-episode discounted sums with a zero bootstrap.
        """
        returns = nstep_returns(rewards, self.config.gamma, 0.0)
        probs = np.stack([s[2] for s in steps])
        values = np.array([s[3] for s in steps], dtype=probs.dtype)
        p_loss, v_loss, ent, d_logits, d_values = a2c_losses(probs, values, actions, returns, self.config.beta)
        rec = {"a2c_policy": p_loss, "a2c_value": v_loss, "entropy": ent}
        if not (np.isfinite(p_loss) and np.isfinite(v_loss)):
            log.warning("non-finite A2C loss; update skipped")
            return rec, False
        g_ac, g_su = zeros_like(self.params["ac"]), zeros_like(self.params["su"])
        for t, (su_cache, ac_cache, _, _) in enumerate(steps):
            d_state = self.ac.backward(self.params["ac"], ac_cache, d_logits[t], d_values[t], g_ac)
            self.su.backward(self.params["su"], su_cache, d_state, g_su)
        ok = self._apply("ac", g_ac)
        ok = self._apply("su", g_su) and ok
        return rec, ok

    def _mbac_episode(self, ep_state, obs, rng, trace, episode_index):
        out = EpisodeLog()
        records = []
        state, cache = self.update_state(self.initial_state(), None, 0.0, obs)
        while True:
            planned = self.plan(state)
            action = sample_action(planned.probs, rng)
            out.intents.append(ep_state.intent)
            result, ep_state = edit_env.step(ep_state, action)
            out.actions.append(action)
            out.rewards.append(result.reward)
            if trace is not None:
                trace.write(episode_index, len(out.actions), out.intents[-1], action, result.reward, result.terminal)

            rec, ok = self.mbac_update(state, cache, planned.probs, planned.value)
            out.skipped += not ok
            if result.terminal:
                next_state, next_cache = None, None
            else:
                next_state, next_cache = self.update_state(state, action, result.reward, result.observation)
            m_rec, ok = self.model_update(state, cache, action, result.reward, next_state, next_cache)
            out.skipped += not ok
            rec.update(m_rec)
            records.append(rec)
            if result.terminal:
                break
            state, cache = next_state, next_cache
        out.reward = float(sum(out.rewards))
        out.losses = _mean_losses(records)
        return out

    def _a2c_episode(self, ep_state, obs, rng, trace, episode_index):
        out = EpisodeLog()
        state, cache = self.update_state(self.initial_state(), None, 0.0, obs)
        steps = []
        while True:
            (_, probs, value), ac_cache = self.ac.forward(self.params["ac"], state.matrix)
            action = sample_action(probs, rng)
            out.intents.append(ep_state.intent)
            result, ep_state = edit_env.step(ep_state, action)
            out.actions.append(action)
            out.rewards.append(result.reward)
            if trace is not None:
                trace.write(episode_index, len(out.actions), out.intents[-1], action, result.reward, result.terminal)
            steps.append((cache, ac_cache, probs, value))
            if result.terminal:
                break
            state, cache = self.update_state(state, action, result.reward, result.observation)
        out.losses, ok = self.a2c_update(steps, out.actions, out.rewards)
        out.skipped += not ok
        out.reward = float(sum(out.rewards))
        return out

    # ------------------------------------------------------------ acting only

    def act_episode(self, ep_state, obs, rng, policy="actor", greedy=False):
        """Play one interaction without learning; returns an :class:`EpisodeLog`."""
        if policy == "planner" and not self.has_model:
            raise RuntimeError("planner policy needs model parameters (lite or A2C checkpoint given)")
        if policy not in ("actor", "planner"):
            raise ValueError(f"unknown policy {policy!r}")
        out = EpisodeLog()
        state, _ = self.update_state(self.initial_state(), None, 0.0, obs)
        while True:
            if policy == "planner":
                planned = self.plan(state)
                scores, probs = planned.returns, planned.probs
            else:
                probs, _ = self.policy(state)
                scores = probs
            action = greedy_action(scores) if greedy else sample_action(probs, rng)
            out.intents.append(ep_state.intent)
            result, ep_state = edit_env.step(ep_state, action)
            out.actions.append(action)
            out.rewards.append(result.reward)
            if result.terminal:
                break
            state, _ = self.update_state(state, action, result.reward, result.observation)
        out.reward = float(sum(out.rewards))
        return out


def policy_agent(fn):
    """Wrap ``fn(ep_state, obs, rng) -> action`` as an acting-only agent for evaluation hooks."""

    class _Hook:
        def act_episode(self, ep_state, obs, rng, policy="actor", greedy=False):
            out = EpisodeLog()
            while True:
                action = fn(ep_state, obs, rng)
                out.intents.append(ep_state.intent)
                result, ep_state = edit_env.step(ep_state, action)
                out.actions.append(action)
                out.rewards.append(result.reward)
                if result.terminal:
                    break
                obs = result.observation
            out.reward = float(sum(out.rewards))
            return out

    return _Hook()


__all__ = ["Agent", "AgentState", "EpisodeLog", "policy_agent", "COMPONENTS"]
