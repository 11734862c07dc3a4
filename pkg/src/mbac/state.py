"""Recurrent state-update function.

The previous state is pooled over its occupied positions and extended with
the previous reward; a bilinear map combines that vector with the previous
action's embedding into a context vector ``chi``.  ``chi`` is appended to
every token embedding of the new observation and the result is run through
a two-layer bidirectional GRU whose per-position outputs form the new state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import N_POSITIONS
from .env import N_ACTIONS
from .nn import BiGRUStack, Bilinear, Embedding


@dataclass
class AgentState:
    matrix: np.ndarray  # (positions, state_dim)
    mask: np.ndarray    # (positions,) bool, occupied rows

    @property
    def shape(self):
        return self.matrix.shape


class StateUpdater:
    def __init__(self, preset, embeddings):
        self.preset = preset
        self.embeddings = embeddings
        d_s = preset.state_dim
        self.bilinear = Bilinear("su.chi", d_s + 1, preset.action_dim, preset.chi_dim)
        self.actions = Embedding("su.action", N_ACTIONS, preset.action_dim)
        self.gru = BiGRUStack("su.gru", preset.omega_dim, preset.hidden, layers=2)

    def init_params(self, rng, dtype=np.float64):
        p = {}
        p.update(self.bilinear.init(rng, dtype))
        p.update(self.actions.init(rng, dtype))
        p.update(self.gru.init(rng, dtype))
        return p

    def init_state(self, dtype=np.float64):
        """All-ones state with every position marked occupied."""
        return AgentState(np.ones((N_POSITIONS, self.preset.state_dim), dtype=dtype),
                          np.ones(N_POSITIONS, dtype=bool))

    def embed_observation(self, obs, dtype):
        tokens = list(obs.words) + list(obs.speech)
        if len(tokens) > N_POSITIONS:
            raise ValueError(f"observation has {len(tokens)} tokens, at most {N_POSITIONS} fit")
        emb = np.zeros((N_POSITIONS, self.preset.embed_dim), dtype=dtype)
        for i, tok in enumerate(tokens):
            emb[i] = self.embeddings(tok)
        mask = np.zeros(N_POSITIONS, dtype=bool)
        mask[:len(tokens)] = True
        return emb, mask

    def build_omega(self, params, prev, prev_action, prev_reward, obs):
        """Recurrent input rows [token embedding | chi]; ``prev_action`` is 1-based or None."""
        dtype = params["su.chi.z"].dtype
        pooled = prev.matrix[prev.mask].mean(axis=0)
        s_bar = np.concatenate([pooled, np.array([prev_reward], dtype=pooled.dtype)]).astype(dtype, copy=False)
        a_vec, a_cache = self.actions.forward(params, None if prev_action is None else prev_action - 1)
        chi, chi_cache = self.bilinear.forward(params, s_bar, a_vec)
        emb, mask = self.embed_observation(obs, dtype)
        omega = np.concatenate([emb, np.broadcast_to(chi, (N_POSITIONS, chi.size))], axis=1)
        return omega, mask, (a_cache, chi_cache)

    def forward(self, params, prev, prev_action, prev_reward, obs):
        omega, mask, c1 = self.build_omega(params, prev, prev_action, prev_reward, obs)
        out, c2 = self.gru.forward(params, omega)
        return AgentState(out, mask), (c1, c2)

    def backward(self, params, cache, d_state, grads):
        """Accumulate parameter gradients; the previous state is treated as a constant."""
        (a_cache, chi_cache), gru_cache = cache
        d_omega = self.gru.backward(params, gru_cache, d_state, grads)
        d_chi = d_omega[:, self.preset.embed_dim:].sum(axis=0)
        _, d_a = self.bilinear.backward(params, chi_cache, d_chi, grads)
        self.actions.backward(params, a_cache, d_a, grads)

