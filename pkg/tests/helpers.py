"""Small shared builders for the unit tests."""

import numpy as np

from mbac.agent import Agent
from mbac.config import Preset, RunConfig
from mbac.corpus import EmbeddingTable
from mbac.env import Observation

TINY = Preset("tiny", embed_dim=6, chi_dim=5, hidden=2, action_dim=5,
              trunk=(4, 4, 6), encoder=(4, 4, 6), decoder=(6, 4, 6))


def obs(*words):
    return Observation(tuple(words))


def random_obs(rng, n, vocab=40):
    return Observation(tuple(f"v{i}" for i in rng.integers(vocab, size=n)))


def make_agent(seed=0, dtype="float64", **overrides):
    cfg = RunConfig(corpus="unused", dtype=dtype, seed=seed, **overrides)
    emb = EmbeddingTable(cfg.net.embed_dim, seed=seed, dtype=np.dtype(dtype))
    return Agent(cfg, emb, np.random.default_rng(seed))
