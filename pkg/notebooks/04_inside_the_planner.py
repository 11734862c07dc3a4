"""
Inside the one-step planner
===========================

For one displayed sentence the planner asks the model what happens after
each of the 15 possible deletions, scores each by predicted reward plus the
discounted critic value of the predicted next state, and turns the scores
into a softmax policy.  This script prints that table for a freshly
initialised agent and, if a checkpoint path is given in ``MBAC_NB_CHECKPOINT``,
for a trained one.
"""

#%%
import os

import numpy as np

from mbac import RunConfig, env
from mbac import checkpoint as ckpt_io
from mbac.agent import Agent
from mbac.corpus import EmbeddingTable, build_store, tokenize
from mbac.harness import agent_from_checkpoint

store = build_store([tokenize("the quiet girl watched the river from the old bridge")] * 2)
state, obs = env.reset(store, "train", np.random.default_rng(5))
print("display:", " ".join(obs.words), f"| intent {state.intent}")


def show(agent):
    s, _ = agent.update_state(agent.initial_state(), None, 0.0, obs)
    out = agent.plan(s)
    probs, value = agent.policy(s)
    print(" a   R_hat   G_hat  planner  actor   true")
    for a in range(1, 16):
        true = env.reward_oracle(state.intent, a, 1)[0]
        print(f"{a:2d} {out.pred_rewards[a - 1]:7.2f} {out.returns[a - 1]:7.2f} "
              f"{out.probs[a - 1]:8.3f} {probs[a - 1]:6.3f} {true:6d}")
    print(f"V_planner {out.value:.3f}, critic {value:.3f}")


#%%
cfg = RunConfig(corpus="unused", seed=0)
fresh = Agent(cfg, EmbeddingTable(cfg.net.embed_dim, seed=0, dtype=np.float32), np.random.default_rng(0))
show(fresh)

#%%
path = os.environ.get("MBAC_NB_CHECKPOINT")
if path:
    show(agent_from_checkpoint(ckpt_io.load(path)))
