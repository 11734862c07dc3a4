"""
The editing task
================

A sentence is shown with its tail replaced by noise words.  The simulated
user says "no" until the agent has deleted exactly the noisy tail.  This
script walks through one interaction by hand, prints the reward table and
computes what a uniform-random agent should expect to earn.
"""

#%%
import numpy as np

from mbac import env
from mbac.corpus import build_store, tokenize

store = build_store([tokenize(s) for s in [
    "The old man opened the door slowly.",
    "Anna found a small key under the mat.",
    "We waited outside the station for an hour.",
    "My brother never reads the letters he gets.",
]])
rng = np.random.default_rng(3)
state, obs = env.reset(store, "train", rng)
print("display :", " ".join(obs.words))
print("speech  :", obs.speech)
print("clean   :", " ".join(state.clean_prefix), f"(intent = {state.intent})")

#%%
# Delete one word at a time.  Each undershoot costs the number of "no"s so far.
total = 0.0
while True:
    result, state = env.step(state, 1)
    total += result.reward
    shown = " ".join(state.words)
    print(f"delete 1 -> reward {result.reward:+.0f} ({result.outcome}); display: {shown}")
    if result.terminal:
        break
print("total reward:", total)

#%%
# The full reward table for a first action (m = 1).  Rows are intents,
# columns are actions 1..15.
for k in range(1, 8):
    row = [env.reward_oracle(k, a, 1)[0] for a in range(1, 16)]
    print(f"intent {k}: " + " ".join(f"{r:4d}" for r in row))

#%%
# Expected total reward of a uniform-random agent, by exhaustive recursion
# over the episode tree.  Intents are uniform on [1, L-1] for a sentence of
# length L, so for ten-word sentences the average runs over intents 1..9.


def expected_uniform(intent, m=1):
    total = 0.0
    for a in range(1, 16):
        if a > intent:
            total -= a - intent
        elif a < intent:
            total += -m + expected_uniform(intent - a, m + 1)
    return total / 15


for k in (1, 3, 5, 9, 14):
    print(f"intent {k:2d}: E[return] = {expected_uniform(k):.3f}")
print("ten-word sentences:", np.mean([expected_uniform(k) for k in range(1, 10)]))
