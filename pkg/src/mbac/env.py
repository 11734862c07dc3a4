"""Simulated voice document-editing task.

A clean sentence has its tail replaced by random vocabulary words; the
simulated user says "no" until the agent has deleted exactly the noisy
tail.  Deleting too many words ends the interaction with a penalty equal to
the number of clean words lost; deleting too few costs the number of times
the user has said "no" so far.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .corpus import sample_sentence

N_ACTIONS = 15
SPEECH = ("no",)


@dataclass(frozen=True)
class Observation:
    words: tuple
    speech: tuple = SPEECH


@dataclass(frozen=True)
class EpisodeState:
    words: tuple
    intent: int
    m: int
    initial_intent: int
    clean_prefix: tuple
    terminal: bool = False

    def observation(self):
        return Observation(self.words)


@dataclass(frozen=True)
class StepResult:
    reward: float
    terminal: bool
    observation: Observation | None
    outcome: str  # "exact", "overshoot" or "undershoot"


def reward_oracle(intent, action, m):
    """Reward and termination for deleting ``action`` words.

    >>> reward_oracle(2, 5, 1)
    (-3, True)
    >>> reward_oracle(7, 3, 4)
    (-4, False)
    """
    if action == intent:
        return 0, True
    if action > intent:
        return -(action - intent), True
    return -m, False


def episode_upper_bound(intent):
    """Best achievable total reward: delete exactly ``intent`` words at once."""
    if intent < 1:
        raise ValueError("intent must be positive")
    return 0.0


def corrupt(sentence, cut, rng, words):
    """Replace tokens from position ``cut`` onward with uniform vocabulary noise."""
    n = len(sentence)
    if not 1 <= cut <= n - 1:
        raise ValueError(f"cut {cut} outside [1, {n - 1}]")
    noise = tuple(words[i] for i in rng.integers(len(words), size=n - cut))
    prefix = tuple(sentence[:cut])
    return EpisodeState(prefix + noise, n - cut, 1, n - cut, prefix)


def reset(store, split, rng):
    """Start an interaction from a random sentence of ``split``."""
    sentence = sample_sentence(store, split, rng)
    cut = int(rng.integers(1, len(sentence)))
    state = corrupt(sentence, cut, rng, store.words)
    return state, state.observation()


def step(state, action):
    if state.terminal:
        raise ValueError("cannot step a terminal episode")
    if not hasattr(action, "__index__"):
        raise ValueError(f"action must be an integer, got {action!r}")
    action = int(action)
    if not 1 <= action <= N_ACTIONS:
        raise ValueError(f"action {action} outside [1, {N_ACTIONS}]")
    reward, terminal = reward_oracle(state.intent, action, state.m)
    n_del = min(action, len(state.words))
    words = state.words[:len(state.words) - n_del]
    if terminal:
        outcome = "exact" if reward == 0 else "overshoot"
        nxt = replace(state, words=words, terminal=True)
        return StepResult(float(reward), True, None, outcome), nxt
    nxt = replace(state, words=words, intent=state.intent - action, m=state.m + 1)
    return StepResult(float(reward), False, nxt.observation(), "undershoot"), nxt


class TraceWriter:
    """Newline-delimited key=value step log for replay tests."""

    FIELDS = ("episode", "step", "intent", "action", "reward", "terminal")

    def __init__(self, fh):
        self.fh = fh

    def write(self, episode, step_idx, intent, action, reward, terminal):
        vals = (episode, step_idx, intent, action, repr(float(reward)), int(bool(terminal)))
        self.fh.write(" ".join(f"{k}={v}" for k, v in zip(self.FIELDS, vals)) + "\n")


def read_trace(lines):
    out = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        rec = dict(kv.split("=", 1) for kv in line.split())
        out.append({
            "episode": int(rec["episode"]), "step": int(rec["step"]), "intent": int(rec["intent"]),
            "action": int(rec["action"]), "reward": float(rec["reward"]), "terminal": bool(int(rec["terminal"])),
        })
    return out

