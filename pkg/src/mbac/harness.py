"""Training and evaluation runs, metrics files and MBAC-lite detachment."""

from __future__ import annotations

import csv
import json
import logging
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from . import env as edit_env
from .agent import Agent
from .checkpoint import Checkpoint
from .config import RunConfig
from .corpus import EmbeddingTable, load_corpus
from .env import N_ACTIONS

log = logging.getLogger(__name__)

REWARD_WINDOW = 1000
ABS_ERR_WINDOW = 300
LOSS_KEYS = ("l_state", "l_reward", "l_actor", "l_critic", "kl", "entropy", "a2c_policy", "a2c_value")
ACTION_KEYS = tuple(f"action_{a}" for a in range(1, N_ACTIONS + 1))
COLUMNS = ("interaction", "intent", "reward", "steps", "total_steps", "actions",
           "reward_ma1000", "abs_err_mean300") + ACTION_KEYS + LOSS_KEYS + ("skipped",)
_INT_COLS = {"interaction", "intent", "steps", "total_steps", "skipped", *ACTION_KEYS}


# ---------------------------------------------------------------- setup


def run_streams(seed):
    """Independent generators for environment, parameter init and action sampling."""
    env_ss, init_ss, act_ss = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(env_ss), np.random.default_rng(init_ss), np.random.default_rng(act_ss)


def make_embeddings(config):
    path = config.embedding_file if config.embedding == "file" else None
    return EmbeddingTable(config.net.embed_dim, seed=config.seed, path=path, dtype=config.dtype)


def load_store(config, corpus=None):
    return load_corpus(corpus or config.corpus, seed=config.seed, max_sentences=config.max_sentences or None)


# ---------------------------------------------------------------- metrics


class MetricsTracker:
    """Moving windows and cumulative counts behind one metrics row per interaction."""

    def __init__(self):
        self.interactions = 0
        self.total_steps = 0
        self.rewards = deque(maxlen=REWARD_WINDOW)
        self.abs_errors = deque(maxlen=ABS_ERR_WINDOW)
        self.action_counts = np.zeros(N_ACTIONS, dtype=np.int64)

    def record(self, episode, intent):
        self.interactions += 1
        self.total_steps += episode.steps
        self.rewards.append(episode.reward)
        self.abs_errors.extend(episode.abs_errors)
        for a in episode.actions:
            self.action_counts[a - 1] += 1
        row = {
            "interaction": self.interactions,
            "intent": intent,
            "reward": float(episode.reward),
            "steps": episode.steps,
            "total_steps": self.total_steps,
            "actions": ";".join(map(str, episode.actions)),
            "reward_ma1000": float(np.mean(np.array(self.rewards))),
            "abs_err_mean300": float(np.mean(np.array(self.abs_errors))),
        }
        row.update({k: int(c) for k, c in zip(ACTION_KEYS, self.action_counts)})
        for k in LOSS_KEYS:
            v = episode.losses.get(k)
            row[k] = None if v is None else float(v)
        row["skipped"] = episode.skipped
        return row

    def action_entropy(self):
        return counts_entropy(self.action_counts)

    def to_arrays(self):
        return {
            "reward_window": np.array(self.rewards, dtype=np.float32),
            "abs_window": np.array(self.abs_errors, dtype=np.float32),
            "action_counts": self.action_counts.astype(np.float32),
        }

    @classmethod
    def from_checkpoint(cls, ckpt):
        t = cls()
        t.interactions = int(ckpt.meta["interactions"])
        t.total_steps = int(ckpt.meta["total_steps"])
        arrays = ckpt.group("metrics/")
        t.rewards.extend(float(x) for x in arrays["reward_window"])
        t.abs_errors.extend(int(x) for x in arrays["abs_window"])
        t.action_counts = arrays["action_counts"].astype(np.int64)
        return t


def counts_entropy(counts):
    counts = np.asarray(counts, dtype=float)
    if counts.sum() == 0:
        return 0.0
    p = counts / counts.sum()
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


class MetricsWriter:
    def __init__(self, path, append=False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.fh = open(self.path, "a" if append else "w", newline="", encoding="utf-8")
        self.writer = csv.writer(self.fh)
        if not append:
            self.writer.writerow(COLUMNS)

    def write(self, row):
        self.writer.writerow([_fmt(row[c]) for c in COLUMNS])

    def close(self):
        self.fh.close()


def emit_metrics(records, path):
    """Write a full list of metrics rows (header + one row per interaction)."""
    w = MetricsWriter(path)
    try:
        for r in records:
            w.write(r)
    finally:
        w.close()
    return Path(path)


def read_metrics(path):
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for raw in csv.DictReader(fh):
            row = {}
            for k in COLUMNS:
                v = raw[k]
                if k == "actions":
                    row[k] = v
                elif v == "":
                    row[k] = None
                elif k in _INT_COLS:
                    row[k] = int(v)
                else:
                    row[k] = float(v)
            out.append(row)
    return out


def write_summary(path, tracker, records_tail):
    rewards = [r["reward"] for r in records_tail]
    items = {
        "interactions": tracker.interactions,
        "total_steps": tracker.total_steps,
        "reward_ma1000": float(np.mean(np.array(tracker.rewards))) if tracker.rewards else 0.0,
        "abs_err_mean300": float(np.mean(np.array(tracker.abs_errors))) if tracker.abs_errors else 0.0,
        "action_entropy": tracker.action_entropy(),
        "mean_reward_tail": float(np.mean(rewards)) if rewards else 0.0,
    }
    Path(path).write_text("".join(f"{k}={_fmt(v)}\n" for k, v in items.items()), encoding="utf-8")
    return items


def read_summary(path):
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        k, _, v = line.partition("=")
        out[k] = float(v) if "." in v or "e" in v else int(v)
    return out


# ---------------------------------------------------------------- checkpoints


def _rng_state(rng):
    return json.dumps(rng.bit_generator.state, sort_keys=True, separators=(",", ":"))


def _set_rng_state(rng, text):
    rng.bit_generator.state = json.loads(text)


def agent_checkpoint(agent, tracker=None, rngs=None):
    meta = {"algorithm": agent.algorithm, "lite": "1" if agent.lite else "0"}
    meta.update({f"config.{k}": v for k, v in agent.config.to_items()})
    ck = Checkpoint(meta, {})
    for comp, params in agent.params.items():
        ck.put_group(f"params/{comp}/", params)
        opt = agent.opt[comp]
        meta[f"adam.{comp}.step"] = opt.step
        ck.put_group(f"adam/{comp}/m/", opt.m)
        ck.put_group(f"adam/{comp}/v/", opt.v)
    if tracker is not None:
        meta["interactions"] = tracker.interactions
        meta["total_steps"] = tracker.total_steps
        ck.put_group("metrics/", tracker.to_arrays())
    if rngs is not None:
        meta["rng.env"] = _rng_state(rngs[0])
        meta["rng.agent"] = _rng_state(rngs[1])
    return ck


def config_from_checkpoint(ck):
    items = {k[len("config."):]: v for k, v in ck.meta.items() if k.startswith("config.")}
    return RunConfig.from_mapping(items)


def agent_from_checkpoint(ck, embeddings=None):
    config = config_from_checkpoint(ck)
    if embeddings is None:
        embeddings = make_embeddings(config)
    agent = Agent(config, embeddings, lite=ck.lite)
    dtype = np.dtype(config.dtype)
    comps = ["su", "ac"] + (["dm"] if agent.has_model else [])
    for comp in comps:
        params = {k: v.astype(dtype) for k, v in ck.group(f"params/{comp}/").items()}
        if not params:
            raise ckpt_io.CheckpointError(f"checkpoint has no parameters for component {comp!r}")
        agent.params[comp] = params
    agent.reset_optimizers()
    for comp in comps:
        opt = agent.opt[comp]
        opt.step = int(ck.meta.get(f"adam.{comp}.step", 0))
        m, v = ck.group(f"adam/{comp}/m/"), ck.group(f"adam/{comp}/v/")
        if m:
            opt.m = {k: a.astype(dtype) for k, a in m.items()}
            opt.v = {k: a.astype(dtype) for k, a in v.items()}
    return agent


def detach_lite(ck):
    """Drop the model and its optimizer state from an MBAC checkpoint."""
    if ck.meta.get("algorithm") != "mbac":
        raise ValueError("only MBAC checkpoints can be detached")
    if ck.lite:
        log.warning("checkpoint is already lite; returned unchanged")
        return Checkpoint(dict(ck.meta), dict(ck.arrays))
    meta = {k: v for k, v in ck.meta.items() if not k.startswith("adam.dm.")}
    meta["lite"] = "1"
    arrays = {k: v for k, v in ck.arrays.items()
              if not (k.startswith("params/dm/") or k.startswith("adam/dm/"))}
    return Checkpoint(meta, arrays)


# ---------------------------------------------------------------- training


@dataclass
class TrainResult:
    checkpoint_path: Path
    metrics_path: Path
    summary: dict
    records: list


def train(config, resume=None, stop_after=None, progress_every=0):
    """Run ``config.budget`` interactions on the train split as one stream.

    ``resume`` is a checkpoint (or path) from an earlier run of the same
    configuration; training continues from its interaction count and
    metrics are appended.  ``stop_after`` ends the run early (for splitting
    a run into resumable pieces).
    """
    config.validate()
    out_dir = Path(config.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    store = load_store(config)
    embeddings = make_embeddings(config)
    metrics_path = out_dir / "metrics.csv"

    if resume is not None:
        ck = ckpt_io.load(resume) if not isinstance(resume, Checkpoint) else resume
        prior = config_from_checkpoint(ck)
        for key, value in prior.to_items():
            if key not in ("interactions", "output", "checkpoint_every") and getattr(config, key) != value:
                raise ValueError(f"resume config mismatch on {key}: {getattr(config, key)!r} != {value!r}")
        agent = agent_from_checkpoint(ck, embeddings)
        agent.config = config
        env_rng, _, act_rng = run_streams(config.seed)
        _set_rng_state(env_rng, ck.meta["rng.env"])
        _set_rng_state(act_rng, ck.meta["rng.agent"])
        tracker = MetricsTracker.from_checkpoint(ck)
        writer = MetricsWriter(metrics_path, append=metrics_path.exists())
    else:
        env_rng, init_rng, act_rng = run_streams(config.seed)
        agent = Agent(config, embeddings, init_rng)
        tracker = MetricsTracker()
        writer = MetricsWriter(metrics_path)

    trace = None
    if config.trace:
        trace_fh = open(out_dir / "trace.log", "a" if resume is not None else "w", encoding="utf-8")
        trace = edit_env.TraceWriter(trace_fh)

    end = config.budget if stop_after is None else min(config.budget, stop_after)
    records = []
    try:
        while tracker.interactions < end:
            ep_state, obs = edit_env.reset(store, "train", env_rng)
            log_ = agent.run_episode(ep_state, obs, act_rng, trace, tracker.interactions + 1)
            row = tracker.record(log_, ep_state.initial_intent)
            writer.write(row)
            records.append(row)
            if progress_every and tracker.interactions % progress_every == 0:
                log.info("%s seed %d: %d interactions, reward_ma %.3f, abs_err %.3f",
                         config.algorithm, config.seed, tracker.interactions,
                         row["reward_ma1000"], row["abs_err_mean300"])
            if config.checkpoint_every and tracker.interactions % config.checkpoint_every == 0:
                ckpt_io.save(agent_checkpoint(agent, tracker, (env_rng, act_rng)),
                             out_dir / f"checkpoint-{tracker.interactions}.bin")
    finally:
        writer.close()
        if trace is not None:
            trace.fh.close()

    ck_path = ckpt_io.save(agent_checkpoint(agent, tracker, (env_rng, act_rng)), out_dir / "checkpoint.bin")
    summary = write_summary(out_dir / "summary.txt", tracker, records[-REWARD_WINDOW:])
    return TrainResult(ck_path, metrics_path, summary, records)


# ---------------------------------------------------------------- evaluation


@dataclass
class EvalSummary:
    episodes: int
    mean: float
    median: float
    q1: float
    q3: float
    mean_abs_err: float
    policy: str
    greedy: bool
    rewards: np.ndarray

    def as_dict(self):
        return {k: getattr(self, k) for k in ("episodes", "mean", "median", "q1", "q3", "mean_abs_err", "policy", "greedy")}


def evaluate_agent(agent, store, split="test", episodes=2000, policy="actor", greedy=False, seed=0):
    """Play ``episodes`` interactions without learning and summarise rewards."""
    env_rng = np.random.default_rng([seed, 1])
    act_rng = np.random.default_rng([seed, 2])
    rewards = np.empty(episodes)
    errors = []
    for i in range(episodes):
        ep_state, obs = edit_env.reset(store, split, env_rng)
        ep = agent.act_episode(ep_state, obs, act_rng, policy=policy, greedy=greedy)
        rewards[i] = ep.reward
        errors.extend(ep.abs_errors)
    q1, med, q3 = np.percentile(rewards, [25, 50, 75])
    return EvalSummary(episodes, float(rewards.mean()), float(med), float(q1), float(q3),
                       float(np.mean(errors)), policy, greedy, rewards)


def evaluate(checkpoint, split="test", episodes=2000, policy="actor", greedy=False, seed=None, corpus=None):
    ck = ckpt_io.load(checkpoint) if not isinstance(checkpoint, Checkpoint) else checkpoint
    if policy == "planner" and (ck.lite or ck.meta.get("algorithm") != "mbac"):
        raise ValueError("the planner policy needs a full MBAC checkpoint (this one has no model)")
    agent = agent_from_checkpoint(ck)
    store = load_store(agent.config, corpus)
    seed = agent.config.seed if seed is None else seed
    return evaluate_agent(agent, store, split, episodes, policy, greedy, seed)
