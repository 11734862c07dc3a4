import logging
from functools import lru_cache

import numpy as np
import pytest

from mbac import checkpoint as ckpt_io
from mbac.agent import policy_agent
from mbac.config import ConfigError, RunConfig, load_config_file
from mbac.corpus import build_store
from mbac.env import read_trace
from mbac.harness import (ACTION_KEYS, COLUMNS, MetricsTracker, agent_from_checkpoint, counts_entropy,
                          detach_lite, emit_metrics, evaluate, evaluate_agent, read_metrics, read_summary,
                          train)


def same_checkpoint(a, b):
    """Bit-identical arrays and header, apart from the run directory."""
    ca, cb = ckpt_io.load(a), ckpt_io.load(b)
    ca.meta.pop("config.output")
    cb.meta.pop("config.output")
    return ca.meta == cb.meta and list(ca.arrays) == list(cb.arrays) and all(
        ca.arrays[k].tobytes() == cb.arrays[k].tobytes() for k in ca.arrays)


def cfg(corpus, out, **kw):
    base = dict(algorithm="mbac", corpus=str(corpus), seed=3, interactions=40, output=str(out))
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def mbac_run(corpus_path, tmp_path_factory):
    out = tmp_path_factory.mktemp("mbac")
    return train(cfg(corpus_path, out, interactions=60))


def test_defaults():
    c = RunConfig()
    assert (c.gamma, c.beta, c.lr_model, c.lr_actor, c.lr_critic, c.clip_norm) == (0.9, 1.0, 1e-4, 1e-4, 1e-4, 0.9)
    assert c.preset == "desk" and RunConfig(preset="desk").budget == 20000
    assert RunConfig(preset="paper").budget == 100000


@pytest.mark.parametrize("bad", [dict(algorithm="ppo"), dict(preset="huge"), dict(corpus=""), dict(gamma=1.5),
                                 dict(beta=-1.0), dict(clip_norm=0.0), dict(embedding="file"), dict(dtype="int8")])
def test_invalid_config(bad):
    base = dict(corpus="x")
    base.update(bad)
    with pytest.raises(ConfigError):
        RunConfig(**base).validate()


def test_config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nalgorithm = a2c\nseed=4\njoint_state_training=true\ngamma=0.5\n", encoding="utf-8")
    c = load_config_file(p)
    assert (c.algorithm, c.seed, c.joint_state_training, c.gamma) == ("a2c", 4, True, 0.5)
    p.write_text("nonsense=1\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config_file(p)
    p.write_text("seed=abc\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config_file(p)


def test_count_contract(corpus_path, tmp_path):
    res = train(cfg(corpus_path, tmp_path, interactions=10, algorithm="a2c"))
    assert len(res.records) == 10
    assert len(res.metrics_path.read_text().splitlines()) == 11
    assert [r["interaction"] for r in read_metrics(res.metrics_path)] == list(range(1, 11))


def test_metrics_contents(mbac_run):
    rows = read_metrics(mbac_run.metrics_path)
    assert len(rows) == 60
    last = rows[-1]
    assert sum(last[k] for k in ACTION_KEYS) == last["total_steps"] == sum(r["steps"] for r in rows)
    for r in rows:
        acts = [int(a) for a in r["actions"].split(";")]
        assert len(acts) == r["steps"] and 1 <= r["steps"] <= r["intent"]
        assert r["reward"] <= 0 and r["l_state"] is not None and r["a2c_policy"] is None
    assert last["reward_ma1000"] == pytest.approx(np.mean([r["reward"] for r in rows]))


def test_metrics_round_trip(mbac_run, tmp_path):
    rows = read_metrics(mbac_run.metrics_path)
    path = emit_metrics(rows, tmp_path / "copy.csv")
    assert read_metrics(path) == rows
    assert path.read_bytes() == mbac_run.metrics_path.read_bytes()
    assert path.read_text().splitlines()[0] == ",".join(COLUMNS)


def test_metrics_100_rows(corpus_path, tmp_path):
    res = train(cfg(corpus_path, tmp_path, interactions=100, algorithm="a2c"))
    lines = res.metrics_path.read_text().splitlines()
    assert len(lines) == 101
    last = read_metrics(res.metrics_path)[-1]
    assert sum(last[k] for k in ACTION_KEYS) == last["total_steps"]


def test_summary(mbac_run):
    s = read_summary(mbac_run.metrics_path.parent / "summary.txt")
    rows = read_metrics(mbac_run.metrics_path)
    assert s["interactions"] == 60 and s["total_steps"] == rows[-1]["total_steps"]
    counts = [rows[-1][k] for k in ACTION_KEYS]
    assert s["action_entropy"] == pytest.approx(counts_entropy(counts))
    assert s["reward_ma1000"] == pytest.approx(rows[-1]["reward_ma1000"])


def test_counts_entropy():
    assert counts_entropy(np.zeros(15)) == 0.0
    assert counts_entropy(np.ones(15)) == pytest.approx(np.log(15))
    assert counts_entropy([5, 0, 0]) == 0.0


def test_determinism(corpus_path, tmp_path, mbac_run):
    again = train(cfg(corpus_path, tmp_path, interactions=60))
    assert again.metrics_path.read_bytes() == mbac_run.metrics_path.read_bytes()
    assert same_checkpoint(again.checkpoint_path, mbac_run.checkpoint_path)


@pytest.mark.parametrize("algorithm", ["mbac", "a2c"])
def test_resume_equivalence(corpus_path, tmp_path, algorithm):
    straight = train(cfg(corpus_path, tmp_path / "a", algorithm=algorithm, interactions=50))
    part = train(cfg(corpus_path, tmp_path / "b", algorithm=algorithm, interactions=50), stop_after=20)
    assert len(part.records) == 20
    resumed = train(cfg(corpus_path, tmp_path / "b", algorithm=algorithm, interactions=50),
                    resume=part.checkpoint_path)
    assert len(resumed.records) == 30
    assert resumed.metrics_path.read_bytes() == straight.metrics_path.read_bytes()
    assert same_checkpoint(resumed.checkpoint_path, straight.checkpoint_path)


def test_resume_rejects_changed_config(corpus_path, tmp_path, mbac_run):
    with pytest.raises(ValueError, match="beta"):
        train(cfg(corpus_path, tmp_path, interactions=70, beta=0.5), resume=mbac_run.checkpoint_path)


def test_paired_environment_streams(corpus_path, tmp_path, mbac_run):
    a2c = train(cfg(corpus_path, tmp_path, interactions=60, algorithm="a2c"))
    m_rows, a_rows = read_metrics(mbac_run.metrics_path), read_metrics(a2c.metrics_path)
    assert [r["intent"] for r in m_rows] == [r["intent"] for r in a_rows]
    assert [r["actions"] for r in m_rows] != [r["actions"] for r in a_rows]


def test_trace(corpus_path, tmp_path):
    res = train(cfg(corpus_path, tmp_path, interactions=15, trace=True))
    recs = read_trace((tmp_path / "trace.log").read_text().splitlines())
    rows = read_metrics(res.metrics_path)
    assert len(recs) == rows[-1]["total_steps"]
    for row in rows:
        mine = [r for r in recs if r["episode"] == row["interaction"]]
        assert ";".join(str(r["action"]) for r in mine) == row["actions"]
        assert mine[0]["intent"] == row["intent"] and mine[-1]["terminal"]
        assert sum(r["reward"] for r in mine) == row["reward"]


def test_checkpoint_every(corpus_path, tmp_path):
    train(cfg(corpus_path, tmp_path, interactions=10, checkpoint_every=5, algorithm="a2c"))
    assert (tmp_path / "checkpoint-5.bin").exists() and (tmp_path / "checkpoint-10.bin").exists()


def test_tracker_restores_windows(mbac_run):
    ck = ckpt_io.load(mbac_run.checkpoint_path)
    t = MetricsTracker.from_checkpoint(ck)
    rows = read_metrics(mbac_run.metrics_path)
    assert t.interactions == 60 and t.total_steps == rows[-1]["total_steps"]
    assert list(t.rewards) == [r["reward"] for r in rows]


# ---------------------------------------------------------------- evaluation

def _expected_uniform(intent, m=1):
    # exhaustive expectation over the episode tree under a uniform policy on 15 actions
    total = 0.0
    for a in range(1, 16):
        if a == intent:
            continue
        total += -(a - intent) if a > intent else -m + _expected_uniform(intent - a, m + 1)
    return total / 15


@lru_cache(maxsize=None)
def _expected_uniform_cached(intent):
    return _expected_uniform(intent)


def test_oracle_policy_scores_zero(store):
    oracle = policy_agent(lambda s, o, r: s.intent)
    summary = evaluate_agent(oracle, store, "test", episodes=500, seed=1)
    assert summary.mean == 0.0 and summary.mean_abs_err == 0.0 and np.all(summary.rewards == 0)


def test_uniform_policy_matches_exact_expectation():
    store = build_store([[f"s{j}"] + [f"t{i}" for i in range(9)] for j in range(40)])
    exact = np.mean([_expected_uniform_cached(k) for k in range(1, 10)])
    uniform = policy_agent(lambda s, o, r: int(r.integers(1, 16)))
    summary = evaluate_agent(uniform, store, "test", episodes=20_000, seed=2)
    assert abs(summary.mean - exact) <= 0.05 * abs(exact), (summary.mean, exact)


def test_evaluate_checkpoint(mbac_run):
    s1 = evaluate(mbac_run.checkpoint_path, "test", episodes=50, policy="actor", greedy=True)
    s2 = evaluate(mbac_run.checkpoint_path, "test", episodes=50, policy="actor", greedy=True)
    np.testing.assert_array_equal(s1.rewards, s2.rewards)
    sampled = evaluate(mbac_run.checkpoint_path, "test", episodes=50, policy="actor", greedy=False)
    assert sampled.greedy is False and s1.greedy is True
    planner = evaluate(mbac_run.checkpoint_path, "train", episodes=30, policy="planner", greedy=True)
    assert planner.q1 <= planner.median <= planner.q3 <= 0
    d = planner.as_dict()
    assert set(d) == {"episodes", "mean", "median", "q1", "q3", "mean_abs_err", "policy", "greedy"}


def test_detach_lite(mbac_run, tmp_path, caplog):
    full = ckpt_io.load(mbac_run.checkpoint_path)
    lite = detach_lite(full)
    assert len(lite.arrays) < len(full.arrays) and lite.lite
    assert not any("/dm/" in k for k in lite.arrays)
    for k, v in lite.arrays.items():
        np.testing.assert_array_equal(v, full.arrays[k])
    path = ckpt_io.save(lite, tmp_path / "lite.bin")
    assert path.stat().st_size < mbac_run.checkpoint_path.stat().st_size
    a = evaluate(mbac_run.checkpoint_path, "test", episodes=100, policy="actor")
    b = evaluate(path, "test", episodes=100, policy="actor")
    np.testing.assert_array_equal(a.rewards, b.rewards)
    with pytest.raises(ValueError, match="planner"):
        evaluate(path, "test", episodes=5, policy="planner")
    with caplog.at_level(logging.WARNING):
        again = detach_lite(lite)
    assert "already lite" in caplog.text and again.arrays.keys() == lite.arrays.keys()
    agent = agent_from_checkpoint(ckpt_io.load(path))
    assert not agent.has_model and "dm" not in agent.params


def test_detach_lite_rejects_a2c(corpus_path, tmp_path):
    res = train(cfg(corpus_path, tmp_path, interactions=5, algorithm="a2c"))
    with pytest.raises(ValueError):
        detach_lite(ckpt_io.load(res.checkpoint_path))
    with pytest.raises(ValueError):
        evaluate(res.checkpoint_path, episodes=5, policy="planner")
