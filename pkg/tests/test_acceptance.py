"""Acceptance criteria 1-10.

Each test records one ``PASS``/``FAIL`` line, printed together at the end of
the session (see ``conftest.py``).  Criteria 5-9 share one set of desk-preset
training runs: three paired seeds, MBAC and A2C, 20,000 interactions each on
a 20,000-sentence synthetic corpus.  Those runs take roughly twenty minutes
per repetition on one core; set ``MBAC_ACCEPTANCE_SEEDS`` to shrink the seed
list while iterating.
"""

import itertools
import os
import time

import numpy as np
import pytest

from mbac import checkpoint as ckpt_io
from mbac import env
from mbac.agent import policy_agent
from mbac.config import PRESETS, RunConfig
from mbac.corpus import load_corpus, write_synthetic_corpus
from mbac.gradcheck import run_gradcheck
from mbac.harness import detach_lite, evaluate, evaluate_agent, read_metrics, read_summary, train
from mbac.model import DynamicsModel
from mbac.nn import kl_divergence
from mbac.planner import plan, soft_policy
from mbac.policy import ActorCritic
from mbac.state import AgentState

from helpers import make_agent

SEEDS = tuple(int(s) for s in os.environ.get("MBAC_ACCEPTANCE_SEEDS", "0,1,2").split(","))
BUDGET = 20_000
WINDOW = 1000
SPLIT_AT = 10_000
EVAL_EPISODES = 2000

pytestmark = pytest.mark.slow


def record(report, criterion, ok, detail):
    report.append(f"criterion {criterion!s:<3} {'PASS' if ok else 'FAIL'}  {detail}")


# ---------------------------------------------------------------- shared runs


@pytest.fixture(scope="session")
def acceptance_corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("acceptance") / "synthetic-20k.txt"
    write_synthetic_corpus(path, n_sentences=20_000, seed=0)
    store = load_corpus(path, seed=0)
    assert len(store.train) + len(store.test) >= 10_000
    return path


@pytest.fixture(scope="session")
def runs(acceptance_corpus, tmp_path_factory):
    """Criterion-5 runs: ``{(algorithm, seed): (TrainResult, seconds)}``."""
    root = tmp_path_factory.mktemp("runs")
    out = {}
    for seed, alg in itertools.product(SEEDS, ("mbac", "a2c")):
        cfg = RunConfig(algorithm=alg, preset="desk", corpus=str(acceptance_corpus), seed=seed,
                        interactions=BUDGET, output=str(root / f"{alg}-{seed}"))
        t0 = time.perf_counter()
        res = train(cfg)
        out[alg, seed] = (res, time.perf_counter() - t0)
    return out


def moving_average(path):
    return np.array([r["reward_ma1000"] for r in read_metrics(path)])


def first_reach(ma, level):
    """First interaction (1-based) with a full window whose moving average reaches ``level``."""
    hits = np.flatnonzero(ma[WINDOW - 1:] >= level)
    return int(hits[0]) + WINDOW if hits.size else None


# ---------------------------------------------------------------- 1-4: property suites


def test_criterion_1_gradcheck(report):
    t0 = time.perf_counter()
    results = run_gradcheck("desk", tolerance=1e-4, samples=150, seed=0)
    elapsed = time.perf_counter() - t0
    worst = max(r.max_rel_error for _, r in results)
    names = {n.split("[")[0] for n, _ in results}
    ok = all(r.passed for _, r in results) and elapsed < 120
    ok &= {"linear", "bilinear", "conv1d-valid", "deconv1d-same", "gru-bidirectional-stack",
           "embedding-lookup", "mbac-actor-critic", "mbac-model", "a2c-losses"} <= names
    record(report, 1, ok, f"gradcheck: {len(results)} checks, max rel err {worst:.2e} (< 1e-4), {elapsed:.1f}s (< 120s)")
    assert ok


def test_criterion_2_oracle_equivalence(report):
    mismatches = 0
    n = 0
    for k, a, m in itertools.product(range(1, 15), range(1, 16), range(1, 15)):
        words = tuple(f"w{i}" for i in range(15))
        s = env.EpisodeState(words, k, m, k, words[:15 - k])
        r, _ = env.step(s, a)
        expected = (0.0, True) if a == k else ((-(a - k), True) if a > k else (-m, False))
        mismatches += (r.reward, r.terminal) != expected or env.reward_oracle(k, a, m) != expected
        n += 1
    record(report, 2, mismatches == 0, f"step == reward_oracle on {n} (intent, action, m) triples, {mismatches} mismatches")
    assert mismatches == 0


def test_criterion_3_episode_bounds(report, acceptance_corpus):
    store = load_corpus(acceptance_corpus, seed=0)
    rng = np.random.default_rng(2024)
    bad_len = bad_total = 0
    lo = hi = None
    for _ in range(100_000):
        s, _ = env.reset(store, "train", rng)
        k, total, steps = s.intent, 0.0, 0
        while True:
            r, s = env.step(s, int(rng.integers(1, 16)))
            total += r.reward
            steps += 1
            if r.terminal:
                break
        bad_len += steps > k
        bad_total += not (-105 <= total <= 0)
        lo = total if lo is None else min(lo, total)
        hi = total if hi is None else max(hi, total)
    oracle = policy_agent(lambda st, o, g: st.intent)
    opt = evaluate_agent(oracle, store, "train", episodes=100_000, seed=5)
    ok = bad_len == 0 and bad_total == 0 and np.all(opt.rewards == 0)
    record(report, 3, ok, f"100,000 random episodes: {bad_len} over-long, {bad_total} out of [-105, 0] "
                          f"(observed [{lo:.0f}, {hi:.0f}]); oracle policy total reward max |.| = {np.abs(opt.rewards).max():.0f}")
    assert ok


def test_criterion_4_planner_identities(report):
    preset = PRESETS["desk"]
    dm, ac = DynamicsModel(preset), ActorCritic(preset)
    rng = np.random.default_rng(4)
    worst_sum = worst_v = 0.0
    bounds = argmax = 0
    for i in range(10_000):
        if i % 100 == 0:
            dp, cp = dm.init_params(rng), ac.init_params(rng)
        s = rng.uniform(-1, 1, (16, preset.state_dim))
        out = plan(s, dm, dp, ac, cp, 0.9)
        worst_sum = max(worst_sum, abs(out.probs.sum() - 1))
        worst_v = max(worst_v, abs(out.value - np.sum(out.returns * out.probs)))
        bounds += not (out.returns.min() <= out.value <= out.returns.max())
        argmax += np.argmax(out.probs) != np.argmax(out.returns)
    ok = worst_sum <= 1e-9 and worst_v <= 1e-9 and bounds == 0 and argmax == 0
    record(report, 4, ok, f"10,000 states: |sum pi - 1| <= {worst_sum:.1e}, |V - sum G pi| <= {worst_v:.1e}, "
                          f"{bounds} bound violations, {argmax} argmax mismatches")
    assert ok


# ---------------------------------------------------------------- 5-9: training runs


def _efficiency(runs):
    rows = []
    for seed in SEEDS:
        (m_res, m_t), (a_res, a_t) = runs["mbac", seed], runs["a2c", seed]
        m_ma, a_ma = moving_average(m_res.metrics_path), moving_average(a_res.metrics_path)
        level = a_ma[-1]
        rows.append({"seed": seed, "mbac": m_ma[-1], "a2c": level, "times": (m_t, a_t),
                     "a2c_first": first_reach(a_ma, level), "mbac_first": first_reach(m_ma, level)})
    return rows


def test_criterion_5a_final_margin(report, runs):
    rows = _efficiency(runs)
    margin = float(np.median([r["mbac"] - r["a2c"] for r in rows]))
    slowest = max(max(r["times"]) for r in rows)
    ok = margin >= 0.5 and slowest <= 30 * 60
    per_seed = ", ".join(f"{r['mbac']:.2f}/{r['a2c']:.2f}" for r in rows)
    record(report, "5a", ok, f"final MA-1000 MBAC minus A2C median {margin:+.2f} (>= 0.5); MBAC/A2C per seed {per_seed}; "
                             f"slowest run {slowest / 60:.1f} min (<= 30)")
    assert ok


def test_criterion_5b_time_to_level(report, runs):
    rows = _efficiency(runs)
    ratios = [r["a2c_first"] / r["mbac_first"] if r["mbac_first"] else 0.0 for r in rows]
    ratio = float(np.median(ratios))
    ok = ratio >= 5.0
    per_seed = ", ".join(f"seed {r['seed']}: A2C {r['a2c_first']} / MBAC {r['mbac_first']}" for r in rows)
    record(report, "5b", ok, f"interactions to reach A2C's final MA-1000, A2C/MBAC median {ratio:.2f}x (>= 5x); {per_seed}")
    assert ok


def test_mbac_learning_progress(report, runs):
    gains = []
    for seed in SEEDS:
        ma = moving_average(runs["mbac", seed][0].metrics_path)
        gains.append(ma[-1] - ma[WINDOW - 1])
    ok = float(np.median(gains)) > 0
    report.append(f"extra         {'PASS' if ok else 'FAIL'}  learning progress: MBAC MA-1000 at {BUDGET} minus at {WINDOW}: median {np.median(gains):+.2f} (> 0)")
    assert ok


def test_criterion_6_abs_error(report, runs):
    diffs = []
    for seed in SEEDS:
        m = read_metrics(runs["mbac", seed][0].metrics_path)[-1]["abs_err_mean300"]
        a = read_metrics(runs["a2c", seed][0].metrics_path)[-1]["abs_err_mean300"]
        diffs.append(a - m)
    ok = float(np.median(diffs)) > 0
    record(report, 6, ok, f"final 300-action |A - intent|: A2C minus MBAC median {np.median(diffs):+.2f} (> 0)")
    assert ok


def test_criterion_7_action_entropy(report, runs):
    diffs, pairs = [], []
    for seed in SEEDS:
        m = read_summary(runs["mbac", seed][0].metrics_path.parent / "summary.txt")["action_entropy"]
        a = read_summary(runs["a2c", seed][0].metrics_path.parent / "summary.txt")["action_entropy"]
        diffs.append(m - a)
        pairs.append(f"{m:.3f}/{a:.3f}")
    ok = float(np.median(diffs)) >= 0
    record(report, 7, ok, f"training action entropy MBAC minus A2C median {np.median(diffs):+.3f} (>= 0); "
                          f"MBAC/A2C per seed {', '.join(pairs)} (uniform = {np.log(15):.3f})")
    assert ok


def test_criterion_8_mbac_lite(report, runs, tmp_path, acceptance_corpus):
    gaps = {False: [], True: []}
    identical = True
    for seed in SEEDS:
        full_path = runs["mbac", seed][0].checkpoint_path
        lite_path = ckpt_io.save(detach_lite(ckpt_io.load(full_path)), tmp_path / f"lite-{seed}.bin")
        a2c_path = runs["a2c", seed][0].checkpoint_path
        for greedy in (False, True):
            lite = evaluate(lite_path, "test", EVAL_EPISODES, "actor", greedy)
            a2c = evaluate(a2c_path, "test", EVAL_EPISODES, "actor", greedy)
            gaps[greedy].append(lite.mean - a2c.mean)
        full = evaluate(full_path, "test", EVAL_EPISODES, "actor", False)
        again = evaluate(lite_path, "test", EVAL_EPISODES, "actor", False)
        identical &= full.rewards.tobytes() == again.rewards.tobytes()
    sampled, greedy = float(np.median(gaps[False])), float(np.median(gaps[True]))
    ok = sampled >= 0 and greedy >= 0 and identical
    record(report, 8, ok, f"MBAC-lite minus A2C mean test reward: sampled {sampled:+.2f}, greedy {greedy:+.2f} (>= 0); "
                          f"full vs lite actor eval bit-identical: {identical}")
    assert ok


def test_criterion_9_determinism_and_resume(report, runs, acceptance_corpus, tmp_path):
    same_repeat = same_resume = True
    for i, seed in enumerate(SEEDS):
        for alg in ("mbac", "a2c"):
            original = runs[alg, seed][0]
            cfg = RunConfig(algorithm=alg, corpus=str(acceptance_corpus), seed=seed, interactions=BUDGET,
                            output=str(tmp_path / f"{alg}-{seed}"))
            if i == 0:
                again = train(cfg)
                same_repeat &= again.metrics_path.read_bytes() == original.metrics_path.read_bytes()
            else:
                part = train(cfg, stop_after=SPLIT_AT)
                again = train(cfg, resume=part.checkpoint_path)
                same_resume &= again.metrics_path.read_bytes() == original.metrics_path.read_bytes()
            a, b = ckpt_io.load(again.checkpoint_path), ckpt_io.load(original.checkpoint_path)
            same = all(a.arrays[k].tobytes() == b.arrays[k].tobytes() for k in b.arrays) and a.arrays.keys() == b.arrays.keys()
            if i == 0:
                same_repeat &= same
            else:
                same_resume &= same
    ok = same_repeat and same_resume
    record(report, 9, ok, f"straight repeat (seed {SEEDS[0]}) bit-identical: {same_repeat}; "
                          f"split at {SPLIT_AT} + resume (seeds {SEEDS[1:]}) bit-identical: {same_resume}")
    assert ok


# ---------------------------------------------------------------- 10: distillation


def test_criterion_10_distillation(report):
    agent = make_agent(seed=0, beta=0.0)
    rng = np.random.default_rng(10)
    state = AgentState(rng.uniform(-1, 1, (16, 32)), np.ones(16, bool))
    target, value = soft_policy(-np.abs(np.arange(1, 16) - 4.0))
    kl_hit = v_hit = None
    for i in range(1, 5001):
        agent.mbac_update(state, None, target, value)
        probs, v = agent.policy(state)
        if kl_hit is None and kl_divergence(probs, target) < 0.01:
            kl_hit = i
        if v_hit is None and abs(v - value) < 0.05:
            v_hit = i
        if kl_hit and v_hit:
            break
    ok = kl_hit is not None and kl_hit <= 2000 and v_hit is not None and v_hit <= 5000
    record(report, 10, ok, f"KL < 0.01 after {kl_hit} updates (<= 2000); |V - target| < 0.05 after {v_hit} updates (<= 5000)")
    assert ok
