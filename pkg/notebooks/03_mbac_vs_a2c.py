"""
MBAC against A2C on a synthetic corpus
======================================

Trains both agents on the same stream of episodes (same seed, so the same
sentences and the same noise), then compares their learning curves, their
absolute errors, how spread out their actions were, and how the MBAC actor
does on its own once the model is removed.

The full desk budget is 20,000 interactions per agent (a few minutes each).
Set ``MBAC_NB_INTERACTIONS`` to try a shorter run.
"""

#%%
import os
import tempfile
from pathlib import Path

import numpy as np

from mbac import RunConfig, detach_lite, evaluate, train
from mbac import checkpoint as ckpt_io
from mbac.corpus import write_synthetic_corpus
from mbac.harness import read_metrics

budget = int(os.environ.get("MBAC_NB_INTERACTIONS", "20000"))
work = Path(tempfile.mkdtemp(prefix="mbac-nb-"))
corpus = write_synthetic_corpus(work / "corpus.txt", n_sentences=20000, seed=0)
print(work)

#%%
results = {}
for alg in ("mbac", "a2c"):
    cfg = RunConfig(algorithm=alg, corpus=str(corpus), seed=0, interactions=budget,
                    output=str(work / alg))
    results[alg] = train(cfg)
    print(alg, results[alg].summary)

#%%
# Moving-average reward (window 1,000 interactions) at a few points.
curves = {alg: read_metrics(r.metrics_path) for alg, r in results.items()}
marks = [i for i in (500, 1000, 2000, 5000, 10000, 15000, 20000) if i <= budget]
print("interaction   MBAC     A2C")
for i in marks:
    m, a = curves["mbac"][i - 1]["reward_ma1000"], curves["a2c"][i - 1]["reward_ma1000"]
    print(f"{i:>10d}  {m:6.2f}  {a:6.2f}")

#%%
# Mean |action - intent| over the last 300 actions, and the spread of actions.
for alg, rows in curves.items():
    counts = np.array([rows[-1][f"action_{a}"] for a in range(1, 16)])
    p = counts / counts.sum()
    h = -np.sum(p[p > 0] * np.log(p[p > 0]))
    print(f"{alg}: abs err {rows[-1]['abs_err_mean300']:.2f}, action entropy {h:.3f}")
    print("   action shares:", " ".join(f"{x:.2f}" for x in p))

#%%
# MBAC-lite: drop the model and act from the actor alone, on unseen sentences.
lite_path = ckpt_io.save(detach_lite(ckpt_io.load(results["mbac"].checkpoint_path)), work / "lite.bin")
for greedy in (False, True):
    lite = evaluate(lite_path, "test", 2000, "actor", greedy)
    a2c = evaluate(results["a2c"].checkpoint_path, "test", 2000, "actor", greedy)
    planner = evaluate(results["mbac"].checkpoint_path, "test", 2000, "planner", greedy)
    print(f"greedy={greedy}: MBAC-lite {lite.mean:.2f}, MBAC planner {planner.mean:.2f}, A2C {a2c.mean:.2f}")
