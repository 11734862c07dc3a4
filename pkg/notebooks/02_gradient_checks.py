"""
Checking the hand-written gradients
===================================

Every layer in ``mbac.nn`` has a manual backward pass.  Here each one, and
each full training loss, is compared with central finite differences.  The
perturbed losses are evaluated in extended precision so that coordinates
with tiny gradients are not swamped by rounding noise.
"""

#%%
import time

import numpy as np

from mbac.gradcheck import layer_cases, run_gradcheck
from mbac.nn import finite_diff_check

t0 = time.perf_counter()
for name, report in run_gradcheck("desk", tolerance=1e-4, samples=150, seed=0):
    print(f"{name:34s} max rel err {report.max_rel_error:.2e}  ({report.n_checked} coords)")
print(f"{time.perf_counter() - t0:.1f}s")

#%%
# What the relative error looks like when the gradient is wrong: flip the
# sign of the GRU input gradient before the comparison sees it.
fn, params = layer_cases(np.random.default_rng(0))["gru-bidirectional-stack"]


def broken(p):
    loss, grads = fn(p)
    grads = {k: (-g if k == "input" else g) for k, g in grads.items()}
    return loss, grads


rep = finite_diff_check(broken, params, n_samples=300)
print("broken input gradient:", rep.max_rel_error, rep.worst[:2])

#%%
# Plain float64 differences are enough for most coordinates; the extended
# precision matters only near zero gradients.
rep64 = finite_diff_check(fn, params, n_samples=300, fd_dtype=np.float64)
repld = finite_diff_check(fn, params, n_samples=300)
print(f"float64 differences: {rep64.max_rel_error:.2e}, longdouble: {repld.max_rel_error:.2e}")
