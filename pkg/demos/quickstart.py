# Quickstart: solve a small box-constrained quadratic with cyclic block
# conditional gradient and read off the gap certificate.

# %%
import numpy as np

from blockcg import SolverConfig, estimate_optimum, gen_box_quadratic, run

problem = gen_box_quadratic(d=20, n_samples=40, seed=0)
print("blocks:", problem.N, " variables:", problem.n)

# %%
# Fixed cyclic order with the adaptive stepsize.  Every outer iteration
# touches each block exactly once.

trace = run(problem, SolverConfig(scheduler="cyclic", stepsize="adaptive", max_outer_iterations=50))
for k in (0, 1, 5, 10, 50):
    print(f"k={k:3d}  H={trace.H[k]: .6e}  S={trace.S[k]:.3e}")

# %%
# S(x) upper-bounds H(x) - H*, so H_k - S_k is a certified lower bound on
# the optimum.

lower = max(h - s for h, s in zip(trace.H, trace.S))
print("best value", min(trace.H), " certified lower bound", lower)

# %%
# A longer run from the same instance gives an estimate of H* to compare.

est = estimate_optimum(problem, 200)
print("H* estimate", est.value, " remaining gap", est.gap)
assert lower <= est.value + 1e-12

# %%
# Traces serialize to JSON and load back unchanged.

again = type(trace).from_json(trace.to_json())
print("round trip ok:", np.array_equal(again.H, trace.H))
