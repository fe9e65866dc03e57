# Product-of-simplices dual, the shape of a structured SVM dual.
#
# One simplex per training example; the lmo picks a single vertex, so
# iterates stay exactly on the simplices.

# %%
import numpy as np

from blockcg import gen_simplex_product, run

problem = gen_simplex_product(N_examples=50, M_classes=10, d_features=30, lam=1.0, seed=0)

# %%
for sched in ("uniform", "cyclic", "permutation"):
    tr = run(problem, scheduler=sched, stepsize="adaptive", max_outer_iterations=200, gap_tolerance=1e-8, seed=0)
    print(f"{tr.config.method:18s} passes={tr.iterations:3d}  S={tr.S[-1]:.2e}  status={tr.status}")

# %%
# Feasibility: every block sums to one and stays non-negative.

x = tr.x_final.reshape(50, 10)
print("max |sum - 1| =", np.abs(x.sum(axis=1) - 1).max(), " min entry =", x.min())

# %%
# The final iterate is sparse: few classes carry weight per example.

print("average support size:", (x > 1e-12).sum(axis=1).mean())
