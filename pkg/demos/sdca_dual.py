# Hinge-loss ridge classification through its coordinate dual.
#
# Blocks are single dual variables in [0, 1]; with the exact line search
# each block update is the closed-form coordinate minimization used by
# dual coordinate ascent.

# %%
import numpy as np

from blockcg import gen_sdca_dual, run

n, d, lam = 200, 10, 0.01
problem = gen_sdca_dual(n_points=n, d_features=d, lam=lam, seed=0)

# %%
tr = run(problem, scheduler="permutation", stepsize="line_search", max_outer_iterations=100, seed=0)
print(f"dual objective {tr.H[-1]:.6f}, gap {tr.S[-1]:.2e} after {tr.iterations} passes")

# %%
# The primal weights are the residual w = A x and the duality gap of the
# original pair equals the conditional gradient gap here.

A = problem.smooth.A
w = A @ tr.x_final
margins = w @ (A * lam * n)
primal = np.mean(np.maximum(0.0, 1.0 - margins)) + 0.5 * lam * w @ w
print(f"primal objective {primal:.6f}, primal + dual = {primal + tr.H[-1]:.2e}")
