# Backtracking when the block constants beta_i are unknown.
#
# The trial constant kappa^xi * beta_init grows until the half-gap decrease
# test passes.  xi is remembered per block and never decreases, so the
# accepted constants never exceed max(kappa * beta_i, beta_init).

# %%
from blockcg import SolverConfig, gen_box_quadratic, run

problem = gen_box_quadratic(d=20, n_samples=40, seed=0, encoding="identity")
beta = problem.smooth.beta
print(f"true beta_i range: [{beta.min():.2e}, {beta.max():.2e}]")

# %%
for beta_init in (1e-6, 1e-2, 1.0):
    cfg = SolverConfig("cyclic", "backtracking", max_outer_iterations=30, record_block_events=True, beta_init=beta_init)
    tr = run(problem, cfg)
    trials = sum(e.trials for e in tr.events)
    top = max(e.beta_k / max(2 * beta[e.block], beta_init) for e in tr.events)
    print(f"beta_init={beta_init:.0e}  H_30={tr.H[-1]:.6e}  trials={trials}  max beta_k / bound = {top:.3f}")

# %%
# A large beta_init never adapts downward: steps stay short.  A small one
# pays a few extra trials early and then tracks the local curvature.
