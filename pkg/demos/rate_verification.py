# Checking the sublinear rate bounds along a run.
#
# compute_constants returns C1 (predefined), C2 (adaptive) and, when asked
# for the backtracking rule, C3.  verify_rate walks the trace and compares
# H_k - H* and the running minimum of the gap with the matching bound.

# %%
from blockcg import compute_constants, estimate_optimum, gen_box_quadratic, run, verify_rate

problem = gen_box_quadratic(d=20, n_samples=40, seed=3)
est = estimate_optimum(problem, 200)
# value - gap is a lower bound on H*, which makes the check sound
H_star = est.lower_bound

# %%
for rule in ("predefined", "adaptive"):
    consts = compute_constants(problem, rule)
    trace = run(problem, scheduler="permutation", stepsize=rule, max_outer_iterations=200, seed=1)
    report = verify_rate(trace, consts, H_star)
    print(report.summary(), f"C = {consts.rate_constant:.4g}")
    worst = max(r["value_gap"] / r["value_bound"] for r in report.rows)
    print(f"  largest (H_k - H*) / bound: {worst:.3g}")

# %%
# The bounds are loose by design: the constants carry worst-case
# diameters and gradient bounds.  The breakdown shows which term
# dominates C1.

c = compute_constants(problem, "predefined")
print(f"C1 = {c.C1:.4g}  (curvature part {c.C1_curvature:.4g}, coupling part {c.C1_coupling:.4g})")

# %%
# A trace produced with one rule cannot be checked against another.

from blockcg import ConfigurationError

trace = run(problem, stepsize="adaptive", max_outer_iterations=5)
try:
    verify_rate(trace, compute_constants(problem, "predefined"), H_star)
except ConfigurationError as exc:
    print("refused:", exc)
