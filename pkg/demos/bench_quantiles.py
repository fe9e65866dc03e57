# Median and quantile curves of the normalized gap
# (H(x^k) - f*) / (H(x^0) - f*) over seeded box-quadratic instances.
#
# The default matrix compares classical CG, random-block (RBCG), cyclic
# fixed order (CBCG-C) and cyclic permutation (CBCG-P) with the predefined
# rule, backtracking on the A = I encoding and exact line search.
#
#   python demos/bench_quantiles.py            # desk scale, a few seconds
#   python demos/bench_quantiles.py --full     # 1000 instances, d = 100

# %%
import sys

from blockcg.bench import BenchSpec, run_bench

full = "--full" in sys.argv
spec = BenchSpec(
    params={"d": 100, "n_samples": 200} if full else {"d": 20, "n_samples": 40},
    W=1000 if full else 50,
    iters=10,
)
res = run_bench(spec, workers=4, out_dir="bench_out")
print("wrote bench_out/summary.csv;", "incomplete cells:", res["incomplete"] or "none")

# %%
# Median at the last pass, per method.  The predefined rule lags far
# behind the adaptive ones.

med = {(row[0], row[1]): row[7] for row in res["rows"]}
for cell in spec.methods:
    print(f"{cell.label:26s} median at k={spec.iters}: {med[(cell.label, spec.iters)]:.3e}")

# %%
# Optional plot of the median with the 10%-90% band.

try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    fig, ax = plt.subplots()
    for cell in spec.methods:
        rows = [r for r in res["rows"] if r[0] == cell.label]
        ks = [r[1] for r in rows]
        ax.semilogy(ks, [r[7] for r in rows], label=cell.label)
        ax.fill_between(ks, [r[4] for r in rows], [r[10] for r in rows], alpha=0.1)
    ax.set_xlabel("effective passes")
    ax.set_ylabel("normalized gap")
    ax.legend(fontsize=6)
    fig.savefig("bench_out/median.png", dpi=150)
