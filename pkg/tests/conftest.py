import numpy as np
import pytest
from hypothesis import settings

from blockcg.core import BlockPartition
from blockcg.oracles import Box, Simplex
from blockcg.problems import ProblemInstance
from blockcg.smooth import ShiftedSquaredNorm, SmoothComposite

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def make_problem(A, sizes, center, blocks, scale=1.0, beta=None):
    """Small composite problem with ``F = scale/2 ||z - center||^2``."""
    part = BlockPartition(tuple(sizes))
    sc = SmoothComposite(np.asarray(A, float), part, ShiftedSquaredNorm(center, scale), beta)
    return ProblemInstance(sc, list(blocks))


def random_problem(rng, max_n=12, max_N=4, kinds=("box", "simplex")):
    """Random problem with ``n <= max_n`` and ``N <= max_N`` mixing boxes and simplices."""
    N = int(rng.integers(1, max_N + 1))
    sizes = []
    blocks = []
    budget = max_n
    for j in range(N):
        s = int(rng.integers(1, max(2, budget - (N - j - 1)) + 1))
        s = min(s, budget - (N - j - 1), 6)
        s = max(s, 1)
        budget -= s
        sizes.append(s)
        b = rng.standard_normal(s) if rng.random() < 0.5 else None
        kind = kinds[int(rng.integers(len(kinds)))]
        if kind == "box":
            lo = -rng.random(s) - 0.1
            hi = rng.random(s) + 0.1
            blocks.append(Box(lo, hi, b))
        else:
            blocks.append(Simplex(s, b))
    n = sum(sizes)
    m = int(rng.integers(1, 8))
    A = rng.standard_normal((m, n))
    c = rng.standard_normal(m)
    return make_problem(A, sizes, c, blocks)


def random_feasible(rng, problem):
    parts = []
    for b in problem.blocks:
        if isinstance(b, Box):
            parts.append(b.lower + rng.random(b.dim) * (b.upper - b.lower))
        else:
            parts.append(rng.dirichlet(np.ones(b.dim)))
    return np.concatenate(parts)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Collects one ``PASS/FAIL criterion ...`` line per acceptance check."""
    lines = request.config.stash.setdefault(_REPORT_KEY, [])

    def report(name: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        lines.append(line)
        print(line)

    return report


_REPORT_KEY = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_REPORT_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
