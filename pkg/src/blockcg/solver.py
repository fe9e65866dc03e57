"""Outer loop of the block conditional gradient family.

Schedulers
----------
``cyclic``       blocks ``0..N-1`` in order at every pass (CBCG-C)
``permutation``  a fresh seeded Fisher-Yates shuffle at every pass (CBCG-P)
``uniform``      ``N`` independent uniform block draws per pass (RBCG)
``full``         classical conditional gradient: every block oracle sees
                 ``grad f(x^k)`` and one common stepsize is applied (CG)

One outer iteration ``k`` is always one effective pass, i.e. ``N`` block
oracle calls, so traces of different schedulers share the same axis.

The permutation uses ``numpy.random.Generator(Philox(seed))`` and the
textbook Fisher-Yates loop ``for j = N-1 .. 1: swap(j, integers(0, j+1))``.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError, InputError, NumericalFailure, UnsupportedError
from .measures import RateConstants, total_gap
from .smooth import ResidualState, apply_block_step, apply_full_step
from .steppers import (
    StepContext,
    _clip_quadratic_min,
    _ratio_step,
    backtracking_step,
    predefined_step,
)

logger = logging.getLogger(__name__)

__all__ = [
    "SCHEDULERS",
    "STEPSIZES",
    "SolverConfig",
    "BlockEvent",
    "RunTrace",
    "OptimumEstimate",
    "RateReport",
    "run",
    "estimate_optimum",
    "verify_rate",
    "fisher_yates",
    "check_half_gap_decrease",
    "check_monotone",
    "check_iterate_gap_identity",
    "check_sufficient_decrease",
    "check_gap_recursion",
]

SCHEDULERS = ("cyclic", "permutation", "uniform", "full")
STEPSIZES = ("predefined", "adaptive", "backtracking", "line_search")
MONOTONE_STEPSIZES = ("adaptive", "backtracking", "line_search")
METHOD_NAMES = {"full": "CG", "uniform": "RBCG", "cyclic": "CBCG-C", "permutation": "CBCG-P"}
ALIASES = {
    "CyclicFixed": "cyclic",
    "RandomPermutation": "permutation",
    "UniformRandom": "uniform",
    "FullUpdate": "full",
    "Predefined": "predefined",
    "Adaptive": "adaptive",
    "Backtracking": "backtracking",
    "ExactLineSearchQuadratic": "line_search",
    "exact": "line_search",
}


@dataclass
class SolverConfig:
    scheduler: str = "cyclic"
    stepsize: str = "adaptive"
    max_outer_iterations: int = 100
    gap_tolerance: float = 0.0
    record_gap: bool = True
    record_block_events: bool = False
    store_iterates: bool = False
    record_time: bool = False
    seed: int = 0
    kappa: float = 2.0
    beta_init: float = 1.0
    refresh_every: int = 1000

    def __post_init__(self):
        self.scheduler = ALIASES.get(self.scheduler, self.scheduler)
        self.stepsize = ALIASES.get(self.stepsize, self.stepsize)
        if self.scheduler not in SCHEDULERS:
            raise ConfigurationError(f"unknown scheduler {self.scheduler!r}; choose from {SCHEDULERS}")
        if self.stepsize not in STEPSIZES:
            raise ConfigurationError(f"unknown stepsize {self.stepsize!r}; choose from {STEPSIZES}")
        if self.max_outer_iterations < 0:
            raise ConfigurationError("max_outer_iterations must be >= 0")
        if self.gap_tolerance < 0:
            raise ConfigurationError("gap_tolerance must be >= 0")
        if self.stepsize == "backtracking":
            if not self.kappa > 1:
                raise ConfigurationError(f"kappa must exceed 1, got {self.kappa}")
            if not self.beta_init > 0:
                raise ConfigurationError(f"beta_init must be positive, got {self.beta_init}")

    @property
    def method(self) -> str:
        return f"{METHOD_NAMES[self.scheduler]}/{self.stepsize}"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BlockEvent:
    """One block update ``x^{k,j-1} -> x^{k,j}`` (``block = -1`` for a full CG step)."""

    k: int
    block: int
    alpha: float
    S: float
    q: float
    dir_sq: float
    H_before: float
    H_after: float
    drift_sq: float
    beta_k: float | None = None
    xi: int | None = None
    trials: int | None = None


@dataclass
class RunTrace:
    config: SolverConfig
    metadata: dict
    H: list = field(default_factory=list)
    S: list = field(default_factory=list)
    wall_ns: list = field(default_factory=list)
    events: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    x_final: np.ndarray | None = None
    status: str = "running"

    @property
    def iterations(self) -> int:
        """Number of completed outer passes."""
        return len(self.H) - 1

    def events_at(self, k: int) -> list:
        return [e for e in self.events if e.k == k]

    def to_dict(self) -> dict:
        iters = [
            {"k": k, "H": h, "S": s, "wall_ns": w}
            for k, (h, s, w) in enumerate(zip(self.H, self.S, self.wall_ns))
        ]
        out = {
            "metadata": {**self.metadata, "config": self.config.to_dict(), "status": self.status},
            "iterations": iters,
            "x_final": None if self.x_final is None else self.x_final.tolist(),
        }
        if self.config.record_block_events:
            out["block_events"] = [asdict(e) for e in self.events]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "RunTrace":
        meta = dict(d["metadata"])
        config = SolverConfig(**meta.pop("config"))
        status = meta.pop("status", "unknown")
        iters = d["iterations"]
        tr = cls(config, meta, status=status)
        tr.H = [it["H"] for it in iters]
        tr.S = [it["S"] for it in iters]
        tr.wall_ns = [it["wall_ns"] for it in iters]
        tr.events = [BlockEvent(**e) for e in d.get("block_events", [])]
        if d.get("x_final") is not None:
            tr.x_final = np.asarray(d["x_final"], dtype=float)
        return tr

    @classmethod
    def from_json(cls, text: str) -> "RunTrace":
        return cls.from_dict(json.loads(text))


def fisher_yates(n: int, rng: np.random.Generator) -> list[int]:
    order = list(range(n))
    for j in range(n - 1, 0, -1):
        r = int(rng.integers(0, j + 1))
        order[j], order[r] = order[r], order[j]
    return order


def _digest_or_none(problem):
    try:
        return problem.digest
    except UnsupportedError:
        # callable outer functions have no canonical serialization
        return None


def _linear_value(problem, x) -> float:
    return float(sum(b.linear(xi) for b, xi in zip(problem.blocks, problem.partition.split(x))))


class _Runner:
    """Mutable state of one run; not shared."""

    def __init__(self, problem, config: SolverConfig, x0):
        self.problem = problem
        self.cfg = config
        sc = problem.smooth
        self.sc = sc
        self.outer = sc.outer
        self.slices = problem.partition.slices()
        self.N = problem.N
        x0 = problem.default_start() if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
        if x0.shape != (problem.n,) or not problem.contains(x0):
            raise InputError("starting point is infeasible")
        self.state = ResidualState(x0, sc, refresh_every=config.refresh_every)
        self.g_val = _linear_value(problem, x0)
        self.rng = np.random.Generator(np.random.Philox(int(config.seed)))
        self.block_counter = 0
        self.xi = [0] * self.N
        self.xi_full = 0
        self.trace = RunTrace(
            config,
            {
                "seed": int(config.seed),
                "method": config.method,
                "problem_digest": _digest_or_none(problem),
                "provenance": getattr(problem, "provenance", {}),
                "N": self.N,
                "n": problem.n,
            },
        )
        self.t0 = time.perf_counter_ns()

    # -- objective -----------------------------------------------------
    def H(self) -> float:
        val = self.outer.value(self.state.z) + self.g_val
        if not math.isfinite(val):
            raise NumericalFailure(f"objective is not finite ({val})", self.trace)
        return val

    def _after_step(self):
        if self.state.steps_since_refresh == 0:
            self.g_val = _linear_value(self.problem, self.state.x)

    # -- recording -----------------------------------------------------
    def record(self, need_gap: bool):
        tr = self.trace
        tr.H.append(self.H())
        S = None
        if self.cfg.record_gap or need_gap:
            S = total_gap(self.state, self.problem, check_feasible=False).S
        tr.S.append(S)
        tr.wall_ns.append(time.perf_counter_ns() - self.t0 if self.cfg.record_time else None)
        if self.cfg.store_iterates:
            tr.iterates.append(self.state.x.copy())
        return S

    # -- schedulers ----------------------------------------------------
    def order(self):
        s = self.cfg.scheduler
        if s == "cyclic":
            return range(self.N)
        if s == "permutation":
            return fisher_yates(self.N, self.rng)
        return [int(j) for j in self.rng.integers(0, self.N, size=self.N)]

    # -- stepsizes -----------------------------------------------------
    def stepsize(self, k, S, q, beta, slope_fn, Ad, lin_d, xi_get, xi_set):
        rule = self.cfg.stepsize
        info = {}
        if rule == "predefined":
            if self.cfg.scheduler == "uniform":
                alpha = predefined_step(k, "rbcg", self.N, self.block_counter)
            else:
                alpha = predefined_step(k)
        elif rule == "adaptive":
            alpha = _ratio_step(S, beta, q)
        elif rule == "line_search":
            if not self.outer.quadratic:
                raise UnsupportedError("exact line search needs a quadratic outer function")
            alpha = _clip_quadratic_min(slope_fn(), self.outer.curvature(Ad))
        else:
            H0 = self.H()
            z = self.state.z
            g0 = self.g_val

            def decrease(a):
                return H0 - (self.outer.value(z + a * Ad) + g0 + a * lin_d)

            ctx = StepContext(k, 0, S, q, beta, xi_get())
            res = backtracking_step(ctx, self.cfg.kappa, self.cfg.beta_init, decrease, H_scale=H0)
            xi_set(res.xi)
            alpha = res.alpha
            info = {"beta_k": res.beta, "xi": res.xi, "trials": res.trials}
        return alpha, info

    # -- one pass ------------------------------------------------------
    def block_pass(self, k):
        st, sc, outer = self.state, self.sc, self.outer
        events = self.cfg.record_block_events
        z_start = st.z.copy() if events else None
        for i in self.order():
            sl = self.slices[i]
            blk = self.problem.blocks[i]
            Ai = sc.blocks[i]
            gF = outer.gradient(st.z)
            grad_i = np.asarray(Ai.T @ gF).reshape(-1)
            x_i = st.x[sl]
            p_i = blk.lmo(grad_i)
            d = p_i - x_i
            lin_d = blk.linear(d)
            S_raw = -(float(grad_i @ d) + lin_d)
            S_i = max(S_raw, 0.0)
            if S_raw < -1e-8:
                raise NumericalFailure(f"negative block gap {S_raw:.3e}", self.trace)
            Ad = np.asarray(Ai @ d).reshape(-1)
            q = float(Ad @ Ad)
            H_before = self.H() if events else None

            def slope():
                return float(gF @ Ad) + lin_d

            def xi_get(i=i):
                return self.xi[i]

            def xi_set(v, i=i):
                self.xi[i] = v

            alpha, info = self.stepsize(k, S_i, q, float(sc.beta[i]), slope, Ad, lin_d, xi_get, xi_set)
            drift_sq = float(np.sum((st.z - z_start) ** 2)) if events else None
            if alpha > 0.0:
                apply_block_step(st, sc, i, d, alpha, Ad)
                self.g_val += alpha * lin_d
                self._after_step()
            self.block_counter += 1
            if events:
                self.trace.events.append(
                    BlockEvent(
                        k=k,
                        block=int(i),
                        alpha=float(alpha),
                        S=S_i,
                        q=q,
                        dir_sq=float(d @ d),
                        H_before=H_before,
                        H_after=self.H(),
                        drift_sq=drift_sq,
                        **info,
                    )
                )

    def full_pass(self, k):
        st, sc, outer = self.state, self.sc, self.outer
        problem = self.problem
        gF = outer.gradient(st.z)
        grad = sc.transpose_apply(gF)
        p = np.empty(problem.n)
        lin_d = 0.0
        for blk, sl in zip(problem.blocks, self.slices):
            p[sl] = blk.lmo(grad[sl])
            lin_d += blk.linear(p[sl] - st.x[sl])
        d = p - st.x
        S_raw = -(float(grad @ d) + lin_d)
        S = max(S_raw, 0.0)
        Ad = np.asarray(sc.A @ d).reshape(-1)
        q = float(Ad @ Ad)
        H_before = self.H()

        def slope():
            return float(gF @ Ad) + lin_d

        def xi_get():
            return self.xi_full

        def xi_set(v):
            self.xi_full = v

        alpha, info = self.stepsize(k, S, q, float(sc.L_F), slope, Ad, lin_d, xi_get, xi_set)
        if alpha > 0.0:
            apply_full_step(st, sc, d, alpha, Ad)
            self.g_val += alpha * lin_d
            self._after_step()
        self.block_counter += self.N
        if self.cfg.record_block_events:
            self.trace.events.append(
                BlockEvent(k, -1, float(alpha), S, q, float(d @ d), H_before, self.H(), 0.0, **info)
            )

    def run(self) -> RunTrace:
        cfg = self.cfg
        tol = cfg.gap_tolerance
        tr = self.trace
        try:
            S = self.record(need_gap=tol > 0)
            for k in range(cfg.max_outer_iterations):
                if tol > 0 and S <= tol:
                    tr.status = "converged"
                    break
                if cfg.scheduler == "full":
                    self.full_pass(k)
                else:
                    self.block_pass(k)
                S = self.record(need_gap=tol > 0)
            else:
                tr.status = "converged" if tol > 0 and S is not None and S <= tol else "max_iterations"
        except NumericalFailure as exc:
            tr.status = "failed"
            tr.x_final = self.state.x.copy()
            exc.trace = tr
            raise
        tr.x_final = self.state.x.copy()
        return tr


def run(problem, config: SolverConfig | None = None, x0=None, **overrides) -> RunTrace:
    """Run one method on ``problem`` and return its trace.

    Keyword overrides are forwarded to :class:`SolverConfig`.

    Examples
    --------
    >>> from blockcg.problems import gen_box_quadratic
    >>> prob = gen_box_quadratic(5, 10, seed=0)
    >>> tr = run(prob, scheduler="permutation", stepsize="line_search", max_outer_iterations=5)
    >>> tr.iterations
    5
    """
    if config is None:
        config = SolverConfig(**overrides)
    elif overrides:
        config = SolverConfig(**{**config.to_dict(), **overrides})
    return _Runner(problem, config, x0).run()


@dataclass(frozen=True)
class OptimumEstimate:
    """``value`` is the best objective seen (an upper bound on ``H*``);
    ``gap`` is ``S`` at the final point, so ``value - gap <= H*``."""

    value: float
    gap: float
    x: np.ndarray

    @property
    def lower_bound(self) -> float:
        return self.value - self.gap


def estimate_optimum(problem, extra_iterations: int = 200, seed: int = 0, x0=None) -> OptimumEstimate:
    """Long CBCG-P run (exact line search when ``F`` is quadratic, adaptive otherwise)."""
    stepsize = "line_search" if problem.smooth.outer.quadratic else "adaptive"
    tr = run(
        problem,
        SolverConfig(
            scheduler="permutation",
            stepsize=stepsize,
            max_outer_iterations=extra_iterations,
            record_gap=False,
            seed=seed,
        ),
        x0=x0,
    )
    gap = total_gap(ResidualState(tr.x_final, problem.smooth), problem, check_feasible=False).S
    return OptimumEstimate(float(min(tr.H)), float(gap), tr.x_final)


@dataclass
class RateReport:
    rule: str
    rows: list
    violations: list

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def first_violation(self):
        return self.violations[0] if self.violations else None

    def to_dict(self) -> dict:
        return {"rule": self.rule, "passed": self.passed, "violations": self.violations, "rows": self.rows}

    def summary(self) -> str:
        status = "PASS" if self.passed else f"FAIL ({len(self.violations)} violations)"
        return f"{self.rule}: {len(self.rows)} iterations checked, {status}"


_RULE_OF_STEPSIZE = {
    "predefined": "predefined",
    "adaptive": "adaptive",
    "line_search": "adaptive",
    "backtracking": "backtracking",
}


def verify_rate(trace: RunTrace, constants: RateConstants, H_star: float, rule: str | None = None) -> RateReport:
    """Check the sublinear rate theorem matching ``rule`` along ``trace``.

    ``predefined``:   ``H_k - H* <= 2 C1 / (k+1)`` and, for ``n >= 1``,
                      ``min_{floor(n/2) <= k <= n} S_k <= 8 C1 / n``.
    ``adaptive``:     ``H_k - H* <= N C2 / (k+4)`` and
                      ``min_{j <= k} S_j <= 2 N C2 / (k+4)``.
    ``backtracking``: same with ``C3``.

    Exact line search traces are checked against the adaptive theorem
    (valid for quadratic outer functions with exact ``beta_i``).  Pass a
    lower bound of ``H*`` for a sound check.  Each inequality gets a slack
    of ``1e-9 (1 + bound)``.
    """
    rule = rule or constants.kind
    cfg = trace.config
    if rule != constants.kind:
        raise ConfigurationError(f"constants were computed for {constants.kind!r}, not {rule!r}")
    if _RULE_OF_STEPSIZE[cfg.stepsize] != rule:
        raise ConfigurationError(f"trace used stepsize {cfg.stepsize!r}; it cannot be checked against {rule!r}")
    if cfg.scheduler not in ("cyclic", "permutation") and constants.N > 1:
        raise ConfigurationError(f"the rate theorems cover cyclic passes, not scheduler {cfg.scheduler!r}")
    if rule == "backtracking" and (cfg.kappa != constants.kappa or cfg.beta_init != constants.beta_init):
        raise ConfigurationError("backtracking parameters of trace and constants differ")

    H = np.asarray(trace.H, dtype=float)
    S = np.array([np.nan if s is None else s for s in trace.S], dtype=float)
    N = constants.N
    rows, violations = [], []
    for k in range(len(H)):
        lhs = H[k] - H_star
        if rule == "predefined":
            bound = 2.0 * constants.C1 / (k + 1)
            if k >= 1:
                window = S[k // 2 : k + 1]
                gap_lhs = float(np.min(window)) if not np.any(np.isnan(window)) else None
                gap_bound = 8.0 * constants.C1 / k
            else:
                gap_lhs = gap_bound = None
        else:
            C = constants.rate_constant
            bound = N * C / (k + 4)
            window = S[: k + 1]
            gap_lhs = float(np.min(window)) if not np.any(np.isnan(window)) else None
            gap_bound = 2.0 * N * C / (k + 4)
        ok_val = lhs <= bound + 1e-9 * (1.0 + bound)
        ok_gap = gap_lhs is None or gap_lhs <= gap_bound + 1e-9 * (1.0 + gap_bound)
        row = {
            "k": k,
            "value_gap": float(lhs),
            "value_bound": bound,
            "gap_min": gap_lhs,
            "gap_bound": gap_bound,
            "ok": bool(ok_val and ok_gap),
        }
        rows.append(row)
        if not ok_val:
            violations.append({"k": k, "kind": "value", "lhs": float(lhs), "bound": bound})
        if not ok_gap:
            violations.append({"k": k, "kind": "gap", "lhs": gap_lhs, "bound": gap_bound})
    return RateReport(rule, rows, violations)


# -- trace invariants ---------------------------------------------------------
# Each checker returns a list of violations (empty means the property holds).


def check_half_gap_decrease(trace: RunTrace, rtol: float = 1e-10) -> list:
    """``H_before - H_after >= alpha S_i / 2`` at every recorded block event."""
    bad = []
    for e in trace.events:
        dec = e.H_before - e.H_after
        if dec < 0.5 * e.alpha * e.S - rtol * (1.0 + abs(e.H_before)):
            bad.append((e.k, e.block, dec, 0.5 * e.alpha * e.S))
    return bad


def check_monotone(trace: RunTrace, rtol: float = 1e-10) -> list:
    H = trace.H
    return [
        (k, H[k], H[k + 1]) for k in range(len(H) - 1) if H[k + 1] > H[k] + rtol * (1.0 + abs(H[k]))
    ]


def check_iterate_gap_identity(trace: RunTrace, rtol: float = 1e-12) -> list:
    """``||x^{k+1} - x^k||^2 = sum_j alpha_j^2 ||p_j - x_j^{k,j-1}||^2``.

    Needs ``store_iterates`` and ``record_block_events``.  Besides the
    relative tolerance, the comparison allows the rounding committed when
    the iterates are stored: ``sum_j (2 |dx_j| + e_j) e_j`` with
    ``e_j = 2 eps (|x_j^{k+1}| + |dx_j|)``.
    """
    if not trace.iterates or not trace.events:
        raise ConfigurationError("iterate-gap check needs stored iterates and block events")
    eps = np.finfo(float).eps
    by_k = {}
    for e in trace.events:
        by_k.setdefault(e.k, 0.0)
        by_k[e.k] += e.alpha**2 * e.dir_sq
    bad = []
    for k in range(len(trace.iterates) - 1):
        dx = trace.iterates[k + 1] - trace.iterates[k]
        lhs = float(dx @ dx)
        rhs = by_k.get(k, 0.0)
        e = 2 * eps * (np.abs(trace.iterates[k + 1]) + np.abs(dx))
        floor = float(np.sum((2 * np.abs(dx) + e) * e))
        if abs(lhs - rhs) > rtol * max(lhs, rhs) + floor:
            bad.append((k, lhs, rhs))
    return bad


def check_sufficient_decrease(trace: RunTrace, beta_min: float, N: int, rtol: float = 1e-10) -> list:
    """``H(x^k) - H(x^{k+1}) >= beta_min/(2N) ||A(x^k - x^{k,i-1})||^2`` for all ``i``."""
    bad = []
    H = trace.H
    for e in trace.events:
        if e.k + 1 >= len(H):
            continue
        dec = H[e.k] - H[e.k + 1]
        need = beta_min / (2.0 * N) * e.drift_sq
        if dec < need - rtol * (1.0 + abs(H[e.k])):
            bad.append((e.k, e.block, dec, need))
    return bad


def check_gap_recursion(trace: RunTrace, C: float, N: int, rtol: float = 1e-10) -> list:
    """``H(x^k) - H(x^{k+1}) >= S(x^k)^2 / (N C)`` at every recorded pass."""
    bad = []
    H, S = trace.H, trace.S
    for k in range(len(H) - 1):
        if S[k] is None:
            continue
        dec = H[k] - H[k + 1]
        need = S[k] ** 2 / (N * C)
        if dec < need - rtol * (1.0 + abs(H[k])):
            bad.append((k, dec, need))
    return bad
