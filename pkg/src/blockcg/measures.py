"""Gap-type optimality measures and the explicit rate constants.

For a feasible ``x`` the block gap is

    S_i(x) = <grad_i f(x), x_i - p_i(x)> + g_i(x_i) - g_i(p_i(x))

where ``p_i(x)`` is the block oracle answer for the cost ``grad_i f(x)``;
the total gap ``S(x) = sum_i S_i(x)`` upper-bounds ``H(x) - H*``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .core import Point
from .errors import ConfigurationError, ContractError, InputError, NumericalFailure
from .smooth import CallableOuter, QuadraticForm, ResidualState, ShiftedSquaredNorm

if TYPE_CHECKING:  # pragma: no cover
    from .problems import ProblemInstance

logger = logging.getLogger(__name__)

__all__ = [
    "GapResult",
    "RateConstants",
    "LipschitzReport",
    "block_gap",
    "total_gap",
    "compute_constants",
    "rate_constants_from",
    "gradient_bound",
    "check_gap_lipschitz",
]

NEGATIVE_GAP_FAILURE = -1e-8
RULES = ("predefined", "adaptive", "backtracking")


def _raw_block_gap(block, grad_i: np.ndarray, x_i: np.ndarray):
    p_i = block.lmo(grad_i)
    d = x_i - p_i
    s = float(grad_i @ d) + block.linear(d)
    return s, p_i


def _clamp(s: float, where: str) -> float:
    if s < 0.0:
        if s < NEGATIVE_GAP_FAILURE:
            raise NumericalFailure(f"negative gap {s:.3e} at {where}")
        logger.debug("clamping negative gap %.3e at %s", s, where)
        return 0.0
    return s


def _as_state(x, problem) -> ResidualState:
    if isinstance(x, ResidualState):
        return x
    if isinstance(x, Point):
        x = x.values
    return ResidualState(x, problem.smooth)


def _require_feasible(problem, x: np.ndarray) -> None:
    for j, (blk, xj) in enumerate(zip(problem.blocks, problem.partition.split(x))):
        if not blk.contains(xj):
            raise InputError(f"point is infeasible in block {j}")


def block_gap(state, problem: "ProblemInstance", i: int):
    """Block gap ``S_i(x)`` (clamped at 0) and the oracle answer ``p_i(x)``.

    ``state`` may be a :class:`ResidualState`, a :class:`Point` or a vector.
    """
    i = problem.partition.check_index(i)
    state = _as_state(state, problem)
    _require_feasible(problem, state.x)
    sc = problem.smooth
    grad_i = np.asarray(sc.blocks[i].T @ sc.outer.gradient(state.z)).reshape(-1)
    s, p_i = _raw_block_gap(problem.blocks[i], grad_i, state.x[problem.partition.slice(i)])
    return _clamp(s, f"block {i}"), p_i


@dataclass(frozen=True)
class GapResult:
    """Per-block gaps, their sum, and the stacked oracle answers ``p(x)``."""

    S_i: np.ndarray
    S: float
    p: Point
    raw: np.ndarray = field(repr=False, default=None)


def total_gap(state, problem: "ProblemInstance", check_feasible: bool = True) -> GapResult:
    """``S(x) = sum_i S_i(x)`` with every partial gradient taken at the same ``x``."""
    state = _as_state(state, problem)
    if check_feasible:
        _require_feasible(problem, state.x)
    sc = problem.smooth
    grad = sc.transpose_apply(sc.outer.gradient(state.z))
    part = problem.partition
    raw = np.empty(part.N)
    p = np.empty(part.n)
    for i, (blk, sl) in enumerate(zip(problem.blocks, part.slices())):
        raw[i], p[sl] = _raw_block_gap(blk, grad[sl], state.x[sl])
    clamped = np.array([_clamp(s, f"block {i}") for i, s in enumerate(raw)])
    return GapResult(clamped, float(clamped.sum()), Point(p, part), raw)


@dataclass(frozen=True)
class RateConstants:
    """Every constant the three rate theorems need.

    ``C3`` is only set when the constants were computed for the
    backtracking rule (it depends on ``kappa`` and ``beta_init``).
    """

    kind: str
    N: int
    D: float
    D_i: np.ndarray
    l_i: np.ndarray
    L_F: float
    beta: np.ndarray
    beta_min: float
    norm_A: float
    norm_Ai: np.ndarray
    M_i: np.ndarray
    K_i: np.ndarray
    C1_curvature: float
    C1_coupling: float
    C1: float
    C2: float
    C3: float | None = None
    kappa: float | None = None
    beta_init: float | None = None
    beta_bar: np.ndarray | None = None

    @property
    def rate_constant(self) -> float:
        """The constant appearing in the theorem for ``kind``."""
        return {"predefined": self.C1, "adaptive": self.C2, "backtracking": self.C3}[self.kind]

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


def rate_constants_from(
    *,
    beta: Sequence[float],
    D_i: Sequence[float],
    l_i: Sequence[float],
    norm_Ai: Sequence[float],
    norm_A: float,
    L_F: float,
    M_i: Sequence[float],
    kind: str = "adaptive",
    kappa: float = 2.0,
    beta_init: float = 1.0,
) -> RateConstants:
    """Assemble the rate constants from their ingredients."""
    if kind not in RULES:
        raise ConfigurationError(f"unknown rule {kind!r}; expected one of {RULES}")
    if L_F is None or not L_F > 0:
        raise ConfigurationError("L_F is missing or not positive")
    beta = np.asarray(beta, dtype=float)
    D_i = np.asarray(D_i, dtype=float)
    l_i = np.asarray(l_i, dtype=float)
    nA = np.asarray(norm_Ai, dtype=float)
    M_i = np.asarray(M_i, dtype=float)
    N = beta.shape[0]
    if not (D_i.shape == l_i.shape == nA.shape == M_i.shape == (N,)):
        raise ContractError("per-block constant arrays must all have length N")
    if not np.all(beta > 0):
        raise ConfigurationError("every beta_i must be positive")

    D = math.sqrt(float(D_i @ D_i))
    beta_min = float(beta.min())
    K_i = (M_i + l_i) * D_i

    c1_curv = float(np.sum(beta * nA**2 * D_i**2))
    c1_coup = 2.0 * L_F * D * norm_A * float(np.sum(D_i * nA))
    C1 = c1_curv + c1_coup

    max_nA2 = float(np.max(nA**2))
    C2 = 4.0 * (
        float(np.max(np.maximum(beta * nA**2 * D_i**2, K_i)))
        + N * L_F**2 * D**2 * max_nA2 / beta_min
    )

    C3 = beta_bar = None
    if kind == "backtracking":
        if not kappa > 1:
            raise ConfigurationError(f"kappa must exceed 1, got {kappa}")
        if not beta_init > 0:
            raise ConfigurationError(f"beta_init must be positive, got {beta_init}")
        beta_bar = np.maximum(kappa * beta, beta_init)
        C3 = 4.0 * (
            float(np.max(np.maximum(beta_bar * nA**2 * D_i**2, K_i)))
            + N * L_F**2 * D**2 * max_nA2 / beta_init
        )
    else:
        kappa = beta_init = None

    consts = [C1, C2] + ([C3] if C3 is not None else [])
    if not all(np.isfinite(c) and c > 0 for c in consts):
        raise ConfigurationError(f"rate constants are not positive and finite: {consts}")
    return RateConstants(
        kind=kind,
        N=N,
        D=D,
        D_i=D_i,
        l_i=l_i,
        L_F=float(L_F),
        beta=beta,
        beta_min=beta_min,
        norm_A=float(norm_A),
        norm_Ai=nA,
        M_i=M_i,
        K_i=K_i,
        C1_curvature=c1_curv,
        C1_coupling=c1_coup,
        C1=C1,
        C2=C2,
        C3=C3,
        kappa=kappa,
        beta_init=beta_init,
        beta_bar=beta_bar,
    )


def gradient_bound(problem: "ProblemInstance") -> float:
    """Upper bound on ``sup_{x in X} ||grad F(Ax)||``.

    Isotropic quadratic: ``scale (||A|| rho + ||c||)``; quadratic form:
    ``||Q|| (||A|| rho + ||c||)``, with ``rho = max_{x in X} ||x||``.  A
    general outer function falls back on Lipschitz continuity around the
    default start: ``||grad F(A x0)|| + L_F ||A|| D``.
    """
    sc = problem.smooth
    outer = sc.outer
    rho = math.sqrt(sum(b.max_norm**2 for b in problem.blocks))
    if isinstance(outer, ShiftedSquaredNorm):
        return outer.scale * (sc.norm_A * rho + float(np.linalg.norm(outer.center)))
    if isinstance(outer, QuadraticForm):
        return outer.lipschitz * (sc.norm_A * rho + float(np.linalg.norm(outer.center)))
    x0 = problem.default_start()
    D = math.sqrt(sum(b.diameter**2 for b in problem.blocks))
    g0 = float(np.linalg.norm(outer.gradient(sc.residual(x0))))
    return g0 + outer.lipschitz * sc.norm_A * D


def compute_constants(
    problem: "ProblemInstance",
    kind: str = "adaptive",
    kappa: float = 2.0,
    beta_init: float = 1.0,
) -> RateConstants:
    """Rate constants of ``problem`` for one stepsize rule.

    ``M_i`` is the certified upper bound ``||A_i|| * gradient_bound(problem)``
    rather than the exact maximum of ``||grad_i f||`` over ``X``.
    """
    sc = problem.smooth
    if isinstance(sc.outer, CallableOuter) and sc.outer.lipschitz is None:
        raise ConfigurationError("L_F must be supplied for a general outer function")
    G = gradient_bound(problem)
    return rate_constants_from(
        beta=sc.beta,
        D_i=[b.diameter for b in problem.blocks],
        l_i=[b.lipschitz for b in problem.blocks],
        norm_Ai=sc.norm_Ai,
        norm_A=sc.norm_A,
        L_F=sc.L_F,
        M_i=sc.norm_Ai * G,
        kind=kind,
        kappa=kappa,
        beta_init=beta_init,
    )


@dataclass(frozen=True)
class LipschitzReport:
    lhs: float
    rhs: float
    holds: bool


def check_gap_lipschitz(problem: "ProblemInstance", x, y, i: int) -> LipschitzReport:
    """Check ``|S_i(x) - S_i(y)| <= L_F D_i ||A_i|| ||A(x - y)||`` for ``x_i = y_i``."""
    i = problem.partition.check_index(i)
    x = np.asarray(x.values if isinstance(x, Point) else x, dtype=float)
    y = np.asarray(y.values if isinstance(y, Point) else y, dtype=float)
    sl = problem.partition.slice(i)
    if not np.array_equal(x[sl], y[sl]):
        raise ContractError(f"x and y must agree on block {i}")
    sx, _ = block_gap(x, problem, i)
    sy, _ = block_gap(y, problem, i)
    sc = problem.smooth
    lhs = abs(sx - sy)
    rhs = (
        sc.L_F
        * problem.blocks[i].diameter
        * sc.norm_Ai[i]
        * float(np.linalg.norm(sc.residual(x - y)))
    )
    return LipschitzReport(lhs, rhs, bool(lhs <= rhs + 1e-9 * (1.0 + rhs)))
