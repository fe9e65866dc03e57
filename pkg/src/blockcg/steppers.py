"""Stepsize rules for a block conditional gradient update.

All rules act on one block update ``x_i <- x_i + alpha (p_i - x_i)``
and only need the block gap ``S_i``, the curvature constant ``beta_i`` and
``q = ||A_i (p_i - x_i)||^2``.  ``x_i`` here is the current value of block
``i`` inside the pass, which coincides with its value at the start of the
pass since a block is touched only once per pass.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, ContractError, NumericalFailure, UnsupportedError
from .smooth import ResidualState

__all__ = [
    "StepContext",
    "BacktrackResult",
    "predefined_step",
    "adaptive_step",
    "backtracking_step",
    "exact_line_search_quadratic",
    "MAX_BACKTRACKS",
]

MAX_BACKTRACKS = 64
#: the sufficient-decrease test tolerates this much relative rounding
BACKTRACK_RTOL = 1e-12


@dataclass
class StepContext:
    k: int
    i: int
    S_i: float
    q: float
    beta: float
    xi_prev: int = 0

    def __post_init__(self):
        if self.q < 0:
            raise ContractError(f"q must be non-negative, got {self.q}")
        self.S_i = max(float(self.S_i), 0.0)


def predefined_step(k: int, variant: str = "cyclic", n_blocks: int = 1, block_counter: int = 0) -> float:
    """``2 / (k + 2)``; the random-block variant uses ``2N / (k~ + 2N)``.

    ``block_counter`` (``k~``) is the number of block updates performed so far.
    """
    if variant == "cyclic":
        if k < 0:
            raise ContractError("k must be non-negative")
        return 2.0 / (k + 2.0)
    if variant == "rbcg":
        if block_counter < 0:
            raise ContractError("block_counter must be non-negative")
        return 2.0 * n_blocks / (block_counter + 2.0 * n_blocks)
    raise ConfigurationError(f"unknown predefined variant {variant!r}")


def _ratio_step(S_i: float, beta: float, q: float) -> float:
    denom = beta * q
    if denom == 0.0:
        # the model is linear in alpha (or beta q underflowed): go all the way iff there is a gap
        return 1.0 if S_i > 0.0 else 0.0
    return min(S_i / denom, 1.0)


def adaptive_step(ctx: StepContext) -> float:
    """``min{S_i / (beta_i q), 1}`` with ``0/0`` read as 0 and ``s/0`` as 1."""
    if not ctx.beta > 0:
        raise ConfigurationError(f"beta_i must be positive, got {ctx.beta}")
    return _ratio_step(ctx.S_i, ctx.beta, ctx.q)


@dataclass(frozen=True)
class BacktrackResult:
    alpha: float
    beta: float
    xi: int
    trials: int


def backtracking_step(
    ctx: StepContext,
    kappa: float,
    beta_init: float,
    trial_decrease: Callable[[float], float],
    H_scale: float = 0.0,
) -> BacktrackResult:
    """Smallest ``xi >= ctx.xi_prev`` whose trial step passes the decrease test.

    The trial step is ``alpha = min{S_i / (kappa^xi beta_init q), 1}`` and
    it is accepted when ``trial_decrease(alpha) >= alpha S_i / 2`` up to a
    rounding allowance of ``1e-12 (1 + H_scale)``; ``trial_decrease``
    returns the true objective decrease ``H(x) - H(x + alpha U_i d)``.
    """
    if not kappa > 1:
        raise ConfigurationError(f"kappa must exceed 1, got {kappa}")
    if not beta_init > 0:
        raise ConfigurationError(f"beta_init must be positive, got {beta_init}")
    slack = BACKTRACK_RTOL * (1.0 + abs(H_scale))
    xi = int(ctx.xi_prev)
    for trials in range(1, MAX_BACKTRACKS + 1):
        beta = kappa**xi * beta_init
        alpha = _ratio_step(ctx.S_i, beta, ctx.q)
        if alpha == 0.0:
            return BacktrackResult(0.0, beta, xi, trials)
        dec = trial_decrease(alpha)
        if not np.isfinite(dec):
            raise NumericalFailure(f"non-finite objective during backtracking (alpha={alpha})")
        if dec >= 0.5 * alpha * ctx.S_i - slack:
            return BacktrackResult(alpha, beta, xi, trials)
        xi += 1
    raise NumericalFailure(
        f"backtracking exceeded {MAX_BACKTRACKS} increases on block {ctx.i}; "
        "the objective evaluation is probably broken"
    )


def exact_line_search_quadratic(state: ResidualState, problem, i: int, direction) -> float:
    """``argmin_{alpha in [0,1]} H(x + alpha U_i d)`` for a quadratic outer function.

    Along the segment ``H`` is the scalar quadratic
    ``H(x) + alpha * slope + alpha^2 * curv / 2`` with
    ``slope = <grad_i f(x) + b_i, d>`` and ``curv = d^T A_i^T (hess F) A_i d``.
    """
    sc = problem.smooth
    if not sc.outer.quadratic:
        raise UnsupportedError("exact line search needs a quadratic outer function")
    i = problem.partition.check_index(i)
    d = np.asarray(direction, dtype=float).reshape(-1)
    if not np.any(d):
        return 0.0
    Ad = np.asarray(sc.blocks[i] @ d).reshape(-1)
    slope = float(sc.outer.gradient(state.z) @ Ad) + problem.blocks[i].linear(d)
    curv = sc.outer.curvature(Ad)
    return _clip_quadratic_min(slope, curv)


def _clip_quadratic_min(slope: float, curv: float) -> float:
    if slope >= 0.0:
        return 0.0
    if curv <= 0.0:
        return 1.0
    return min(-slope / curv, 1.0)
