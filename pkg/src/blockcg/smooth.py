"""The smooth part ``f(x) = F(Ax)`` with a cached residual ``z = Ax``.

Block steps only touch ``A_i`` so ``z`` is updated in ``O(m n_i)``; the
cache is rebuilt from scratch every ``refresh_every`` block updates to keep
floating-point drift bounded.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .core import BlockPartition, Point
from .errors import ConfigurationError, ContractError, InputError, NumericalFailure

logger = logging.getLogger(__name__)

__all__ = [
    "OuterFunction",
    "ShiftedSquaredNorm",
    "QuadraticForm",
    "CallableOuter",
    "SmoothComposite",
    "ResidualState",
    "DescentReport",
    "spectral_norm",
    "certified_norm",
    "smooth_value",
    "partial_gradient",
    "full_gradient",
    "apply_block_step",
    "check_block_descent",
]

NORM_INFLATION = 1e-6
REFRESH_EVERY = 1000


def spectral_norm(M, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest singular value of ``M`` by power iteration on ``M^T M``.

    The iteration starts from the normalized all-ones vector so the result
    is deterministic; if that start lies in the null space of ``M`` a fixed
    pseudo-random start is used instead.  Stops when the Rayleigh quotient
    changes by less than ``tol`` relative.
    """
    if sp.issparse(M):
        data = M.data
        M = M.tocsr()
    else:
        M = np.atleast_2d(np.asarray(M, dtype=float))
        data = M
    if not np.all(np.isfinite(data)):
        raise InputError("spectral_norm: matrix has non-finite entries")
    n = M.shape[1]
    if n == 0 or M.shape[0] == 0:
        return 0.0
    if n == 1:
        col = M.toarray().ravel() if sp.issparse(M) else M[:, 0]
        return float(np.linalg.norm(col))
    # normalizing by the largest entry keeps ||Mv||^2 clear of under/overflow
    scale = float(abs(M).max()) if sp.issparse(M) else float(np.abs(M).max())
    if scale == 0.0:
        return 0.0
    return scale * _power_iteration(M / scale, tol, max_iter)


def _power_iteration(M, tol: float, max_iter: int) -> float:
    n = M.shape[1]
    starts = [np.ones(n) / np.sqrt(n), np.random.default_rng(0).standard_normal(n)]
    for v in starts:
        v = v / np.linalg.norm(v)
        Mv = M @ v
        lam = float(Mv @ Mv)
        if lam > 0.0:
            break
    else:
        # both starts annihilated: M is (numerically) zero
        return 0.0

    for _ in range(max_iter):
        w = M.T @ Mv
        v = w / np.linalg.norm(w)
        Mv = M @ v
        lam_new = float(Mv @ Mv)
        if abs(lam_new - lam) <= tol * lam_new:
            lam = lam_new
            break
        lam = lam_new
    else:
        logger.warning("spectral_norm: power iteration hit max_iter=%d", max_iter)
    return float(np.sqrt(lam))


def certified_norm(M) -> float:
    """Spectral norm inflated by ``1 + 1e-6`` so it is safe as an upper bound."""
    return spectral_norm(M) * (1.0 + NORM_INFLATION)


class OuterFunction:
    """Convex outer function ``F : R^m -> R`` with Lipschitz gradient."""

    kind = "abstract"
    #: exact line search along a direction is available in closed form
    quadratic = False

    def value(self, z: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def lipschitz(self) -> float:
        raise NotImplementedError

    def default_beta(self) -> float:
        return self.lipschitz

    def curvature(self, w: np.ndarray) -> float:
        """``w^T (hess F) w`` for quadratic outer functions."""
        raise NotImplementedError


class ShiftedSquaredNorm(OuterFunction):
    """``F(z) = (scale/2) ||z - center||^2``.

    With this outer function the block curvature constant ``beta_i = scale``
    is exact, and the block descent inequality holds with equality.
    """

    kind = "shifted_squared_norm"
    quadratic = True

    def __init__(self, center, scale: float = 1.0):
        self.center = np.asarray(center, dtype=float).reshape(-1)
        self.scale = float(scale)
        if not self.scale > 0:
            raise InputError(f"scale must be positive, got {scale}")

    def value(self, z):
        r = z - self.center
        return 0.5 * self.scale * float(r @ r)

    def gradient(self, z):
        return self.scale * (z - self.center)

    @property
    def lipschitz(self):
        return self.scale

    def default_beta(self):
        return self.scale

    def curvature(self, w):
        return self.scale * float(w @ w)


class QuadraticForm(OuterFunction):
    """``F(z) = 1/2 (z - center)^T Q (z - center)`` with ``Q`` symmetric PSD."""

    kind = "quadratic_form"
    quadratic = True

    def __init__(self, Q, center):
        Q = np.asarray(Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise InputError(f"Q must be square, got shape {Q.shape}")
        self.Q = 0.5 * (Q + Q.T)
        self.center = np.asarray(center, dtype=float).reshape(-1)

    def value(self, z):
        r = z - self.center
        return 0.5 * float(r @ (self.Q @ r))

    def gradient(self, z):
        return self.Q @ (z - self.center)

    @cached_property
    def lipschitz(self):
        return certified_norm(self.Q)

    def curvature(self, w):
        return float(w @ (self.Q @ w))


class CallableOuter(OuterFunction):
    """General outer function given by callables; ``lipschitz`` is mandatory."""

    kind = "callable"

    def __init__(self, value: Callable, gradient: Callable, lipschitz: float | None):
        if lipschitz is None or not lipschitz > 0:
            raise ConfigurationError("a Lipschitz constant for grad F must be supplied")
        self._value = value
        self._gradient = gradient
        self._lipschitz = float(lipschitz)

    def value(self, z):
        return float(self._value(z))

    def gradient(self, z):
        return np.asarray(self._gradient(z), dtype=float)

    @property
    def lipschitz(self):
        return self._lipschitz


class SmoothComposite:
    """``f(x) = F(Ax)`` split column-wise along a block partition.

    Parameters
    ----------
    A : (m, n) array or scipy sparse matrix
    partition : BlockPartition
    outer : OuterFunction
    beta : float or sequence of float, optional
        Block curvature constants.  Defaults to ``outer.default_beta()``
        for every block (``L_F`` in general, exact for the isotropic
        quadratic).
    """

    def __init__(self, A, partition: BlockPartition, outer: OuterFunction, beta=None):
        if sp.issparse(A):
            A = sp.csc_matrix(A, dtype=float)
            if not np.all(np.isfinite(A.data)):
                raise InputError("A has non-finite entries")
        else:
            A = np.atleast_2d(np.asarray(A, dtype=float))
            if not np.all(np.isfinite(A)):
                raise InputError("A has non-finite entries")
        if A.shape[1] != partition.n:
            raise ContractError(f"A has {A.shape[1]} columns, partition has {partition.n}")
        self.A = A
        self.partition = partition
        self.outer = outer
        if beta is None:
            beta = outer.default_beta()
        beta = np.broadcast_to(np.asarray(beta, dtype=float), (partition.N,)).copy()
        if not np.all(beta > 0) or not np.all(np.isfinite(beta)):
            raise ConfigurationError("every beta_i must be positive and finite")
        beta.flags.writeable = False
        self.beta = beta
        if sp.issparse(A):
            self.blocks = [A[:, s] for s in partition.slices()]
        else:
            self.blocks = [np.asfortranarray(A[:, s]) for s in partition.slices()]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def L_F(self) -> float:
        return self.outer.lipschitz

    @property
    def beta_min(self) -> float:
        return float(self.beta.min())

    @cached_property
    def norm_A(self) -> float:
        """Certified (slightly inflated) spectral norm of ``A``."""
        return certified_norm(self.A)

    @cached_property
    def norm_Ai(self) -> np.ndarray:
        return np.array([certified_norm(Ai) for Ai in self.blocks])

    def with_beta(self, beta) -> "SmoothComposite":
        return SmoothComposite(self.A, self.partition, self.outer, beta)

    def residual(self, x) -> np.ndarray:
        return np.asarray(self.A @ np.asarray(x, dtype=float)).reshape(-1)

    def value_at(self, x) -> float:
        """``f(x)`` computed from scratch."""
        return self.outer.value(self.residual(x))

    def gradient_at(self, x) -> np.ndarray:
        return self.transpose_apply(self.outer.gradient(self.residual(x)))

    def transpose_apply(self, w) -> np.ndarray:
        """``A^T w`` assembled block by block, so it agrees bitwise with the
        partial gradients ``A_i^T w``."""
        return np.concatenate([np.asarray(Ai.T @ w).reshape(-1) for Ai in self.blocks])


class ResidualState:
    """Current point ``x`` together with the cached residual ``z = A x``.

    Owned by one solver run; ``x`` is mutated in place by block steps.
    """

    def __init__(self, x, sc: SmoothComposite, refresh_every: int = REFRESH_EVERY):
        x = np.array(x, dtype=float).reshape(-1)
        if x.shape != (sc.partition.n,):
            raise ContractError(f"x has length {x.shape[0]}, expected {sc.partition.n}")
        self.x = x
        self.z = sc.residual(x)
        self.refresh_every = int(refresh_every)
        self.steps_since_refresh = 0

    def copy(self) -> "ResidualState":
        new = object.__new__(ResidualState)
        new.x = self.x.copy()
        new.z = self.z.copy()
        new.refresh_every = self.refresh_every
        new.steps_since_refresh = self.steps_since_refresh
        return new

    def point(self, partition: BlockPartition) -> Point:
        return Point(self.x, partition)

    def refresh(self, sc: SmoothComposite) -> None:
        self.z = sc.residual(self.x)
        self.steps_since_refresh = 0

    def drift(self, sc: SmoothComposite) -> float:
        """Relative distance between the cached and the recomputed residual."""
        exact = sc.residual(self.x)
        return float(np.linalg.norm(self.z - exact) / (1.0 + np.linalg.norm(exact)))


def smooth_value(state: ResidualState, sc: SmoothComposite) -> float:
    val = sc.outer.value(state.z)
    if not np.isfinite(val):
        raise NumericalFailure(f"smooth value is not finite ({val})")
    return val


def outer_gradient(state: ResidualState, sc: SmoothComposite) -> np.ndarray:
    return sc.outer.gradient(state.z)


def partial_gradient(state: ResidualState, sc: SmoothComposite, i: int) -> np.ndarray:
    """``A_i^T grad F(z)``."""
    i = sc.partition.check_index(i)
    return np.asarray(sc.blocks[i].T @ sc.outer.gradient(state.z)).reshape(-1)


def full_gradient(state: ResidualState, sc: SmoothComposite) -> np.ndarray:
    return sc.transpose_apply(sc.outer.gradient(state.z))


def apply_block_step(
    state: ResidualState,
    sc: SmoothComposite,
    i: int,
    direction,
    alpha: float,
    Ad: np.ndarray | None = None,
) -> ResidualState:
    """``x_i += alpha * direction`` and ``z += alpha * A_i direction`` in place.

    ``Ad`` may carry a precomputed ``A_i @ direction``.
    """
    i = sc.partition.check_index(i)
    if not 0.0 <= alpha <= 1.0:
        raise ContractError(f"stepsize must lie in [0, 1], got {alpha}")
    direction = np.asarray(direction, dtype=float).reshape(-1)
    if direction.shape[0] != sc.partition.sizes[i]:
        raise ContractError(
            f"direction has length {direction.shape[0]}, block {i} has {sc.partition.sizes[i]}"
        )
    if alpha == 0.0:
        return state
    if Ad is None:
        Ad = np.asarray(sc.blocks[i] @ direction).reshape(-1)
    state.x[sc.partition.slice(i)] += alpha * direction
    state.z += alpha * Ad
    state.steps_since_refresh += 1
    if state.steps_since_refresh >= state.refresh_every:
        state.refresh(sc)
    return state


def apply_full_step(
    state: ResidualState, sc: SmoothComposite, direction, alpha: float, Ad=None
) -> ResidualState:
    """Full-space step used by the classical (non-block) method."""
    if not 0.0 <= alpha <= 1.0:
        raise ContractError(f"stepsize must lie in [0, 1], got {alpha}")
    if alpha == 0.0:
        return state
    if Ad is None:
        Ad = np.asarray(sc.A @ direction).reshape(-1)
    state.x += alpha * np.asarray(direction, dtype=float)
    state.z += alpha * Ad
    state.steps_since_refresh += sc.partition.N
    if state.steps_since_refresh >= state.refresh_every:
        state.refresh(sc)
    return state


@dataclass(frozen=True)
class DescentReport:
    lhs: float
    rhs: float
    holds: bool

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


def check_block_descent(
    sc: SmoothComposite, x, i: int, h, domain: Sequence | None = None, beta=None
) -> DescentReport:
    """Evaluate both sides of the composite block descent inequality.

    ``f(x + U_i h) <= f(x) + <grad_i f(x), h> + beta_i/2 ||A_i h||^2``

    ``domain`` (the per-block nonsmooth descriptors) enables the
    feasibility check on ``x`` and ``x + U_i h``.  ``beta`` overrides
    ``sc.beta[i]``.
    """
    i = sc.partition.check_index(i)
    x = np.asarray(x.values if isinstance(x, Point) else x, dtype=float)
    h = np.asarray(h, dtype=float).reshape(-1)
    if h.shape[0] != sc.partition.sizes[i]:
        raise ContractError(f"h has length {h.shape[0]}, block {i} has {sc.partition.sizes[i]}")
    y = x.copy()
    y[sc.partition.slice(i)] += h
    if domain is not None:
        for pt, name in ((x, "x"), (y, "x + U_i h")):
            for j, (blk, xj) in enumerate(zip(domain, sc.partition.split(pt))):
                if not blk.contains(xj):
                    raise InputError(f"{name} is infeasible in block {j}")
    beta_i = float(sc.beta[i] if beta is None else beta)
    z = sc.residual(x)
    fx = sc.outer.value(z)
    g_i = np.asarray(sc.blocks[i].T @ sc.outer.gradient(z)).reshape(-1)
    Ah = np.asarray(sc.blocks[i] @ h).reshape(-1)
    lhs = sc.value_at(y)
    rhs = fx + float(g_i @ h) + 0.5 * beta_i * float(Ah @ Ah)
    return DescentReport(lhs, rhs, bool(lhs <= rhs + 1e-10 * (1.0 + abs(rhs))))
