"""Per-block nonsmooth terms ``g_i``: an indicator of a box or a unit simplex,
optionally plus a linear term ``<b_i, .>``.

Each block exposes a linear minimization oracle that folds the linear term
in, the value of ``g_i``, and the constants ``D_i`` (diameter of the
domain) and ``l_i`` (Lipschitz constant of ``g_i`` on the domain).
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import ContractError, InputError

__all__ = [
    "FEASIBILITY_TOL",
    "NonsmoothBlock",
    "Box",
    "Simplex",
    "lmo",
    "evaluate_g",
    "brute_force_lmo",
    "is_infeasible",
]

FEASIBILITY_TOL = 1e-9
MAX_BRUTE_FORCE_BOX_DIM = 16


def is_infeasible(value: float) -> bool:
    """``evaluate_g`` signals points outside the domain with ``+inf``."""
    return value == math.inf


class NonsmoothBlock:
    """Common interface of the block descriptors."""

    kind = "abstract"
    dim: int
    linear_term: np.ndarray | None

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    @property
    def lipschitz(self) -> float:
        if self.linear_term is None:
            return 0.0
        return float(np.linalg.norm(self.linear_term))

    @property
    def max_norm(self) -> float:
        """``max_{x in X_i} ||x||``."""
        raise NotImplementedError

    def _cost(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=float).reshape(-1)
        if c.shape[0] != self.dim:
            raise ContractError(f"cost has length {c.shape[0]}, block has dimension {self.dim}")
        if self.linear_term is not None:
            c = c + self.linear_term
        return c

    def linear(self, p) -> float:
        if self.linear_term is None:
            return 0.0
        return float(self.linear_term @ p)

    def lmo(self, c) -> np.ndarray:
        raise NotImplementedError

    def contains(self, p, tol: float = FEASIBILITY_TOL) -> bool:
        raise NotImplementedError

    def value(self, p) -> float:
        p = np.asarray(p, dtype=float).reshape(-1)
        if p.shape[0] != self.dim:
            raise ContractError(f"point has length {p.shape[0]}, block has dimension {self.dim}")
        if not self.contains(p):
            return math.inf
        return self.linear(p)

    def vertices(self):
        raise NotImplementedError

    def default_point(self) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_dict(d: dict) -> "NonsmoothBlock":
        b = d.get("linear_term")
        if d["kind"] == "box":
            return Box(d["lower"], d["upper"], b)
        if d["kind"] == "simplex":
            return Simplex(d["dim"], b)
        raise InputError(f"unknown block kind {d['kind']!r}")


class Box(NonsmoothBlock):
    """``X_i = [lower, upper]`` coordinatewise, ``D_i = ||upper - lower||``."""

    kind = "box"

    def __init__(self, lower, upper, linear_term=None):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        lower, upper = np.broadcast_arrays(lower, upper)
        if not np.all(np.isfinite(lower)) or not np.all(np.isfinite(upper)):
            raise InputError("box bounds must be finite")
        if not np.all(lower < upper):
            raise InputError("box needs lower < upper in every coordinate")
        self.lower = lower.copy()
        self.upper = upper.copy()
        self.dim = lower.shape[0]
        self.linear_term = None if linear_term is None else _vector(linear_term, self.dim)

    @property
    def diameter(self):
        return float(np.linalg.norm(self.upper - self.lower))

    @property
    def max_norm(self):
        return float(np.linalg.norm(np.maximum(np.abs(self.lower), np.abs(self.upper))))

    def lmo(self, c):
        # zero cost goes to the lower bound
        return np.where(self._cost(c) < 0.0, self.upper, self.lower)

    def contains(self, p, tol=FEASIBILITY_TOL):
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.lower - tol) and np.all(p <= self.upper + tol))

    def vertices(self):
        for choice in itertools.product((0, 1), repeat=self.dim):
            yield np.where(np.array(choice, dtype=bool), self.upper, self.lower)

    def default_point(self):
        zero = np.zeros(self.dim)
        if self.contains(zero, tol=0.0):
            return zero
        return self.lower.copy()

    def to_dict(self):
        return {
            "kind": "box",
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "linear_term": None if self.linear_term is None else self.linear_term.tolist(),
        }

    def __repr__(self):
        return f"Box(dim={self.dim}, linear={self.linear_term is not None})"


class Simplex(NonsmoothBlock):
    """Unit simplex ``{p >= 0, sum p = 1}`` in ``R^dim``; ``D_i = sqrt(2)``."""

    kind = "simplex"

    def __init__(self, dim: int, linear_term=None):
        dim = int(dim)
        if dim < 1:
            raise InputError("simplex dimension must be >= 1")
        self.dim = dim
        self.linear_term = None if linear_term is None else _vector(linear_term, dim)

    @property
    def diameter(self):
        return math.sqrt(2.0) if self.dim > 1 else 0.0

    @property
    def max_norm(self):
        return 1.0

    def lmo(self, c):
        out = np.zeros(self.dim)
        out[int(np.argmin(self._cost(c)))] = 1.0
        return out

    def contains(self, p, tol=FEASIBILITY_TOL):
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= -tol) and abs(p.sum() - 1.0) <= tol)

    def vertices(self):
        for j in range(self.dim):
            v = np.zeros(self.dim)
            v[j] = 1.0
            yield v

    def default_point(self):
        v = np.zeros(self.dim)
        v[0] = 1.0
        return v

    def to_dict(self):
        return {
            "kind": "simplex",
            "dim": self.dim,
            "linear_term": None if self.linear_term is None else self.linear_term.tolist(),
        }

    def __repr__(self):
        return f"Simplex(dim={self.dim}, linear={self.linear_term is not None})"


def _vector(v, dim) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != dim:
        raise ContractError(f"linear term has length {v.shape[0]}, block has dimension {dim}")
    return v


def lmo(block: NonsmoothBlock, c) -> np.ndarray:
    """``argmin_{p in X_i} <c, p> + g_i(p)``, always a vertex of the domain."""
    return block.lmo(c)


def evaluate_g(block: NonsmoothBlock, p) -> float:
    """``g_i(p)``: the linear term on the domain, ``+inf`` outside it."""
    return block.value(p)


def brute_force_lmo(block: NonsmoothBlock, c) -> np.ndarray:
    """Exhaustive minimization over the vertices, same tie-breaking as :func:`lmo`.

    Vertices are enumerated with the lower bound before the upper bound in
    every coordinate (resp. by increasing index for the simplex) and the
    first minimizer wins.
    """
    if isinstance(block, Box) and block.dim > MAX_BRUTE_FORCE_BOX_DIM:
        raise ContractError(
            f"brute force over 2^{block.dim} box vertices refused "
            f"(limit {MAX_BRUTE_FORCE_BOX_DIM})"
        )
    # folding b into the cost first keeps exact ties exact
    cost = block._cost(c)
    best, best_val = None, math.inf
    for v in block.vertices():
        val = float(cost @ v)
        if val < best_val:
            best, best_val = v, val
    return best
