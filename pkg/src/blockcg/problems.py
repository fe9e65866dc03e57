"""Problem instances ``H(x) = F(Ax) + sum_i g_i(x_i)`` and seeded generators.

Random draws use NumPy's Philox counter-based bit generator.  The root
seed is expanded with :class:`numpy.random.SeedSequence` and one child
stream is spawned per generated array, in a fixed order documented in each
generator, so instances are reproducible bit for bit on a given NumPy.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .core import BlockPartition
from .errors import InputError, UnsupportedError
from .oracles import Box, NonsmoothBlock, Simplex
from .smooth import QuadraticForm, ShiftedSquaredNorm, SmoothComposite, spectral_norm

__all__ = [
    "ProblemInstance",
    "gen_box_quadratic",
    "gen_simplex_product",
    "gen_sdca_dual",
    "GENERATORS",
    "streams",
    "instance_to_json",
    "instance_from_json",
    "save_instance",
    "load_instance",
]

FORMAT_VERSION = 1


def streams(seed: int, count: int) -> list[np.random.Generator]:
    """``count`` independent Philox generators derived from ``seed``."""
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


@dataclass
class ProblemInstance:
    """A composite problem with its block structure and provenance."""

    smooth: SmoothComposite
    blocks: list[NonsmoothBlock]
    provenance: dict = field(default_factory=dict)
    x0: np.ndarray | None = None

    def __post_init__(self):
        part = self.smooth.partition
        if len(self.blocks) != part.N:
            raise InputError(f"{len(self.blocks)} block descriptors for {part.N} blocks")
        for i, (b, s) in enumerate(zip(self.blocks, part.sizes)):
            if b.dim != s:
                raise InputError(f"block {i}: descriptor dim {b.dim} but partition size {s}")
        if self.x0 is not None:
            self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
            if not self.contains(self.x0):
                raise InputError("x0 is infeasible")

    @property
    def partition(self) -> BlockPartition:
        return self.smooth.partition

    @property
    def N(self) -> int:
        return self.partition.N

    @property
    def n(self) -> int:
        return self.partition.n

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return all(b.contains(xi) for b, xi in zip(self.blocks, self.partition.split(x)))

    def g_value(self, x) -> float:
        return float(sum(b.value(xi) for b, xi in zip(self.blocks, self.partition.split(x))))

    def objective(self, x) -> float:
        """``H(x)`` from scratch; ``inf`` outside the domain."""
        x = np.asarray(x, dtype=float)
        return self.smooth.value_at(x) + self.g_value(x)

    def default_start(self) -> np.ndarray:
        """Origin where feasible, otherwise the lower corner of each box and
        the first vertex of each simplex."""
        if self.x0 is not None:
            return self.x0.copy()
        return np.concatenate([b.default_point() for b in self.blocks])

    def with_beta(self, beta) -> "ProblemInstance":
        return ProblemInstance(self.smooth.with_beta(beta), self.blocks, dict(self.provenance), self.x0)

    def to_dict(self) -> dict:
        sc = self.smooth
        outer = sc.outer
        if isinstance(outer, ShiftedSquaredNorm):
            od = {"kind": outer.kind, "center": outer.center.tolist(), "scale": outer.scale}
        elif isinstance(outer, QuadraticForm):
            od = {"kind": outer.kind, "center": outer.center.tolist(), "Q": outer.Q.tolist()}
        else:
            raise UnsupportedError(f"cannot serialize outer function of kind {outer.kind!r}")
        A = sc.A.toarray() if hasattr(sc.A, "toarray") else sc.A
        return {
            "format": "blockcg-instance",
            "version": FORMAT_VERSION,
            "m": int(A.shape[0]),
            "n": int(A.shape[1]),
            "block_sizes": list(sc.partition.sizes),
            "A": A.tolist(),
            "outer": od,
            "beta": sc.beta.tolist(),
            "blocks": [b.to_dict() for b in self.blocks],
            "x0": None if self.x0 is None else self.x0.tolist(),
            "provenance": self.provenance,
        }

    @cached_property
    def digest(self) -> str:
        """SHA-256 of the canonical JSON serialization."""
        return hashlib.sha256(instance_to_json(self).encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemInstance":
        if d.get("format") != "blockcg-instance":
            raise InputError("not a blockcg instance document")
        part = BlockPartition(tuple(d["block_sizes"]))
        A = np.asarray(d["A"], dtype=float).reshape(d["m"], d["n"])
        od = d["outer"]
        if od["kind"] == ShiftedSquaredNorm.kind:
            outer = ShiftedSquaredNorm(od["center"], od["scale"])
        elif od["kind"] == QuadraticForm.kind:
            outer = QuadraticForm(od["Q"], od["center"])
        else:
            raise InputError(f"unknown outer function kind {od['kind']!r}")
        sc = SmoothComposite(A, part, outer, d["beta"])
        blocks = [NonsmoothBlock.from_dict(b) for b in d["blocks"]]
        return cls(sc, blocks, d.get("provenance", {}), d.get("x0"))


def instance_to_json(inst: ProblemInstance) -> str:
    return json.dumps(inst.to_dict(), sort_keys=True, separators=(",", ":"))


def instance_from_json(text: str) -> ProblemInstance:
    """Parse an instance; malformed JSON raises :class:`json.JSONDecodeError`
    (its ``pos`` attribute is the byte offset)."""
    return ProblemInstance.from_dict(json.loads(text))


def save_instance(inst: ProblemInstance, path) -> str:
    text = instance_to_json(inst)
    with open(path, "w") as fh:
        fh.write(text)
    return hashlib.sha256(text.encode()).hexdigest()


def load_instance(path) -> ProblemInstance:
    with open(path) as fh:
        return instance_from_json(fh.read())


def _positive_int(name, v):
    if int(v) != v or v < 1:
        raise InputError(f"{name} must be a positive integer, got {v!r}")
    return int(v)


def gen_box_quadratic(d: int, n_samples: int, seed: int, encoding: str = "composite") -> ProblemInstance:
    """Random box-constrained quadratic ``min_{|x|_inf <= 1} 1/2 (x-y)^T Q (x-y)``.

    ``X`` (``n_samples x d``) and ``y`` are standard normal, drawn from the
    first and second spawned stream.  ``Q = X^T D^2 X / n_samples`` with
    ``D = diag(1/n^2, 1/(n-1)^2, ..., 1)``, ``n = n_samples``.  Blocks are
    single coordinates with domain ``[-1, 1]``.

    ``encoding="composite"`` uses ``A = D X / sqrt(n)`` and
    ``F(z) = 1/2 ||z - A y||^2`` (``beta_i = 1`` exact), so the exact line
    search coincides with the adaptive rule.  ``encoding="identity"`` uses
    ``A = I`` and ``F(z) = 1/2 (z - y)^T Q (z - y)`` with ``beta_i`` the
    norm of column ``i`` of ``Q``.
    """
    d = _positive_int("d", d)
    n = _positive_int("n_samples", n_samples)
    rx, ry = streams(seed, 2)
    X = rx.standard_normal((n, d))
    y = ry.standard_normal(d)
    diag = 1.0 / np.arange(n, 0, -1, dtype=float) ** 2
    part = BlockPartition.uniform(d)
    blocks = [Box(-1.0, 1.0) for _ in range(d)]
    prov = {
        "generator": "box_quadratic",
        "seed": int(seed),
        "params": {"d": d, "n_samples": n, "encoding": encoding},
    }
    if encoding == "composite":
        A = diag[:, None] * X / math.sqrt(n)
        sc = SmoothComposite(A, part, ShiftedSquaredNorm(A @ y), beta=1.0)
    elif encoding == "identity":
        DX = diag[:, None] * X
        Q = DX.T @ DX / n
        beta = [spectral_norm(Q[:, [j]]) for j in range(d)]
        beta = np.maximum(beta, np.finfo(float).tiny)
        sc = SmoothComposite(np.eye(d), part, QuadraticForm(Q, y), beta=beta)
    else:
        raise InputError(f"unknown encoding {encoding!r}")
    return ProblemInstance(sc, blocks, prov)


def gen_simplex_product(
    N_examples: int, M_classes: int, d_features: int, lam: float, seed: int
) -> ProblemInstance:
    """Structured-SVM-like dual over a product of ``N_examples`` unit simplices.

    ``min (lam/2) ||A a||^2 - sum_i <b_i, a_i>`` with every block ``a_i`` in
    the ``M_classes``-dimensional simplex.  ``A`` (``d x NM``, entries
    normal / sqrt(NM)) comes from the first stream and ``b`` (standard
    normal) from the second.  ``beta_i = lam``.
    """
    N = _positive_int("N_examples", N_examples)
    M = _positive_int("M_classes", M_classes)
    d = _positive_int("d_features", d_features)
    if not lam > 0:
        raise InputError(f"lambda must be positive, got {lam}")
    ra, rb = streams(seed, 2)
    A = ra.standard_normal((d, N * M)) / math.sqrt(N * M)
    b = rb.standard_normal((N, M))
    part = BlockPartition.uniform(N, M)
    sc = SmoothComposite(A, part, ShiftedSquaredNorm(np.zeros(d), scale=lam), beta=lam)
    blocks = [Simplex(M, -b[i]) for i in range(N)]
    prov = {
        "generator": "simplex_product",
        "seed": int(seed),
        "params": {"N_examples": N, "M_classes": M, "d_features": d, "lam": float(lam)},
    }
    return ProblemInstance(sc, blocks, prov)


def gen_sdca_dual(n_points: int, d_features: int, lam: float, seed: int) -> ProblemInstance:
    """Dual of hinge-loss ridge classification in the coordinate form.

    ``min (1/n) sum_i (-x_i) + (lam/2) || (1/(lam n)) sum_i a_i x_i ||^2``
    over ``x in [0, 1]^n`` with ``a_i = label_i * feature_i``.  Features are
    standard normal (first stream), labels are uniform signs (second
    stream).  ``D_i = 1``, ``l_i = 1/n``, ``beta_i = lam``.
    """
    n = _positive_int("n_points", n_points)
    d = _positive_int("d_features", d_features)
    if not lam > 0:
        raise InputError(f"lambda must be positive, got {lam}")
    rf, rl = streams(seed, 2)
    feats = rf.standard_normal((n, d))
    labels = np.where(rl.random(n) < 0.5, -1.0, 1.0)
    A = (labels[:, None] * feats).T / (lam * n)
    part = BlockPartition.uniform(n)
    sc = SmoothComposite(A, part, ShiftedSquaredNorm(np.zeros(d), scale=lam), beta=lam)
    blocks = [Box(0.0, 1.0, [-1.0 / n]) for _ in range(n)]
    prov = {
        "generator": "sdca_dual",
        "seed": int(seed),
        "params": {"n_points": n, "d_features": d, "lam": float(lam)},
    }
    return ProblemInstance(sc, blocks, prov)


GENERATORS = {
    "box_quadratic": gen_box_quadratic,
    "simplex_product": gen_simplex_product,
    "sdca_dual": gen_sdca_dual,
}
