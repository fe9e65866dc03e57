"""Block partitions of R^n and block views of vectors.

Blocks are contiguous coordinate ranges and are indexed from 0 in the
public API: block ``i`` of a partition with sizes ``(n_0, ..., n_{N-1})``
covers coordinates ``offsets[i] : offsets[i] + sizes[i]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractError

__all__ = ["BlockPartition", "Point", "InnerIterate", "scatter", "gather"]


@dataclass(frozen=True)
class BlockPartition:
    """Decomposition of ``n`` coordinates into ``N`` contiguous blocks.

    Parameters
    ----------
    sizes : sequence of int
        Block sizes, all ``>= 1``.
    """

    sizes: tuple[int, ...]
    offsets: tuple[int, ...] = field(init=False)
    n: int = field(init=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes:
            raise ContractError("a partition needs at least one block")
        if any(s < 1 for s in sizes):
            raise ContractError(f"block sizes must be positive, got {sizes}")
        offsets = tuple(int(o) for o in np.concatenate([[0], np.cumsum(sizes)[:-1]]))
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "n", int(sum(sizes)))

    @classmethod
    def uniform(cls, n_blocks: int, block_size: int = 1) -> "BlockPartition":
        return cls((block_size,) * n_blocks)

    @property
    def N(self) -> int:
        return len(self.sizes)

    def __len__(self):
        return len(self.sizes)

    def check_index(self, i: int) -> int:
        if not isinstance(i, (int, np.integer)) or not 0 <= i < self.N:
            raise ContractError(f"block index {i!r} out of range for {self.N} blocks")
        return int(i)

    def slice(self, i: int) -> slice:
        i = self.check_index(i)
        start = self.offsets[i]
        return slice(start, start + self.sizes[i])

    def slices(self) -> list[slice]:
        return [slice(o, o + s) for o, s in zip(self.offsets, self.sizes)]

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        """Views of every block of ``x``."""
        x = np.asarray(x)
        if x.shape != (self.n,):
            raise ContractError(f"expected a vector of length {self.n}, got shape {x.shape}")
        return [x[s] for s in self.slices()]


def scatter(partition: BlockPartition, i: int, block) -> np.ndarray:
    """Embed a block vector into R^n (the action of ``U_i``).

    >>> scatter(BlockPartition((2, 1)), 1, [5.0])
    array([0., 0., 5.])
    """
    sl = partition.slice(i)
    block = np.asarray(block, dtype=float).reshape(-1)
    if block.shape[0] != partition.sizes[i]:
        raise ContractError(
            f"block {i} has size {partition.sizes[i]}, got a vector of length {block.shape[0]}"
        )
    out = np.zeros(partition.n)
    out[sl] = block
    return out


def gather(partition: BlockPartition, i: int, x) -> np.ndarray:
    """Coordinates of block ``i`` of ``x`` (the action of ``U_i^T``), as a copy."""
    if isinstance(x, Point):
        x = x.values
    x = np.asarray(x, dtype=float)
    if x.shape != (partition.n,):
        raise ContractError(f"expected a vector of length {partition.n}, got shape {x.shape}")
    return x[partition.slice(i)].copy()


class Point:
    """A read-only vector of R^n paired with its block partition."""

    __slots__ = ("values", "partition")

    def __init__(self, values, partition: BlockPartition):
        values = np.array(values, dtype=float).reshape(-1)
        if values.shape != (partition.n,):
            raise ContractError(
                f"point has length {values.shape[0]}, partition expects {partition.n}"
            )
        values.flags.writeable = False
        self.values = values
        self.partition = partition

    def block(self, i: int) -> np.ndarray:
        return self.values[self.partition.slice(i)]

    def blocks(self) -> list[np.ndarray]:
        return self.partition.split(self.values)

    def with_block(self, i: int, block) -> "Point":
        new = self.values.copy()
        new[self.partition.slice(i)] = np.asarray(block, dtype=float).reshape(-1)
        return Point(new, self.partition)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __repr__(self):
        return f"Point({self.values!r}, sizes={self.partition.sizes})"


@dataclass
class InnerIterate:
    """Bookkeeping for the inner iterate ``x^{k,i}`` of one outer pass.

    ``updated`` lists the blocks already refreshed during pass ``k`` in the
    order they were visited; every other block still carries its ``x^k``
    value.  ``start`` keeps a copy of ``x^k``.
    """

    start: np.ndarray
    n_blocks: int
    updated: list[int] = field(default_factory=list)

    @property
    def updated_upto(self) -> int:
        return len(self.updated)

    def mark(self, i: int) -> None:
        if i in self.updated:
            raise ContractError(f"block {i} already updated in this pass")
        self.updated.append(i)

    @property
    def complete(self) -> bool:
        return len(self.updated) == self.n_blocks


def as_partition(sizes_or_partition: BlockPartition | Sequence[int]) -> BlockPartition:
    if isinstance(sizes_or_partition, BlockPartition):
        return sizes_or_partition
    return BlockPartition(tuple(sizes_or_partition))
