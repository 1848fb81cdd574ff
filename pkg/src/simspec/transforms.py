"""Block-diagonal projection and the commutator inverse on a partition.

For a diagonal free operator A and a partition Sigma of its eigenvalue
indices, two transforms drive everything:

* ``block_diagonal`` keeps the diagonal blocks (the part commuting with
  every group projection),
* ``commutator_inverse`` solves A Y - Y A = X - block_diagonal(X) for
  the unique Y with zero diagonal blocks; entrywise this divides the
  cross-group entries by the eigenvalue differences.

The commutator inverse is always evaluated at the eigen-index level and
then zeroed inside groups, so coarse partitions reuse the same divisor
table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .opmatrix import (
    BlockMatrix,
    Partition,
    gap_inverse_square_sum,
    spectral_gap,
)

__all__ = [
    "TransformContext",
    "SmoothingBounds",
    "block_diagonal",
    "off_diagonal_part",
    "commutator_inverse",
    "commutator_residual",
    "group_coupling",
    "smoothing_norm_bounds",
]


class TransformContext:
    """A partition plus cached eigenvalue-difference tables."""

    def __init__(self, partition: Partition):
        self.partition = partition
        self.spectrum = partition.spectrum
        self._divisors = None
        self._delta = None
        self._eta = None

    @property
    def delta(self) -> float:
        """Minimal eigenvalue separation of the underlying spectrum."""
        if self._delta is None:
            self._delta = spectral_gap(self.spectrum)
        return self._delta

    @property
    def eta(self) -> float:
        """Largest row sum of inverse square gaps."""
        if self._eta is None:
            self._eta = gap_inverse_square_sum(self.spectrum)
        return self._eta

    def divisors(self) -> np.ndarray:
        """lambda_row - lambda_col with same-group entries set to 1.

        Same-group entries are placeholders; callers must zero those
        entries separately (they are never legitimate divisions).
        """
        if self._divisors is None:
            lam = self.spectrum.position_values
            diff = lam[:, None] - lam[None, :]
            same = self.partition.same_group_mask()
            diff[same] = 1.0
            self._divisors = diff
        return self._divisors

    def _require(self, x: BlockMatrix):
        if x.partition is not self.partition and not x.partition.equivalent(self.partition):
            raise InvalidInputError("matrix does not live on the context partition")


def block_diagonal(ctx: TransformContext, x: BlockMatrix) -> BlockMatrix:
    """Diagonal-block part of ``x`` (one block per group kept)."""
    ctx._require(x)
    same = ctx.partition.same_group_mask()
    data = np.where(same, x.data, 0.0)
    mask = x.mask & np.eye(ctx.partition.n_groups, dtype=bool)
    return BlockMatrix(ctx.partition, data, mask, validate=False)


def off_diagonal_part(ctx: TransformContext, x: BlockMatrix) -> BlockMatrix:
    """``x`` minus its diagonal blocks."""
    ctx._require(x)
    same = ctx.partition.same_group_mask()
    data = np.where(same, 0.0, x.data)
    mask = x.mask & ~np.eye(ctx.partition.n_groups, dtype=bool)
    return BlockMatrix(ctx.partition, data, mask, validate=False)


def commutator_inverse(ctx: TransformContext, x: BlockMatrix) -> BlockMatrix:
    """Solve A Y - Y A = x - block_diagonal(x) with zero diagonal blocks.

    Entry (p, q) of the result is ``x[p, q] / (lambda_p - lambda_q)`` for
    positions in different groups and exactly zero inside a group.
    """
    ctx._require(x)
    same = ctx.partition.same_group_mask()
    data = np.where(same, 0.0, x.data / ctx.divisors())
    mask = x.mask & ~np.eye(ctx.partition.n_groups, dtype=bool)
    return BlockMatrix(ctx.partition, data, mask, validate=False)


def commutator_residual(ctx: TransformContext, x: BlockMatrix) -> float:
    """Frobenius residual of A Y - Y A = x - block_diagonal(x) for Y = commutator_inverse(x)."""
    y = commutator_inverse(ctx, x)
    lam = ctx.spectrum.position_values
    lhs = lam[:, None] * y.data - y.data * lam[None, :]
    rhs = off_diagonal_part(ctx, x).data
    return float(np.linalg.norm(lhs - rhs))


def group_coupling(ctx: TransformContext, row_label: int, col_label: int) -> float:
    """Coupling constant between two groups.

    The square root of the worst inverse-square gap sum seen from any
    eigenvalue of the column group towards all eigenvalues of the row
    group: ``sqrt(max_{l in col} sum_{j in row} |lambda_j - l|^-2)``.
    """
    part = ctx.partition
    if row_label == col_label:
        raise InvalidInputError("coupling is defined for distinct groups")
    spec = ctx.spectrum
    rows = np.array([spec.value_of(i) for i in part.group_indices(row_label)])
    cols = np.array([spec.value_of(i) for i in part.group_indices(col_label)])
    inv_sq = 1.0 / np.abs(rows[:, None] - cols[None, :]) ** 2
    return float(math.sqrt(inv_sq.sum(axis=0).max()))


@dataclass(frozen=True)
class SmoothingBounds:
    """Norm bounds for the commutator inverse.

    ``sqrt_eta`` bounds its norm on operator-norm classes and on the
    block norm; ``inv_delta`` bounds it on the Frobenius norm.
    """

    sqrt_eta: float
    inv_delta: float


def smoothing_norm_bounds(ctx: TransformContext) -> SmoothingBounds:
    return SmoothingBounds(math.sqrt(ctx.eta), 1.0 / ctx.delta)
