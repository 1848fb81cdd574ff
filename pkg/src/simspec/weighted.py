"""Decay weights and the weighted norm used by the two-stage pipelines.

A perturbation with square-summable block norms defines a weight
``alpha_h`` per index level h: the normalized fourth root of its worst
row or column tail mass over ``|k| >= h``.  Weights are nonincreasing,
start at exactly 1 and vanish where the matrix has no tail.

The derived sequences feed the contraction certificates:

* ``alpha_prime_h`` couples the inside of a level-h cut to the outside
  through the eigenvalue gaps,
* ``alpha_tilde_h = sqrt(eta) * alpha_h + alpha_prime_h`` bounds the
  commutator inverse as a map between weighted classes, and the
  contraction modulus after coarsening at radius m is
  ``gamma(m) = alpha_tilde_{m+1}``.

Factorizing X = X_l f(A) = f(A) X_r against the weight operator
f(A) = sum_h alpha_h P_h turns tail decay into a norm; the fixed point
iteration of the coarse pipelines contracts in that norm.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateWeightError,
    InvalidInputError,
    ParseError,
    WindowTooSmallError,
)
from .opmatrix import BlockMatrix, Partition, Spectrum, gap_inverse_square_sum

__all__ = [
    "WeightSequence",
    "WeightedFactorization",
    "decay_weights",
    "factorize",
    "weighted_norm",
    "weight_operator",
    "mass_weight_sum",
    "select_coarsening",
    "weights_to_csv",
    "weights_from_csv",
]


@dataclass
class WeightSequence:
    """Per-level weights of one perturbation.

    Arrays are indexed by the level h = 0..max_level; ``alpha_prime[0]``
    is 0 by convention (an empty coupling set).
    """

    spectrum: Spectrum
    alpha: np.ndarray
    alpha_prime: np.ndarray
    sqrt_eta: float
    source_norm: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def max_level(self) -> int:
        return self.alpha.size - 1

    @property
    def alpha_tilde(self) -> np.ndarray:
        return self.sqrt_eta * self.alpha + self.alpha_prime

    def alpha_of(self, n: int) -> float:
        h = abs(int(n))
        if h > self.max_level:
            return 0.0
        return float(self.alpha[h])

    def gamma(self, m: int) -> float:
        """Contraction modulus of the commutator inverse after coarsening at m."""
        if m < 0:
            raise InvalidInputError("coarsening radius must be >= 0")
        if m + 1 > self.max_level:
            raise WindowTooSmallError(
                f"coarsening radius {m} needs weight level {m + 1} beyond the window"
            )
        return float(self.alpha_tilde[m + 1])

    def position_weights(self, spectrum: Spectrum) -> np.ndarray:
        """alpha per dense position (by the absolute spectrum index)."""
        if not self.spectrum.same_entries(spectrum):
            raise InvalidInputError("weights were built for a different spectrum")
        lev = np.abs(spectrum.indices[spectrum.position_entry])
        return self.alpha[np.minimum(lev, self.max_level)] * (lev <= self.max_level)


def _index_grouping(partition: Partition):
    """(perm, bounds) over entry ordinals, group by group."""
    spec = partition.spectrum
    perm = np.array([spec.ordinal(i) for g in partition.groups for i in g], dtype=int)
    sizes = np.array([len(g) for g in partition.groups])
    bounds = np.concatenate(([0], np.cumsum(sizes)))[:-1]
    return perm, bounds


def _coupling_table(partition: Partition) -> np.ndarray:
    """G x G table max(d(j,l), d(l,j)) of cross-group gap couplings.

    d(j, l)^2 is the worst sum of inverse square gaps from one
    eigenvalue of group l to all eigenvalues of group j; diagonal
    entries are within-group couplings and must not be consumed.
    """
    lam = partition.spectrum.values
    diff2 = np.abs(lam[:, None] - lam[None, :]) ** 2
    np.fill_diagonal(diff2, np.inf)
    q = 1.0 / diff2
    perm, bounds = _index_grouping(partition)
    s = np.add.reduceat(q[perm], bounds, axis=0)
    d2 = np.maximum.reduceat(s[:, perm], bounds, axis=1)
    return np.sqrt(np.maximum(d2, d2.T))


def decay_weights(x: BlockMatrix) -> WeightSequence:
    """Weights of a perturbation, computed on the index-per-group partition."""
    spec = x.partition.spectrum
    base = Partition.trivial(spec)
    if not x.partition.equivalent(base):
        x = x.refine(base)
    bss = x.block_spectral_sq()
    total = bss.sum()
    if total <= 0.0:
        raise DegenerateWeightError("zero perturbation has no decay profile")

    lev_g = np.abs(base.label_array())
    kmax = int(lev_g.max())
    row2 = bss.sum(axis=1)
    col2 = bss.sum(axis=0)
    row_hist = np.zeros(kmax + 1)
    col_hist = np.zeros(kmax + 1)
    np.add.at(row_hist, lev_g, row2)
    np.add.at(col_hist, lev_g, col2)
    row_tail2 = np.cumsum(row_hist[::-1])[::-1]
    col_tail2 = np.cumsum(col_hist[::-1])[::-1]
    # normalize by the full mass so that alpha[0] == 1 exactly
    norm2 = max(row_tail2[0], col_tail2[0])
    alpha = (np.maximum(row_tail2, col_tail2) / norm2) ** 0.25

    # couple inside of each level cut to the outside:
    # alpha_prime[h] = max alpha[|l|] * d(j, l) over |l| < h <= |j|
    dmax = _coupling_table(base)
    m = alpha[lev_g][None, :] * dmax
    order = np.argsort(lev_g, kind="stable")
    sorted_lev = lev_g[order]
    cm = np.maximum.accumulate(m[:, order], axis=1)[order]
    sm = np.maximum.accumulate(cm[::-1], axis=0)[::-1]
    alpha_prime = np.zeros(kmax + 1)
    for h in range(1, kmax + 1):
        ncols = int(np.searchsorted(sorted_lev, h, side="left"))
        rstart = ncols
        if ncols >= 1 and rstart < sorted_lev.size:
            alpha_prime[h] = sm[rstart, ncols - 1]

    sqrt_eta = float(np.sqrt(gap_inverse_square_sum(spec)))
    w = WeightSequence(
        spectrum=spec,
        alpha=alpha,
        alpha_prime=alpha_prime,
        sqrt_eta=sqrt_eta,
        source_norm=float(np.sqrt(total)),
    )
    w.diagnostics["beyond_window"] = _beyond_window_estimate(w)
    return w


def _beyond_window_estimate(w: WeightSequence) -> float:
    """Crude coupling estimate towards eigenvalues outside the window.

    Assumes the spectrum keeps growing past the window edges at the edge
    gap rate; reported as a diagnostic only, never used in certificates.
    """
    lam = w.spectrum.values
    if lam.size < 2:
        return float("inf")
    g = min(abs(lam[1] - lam[0]), abs(lam[-1] - lam[-2]))
    if g <= 0.0:
        return float("inf")
    mult = float(w.spectrum.mults.max())
    lev = np.abs(w.spectrum.indices)
    d_lo = np.abs(lam - (lam[0] - g))
    d_hi = np.abs(lam - (lam[-1] + g))
    d2 = mult * (1.0 / (g * d_lo) + 1.0 / (g * d_hi))
    a = w.alpha[np.minimum(lev, w.max_level)]
    return float(np.max(a * np.sqrt(d2)))


@dataclass(frozen=True)
class WeightedFactorization:
    """X = left * f(A) = f(A) * right and the induced norm."""

    left: BlockMatrix
    right: BlockMatrix
    norm: float


def factorize(x: BlockMatrix, w: WeightSequence) -> WeightedFactorization:
    """Split X against the weight operator and take the weighted norm.

    Raises :class:`DegenerateWeightError` when X carries mass on a level
    whose weight is zero (then X is not in the weighted class).
    """
    apos = w.position_weights(x.partition.spectrum)
    dead = apos == 0.0
    if np.any(dead):
        if np.any(x.data[:, dead] != 0.0) or np.any(x.data[dead, :] != 0.0):
            raise DegenerateWeightError("matrix has mass on zero-weight levels")
    inv = np.where(dead, 0.0, 1.0 / np.where(dead, 1.0, apos))
    left = BlockMatrix(x.partition, x.data * inv[None, :], x.mask.copy(), validate=False)
    right = BlockMatrix(x.partition, x.data * inv[:, None], x.mask.copy(), validate=False)
    return WeightedFactorization(left, right, max(left.hs_sigma(), right.hs_sigma()))


def weighted_norm(x: BlockMatrix, w: WeightSequence) -> float:
    return factorize(x, w).norm


def weight_operator(w: WeightSequence, partition: Partition) -> BlockMatrix:
    """f(A) = sum_h alpha_h P_h as a diagonal block matrix."""
    apos = w.position_weights(partition.spectrum)
    g = partition.n_groups
    return BlockMatrix(
        partition, np.diag(apos.astype(complex)), np.eye(g, dtype=bool), validate=False
    )


def mass_weight_sum(x: BlockMatrix, w: WeightSequence) -> float:
    """sum_n max(row_n, col_n)^2 / alpha_n^2 over the index rows and columns.

    Finiteness of this sum is membership in the weighted class; zero
    mass on a zero-weight level contributes zero.
    """
    spec = x.partition.spectrum
    base = Partition.trivial(spec)
    if not x.partition.equivalent(base):
        x = x.refine(base)
    bss = x.block_spectral_sq()
    row2 = bss.sum(axis=1)
    col2 = bss.sum(axis=0)
    peak = np.maximum(row2, col2)
    lev = np.abs(base.label_array())
    a2 = w.alpha[np.minimum(lev, w.max_level)] ** 2
    out = 0.0
    for p, a in zip(peak, a2):
        if p == 0.0:
            continue
        if a == 0.0:
            return float("inf")
        out += p / a
    return float(out)


def select_coarsening(x: BlockMatrix, w: WeightSequence, margin: float = 0.9, start: int = 0):
    """Smallest coarsening radius whose contraction certificate clears `margin`.

    Returns ``(m, info)`` with the certificate numbers; raises
    :class:`WindowTooSmallError` (carrying the best certificate seen)
    when no radius inside the window works.
    """
    if not (0.0 < margin < 1.0):
        raise InvalidInputError("margin must lie in (0, 1)")
    wnorm = factorize(x, w).norm
    tilde = w.alpha_tilde
    best = None
    for m in range(start, w.max_level):
        q = 4.0 * tilde[m + 1] * wnorm
        if best is None or q < best:
            best = q
        if q <= margin:
            return m, {
                "radius": m,
                "gamma": float(tilde[m + 1]),
                "weighted_norm": float(wnorm),
                "contraction_q": float(q),
                "margin": float(margin),
            }
    raise WindowTooSmallError(
        "no coarsening radius inside the window certifies contraction",
        best=float(best),
    )


def weights_to_csv(w: WeightSequence, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "alpha", "alpha_prime", "alpha_tilde"])
        tilde = w.alpha_tilde
        for h in range(w.max_level + 1):
            writer.writerow(
                [h, repr(float(w.alpha[h])), repr(float(w.alpha_prime[h])), repr(float(tilde[h]))]
            )


def weights_from_csv(path) -> dict:
    """Read a weight table back as plain arrays (round-trip checking)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for ln, row in enumerate(reader, start=1):
            if ln == 1 and row and row[0].strip() == "level":
                continue
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", path=path, line=ln)
            try:
                rows.append((int(row[0]), float(row[1]), float(row[2]), float(row[3])))
            except ValueError as exc:
                raise ParseError(f"bad field: {exc}", path=path, line=ln) from None
    if not rows:
        raise ParseError("empty weight table", path=path)
    rows.sort()
    levels = [r[0] for r in rows]
    if levels != list(range(len(levels))):
        raise ParseError("levels must cover 0..K exactly once", path=path)
    return {
        "level": np.array(levels),
        "alpha": np.array([r[1] for r in rows]),
        "alpha_prime": np.array([r[2] for r in rows]),
        "alpha_tilde": np.array([r[3] for r in rows]),
    }
