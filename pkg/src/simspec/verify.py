"""Independent eigenvalue oracle and comparison harness.

Nothing here shares code with the similarity pipelines: eigenvalues
come from a hand-rolled Hessenberg reduction followed by an explicitly
shifted QR iteration with Wilkinson shifts, and small matrices are
cross-checked against a second, entirely different oracle
(characteristic polynomial by the trace recursion, roots by a
simultaneous Newton iteration).  The harness side pairs computed
spectra with references, checks tail summability, and compares spectral
projections against their similarity bound.
"""

from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NotInvertibleError, OracleFailureError
from .opmatrix import BlockMatrix, Partition, Spectrum

__all__ = [
    "oracle_eigenvalues",
    "oracle_eigenpairs",
    "charpoly_coefficients",
    "polynomial_roots",
    "charpoly_eigenvalues",
    "eigen_projection",
    "SpectrumMatch",
    "match_spectra",
    "tail_weight_check",
    "projection_compare",
    "tail_factor_inequality",
    "SpectrumReport",
    "build_spectrum_report",
]

_ORACLE_DIM_CAP = 4096
_DEFLATE = 1e-14
_DUAL_TOL = 1e-10
_CROSS_CHECK_DIM = 8


# -- QR oracle ---------------------------------------------------------------


def _hessenberg(a: np.ndarray):
    """Householder reduction a = q h q^H with h upper Hessenberg."""
    h = np.array(a, dtype=complex)
    n = h.shape[0]
    q = np.eye(n, dtype=complex)
    for k in range(n - 2):
        x = h[k + 1 :, k]
        nx = float(np.linalg.norm(x))
        if nx == 0.0:
            continue
        alpha = -nx if x[0] == 0.0 else -cmath.exp(1j * cmath.phase(complex(x[0]))) * nx
        v = x.copy()
        v[0] -= alpha
        nv = float(np.linalg.norm(v))
        if nv <= 1e-300:
            continue
        v = v / nv
        h[k + 1 :, k:] -= 2.0 * np.outer(v, v.conj() @ h[k + 1 :, k:])
        h[:, k + 1 :] -= 2.0 * np.outer(h[:, k + 1 :] @ v, v.conj())
        q[:, k + 1 :] -= 2.0 * np.outer(q[:, k + 1 :] @ v, v.conj())
        h[k + 2 :, k] = 0.0
    return h, q


def _eig2(a, b, c, d):
    mid = 0.5 * (a + d)
    disc = cmath.sqrt(0.25 * (a - d) ** 2 + b * c)
    return mid + disc, mid - disc


def _wilkinson_shift(h, hi):
    e1, e2 = _eig2(h[hi - 1, hi - 1], h[hi - 1, hi], h[hi, hi - 1], h[hi, hi])
    return e1 if abs(e1 - h[hi, hi]) <= abs(e2 - h[hi, hi]) else e2


def _shifted_qr_sweep(h, lo, hi, mu):
    """One explicit step h <- R Q + mu on the active window lo..hi."""
    for d in range(lo, hi + 1):
        h[d, d] -= mu
    rots = []
    for i in range(lo, hi):
        a = h[i, i]
        b = h[i + 1, i]
        r = math.hypot(abs(a), abs(b))
        if r == 0.0:
            c, s = 1.0 + 0.0j, 0.0 + 0.0j
        else:
            c, s = a / r, b / r
        rots.append((c, s))
        r1 = h[i, i : hi + 1].copy()
        r2 = h[i + 1, i : hi + 1]
        h[i, i : hi + 1] = np.conj(c) * r1 + np.conj(s) * r2
        h[i + 1, i : hi + 1] = -s * r1 + c * r2
    for i in range(lo, hi):
        c, s = rots[i - lo]
        top = min(i + 2, hi)
        c1 = h[lo : top + 1, i].copy()
        c2 = h[lo : top + 1, i + 1]
        h[lo : top + 1, i] = c * c1 + s * c2
        h[lo : top + 1, i + 1] = -np.conj(s) * c1 + np.conj(c) * c2
    for d in range(lo, hi + 1):
        h[d, d] += mu


def _qr_eigenvalues(h: np.ndarray) -> np.ndarray:
    """Eigenvalues of a Hessenberg matrix by shifted QR with deflation."""
    h = h.copy()
    n = h.shape[0]
    vals = []
    hi = n - 1
    sweeps = 0
    stalled = 0
    budget = max(200, 50 * n)
    while hi >= 0:
        if hi == 0:
            vals.append(complex(h[0, 0]))
            break
        # deflate negligible subdiagonals inside the active tail
        lo = hi
        while lo > 0:
            s = abs(h[lo - 1, lo - 1]) + abs(h[lo, lo])
            if s == 0.0:
                s = float(np.abs(np.diag(h[: hi + 1, : hi + 1])).max() + 1.0)
            if abs(h[lo, lo - 1]) <= _DEFLATE * s:
                h[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            vals.append(complex(h[hi, hi]))
            hi -= 1
            stalled = 0
            continue
        if lo == hi - 1:
            e1, e2 = _eig2(h[lo, lo], h[lo, hi], h[hi, lo], h[hi, hi])
            vals.extend([complex(e1), complex(e2)])
            hi -= 2
            stalled = 0
            continue
        if stalled and stalled % 10 == 0:
            # deterministic exceptional shift to break limit cycles
            mu = h[hi, hi] + 1.5 * (abs(h[hi, hi - 1]) + abs(h[hi - 1, hi - 2]))
        else:
            mu = _wilkinson_shift(h, hi)
        _shifted_qr_sweep(h, lo, hi, mu)
        sweeps += 1
        stalled += 1
        if sweeps > budget:
            raise OracleFailureError(
                f"QR iteration exceeded {budget} sweeps with {hi + 1} eigenvalues left"
            )
    return np.array(vals, dtype=complex)


# -- polynomial oracle --------------------------------------------------------


def charpoly_coefficients(a: np.ndarray) -> np.ndarray:
    """Monic characteristic polynomial by the trace recursion.

    Returns coefficients [1, c1, ..., cn] of lambda^n + c1 lambda^(n-1)
    + ... + cn, computed on a rescaled copy for overflow safety.
    """
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    scale = float(np.abs(a).max())
    if scale == 0.0:
        out = np.zeros(n + 1, dtype=complex)
        out[0] = 1.0
        return out
    b = a / scale
    coeffs = np.empty(n + 1, dtype=complex)
    coeffs[0] = 1.0
    m = np.zeros_like(b)
    eye = np.eye(n, dtype=complex)
    for k in range(1, n + 1):
        m = b @ m + coeffs[k - 1] * eye
        coeffs[k] = -np.trace(b @ m) / k
    # undo the scaling: coefficient of lambda^(n-k) picks up scale^k
    return coeffs * scale ** np.arange(n + 1)


def polynomial_roots(coeffs: np.ndarray, tol: float = 1e-14, max_iter: int = 200) -> np.ndarray:
    """All roots of a monic polynomial by simultaneous Newton steps.

    Deterministic spiral starts inside the Cauchy bound; each update is
    the Newton step corrected by the repulsion of the other iterates.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    if coeffs[0] != 1.0:
        coeffs = coeffs / coeffs[0]
    n = coeffs.size - 1
    if n == 0:
        return np.array([], dtype=complex)
    if n == 1:
        return np.array([-coeffs[1]])
    deriv = coeffs[:-1] * np.arange(n, 0, -1)
    radius = 1.0 + float(np.abs(coeffs[1:]).max())
    j = np.arange(n)
    z = radius * (0.35 + 0.55 * j / n) * np.exp(2j * np.pi * (j + 0.25) / n)
    for _ in range(max_iter):
        p = np.polyval(coeffs, z)
        dp = np.polyval(deriv, z)
        dp = np.where(dp == 0.0, 1e-300, dp)
        w = p / dp
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, np.inf)
        rep = (1.0 / diff).sum(axis=1)
        denom = 1.0 - w * rep
        denom = np.where(np.abs(denom) < 1e-300, 1e-300, denom)
        step = w / denom
        z = z - step
        if float(np.abs(step).max()) <= tol * (1.0 + float(np.abs(z).max())):
            return z
    raise OracleFailureError("polynomial root iteration did not converge")


def charpoly_eigenvalues(a: np.ndarray) -> np.ndarray:
    """Second oracle for small matrices: roots of the char polynomial."""
    a = np.asarray(a, dtype=complex)
    if a.shape[0] > _CROSS_CHECK_DIM:
        raise InvalidInputError(
            f"polynomial oracle is limited to dimension {_CROSS_CHECK_DIM}"
        )
    return polynomial_roots(charpoly_coefficients(a))


# -- public oracle ------------------------------------------------------------


def oracle_eigenvalues(a, cross_check: bool = True) -> np.ndarray:
    """Eigenvalue multiset of a dense complex matrix, sorted by (re, im).

    Dimension <= 8 runs the polynomial oracle as well and any
    disagreement beyond 1e-10 (scaled) is an oracle failure.
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError("oracle needs a square matrix")
    n = a.shape[0]
    if n == 0:
        return np.array([], dtype=complex)
    if n > _ORACLE_DIM_CAP:
        raise InvalidInputError(f"oracle dimension cap is {_ORACLE_DIM_CAP}")
    if n == 1:
        vals = np.array([complex(a[0, 0])])
    else:
        h, _ = _hessenberg(a)
        vals = _qr_eigenvalues(h)
    order = np.lexsort((vals.imag, vals.real))
    vals = vals[order]
    if cross_check and 2 <= n <= _CROSS_CHECK_DIM:
        alt = charpoly_eigenvalues(a)
        m = match_spectra(vals, alt)
        scale = max(1.0, float(np.abs(vals).max()))
        if m.max_abs_deviation > _DUAL_TOL * scale:
            raise OracleFailureError(
                f"oracles disagree by {m.max_abs_deviation:.3e} at dimension {n}"
            )
    return vals


def _hessenberg_solve(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve m x = rhs for Hessenberg m by Givens elimination, O(n^2)."""
    m = m.copy()
    b = np.asarray(rhs, dtype=complex).copy()
    n = m.shape[0]
    for i in range(n - 1):
        a_, c_ = m[i, i], m[i + 1, i]
        r = math.hypot(abs(a_), abs(c_))
        if r == 0.0:
            continue
        c, s = a_ / r, c_ / r
        r1 = m[i, i:].copy()
        r2 = m[i + 1, i:]
        m[i, i:] = np.conj(c) * r1 + np.conj(s) * r2
        m[i + 1, i:] = -s * r1 + c * r2
        b1 = b[i]
        b[i] = np.conj(c) * b1 + np.conj(s) * b[i + 1]
        b[i + 1] = -s * b1 + c * b[i + 1]
    x = np.zeros(n, dtype=complex)
    for i in range(n - 1, -1, -1):
        z = b[i] - m[i, i + 1 :] @ x[i + 1 :]
        d = m[i, i]
        if abs(d) < 1e-300:
            d = 1e-300
        x[i] = z / d
    return x


def oracle_eigenpairs(a):
    """Eigenvalues plus eigenvectors via inverse iteration on the
    Hessenberg form; returns (values, vectors) with vectors as columns."""
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    if n == 1:
        return np.array([complex(a[0, 0])]), np.ones((1, 1), dtype=complex)
    h, q = _hessenberg(a)
    vals = _qr_eigenvalues(h.copy())
    order = np.lexsort((vals.imag, vals.real))
    vals = vals[order]
    scale = max(1.0, float(np.abs(h).max()))
    vecs = np.empty((n, n), dtype=complex)
    eye = np.eye(n, dtype=complex)
    start = np.ones(n, dtype=complex) / math.sqrt(n)
    for j, lam in enumerate(vals):
        shifted = h - (lam + 1e-12 * scale * (1.0 + 1.0j)) * eye
        y = _hessenberg_solve(shifted, start)
        y /= np.linalg.norm(y)
        y = _hessenberg_solve(shifted, y)
        ny = np.linalg.norm(y)
        if ny == 0.0 or not np.isfinite(ny):
            raise OracleFailureError(f"inverse iteration failed for eigenvalue {lam!r}")
        vecs[:, j] = q @ (y / ny)
    return vals, vecs


def eigen_projection(vals: np.ndarray, vecs: np.ndarray, select: np.ndarray) -> np.ndarray:
    """Spectral projection onto the selected eigenvalues, along the rest."""
    select = np.asarray(select, dtype=bool)
    if select.shape != vals.shape:
        raise InvalidInputError("selector must align with the eigenvalues")
    cond = float(np.linalg.cond(vecs))
    if not math.isfinite(cond) or cond > 1e10:
        raise NotInvertibleError("eigenvector basis too ill-conditioned", cond=cond)
    vinv = np.linalg.inv(vecs)
    return vecs[:, select] @ vinv[select, :]


# -- spectrum comparison -------------------------------------------------------


@dataclass
class SpectrumMatch:
    """Greedy nearest pairing of two equally sized eigenvalue multisets."""

    pairs: list
    deviations: np.ndarray
    max_abs_deviation: float
    rms_deviation: float

    def deviation_of(self, ref_position: int) -> float:
        for (i, _), d in zip(self.pairs, self.deviations):
            if i == ref_position:
                return float(d)
        raise InvalidInputError(f"reference position {ref_position} not in the match")


def match_spectra(reference, computed) -> SpectrumMatch:
    """Pair computed eigenvalues to reference ones, nearest first.

    Cardinalities must agree; ties are broken by the lower reference
    index, then the lower computed index.
    """
    ref = np.asarray(reference, dtype=complex)
    com = np.asarray(computed, dtype=complex)
    if ref.ndim != 1 or com.ndim != 1 or ref.size != com.size:
        raise InvalidInputError(
            f"cardinality mismatch: {ref.size} reference vs {com.size} computed"
        )
    n = ref.size
    dist = np.abs(ref[:, None] - com[None, :])
    order = np.argsort(dist, axis=None, kind="stable")
    used_ref = np.zeros(n, dtype=bool)
    used_com = np.zeros(n, dtype=bool)
    pairs = []
    for flat in order:
        i, j = divmod(int(flat), n)
        if used_ref[i] or used_com[j]:
            continue
        used_ref[i] = True
        used_com[j] = True
        pairs.append((i, j))
        if len(pairs) == n:
            break
    pairs.sort()
    dev = np.array([dist[i, j] for i, j in pairs])
    return SpectrumMatch(
        pairs=pairs,
        deviations=dev,
        max_abs_deviation=float(dev.max()) if n else 0.0,
        rms_deviation=float(np.sqrt((dev**2).mean())) if n else 0.0,
    )


def tail_weight_check(b, w):
    """(sum |b_n|^2 w_n, sum |b_n|^2) over aligned sequences."""
    b = np.asarray(b, dtype=complex)
    w = np.asarray(w, dtype=float)
    if b.shape != w.shape:
        raise InvalidInputError("sequence and weight map must align")
    sq = np.abs(b) ** 2
    return float((sq * w).sum()), float(sq.sum())


# -- projection bounds ---------------------------------------------------------


def _group_projection_diag(spectrum: Spectrum, sigma_group) -> np.ndarray:
    members = {int(n) for n in sigma_group}
    for n in members:
        spectrum.ordinal(n)  # validates membership
    lev = spectrum.indices[spectrum.position_entry]
    return np.isin(lev, sorted(members)).astype(float)


def projection_compare(
    u: BlockMatrix,
    partition: Partition,
    sigma_group,
    alpha_sigma: float,
    *,
    weighted_norm: float | None = None,
) -> dict:
    """Compare ||P' - P|| with its similarity bound on a spectral group.

    P projects onto the listed spectrum indices; P' is its image under
    I + U, computed exactly as (U P - P U)(I + U)^{-1}.  The bound is
    2 * ||U||_w * alpha_sigma / (1 - ||U||_sigma) with ||U||_w supplied
    by the caller (falls back to the block norm of U).  The direct
    evaluation (I + U) P (I + U)^{-1} - P is carried along as a
    consistency residual.
    """
    spec = partition.spectrum
    p = _group_projection_diag(spec, sigma_group)
    eye_u = np.eye(spec.dim) + u.data
    cond = np.linalg.cond(eye_u)
    if not math.isfinite(cond) or cond > 1e12:
        raise NotInvertibleError("I + U is numerically singular", cond=float(cond))
    inv = np.linalg.inv(eye_u)
    diff = (u.data * p[None, :] - p[:, None] * u.data) @ inv
    direct = eye_u @ (p[:, None] * inv) - np.diag(p)
    consistency = float(np.linalg.norm(diff - direct))
    lhs = BlockMatrix(partition, diff).hs_sigma()
    u_sigma = BlockMatrix(partition, u.data.copy()).hs_sigma()
    u_w = float(weighted_norm) if weighted_norm is not None else u_sigma
    rhs = 2.0 * u_w * alpha_sigma / (1.0 - u_sigma) if u_sigma < 1.0 else math.inf
    return {
        "lhs": float(lhs),
        "rhs": float(rhs),
        "ok": bool(lhs <= rhs + 1e-12),
        "u_sigma_norm": float(u_sigma),
        "u_weighted_norm": float(u_w),
        "alpha_sigma": float(alpha_sigma),
        "identity_consistency": consistency,
    }


def tail_factor_inequality(
    u: BlockMatrix,
    partition: Partition,
    sigma_group,
    alpha_sigma: float,
    weighted_norm: float,
) -> dict:
    """max(||U P||, ||P U||) <= alpha_sigma * ||U||_w in the block norm."""
    spec = partition.spectrum
    p = _group_projection_diag(spec, sigma_group)
    up = BlockMatrix(partition, u.data * p[None, :]).hs_sigma()
    pu = BlockMatrix(partition, p[:, None] * u.data).hs_sigma()
    lhs = max(up, pu)
    rhs = alpha_sigma * weighted_norm
    return {"lhs": float(lhs), "rhs": float(rhs), "ok": bool(lhs <= rhs + 1e-12)}


# -- spectrum report -----------------------------------------------------------


@dataclass
class SpectrumReport:
    """Per interior index comparison of method output against the oracle."""

    rows: list
    tail_stats: dict
    matching_quality: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "tail_stats": self.tail_stats,
            "matching_quality": self.matching_quality,
            **self.extra,
        }

    def to_csv(self, path):
        cols = [
            "index",
            "lambda_re",
            "lambda_im",
            "estimate_re",
            "estimate_im",
            "first_order_re",
            "first_order_im",
            "second_order_re",
            "second_order_im",
            "oracle_re",
            "oracle_im",
            "b_re",
            "b_im",
            "residual",
            "flagged",
        ]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for row in self.rows:
                writer.writerow(
                    [
                        row["index"],
                        repr(row["lambda"][0]),
                        repr(row["lambda"][1]),
                        repr(row["estimate"][0]),
                        repr(row["estimate"][1]),
                        repr(row["first_order"][0]),
                        repr(row["first_order"][1]),
                        repr(row["second_order"][0]),
                        repr(row["second_order"][1]),
                        repr(row["oracle"][0]),
                        repr(row["oracle"][1]),
                        repr(row["b"][0]),
                        repr(row["b"][1]),
                        repr(row["residual"]),
                        int(row["flagged"]),
                    ]
                )


def _pair_values_to_positions(spectrum: Spectrum, values) -> np.ndarray:
    """Arrange a value multiset along the dense spectrum positions."""
    m = match_spectra(spectrum.position_values, values)
    vals = np.asarray(values, dtype=complex)
    out = np.empty(spectrum.dim, dtype=complex)
    for i, j in m.pairs:
        out[i] = vals[j]
    return out


def build_spectrum_report(
    spectrum: Spectrum,
    estimates,
    oracle_values,
    *,
    first_order=None,
    second_order=None,
    weights=None,
    gap: float | None = None,
) -> SpectrumReport:
    """Assemble the per-index comparison table on the interior window.

    ``estimates`` is the (label, value) list from a pipeline;
    ``oracle_values`` the full eigenvalue multiset of the truncated
    A - B.  Rows whose oracle pairing strays beyond 0.4 of the least
    eigenvalue gap are flagged as ambiguous rather than dropped.
    """
    est_vals = [z for _, z in estimates]
    if len(est_vals) != spectrum.dim:
        raise InvalidInputError(
            f"expected {spectrum.dim} estimates, got {len(est_vals)}"
        )
    om = match_spectra(spectrum.position_values, oracle_values)
    oracle_by_pos = _pair_values_to_positions(spectrum, oracle_values)
    est_by_pos = _pair_values_to_positions(spectrum, est_vals)
    if gap is None:
        v = spectrum.values
        d = np.abs(v[:, None] - v[None, :])
        np.fill_diagonal(d, np.inf)
        gap = float(d.min()) if v.size > 1 else math.inf
    flag_dist = 0.4 * gap

    interior = set(int(n) for n in spectrum.interior_indices())
    rows = []
    b_seq = []
    w_seq = []
    dev_by_pos = np.empty(spectrum.dim)
    for (i, _), d in zip(om.pairs, om.deviations):
        dev_by_pos[i] = d

    for pos in range(spectrum.dim):
        n = int(spectrum.indices[spectrum.position_entry[pos]])
        if n not in interior:
            continue
        lam = spectrum.position_values[pos]
        oz = oracle_by_pos[pos]
        ez = est_by_pos[pos]
        b = lam - oz
        p = complex(first_order[spectrum.ordinal(n)]) if first_order is not None else 0.0j
        qv = complex(second_order[spectrum.ordinal(n)]) if second_order is not None else 0.0j
        rows.append(
            {
                "index": n,
                "lambda": (float(lam.real), float(lam.imag)),
                "estimate": (float(ez.real), float(ez.imag)),
                "first_order": (float(p.real), float(p.imag)),
                "second_order": (float(qv.real), float(qv.imag)),
                "oracle": (float(oz.real), float(oz.imag)),
                "b": (float(b.real), float(b.imag)),
                "residual": float(abs(ez - oz)),
                "flagged": bool(dev_by_pos[pos] > flag_dist),
            }
        )
        b_seq.append(b)
        if weights is not None:
            a = weights.alpha_of(n)
            w_seq.append(1.0 / a**2 if a > 0.0 else math.inf)
        else:
            w_seq.append(1.0)
    weighted, plain = tail_weight_check(np.array(b_seq), np.array(w_seq))
    return SpectrumReport(
        rows=rows,
        tail_stats={"weighted_sum": weighted, "plain_sum": plain},
        matching_quality=om.max_abs_deviation,
    )
