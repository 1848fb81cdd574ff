"""Model problem families: concrete free operators and perturbations.

Four families, each reduced to a truncated block matrix on the window
-N..N against a diagonal free operator:

* ``kernel``: differentiation on the circle perturbed by a rank-two
  integral kernel; eigenvalues 2 pi i k, a cross-shaped perturbation
  supported on row and column zero.
* ``involution``: first order differential operator whose perturbation
  couples t with 1 - t; eigenvalues pi i (2k - theta), the perturbation
  matrix is a Hankel form of the twisted potential coefficients.
* ``dirac``: one-dimensional Dirac system on 2x2 blocks; eigenvalues
  2 pi n with multiplicity two.  An optional gauge transform trades the
  oscillating diagonal potentials for their means, at the price of
  recomputed off-diagonal potentials (done on a doubling FFT grid).
* ``hill``: second order operator with quasi-momentum theta;
  eigenvalues (pi (2n - theta))^2, Toeplitz perturbation.

Builders return a :class:`ModelProblem`; closed-form first and second
order eigenvalue corrections are included where the family admits them,
as an independent route against the matrix computations.
"""

from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, ParseError, ResolutionError
from .opmatrix import BlockMatrix, Partition, Spectrum, TruncationWindow

__all__ = [
    "ModelProblem",
    "kernel_model",
    "kernel_split_constants",
    "involution_model",
    "involution_offdiag_energy",
    "dirac_model",
    "hill_model",
    "random_trig_coeffs",
    "coeffs_to_csv",
    "coeffs_from_csv",
    "MODELS",
]


@dataclass
class ModelProblem:
    """A built model: spectrum, perturbation and closed-form references."""

    name: str
    spectrum: Spectrum
    perturbation: BlockMatrix
    meta: dict = field(default_factory=dict)
    first_order: np.ndarray | None = None
    second_order: np.ndarray | None = None
    diag_part: BlockMatrix | None = None

    @property
    def partition(self) -> Partition:
        return self.perturbation.partition


def _clean_coeffs(coeffs, what: str) -> dict:
    out = {}
    for k, z in dict(coeffs).items():
        kk = int(k)
        zz = complex(z)
        if kk in out:
            raise InvalidInputError(f"duplicate coefficient {kk} in {what}")
        if zz != 0.0:
            out[kk] = zz
    return out


def random_trig_coeffs(rng, degree: int, scale: float = 1.0, real: bool = True) -> dict:
    """Random trigonometric polynomial coefficients up to `degree`.

    With ``real`` the coefficients are conjugate-symmetric, so the
    function they represent is real valued.
    """
    if degree < 0:
        raise InvalidInputError("degree must be >= 0")
    out = {}
    for k in range(0, degree + 1):
        z = complex(rng.standard_normal(), rng.standard_normal()) * scale
        if k == 0:
            out[0] = complex(z.real, 0.0) if real else z
            continue
        out[k] = z
        w = complex(rng.standard_normal(), rng.standard_normal()) * scale
        out[-k] = z.conjugate() if real else w
    return out


def coeffs_to_csv(coeffs: dict, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "re", "im"])
        for k in sorted(coeffs):
            z = complex(coeffs[k])
            writer.writerow([k, repr(z.real), repr(z.imag)])


def coeffs_from_csv(path) -> dict:
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for ln, row in enumerate(reader, start=1):
            if ln == 1 and row and row[0].strip() == "k":
                continue
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", path=path, line=ln)
            try:
                k = int(row[0])
                z = complex(float(row[1]), float(row[2]))
            except ValueError as exc:
                raise ParseError(f"bad field: {exc}", path=path, line=ln) from None
            if k in out:
                raise ParseError(f"duplicate coefficient {k}", path=path, line=ln)
            out[k] = z
    return out


def _fourier_eval(coeffs: dict, grid: np.ndarray) -> np.ndarray:
    """sum_k c_k exp(2 pi i k t) on the grid."""
    out = np.zeros(grid.size, dtype=complex)
    for k, z in coeffs.items():
        out += z * np.exp(2j * np.pi * k * grid)
    return out


# -- kernel family --------------------------------------------------------


def kernel_model(half_width: int, interior_fraction: float = 0.5) -> ModelProblem:
    """Differentiation plus the rank-two kernel charge on the circle.

    The perturbation matrix is the cross B[m, 0] = 1/(2 pi i m),
    B[0, n] = -1/(2 pi i n), B[0, 0] = 1, all other entries zero.
    """
    window = TruncationWindow(half_width, interior_fraction)
    idx = window.indices()
    spec = Spectrum(idx, 2j * np.pi * idx, window=window)
    base = Partition.trivial(spec)
    n = half_width
    d = spec.dim
    data = np.zeros((d, d), dtype=complex)
    z = n  # position of index 0
    data[z, z] = 1.0
    for m in idx:
        if m == 0:
            continue
        data[m + n, z] = 1.0 / (2j * np.pi * m)
        data[z, m + n] = -1.0 / (2j * np.pi * m)
    b = BlockMatrix.from_dense(base, data)

    first = np.zeros(d, dtype=complex)
    first[z] = 1.0
    second = np.zeros(d, dtype=complex)
    for m in idx:
        if m != 0:
            # only the detour through index 0 contributes
            second[m + n] = 1j / (8.0 * np.pi**3 * m**3)
    return ModelProblem(
        name="kernel",
        spectrum=spec,
        perturbation=b,
        meta={"hs_limit_sq": 7.0 / 6.0},
        first_order=first,
        second_order=second,
    )


def kernel_split_constants(k: int) -> dict:
    """Published split-certificate constants of the kernel family.

    These are the analytic values quoted for the splitting around index
    k; the splitting itself also reports the honest norms of the
    truncated matrix, which can differ (the tail of the column series is
    not negligible at k = 0).
    """
    s = 1.0 / (2.0 * np.pi)
    if k == 0:
        return {
            "s": s,
            "b1": 1.0 + 0.0j,
            "b21_norm": 1.0 / (2.0 * np.pi),
            "b12s_norm": 1.0 / (12.0 * math.sqrt(5.0)),
            "m": 1.0 / (2.0 * np.pi),
        }
    ak = abs(int(k))
    return {
        "s": s,
        "b1": 0.0 + 0.0j,
        "b21_norm": 1.0 / (2.0 * np.pi * ak),
        "b12s_norm": 1.0 / (4.0 * np.pi**2 * ak**2),
        "m": 1.0 / (2.0 * np.pi * ak),
    }


# -- involution family -----------------------------------------------------


def _twist_coefficients(coeffs: dict, theta: float, kmax: int) -> dict:
    """Coefficients of v(t) e^{2 pi i theta t} for |k| <= kmax.

    Integer theta is an exact index shift; otherwise the factor has the
    full series (e^{2 pi i theta} - 1) / (2 pi i (theta - r)).
    """
    if abs(theta - round(theta)) < 1e-14:
        t = int(round(theta))
        return {k: coeffs[k - t] for k in range(-kmax, kmax + 1) if (k - t) in coeffs}
    phase = cmath.exp(2j * np.pi * theta) - 1.0
    out = {}
    for k in range(-kmax, kmax + 1):
        z = 0.0 + 0.0j
        for j, vj in coeffs.items():
            z += vj * phase / (2j * np.pi * (theta - (k - j)))
        if z != 0.0:
            out[k] = z
    return out


def involution_model(
    half_width: int, theta: float, coeffs, interior_fraction: float = 0.5
) -> ModelProblem:
    """First order operator coupling t with 1 - t through potential v.

    Eigenvalues pi i (2k - theta); the perturbation entry (m, n) is
    e^{-i pi theta} times the twisted coefficient at m + n.
    """
    coeffs = _clean_coeffs(coeffs, "involution potential")
    window = TruncationWindow(half_width, interior_fraction)
    idx = window.indices()
    spec = Spectrum(idx, 1j * np.pi * (2.0 * idx - theta), window=window)
    base = Partition.trivial(spec)

    tw = _twist_coefficients(coeffs, theta, 2 * half_width)
    phase = cmath.exp(-1j * np.pi * theta)
    d = spec.dim
    data = np.zeros((d, d), dtype=complex)
    n0 = half_width
    for m in idx:
        for n in idx:
            c = tw.get(m + n)
            if c is not None:
                data[m + n0, n + n0] = phase * c
    b = BlockMatrix.from_dense(base, data)

    first = np.array([phase * tw.get(2 * n, 0.0) for n in idx], dtype=complex)
    second = np.zeros(d, dtype=complex)
    for i, n in enumerate(idx):
        z = 0.0 + 0.0j
        for ell in idx:
            if ell == n:
                continue
            c = tw.get(ell + n)
            if c is not None:
                z += phase * phase * c * c / (2j * np.pi * (ell - n))
        second[i] = z
    return ModelProblem(
        name="involution",
        spectrum=spec,
        perturbation=b,
        meta={"theta": float(theta), "coeffs": coeffs},
        first_order=first,
        second_order=second,
    )


def involution_offdiag_energy(coeffs, half_width: int):
    """Window evaluation of the quartic coupling bound, theta = 0.

    Returns (lhs, rhs) with

        lhs = (1/4 pi^2) sum_{|m|,|n| <= half_width}
              | sum_{l != n} vhat(l+m) vhat(l+n) / (l - n) |^2,
        rhs = (9/4) (sum |vhat|^2)^2.

    The inner sum runs over the full (finite) coefficient support, so
    enlarging the window only adds nonnegative terms: the lhs increases
    monotonically toward its limit and never overshoots the bound.
    """
    coeffs = _clean_coeffs(coeffs, "coefficients")
    norm_sq = sum(abs(c) ** 2 for c in coeffs.values())
    rhs = 2.25 * norm_sq**2
    support = sorted(coeffs)
    lhs = 0.0
    for m in range(-half_width, half_width + 1):
        for n in range(-half_width, half_width + 1):
            inner = 0.0 + 0.0j
            for km in support:
                ell = km - m
                if ell == n:
                    continue
                cn = coeffs.get(ell + n)
                if cn is None:
                    continue
                inner += coeffs[km] * cn / (ell - n)
            lhs += abs(inner) ** 2
    return lhs / (4.0 * np.pi**2), float(rhs)


# -- dirac family ------------------------------------------------------------

_FFT_START = 512
_FFT_LIMIT = 2**18
_FFT_STABLE = 1e-10


def _fft_coefficients(values_on, kmax: int, grid_size: int) -> np.ndarray:
    """Coefficients c_r, |r| <= kmax, of a 1-periodic callable by FFT."""
    t = np.arange(grid_size) / grid_size
    c = np.fft.fft(values_on(t)) / grid_size
    out = np.empty(2 * kmax + 1, dtype=complex)
    for r in range(-kmax, kmax + 1):
        out[r + kmax] = c[r % grid_size]
    return out


def _stable_fft_coefficients(values_on, kmax: int) -> np.ndarray:
    """FFT coefficients re-run on a doubled grid until they agree.

    Aliasing shows up as disagreement between the two resolutions;
    persistent disagreement raises :class:`ResolutionError`.
    """
    size = _FFT_START
    while size <= 4 * kmax:
        size *= 2
    prev = _fft_coefficients(values_on, kmax, size)
    while size <= _FFT_LIMIT:
        size *= 2
        cur = _fft_coefficients(values_on, kmax, size)
        scale = max(1.0, float(np.abs(cur).max()))
        if float(np.abs(cur - prev).max()) <= _FFT_STABLE * scale:
            return cur
        prev = cur
    raise ResolutionError(
        f"potential coefficients did not stabilize below grid size {_FFT_LIMIT}"
    )


def dirac_model(
    half_width: int,
    v1,
    v2,
    v3,
    v4,
    gauge: bool = True,
    interior_fraction: float = 0.5,
) -> ModelProblem:
    """Dirac system on 2x2 blocks with eigenvalues 2 pi n, multiplicity 2.

    Block (m, n) of the perturbation is

        [[w1(n - m),  w2(-n - m)],
         [w3(n + m),  w4(m - n)]].

    With ``gauge`` the diagonal potentials are replaced by their means
    and the off-diagonal ones by the gauge-transformed versions
    u2 = v2 e^{i g}, u3 = v3 e^{-i g}, where g integrates the
    oscillating part of v1 + v4; this leaves the operator similar to
    the original while making the designated diagonal part constant.
    """
    v1 = _clean_coeffs(v1, "v1")
    v2 = _clean_coeffs(v2, "v2")
    v3 = _clean_coeffs(v3, "v3")
    v4 = _clean_coeffs(v4, "v4")
    window = TruncationWindow(half_width, interior_fraction)
    idx = window.indices()
    spec = Spectrum(idx, 2.0 * np.pi * idx, mults=np.full(idx.size, 2), window=window)
    base = Partition.trivial(spec)

    kmax = 2 * half_width
    c1 = v1.get(0, 0.0 + 0.0j)
    c4 = v4.get(0, 0.0 + 0.0j)
    if gauge:
        osc = {k: v1.get(k, 0.0) + v4.get(k, 0.0) for k in set(v1) | set(v4) if k != 0}

        def gfun(t):
            out = np.zeros(t.size, dtype=complex)
            for k, z in osc.items():
                out += z * (np.exp(2j * np.pi * k * t) - 1.0) / (2j * np.pi * k)
            return out

        u2 = _stable_fft_coefficients(lambda t: _fourier_eval(v2, t) * np.exp(1j * gfun(t)), kmax)
        u3 = _stable_fft_coefficients(lambda t: _fourier_eval(v3, t) * np.exp(-1j * gfun(t)), kmax)

        def w1(k):
            return c1 if k == 0 else 0.0

        def w4(k):
            return c4 if k == 0 else 0.0

        def w2(k):
            return u2[k + kmax] if abs(k) <= kmax else 0.0

        def w3(k):
            return u3[k + kmax] if abs(k) <= kmax else 0.0

    else:

        def w1(k):
            return v1.get(k, 0.0)

        def w4(k):
            return v4.get(k, 0.0)

        def w2(k):
            return v2.get(k, 0.0)

        def w3(k):
            return v3.get(k, 0.0)

    d = spec.dim
    data = np.zeros((d, d), dtype=complex)
    for i, m in enumerate(idx):
        for j, n in enumerate(idx):
            blk = np.array(
                [[w1(n - m), w2(-n - m)], [w3(n + m), w4(m - n)]], dtype=complex
            )
            if blk.any():
                data[2 * i : 2 * i + 2, 2 * j : 2 * j + 2] = blk
    b = BlockMatrix.from_dense(base, data)

    diag = np.zeros(d, dtype=complex)
    diag[0::2] = c1
    diag[1::2] = c4
    diag_part = BlockMatrix.from_dense(base, np.diag(diag))
    return ModelProblem(
        name="dirac",
        spectrum=spec,
        perturbation=b,
        meta={
            "gauge": bool(gauge),
            "mean_potentials": (c1, c4),
            "coeffs": {"v1": v1, "v2": v2, "v3": v3, "v4": v4},
        },
        diag_part=diag_part,
    )


# -- hill family --------------------------------------------------------------


def hill_model(
    half_width: int, theta: float, coeffs, interior_fraction: float = 0.5
) -> ModelProblem:
    """Second order operator with quasi-momentum theta and potential v.

    Eigenvalues (pi (2n - theta))^2; the perturbation is the Toeplitz
    matrix of the potential coefficients.  theta must stay away from
    integers or eigenvalues collide.
    """
    if abs(theta - round(theta)) < 1e-9:
        raise InvalidInputError("hill quasi-momentum must stay away from integers")
    coeffs = _clean_coeffs(coeffs, "hill potential")
    window = TruncationWindow(half_width, interior_fraction)
    idx = window.indices()
    spec = Spectrum(idx, (np.pi * (2.0 * idx - theta)) ** 2 + 0j, window=window)
    base = Partition.trivial(spec)

    d = spec.dim
    data = np.zeros((d, d), dtype=complex)
    n0 = half_width
    for m in idx:
        for n in idx:
            c = coeffs.get(m - n)
            if c is not None:
                data[m + n0, n + n0] = c
    b = BlockMatrix.from_dense(base, data)

    first = np.full(d, coeffs.get(0, 0.0 + 0.0j), dtype=complex)
    second = np.zeros(d, dtype=complex)
    support = sorted(k for k in coeffs if k != 0)
    for i, n in enumerate(idx):
        z = 0.0 + 0.0j
        for k in support:
            ell = n - k  # then n - ell = k runs over the support
            if ell == n:
                continue
            z += (
                coeffs.get(n - ell, 0.0)
                * coeffs.get(ell - n, 0.0)
                / (4.0 * np.pi**2 * (ell - n) * (ell + n - theta))
            )
        second[i] = z
    return ModelProblem(
        name="hill",
        spectrum=spec,
        perturbation=b,
        meta={"theta": float(theta), "coeffs": coeffs},
        first_order=first,
        second_order=second,
    )


MODELS = {
    "kernel": kernel_model,
    "involution": involution_model,
    "dirac": dirac_model,
    "hill": hill_model,
}
