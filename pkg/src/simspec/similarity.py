"""Similarity transforms that block-diagonalize a perturbed operator.

Given A - B with A diagonal and B a block perturbation, the goal is an
invertible I + U with

    (A - B)(I + U) = (I + U)(A - V),

V block diagonal, so that A - B and A - V share their spectrum and the
eigenvalue problem collapses to the diagonal blocks of A - V.

U and V come out of a fixed point of the quadratic map

    Phi(X) = B GX - (GX) JB - (GX) J(B GX) + B,

where J keeps diagonal blocks and G is the commutator inverse; the map
contracts on a ball once 4 * gamma * ||B|| < 1 for the norm bound gamma
of G.  When the plain certificate fails, a preliminary transform by
I + GB (valid once ||GB||_op < 1) and a coarsening of the partition
bring the effective perturbation inside the contraction region; the
coarse radius is chosen through the decay weights of the transformed
perturbation.

Pipelines, from cheap to heavy:

* ``pipeline_contraction``: single fixed point in the Frobenius norm.
* ``pipeline_block_norm``: same, in the blockwise spectral norm.
* ``pipeline_coarse``: preliminary transform, decay weights, coarse
  fixed point in the weighted norm.
* ``pipeline_rebase``: like pipeline_coarse, but between the stages the
  free operator absorbs a designated diagonal part and the problem is
  rewritten in its eigenbasis; handles perturbations whose diagonal
  blocks are too large to treat as a perturbation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AssumptionViolationError,
    ConditionViolationError,
    ContractionViolationError,
    DegenerateWeightError,
    InvalidInputError,
    InvariantBreachError,
    NonConvergenceError,
    NotInvertibleError,
    PartitionMismatchError,
)
from .opmatrix import (
    BlockMatrix,
    Partition,
    Spectrum,
    TruncationWindow,
    inv_identity_plus,
    operator_norm_estimate,
)
from .transforms import (
    TransformContext,
    block_diagonal,
    commutator_inverse,
    off_diagonal_part,
)
from .weighted import WeightSequence, decay_weights, factorize, select_coarsening

__all__ = [
    "FixedPointResult",
    "PreliminaryResult",
    "AsymptoticSequences",
    "SimilarityResult",
    "contraction_step",
    "fixed_point",
    "preliminary_transform",
    "similarity_residual",
    "diagonal_asymptotics",
    "block_eigenvalue_estimates",
    "projection_difference",
    "equiconvergence_bound",
    "pipeline_contraction",
    "pipeline_block_norm",
    "pipeline_coarse",
    "pipeline_rebase",
    "PIPELINES",
]

_BALL_SLACK = 1e-9
_IDENTITY_SLACK = 1e-10


def _move(x: BlockMatrix, partition: Partition) -> BlockMatrix:
    """Re-express a block matrix on another partition of the same spectrum."""
    if x.partition.equivalent(partition):
        return x
    if partition.refines(x.partition):
        return x.refine(partition)
    if x.partition.refines(partition):
        return x.coarsen(partition)
    raise PartitionMismatchError("partitions are not nested")


# -- fixed point --------------------------------------------------------


def contraction_step(x: BlockMatrix, b: BlockMatrix, ctx: TransformContext) -> BlockMatrix:
    """One application of Phi(X) = B GX - (GX) JB - (GX) J(B GX) + B."""
    gx = commutator_inverse(ctx, x)
    bgx = b @ gx
    return bgx - gx @ block_diagonal(ctx, b) - gx @ block_diagonal(ctx, bgx) + b


def _contraction_step_offdiag(x: BlockMatrix, b: BlockMatrix, ctx: TransformContext) -> BlockMatrix:
    """Phi for JB = 0, where the map loses its (GX) JB term."""
    gx = commutator_inverse(ctx, x)
    bgx = b @ gx
    return bgx - gx @ block_diagonal(ctx, bgx) + b


@dataclass
class FixedPointResult:
    x_star: BlockMatrix
    iterations: int
    step_norms: list
    observed_ratio: float
    certificate: dict
    identity_residual: float


def fixed_point(
    b: BlockMatrix,
    ctx: TransformContext,
    *,
    gamma: float,
    norm_fn,
    norm_name: str,
    tol: float = 1e-12,
    max_iter: int = 200,
    enforce: bool = True,
    offdiag: bool = False,
) -> FixedPointResult:
    """Iterate Phi from X0 = 0 until the step norm stalls below `tol`.

    The a priori certificate is q = 4 * gamma * ||B|| < 1 (3 * gamma *
    ||B|| when the diagonal blocks of B vanish); with ``enforce`` the
    iteration refuses to start without it.  Convergence lands X* in the
    ball ||X* - B|| <= 3 ||B||, and the diagonal identity
    J X* = J(B G X*) + J B holds exactly; both are re-checked.
    """
    norm_b = norm_fn(b)
    factor = 3.0 if offdiag else 4.0
    q_bound = factor * gamma * norm_b
    certificate = {
        "norm": norm_name,
        "gamma": float(gamma),
        "perturbation_norm": float(norm_b),
        "contraction_q": float(q_bound),
        "satisfied": bool(q_bound < 1.0),
    }
    if offdiag:
        jb_mass = block_diagonal(ctx, b).hs()
        if jb_mass > 1e-12 * max(1.0, b.hs()):
            raise InvalidInputError("offdiag iteration requires vanishing diagonal blocks")
    if enforce and not q_bound < 1.0:
        raise ContractionViolationError(
            f"contraction certificate fails: {factor:g} * gamma * norm = {q_bound!r} >= 1"
        )
    step = _contraction_step_offdiag if offdiag else contraction_step

    x = BlockMatrix.zeros(ctx.partition)
    steps = []
    ratio = 0.0
    converged = False
    iterations = 0
    for it in range(1, max_iter + 1):
        x_next = step(x, b, ctx)
        s = norm_fn(x_next - x)
        if steps and steps[-1] > 1e-300:
            ratio = max(ratio, s / steps[-1])
        steps.append(s)
        x = x_next
        iterations = it
        if s <= tol * max(norm_b, 1e-300):
            converged = True
            break
    if not converged:
        raise NonConvergenceError(
            f"fixed point not reached in {max_iter} iterations", last_ratio=ratio
        )
    certificate["observed_ratio"] = float(ratio)

    if enforce:
        drift = norm_fn(x - b)
        if drift > 3.0 * norm_b * (1.0 + _BALL_SLACK):
            raise InvariantBreachError(
                f"fixed point left the guaranteed ball: {drift!r} > 3 * {norm_b!r}"
            )
    resid = (
        block_diagonal(ctx, x)
        - block_diagonal(ctx, b @ commutator_inverse(ctx, x))
        - block_diagonal(ctx, b)
    ).hs()
    if resid > _IDENTITY_SLACK * max(1.0, b.hs()):
        raise InvariantBreachError(f"diagonal identity residual {resid!r} too large")
    return FixedPointResult(x, iterations, steps, ratio, certificate, float(resid))


# -- preliminary transform ----------------------------------------------


@dataclass
class PreliminaryResult:
    """A - B rewritten as A - JB - B0 through the similarity I + GB."""

    smoother: BlockMatrix
    diagonal: BlockMatrix
    remainder: BlockMatrix
    inverse: BlockMatrix
    smoother_op_norm: float
    residual: float


def preliminary_transform(
    b: BlockMatrix, ctx: TransformContext, smoother: BlockMatrix | None = None
) -> PreliminaryResult:
    """Conjugate A - B by I + GB, splitting off the diagonal blocks of B.

    Valid once ||GB||_op < 1; then A - B is similar to A - JB - B0 with
    B0 = (I + GB)^-1 (B GB - (GB)(JB)).  The exact similarity residual
    of the rewriting is returned for gating.
    """
    g = commutator_inverse(ctx, b) if smoother is None else smoother
    gop = g.op()
    if not gop < 1.0:
        raise ConditionViolationError(
            "preliminary transform needs ||GB||_op < 1", lhs=gop, rhs=1.0
        )
    jb = block_diagonal(ctx, b)
    inv = inv_identity_plus(g)
    b0 = inv @ (b @ g - g @ jb)

    lam = ctx.spectrum.position_values
    eye_g = np.eye(lam.size) + g.data
    lhs = lam[:, None] * eye_g - b.data @ eye_g
    rhs = eye_g * lam[None, :] - eye_g @ (jb.data + b0.data)
    residual = float(np.linalg.norm(lhs - rhs))
    return PreliminaryResult(g, jb, b0, inv, float(gop), residual)


# -- result assembly ------------------------------------------------------


def similarity_residual(spectrum: Spectrum, b: BlockMatrix, u: BlockMatrix, v: BlockMatrix) -> float:
    """Frobenius norm of (A - B)(I + U) - (I + U)(A - V)."""
    lam = spectrum.position_values
    eye_u = np.eye(lam.size) + u.data
    lhs = lam[:, None] * eye_u - b.data @ eye_u
    rhs = eye_u * lam[None, :] - eye_u @ v.data
    return float(np.linalg.norm(lhs - rhs))


@dataclass
class AsymptoticSequences:
    """First and second order diagonal corrections per index."""

    labels: np.ndarray
    first_order: np.ndarray
    second_order: np.ndarray

    def eigenvalue_estimates(self, spectrum: Spectrum) -> np.ndarray:
        lam = np.array([spectrum.value_of(int(n)) for n in self.labels])
        return lam - self.first_order - self.second_order


def diagonal_asymptotics(b: BlockMatrix) -> AsymptoticSequences | None:
    """p_n = B_nn and q_n = (B G B)_nn on a multiplicity-free spectrum."""
    spec = b.partition.spectrum
    if not np.all(spec.mults == 1):
        return None
    base = Partition.trivial(spec)
    bb = _move(b, base)
    ctx = TransformContext(base)
    gb = commutator_inverse(ctx, bb)
    second = np.diag(bb.data @ gb.data).copy()
    first = np.diag(bb.data).copy()
    return AsymptoticSequences(spec.indices.copy(), first, second)


def _pair_block_eigenvalues(members, free_values, computed):
    """Greedily pair computed eigenvalues with member labels by distance."""
    pairs = sorted(
        (abs(computed[i] - free_values[j]), i, j)
        for i in range(len(computed))
        for j in range(len(members))
    )
    used_i, used_j = set(), set()
    out = {}
    for _, i, j in pairs:
        if i in used_i or j in used_j:
            continue
        used_i.add(i)
        used_j.add(j)
        out[j] = computed[i]
    return [(members[j], out[j]) for j in sorted(out)]


def block_eigenvalue_estimates(spectrum: Spectrum, partition: Partition, v: BlockMatrix,
                               labels=None):
    """Eigenvalues of A - V per diagonal block, tagged by spectrum index.

    Singleton positions give lambda_n - V_nn directly; larger blocks are
    diagonalized and their eigenvalues paired to member indices by
    closeness to the free eigenvalues.  ``labels`` overrides the tag per
    position (used when the working spectrum is a relabeling of another).
    """
    lam = spectrum.position_values
    if labels is None:
        labels = [int(spectrum.indices[spectrum.position_entry[p]])
                  for p in range(spectrum.dim)]
    out = []
    for g in range(partition.n_groups):
        pos = partition.positions[g]
        if pos.size == 1:
            p = int(pos[0])
            out.append((labels[p], complex(lam[p] - v.data[p, p])))
            continue
        blk = np.diag(lam[pos]) - v.data[np.ix_(pos, pos)]
        vals = np.linalg.eigvals(blk)
        members = [labels[p] for p in pos]
        free = [lam[p] for p in pos]
        out.extend((n, complex(z)) for n, z in _pair_block_eigenvalues(members, free, list(vals)))
    out.sort(key=lambda t: (t[0], t[1].real, t[1].imag))
    return out


@dataclass
class SimilarityResult:
    pipeline: str
    spectrum: Spectrum
    stage_partition: Partition
    u: BlockMatrix
    v: BlockMatrix
    x_star: BlockMatrix
    certificates: dict
    iterations: dict
    residual: float
    residual_scale: float
    offdiag_residual: float
    eigenvalue_estimates: list
    asymptotics: AsymptoticSequences | None
    stages: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)


def _residual_scale(spectrum: Spectrum, b: BlockMatrix) -> float:
    return float(np.abs(spectrum.position_values).max() + b.hs())


# -- projections and equiconvergence --------------------------------------


def _tail_projection(spectrum: Spectrum, level: int) -> np.ndarray:
    lev = np.abs(spectrum.indices[spectrum.position_entry])
    return (lev >= level).astype(float)


def projection_difference(result: SimilarityResult, level: int) -> BlockMatrix:
    """P' - P for the tail projection onto indices |n| >= level.

    P' is the corresponding spectral projection of A - B, obtained by
    conjugating P with I + U; the identity used is
    P' - P = (U P - P U)(I + U)^-1.
    """
    spec = result.spectrum
    if level < 1:
        raise InvalidInputError("tail level must be >= 1")
    p = _tail_projection(spec, level)
    u = result.u.data
    eye_u = np.eye(spec.dim) + u
    cond = np.linalg.cond(eye_u)
    if not math.isfinite(cond) or cond > 1e12:
        raise NotInvertibleError("I + U is numerically singular", cond=float(cond))
    diff = (u * p[None, :] - p[:, None] * u) @ np.linalg.inv(eye_u)
    return BlockMatrix.from_dense(Partition.trivial(spec), diff)


def equiconvergence_bound(result: SimilarityResult, w: WeightSequence, level: int) -> dict:
    """Tail projection comparison: measured difference against its bound.

    The bound 2 ||U||_w alpha_level / (1 - ||U||_sigma) needs U inside
    the weighted class and ||U||_sigma < 1; otherwise it is reported as
    infinite and only the measured side is meaningful.
    """
    diff = projection_difference(result, level)
    lhs = diff.hs_sigma()
    base = Partition.trivial(result.spectrum)
    u_base = _move(result.u, base)
    u_sigma = u_base.hs_sigma()
    try:
        u_weighted = factorize(u_base, w).norm
    except DegenerateWeightError:
        u_weighted = math.inf
    alpha = w.alpha_of(level)
    if u_sigma < 1.0 and math.isfinite(u_weighted):
        rhs = 2.0 * u_weighted * alpha / (1.0 - u_sigma)
    else:
        rhs = math.inf
    return {
        "level": int(level),
        "measured": float(lhs),
        "bound": float(rhs),
        "u_weighted_norm": float(u_weighted),
        "u_sigma_norm": float(u_sigma),
        "alpha": float(alpha),
    }


# -- pipelines -------------------------------------------------------------


def _single_stage(
    spectrum: Spectrum,
    b: BlockMatrix,
    partition: Partition,
    *,
    pipeline: str,
    gamma: float,
    norm_fn,
    norm_name: str,
    tol: float,
    max_iter: int,
    enforce: bool,
) -> SimilarityResult:
    ctx = TransformContext(partition)
    bb = _move(b, partition)
    fp = fixed_point(
        bb, ctx, gamma=gamma, norm_fn=norm_fn, norm_name=norm_name,
        tol=tol, max_iter=max_iter, enforce=enforce,
    )
    u = commutator_inverse(ctx, fp.x_star)
    v = block_diagonal(ctx, fp.x_star)
    residual = similarity_residual(spectrum, bb, u, v)
    return SimilarityResult(
        pipeline=pipeline,
        spectrum=spectrum,
        stage_partition=partition,
        u=u,
        v=v,
        x_star=fp.x_star,
        certificates={"contraction": fp.certificate},
        iterations={"fixed_point": fp.iterations},
        residual=residual,
        residual_scale=_residual_scale(spectrum, bb),
        offdiag_residual=off_diagonal_part(ctx, v).hs(),
        eigenvalue_estimates=block_eigenvalue_estimates(spectrum, partition, v),
        asymptotics=diagonal_asymptotics(bb),
        stages=[{
            "name": "fixed_point",
            "iterations": fp.iterations,
            "certificate": fp.certificate,
            "identity_residual": fp.identity_residual,
        }],
    )


def pipeline_contraction(
    spectrum: Spectrum,
    b: BlockMatrix,
    *,
    tol: float = 1e-12,
    max_iter: int = 200,
    enforce: bool = True,
) -> SimilarityResult:
    """One fixed point on the index-per-group partition, Frobenius norm.

    Certificate: 4 ||B||_hs / delta < 1 with delta the least eigenvalue
    gap.
    """
    base = Partition.trivial(spectrum)
    ctx = TransformContext(base)
    return _single_stage(
        spectrum, b, base,
        pipeline="mt1",
        gamma=1.0 / ctx.delta,
        norm_fn=lambda z: z.hs(),
        norm_name="hs",
        tol=tol, max_iter=max_iter, enforce=enforce,
    )


def pipeline_block_norm(
    spectrum: Spectrum,
    b: BlockMatrix,
    partition: Partition | None = None,
    *,
    tol: float = 1e-12,
    max_iter: int = 200,
    enforce: bool = True,
) -> SimilarityResult:
    """Fixed point in the blockwise spectral norm; certificate through
    the inverse square gap sum instead of the worst single gap."""
    part = Partition.trivial(spectrum) if partition is None else partition
    ctx = TransformContext(part)
    return _single_stage(
        spectrum, b, part,
        pipeline="mt2",
        gamma=math.sqrt(ctx.eta),
        norm_fn=lambda z: z.hs_sigma(),
        norm_name="hs_sigma",
        tol=tol, max_iter=max_iter, enforce=enforce,
    )


def _scan_smoothing_radius(spectrum: Spectrum, b: BlockMatrix, start: int):
    """Smallest coarse radius with ||GB||_op < 1, plus the scan log."""
    kmax = int(np.abs(spectrum.indices).max())
    scan = []
    for m in range(start, kmax + 1):
        part = Partition.coarse(spectrum, m)
        ctx = TransformContext(part)
        g = commutator_inverse(ctx, _move(b, part))
        gop = g.op()
        scan.append({"radius": m, "smoother_op_norm": float(gop)})
        if gop < 1.0:
            return m, ctx, g, scan
    raise ConditionViolationError(
        "no coarsening radius makes the preliminary transform contractive",
        lhs=scan[-1]["smoother_op_norm"] if scan else math.inf,
        rhs=1.0,
    )


def pipeline_coarse(
    spectrum: Spectrum,
    b: BlockMatrix,
    *,
    margin: float = 0.9,
    tol: float = 1e-12,
    max_iter: int = 200,
    smoothing_start: int = 0,
    coarsening: int | None = None,
) -> SimilarityResult:
    """Two stages: preliminary transform at radius m, then a weighted
    coarse fixed point at radius k >= m.

    Stage one trades B for JB + B0 with small B0; stage two needs its
    own coarsening at least as coarse as stage one so the stage-one
    diagonal survives the stage-two projection.
    """
    base = Partition.trivial(spectrum)
    bb = _move(b, base)
    m, ctx_m, g, scan = _scan_smoothing_radius(spectrum, bb, smoothing_start)
    prelim = preliminary_transform(_move(bb, ctx_m.partition), ctx_m, smoother=g)

    q_mat = _move(prelim.diagonal + prelim.remainder, base)
    w = decay_weights(q_mat)
    if coarsening is None:
        k, selection = select_coarsening(q_mat, w, margin=margin, start=m)
    else:
        if coarsening < m:
            raise InvalidInputError(
                f"stage-two radius {coarsening} must be >= stage-one radius {m}"
            )
        k = coarsening
        selection = {
            "radius": k,
            "gamma": w.gamma(k),
            "weighted_norm": factorize(q_mat, w).norm,
            "contraction_q": 4.0 * w.gamma(k) * factorize(q_mat, w).norm,
            "margin": margin,
            "forced": True,
        }
    ctx_k = TransformContext(Partition.coarse(spectrum, k))
    qk = _move(q_mat, ctx_k.partition)
    fp = fixed_point(
        qk, ctx_k,
        gamma=w.gamma(k),
        norm_fn=lambda z: factorize(z, w).norm,
        norm_name="weighted",
        tol=tol, max_iter=max_iter,
    )

    u2 = commutator_inverse(ctx_k, fp.x_star)
    g_base = _move(g, base)
    u2_base = _move(u2, base)
    u = g_base + u2_base + g_base @ u2_base
    v = block_diagonal(ctx_k, fp.x_star)

    # the stage-one diagonal must survive inside V:
    # V = JB|_m + (B0 (I + G_k X*)) projected onto the coarse blocks
    b0_k = _move(prelim.remainder, base).coarsen(ctx_k.partition)
    jb_k = _move(prelim.diagonal, base).coarsen(ctx_k.partition)
    v_alt = jb_k + block_diagonal(ctx_k, b0_k @ (BlockMatrix.identity(ctx_k.partition) + u2))
    cross = (v - v_alt).hs()
    if cross > 1e-8 * max(1.0, v.hs()):
        raise InvariantBreachError(f"diagonal reconstruction mismatch {cross!r}")

    residual = similarity_residual(spectrum, bb, _move(u, base), _move(v, base))
    return SimilarityResult(
        pipeline="mt3",
        spectrum=spectrum,
        stage_partition=ctx_k.partition,
        u=u,
        v=v,
        x_star=fp.x_star,
        certificates={
            "smoothing": {"radius": m, "smoother_op_norm": prelim.smoother_op_norm},
            "coarsening": selection,
            "contraction": fp.certificate,
        },
        iterations={"fixed_point": fp.iterations},
        residual=residual,
        residual_scale=_residual_scale(spectrum, bb),
        offdiag_residual=off_diagonal_part(ctx_k, v).hs(),
        eigenvalue_estimates=block_eigenvalue_estimates(spectrum, ctx_k.partition, v),
        asymptotics=diagonal_asymptotics(bb),
        stages=[
            {"name": "smoothing_scan", "scan": scan},
            {
                "name": "preliminary",
                "radius": m,
                "smoother_op_norm": prelim.smoother_op_norm,
                "residual": prelim.residual,
            },
            {"name": "coarsening", **selection},
            {
                "name": "fixed_point",
                "iterations": fp.iterations,
                "certificate": fp.certificate,
                "identity_residual": fp.identity_residual,
            },
        ],
        extras={"weights": w, "diagonal_cross_check": float(cross)},
    )


# -- rebase pipeline -------------------------------------------------------

_REBASE_COND_LIMIT = 1e10
_REBASE_RESIDUAL_LIMIT = 1e-8


def _merge_sorted_values(vals: np.ndarray, scale: float):
    """Sort by (re, im), merge near-duplicates, return reps with mults."""
    order = np.lexsort((vals.imag, vals.real))
    tol = 1e-12 * scale
    reps, mults, members = [], [], []
    for p in order:
        z = vals[p]
        if reps and abs(z - reps[-1]) <= tol:
            members[-1].append(int(p))
            mults[-1] += 1
            reps[-1] += (z - reps[-1]) / mults[-1]
        else:
            reps.append(complex(z))
            mults.append(1)
            members.append([int(p)])
    return np.array(reps), np.array(mults), members


def _rebase_frame(spectrum: Spectrum, ctx_m: TransformContext, d: BlockMatrix):
    """Diagonalize A - D and return the sorted eigenbasis.

    D must be block diagonal on the stage-one partition.  A literally
    diagonal D keeps the frame exact (a permutation); otherwise each
    block is diagonalized numerically and gated on conditioning.
    """
    lam = spectrum.position_values
    dim = spectrum.dim
    part = ctx_m.partition
    off = d.data.copy()
    np.fill_diagonal(off, 0.0)
    diagonal_case = not off.any()
    if not diagonal_case:
        allowed = part.same_group_mask()
        if np.any(d.data[~allowed] != 0.0):
            raise InvalidInputError("designated diagonal part must respect the stage-one blocks")

    if diagonal_case:
        new_vals = lam - np.diag(d.data)
        w_dense = None
    else:
        new_vals = np.empty(dim, dtype=complex)
        w_dense = np.zeros((dim, dim), dtype=complex)
        for g in range(part.n_groups):
            pos = part.positions[g]
            blk = np.diag(lam[pos]) - d.data[np.ix_(pos, pos)]
            if pos.size == 1:
                new_vals[pos[0]] = blk[0, 0]
                w_dense[pos[0], pos[0]] = 1.0
                continue
            vals_g, vecs_g = np.linalg.eig(blk)
            new_vals[pos] = vals_g
            w_dense[np.ix_(pos, pos)] = vecs_g

    scale = max(1.0, float(np.abs(new_vals).max()))
    reps, mults, members = _merge_sorted_values(new_vals, scale)
    if reps.size > 1:
        diff = np.abs(reps[:, None] - reps[None, :])
        np.fill_diagonal(diff, np.inf)
        if diff.min() < 1e-9 * scale:
            raise AssumptionViolationError(
                "re-derived eigenvalues too close to separate reliably"
            )
    pos_perm = np.array([p for grp in members for p in grp])

    count = reps.size
    hi = count - 1 - count // 2
    lo = -(count // 2)
    window = TruncationWindow(max(-lo, hi, 1), spectrum.window.interior_fraction)
    tilde = Spectrum(np.arange(lo, lo + count), reps, mults, window)

    if diagonal_case:
        inv_perm = np.argsort(pos_perm)
        push = lambda mat: mat[np.ix_(pos_perm, pos_perm)]
        pull = lambda mat: mat[np.ix_(inv_perm, inv_perm)]
        info = {"kind": "permutation"}
    else:
        w_sorted = w_dense[:, pos_perm]
        cond = float(np.linalg.cond(w_sorted))
        if not math.isfinite(cond) or cond > _REBASE_COND_LIMIT:
            raise AssumptionViolationError(
                f"rebase eigenbasis too ill-conditioned (cond={cond:.3e})"
            )
        w_inv = np.linalg.inv(w_sorted)
        a_prime = np.diag(lam) - d.data
        check = operator_norm_estimate(
            a_prime @ w_sorted - w_sorted @ np.diag(tilde.position_values)
        )
        if check > _REBASE_RESIDUAL_LIMIT * scale:
            raise AssumptionViolationError(f"rebase diagonalization residual {check:.3e}")
        push = lambda mat: w_inv @ mat @ w_sorted
        pull = lambda mat: w_sorted @ mat @ w_inv
        info = {"kind": "eigenbasis", "condition": cond, "residual": float(check)}
    return tilde, push, pull, info, pos_perm


def pipeline_rebase(
    spectrum: Spectrum,
    b: BlockMatrix,
    *,
    diag_part: BlockMatrix | None = None,
    margin: float = 0.9,
    tol: float = 1e-12,
    max_iter: int = 200,
    smoothing_start: int = 0,
    coarsening: int | None = None,
) -> SimilarityResult:
    """Two-stage pipeline with an eigenbasis change between the stages.

    After the preliminary transform the designated diagonal part D
    (default: all the stage-one diagonal blocks) moves into the free
    operator; the remaining perturbation (JB - D) + B0 is rewritten in
    the eigenbasis of A - D, whose simple sorted spectrum gets fresh
    contiguous indices, and the coarse weighted fixed point runs there.
    Results are pulled back to the original frame.
    """
    base = Partition.trivial(spectrum)
    bb = _move(b, base)
    m, ctx_m, g, scan = _scan_smoothing_radius(spectrum, bb, smoothing_start)
    prelim = preliminary_transform(_move(bb, ctx_m.partition), ctx_m, smoother=g)

    if diag_part is None:
        d = prelim.diagonal
    else:
        d = _move(diag_part, ctx_m.partition)
    tilde, push, pull, frame_info, pos_perm = _rebase_frame(spectrum, ctx_m, d)

    hat_dense = push((prelim.diagonal - d + prelim.remainder).data)
    tilde_base = Partition.trivial(tilde)
    b_hat = BlockMatrix.from_dense(tilde_base, hat_dense)

    w = decay_weights(b_hat)
    if coarsening is None:
        k, selection = select_coarsening(b_hat, w, margin=margin)
    else:
        k = coarsening
        selection = {
            "radius": k,
            "gamma": w.gamma(k),
            "weighted_norm": factorize(b_hat, w).norm,
            "contraction_q": 4.0 * w.gamma(k) * factorize(b_hat, w).norm,
            "margin": margin,
            "forced": True,
        }
    ctx_k = TransformContext(Partition.coarse(tilde, k))
    fp = fixed_point(
        _move(b_hat, ctx_k.partition), ctx_k,
        gamma=w.gamma(k),
        norm_fn=lambda z: factorize(z, w).norm,
        norm_name="weighted",
        tol=tol, max_iter=max_iter,
    )
    u2_hat = commutator_inverse(ctx_k, fp.x_star)
    v_hat = block_diagonal(ctx_k, fp.x_star)

    u2 = BlockMatrix.from_dense(base, pull(u2_hat.data))
    g_base = _move(g, base)
    u = g_base + u2 + g_base @ u2

    lam_tilde = tilde.position_values
    a_minus_v_hat = np.diag(lam_tilde) - v_hat.data
    v = BlockMatrix.from_dense(base, np.diag(spectrum.position_values) - pull(a_minus_v_hat))

    residual = similarity_residual(spectrum, bb, u, v)
    # tag estimates with the index each tilde slot descended from, so the
    # labels mean the same thing they do in the single-frame pipelines
    source = [int(spectrum.indices[spectrum.position_entry[int(p)]]) for p in pos_perm]
    estimates = block_eigenvalue_estimates(tilde, ctx_k.partition, v_hat, labels=source)
    return SimilarityResult(
        pipeline="mt4",
        spectrum=spectrum,
        stage_partition=ctx_k.partition,
        u=u,
        v=v,
        x_star=fp.x_star,
        certificates={
            "smoothing": {"radius": m, "smoother_op_norm": prelim.smoother_op_norm},
            "rebase": frame_info,
            "coarsening": selection,
            "contraction": fp.certificate,
        },
        iterations={"fixed_point": fp.iterations},
        residual=residual,
        residual_scale=_residual_scale(spectrum, bb),
        offdiag_residual=off_diagonal_part(ctx_k, v_hat).hs(),
        eigenvalue_estimates=estimates,
        asymptotics=diagonal_asymptotics(bb),
        stages=[
            {"name": "smoothing_scan", "scan": scan},
            {
                "name": "preliminary",
                "radius": m,
                "smoother_op_norm": prelim.smoother_op_norm,
                "residual": prelim.residual,
            },
            {"name": "rebase", **frame_info, "new_dim": int(tilde.dim)},
            {"name": "coarsening", **selection},
            {
                "name": "fixed_point",
                "iterations": fp.iterations,
                "certificate": fp.certificate,
                "identity_residual": fp.identity_residual,
            },
        ],
        extras={
            "weights": w,
            "tilde_spectrum": tilde,
            "v_hat": v_hat,
            "frame": frame_info,
        },
    )


PIPELINES = {
    "mt1": pipeline_contraction,
    "mt2": pipeline_block_norm,
    "mt3": pipeline_coarse,
    "mt4": pipeline_rebase,
}
