import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simspec.errors import InvalidInputError
from simspec.opmatrix import BlockMatrix, Partition, Spectrum, TruncationWindow
from simspec.transforms import (
    TransformContext,
    block_diagonal,
    commutator_inverse,
    commutator_residual,
    group_coupling,
    off_diagonal_part,
    smoothing_norm_bounds,
)


def spectrum(n=4):
    idx = np.arange(-n, n + 1)
    return Spectrum(idx, 2j * np.pi * idx, window=TruncationWindow(n))


def rand(rng, part):
    d = part.spectrum.dim
    return BlockMatrix(part, rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))


def test_projection_splits_matrix():
    rng = np.random.default_rng(0)
    part = Partition.coarse(spectrum(3), 1)
    ctx = TransformContext(part)
    x = rand(rng, part)
    j = block_diagonal(ctx, x)
    off = off_diagonal_part(ctx, x)
    assert np.allclose(j.dense() + off.dense(), x.dense())
    # the block diagonal lives on the same-group mask only
    assert np.all(j.dense()[~part.same_group_mask()] == 0.0)


def test_projection_is_idempotent():
    rng = np.random.default_rng(1)
    part = Partition.coarse(spectrum(3), 1)
    ctx = TransformContext(part)
    x = rand(rng, part)
    j = block_diagonal(ctx, x)
    assert np.array_equal(block_diagonal(ctx, j).dense(), j.dense())


@settings(deadline=None, max_examples=25)
@given(seed=st.integers(0, 10_000), m=st.integers(0, 3))
def test_commutator_identity_property(seed, m):
    # A (Gamma X) - (Gamma X) A = X - JX for every X
    rng = np.random.default_rng(seed)
    part = Partition.coarse(spectrum(4), m)
    ctx = TransformContext(part)
    x = rand(rng, part)
    assert commutator_residual(ctx, x) <= 1e-12 * max(1.0, x.hs())


def test_commutator_inverse_is_off_diagonal():
    rng = np.random.default_rng(2)
    part = Partition.coarse(spectrum(4), 2)
    ctx = TransformContext(part)
    gx = commutator_inverse(ctx, rand(rng, part))
    assert np.all(gx.dense()[part.same_group_mask()] == 0.0)
    assert block_diagonal(ctx, gx).hs() == 0.0


def test_smoothing_bounds_tight_on_diagonal_partition():
    part = Partition.trivial(spectrum(4))
    ctx = TransformContext(part)
    bounds = smoothing_norm_bounds(ctx)
    assert bounds.inv_delta == pytest.approx(1.0 / (2 * np.pi), rel=1e-12)
    assert bounds.sqrt_eta == pytest.approx(np.sqrt(ctx.eta), rel=1e-12)
    # eta is the inverse square gap sum maximized over columns
    assert ctx.eta < 2.0 / (2 * np.pi) ** 2 * (np.pi**2 / 3)


def test_transform_norm_bounds_hold():
    rng = np.random.default_rng(3)
    part = Partition.trivial(spectrum(5))
    ctx = TransformContext(part)
    bounds = smoothing_norm_bounds(ctx)
    for _ in range(5):
        x = rand(rng, part)
        gx = commutator_inverse(ctx, x)
        assert gx.hs() <= bounds.inv_delta * x.hs() * (1 + 1e-12)
        assert gx.hs_sigma() <= bounds.sqrt_eta * x.hs_sigma() * (1 + 1e-12)
        assert gx.op() <= bounds.sqrt_eta * x.op() * (1 + 1e-9)


def test_group_coupling_matches_brute_force():
    spec = spectrum(4)
    part = Partition.coarse(spec, 1)
    ctx = TransformContext(part)
    d = group_coupling(ctx, 3, 0)
    vals = {n: spec.value_of(n) for n in range(-4, 5)}
    brute = max(
        np.sqrt(sum(1.0 / abs(vals[i] - vals[j]) ** 2 for i in [3]))
        for j in [-1, 0, 1]
    )
    assert d == pytest.approx(brute, rel=1e-12)


def test_group_coupling_rejects_same_group():
    ctx = TransformContext(Partition.coarse(spectrum(3), 1))
    with pytest.raises(InvalidInputError):
        group_coupling(ctx, 2, 2)


def test_multiplicity_blocks_share_divisor():
    # two positions with one label never produce a cross divisor
    idx = np.arange(-1, 2)
    spec = Spectrum(idx, 2j * np.pi * idx, mults=[1, 2, 1], window=TruncationWindow(1))
    part = Partition.trivial(spec)
    ctx = TransformContext(part)
    rng = np.random.default_rng(4)
    x = rand(rng, part)
    gx = commutator_inverse(ctx, x)
    pos = spec.positions_of(0)
    sub = gx.dense()[np.ix_(pos, pos)]
    assert np.all(sub == 0.0)
