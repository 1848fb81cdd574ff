import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simspec.errors import InvalidInputError, OracleFailureError
from simspec.models import kernel_model
from simspec.opmatrix import BlockMatrix, Partition, Spectrum, TruncationWindow
from simspec.similarity import pipeline_contraction
from simspec.verify import (
    SpectrumReport,
    build_spectrum_report,
    charpoly_eigenvalues,
    eigen_projection,
    match_spectra,
    oracle_eigenpairs,
    oracle_eigenvalues,
    projection_compare,
    tail_factor_inequality,
    tail_weight_check,
)
from simspec.weighted import decay_weights, factorize


class TestOracle:
    def test_diagonal_matrix(self):
        d = np.diag([1.0, -2.0, 3.5]).astype(complex)
        vals = oracle_eigenvalues(d)
        assert np.allclose(np.sort(vals.real), [-2.0, 1.0, 3.5])

    def test_known_rotation_eigenvalues(self):
        # 2x2 rotation has conjugate unit eigenvalues
        t = 0.7
        a = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]], dtype=complex)
        vals = oracle_eigenvalues(a)
        expect = np.array([np.exp(-1j * t), np.exp(1j * t)])
        assert match_spectra(expect, vals).max_abs_deviation < 1e-12

    def test_similarity_invariance(self):
        rng = np.random.default_rng(0)
        d = np.diag(rng.normal(size=12) + 1j * rng.normal(size=12))
        s = np.eye(12) + 0.2 * rng.normal(size=(12, 12))
        a = s @ d @ np.linalg.inv(s)
        m = match_spectra(np.diag(d), oracle_eigenvalues(a))
        assert m.max_abs_deviation < 1e-10

    def test_defective_block(self):
        # a Jordan block perturbs hard; eigenvalues still come out in a
        # cluster around the true value
        n = 4
        a = np.eye(n, k=1).astype(complex) + 0.5 * np.eye(n)
        vals = oracle_eigenvalues(a, cross_check=False)
        assert np.abs(vals - 0.5).max() < 1e-3

    @settings(deadline=None, max_examples=30)
    @given(seed=st.integers(0, 10_000), dim=st.integers(2, 6))
    def test_dual_oracles_agree(self, seed, dim):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        v1 = oracle_eigenvalues(a, cross_check=False)
        v2 = charpoly_eigenvalues(a)
        scale = max(1.0, np.abs(v1).max())
        assert match_spectra(v1, v2).max_abs_deviation <= 1e-10 * scale

    def test_trace_and_determinant_consistency(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9))
        vals = oracle_eigenvalues(a)
        assert vals.sum() == pytest.approx(np.trace(a), abs=1e-10)

    def test_non_square_rejected(self):
        with pytest.raises(InvalidInputError):
            oracle_eigenvalues(np.zeros((2, 3)))

    def test_eigenpairs_residual(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(15, 15)) + 1j * rng.normal(size=(15, 15))
        vals, vecs = oracle_eigenpairs(a)
        res = np.abs(a @ vecs - vecs * vals[None, :]).max()
        assert res < 1e-8 * np.abs(a).max()

    def test_projection_idempotent(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(10, 10)) + 1j * rng.normal(size=(10, 10))
        vals, vecs = oracle_eigenpairs(a)
        sel = vals.real > np.median(vals.real)
        p = eigen_projection(vals, vecs, sel)
        assert np.abs(p @ p - p).max() < 1e-8
        assert np.trace(p).real == pytest.approx(sel.sum(), abs=1e-8)


class TestMatchSpectra:
    def test_exact_match(self):
        ref = np.array([1.0, 2.0, 3.0], dtype=complex)
        m = match_spectra(ref, ref[::-1])
        assert m.max_abs_deviation == 0.0
        assert m.pairs == [(0, 2), (1, 1), (2, 0)]

    def test_ties_break_to_lower_index(self):
        ref = np.array([0.0, 2.0], dtype=complex)
        com = np.array([1.0, 1.0], dtype=complex)
        m = match_spectra(ref, com)
        # all four distances are 1; reference 0 pairs with computed 0
        assert m.pairs == [(0, 0), (1, 1)]

    def test_cardinality_mismatch(self):
        with pytest.raises(InvalidInputError):
            match_spectra(np.array([1.0]), np.array([1.0, 2.0]))

    @settings(deadline=None, max_examples=30)
    @given(seed=st.integers(0, 10_000))
    def test_permutation_recovers_zero_deviation(self, seed):
        rng = np.random.default_rng(seed)
        vals = rng.normal(size=7) + 1j * rng.normal(size=7)
        perm = rng.permutation(7)
        m = match_spectra(vals, vals[perm])
        assert m.max_abs_deviation == 0.0

    def test_deviation_of(self):
        ref = np.array([0.0, 1.0], dtype=complex)
        com = np.array([0.1, 1.0], dtype=complex)
        m = match_spectra(ref, com)
        assert m.deviation_of(0) == pytest.approx(0.1)


class TestTailChecks:
    def test_tail_weight_check(self):
        b = np.array([1.0, 2.0j, 0.5])
        w = np.array([1.0, 0.25, 4.0])
        weighted, plain = tail_weight_check(b, w)
        assert plain == pytest.approx(1.0 + 4.0 + 0.25)
        assert weighted == pytest.approx(1.0 + 1.0 + 1.0)

    def test_misaligned_rejected(self):
        with pytest.raises(InvalidInputError):
            tail_weight_check(np.ones(3), np.ones(4))


@pytest.fixture(scope="module")
def kernel_run():
    mdl = kernel_model(24)
    result = pipeline_contraction(mdl.spectrum, mdl.perturbation)
    w = decay_weights(mdl.perturbation)
    return mdl, result, w


class TestProjectionCompare:
    def test_bound_holds_on_tail_groups(self, kernel_run):
        mdl, result, w = kernel_run
        u = result.u
        part = u.partition
        uw = factorize(u, w).norm
        for level in (4, 8, 16):
            sigma = [n for n in mdl.spectrum.indices if abs(int(n)) >= level]
            out = projection_compare(u, part, sigma, w.alpha_of(level),
                                     weighted_norm=uw)
            assert out["ok"], out
            assert out["identity_consistency"] <= 1e-10

    def test_tail_factor_inequality(self, kernel_run):
        mdl, result, w = kernel_run
        u = result.u
        uw = factorize(u, w).norm
        for level in (4, 12):
            sigma = [n for n in mdl.spectrum.indices if abs(int(n)) >= level]
            out = tail_factor_inequality(u, u.partition, sigma,
                                         w.alpha_of(level), uw)
            assert out["ok"], out

    def test_unknown_index_rejected(self, kernel_run):
        mdl, result, w = kernel_run
        with pytest.raises(InvalidInputError):
            projection_compare(result.u, result.u.partition, [999], 1.0)


class TestSpectrumReport:
    def test_report_rows_and_csv(self, tmp_path):
        mdl = kernel_model(12)
        result = pipeline_contraction(mdl.spectrum, mdl.perturbation)
        dense = np.diag(mdl.spectrum.position_values) - mdl.perturbation.dense()
        vals = oracle_eigenvalues(dense)
        w = decay_weights(mdl.perturbation)
        rep = build_spectrum_report(
            mdl.spectrum, result.eigenvalue_estimates, vals,
            first_order=mdl.first_order, second_order=mdl.second_order,
            weights=w,
        )
        interior = list(mdl.spectrum.interior_indices())
        assert len(rep.rows) == len(interior)
        for row in rep.rows:
            assert row["residual"] <= 1e-9
        assert rep.tail_stats["plain_sum"] > 0.0
        assert rep.tail_stats["weighted_sum"] >= rep.tail_stats["plain_sum"]
        out = tmp_path / "rep.csv"
        rep.to_csv(out)
        lines = out.read_text().strip().splitlines()
        assert len(lines) == len(interior) + 1
        assert lines[0].startswith("index,lambda_re")

    def test_wrong_cardinality_rejected(self):
        mdl = kernel_model(4)
        with pytest.raises(InvalidInputError):
            build_spectrum_report(mdl.spectrum, [(0, 0.0 + 0j)], np.zeros(9))
