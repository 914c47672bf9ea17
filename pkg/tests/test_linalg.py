"""Cholesky factorizations and moment permutations."""
import numpy as np
import pytest

from plfilt import (
    NotPositiveDefiniteError,
    Permutation,
    cholesky_full,
    cholesky_partial,
    permute_moments,
)
from conftest import random_spd


class TestCholeskyFull:
    def test_identity(self):
        assert np.array_equal(cholesky_full(np.eye(4)), np.eye(4))

    def test_hand_2x2(self):
        l = cholesky_full(np.array([[4.0, 2.0], [2.0, 5.0]]))
        assert np.array_equal(l, np.array([[2.0, 0.0], [1.0, 2.0]]))

    def test_reconstruction(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 30))
            p = random_spd(rng, n)
            l = cholesky_full(p)
            rel = np.linalg.norm(l @ l.T - p) / np.linalg.norm(p)
            assert rel <= 1e-12
            assert np.array_equal(l, np.tril(l))
            assert np.diag(l).min() > 0.0

    def test_not_positive_definite_reports_pivot(self, rng):
        p = random_spd(rng, 6)
        w, v = np.linalg.eigh(p)
        w[2] = -abs(w[2])  # flip one eigenvalue
        bad = v @ np.diag(w) @ v.T
        with pytest.raises(NotPositiveDefiniteError) as err:
            cholesky_full(bad)
        assert 0 <= err.value.pivot < 6

    def test_asymmetry_rejected(self, rng):
        p = random_spd(rng, 5)
        p[0, 1] += 1.0
        with pytest.raises(ValueError, match="asymmetric"):
            cholesky_full(p)

    def test_small_asymmetry_symmetrized(self, rng):
        p = random_spd(rng, 5)
        p[0, 1] += 1e-13
        l = cholesky_full(p)
        sym = 0.5 * (p + p.T)
        assert np.linalg.norm(l @ l.T - sym) / np.linalg.norm(sym) <= 1e-12


class TestCholeskyPartial:
    def test_full_case_matches(self, rng):
        p = random_spd(rng, 7)
        pc = cholesky_partial(p, 7)
        assert np.allclose(pc.column_block(), cholesky_full(p), atol=1e-14)

    def test_identity(self):
        pc = cholesky_partial(np.eye(5), 2)
        assert np.array_equal(pc.lnn, np.eye(2))
        assert np.array_equal(pc.lln, np.zeros((3, 2)))

    def test_matches_leading_columns(self, rng):
        p = random_spd(rng, 8)
        full = cholesky_full(p)
        pc = cholesky_partial(p, 3)
        assert np.abs(pc.column_block() - full[:, :3]).max() <= 1e-13
        assert pc.lnn.shape == (3, 3)
        assert pc.lln.shape == (5, 3)

    def test_sweep_against_full(self, rng):
        # smaller version of the acceptance sweep
        for _ in range(100):
            n = int(rng.integers(2, 41))
            p = random_spd(rng, n)
            full = cholesky_full(p)
            for z in range(1, n + 1):
                pc = cholesky_partial(p, z)
                assert np.abs(pc.column_block() - full[:, :z]).max() <= 1e-13

    def test_pivot_limited_to_leading_block(self, rng):
        # indefiniteness hidden beyond the requested columns goes unseen
        p = random_spd(rng, 6)
        p[5, 5] = -1.0
        with pytest.raises(NotPositiveDefiniteError):
            cholesky_full(p)
        pc = cholesky_partial(p, 2)  # must succeed: only pivots 0..1 touched
        assert np.diag(pc.lnn).min() > 0.0

    def test_failing_pivot_index(self):
        p = np.diag([1.0, -1.0, 1.0])
        with pytest.raises(NotPositiveDefiniteError) as err:
            cholesky_partial(p, 3)
        assert err.value.pivot == 1

    def test_z_out_of_range(self, rng):
        p = random_spd(rng, 4)
        with pytest.raises(ValueError):
            cholesky_partial(p, 0)
        with pytest.raises(ValueError):
            cholesky_partial(p, 5)


class TestPermutation:
    def test_identity_roundtrip(self, rng):
        perm = Permutation.identity(4)
        m = rng.standard_normal(4)
        p = random_spd(rng, 4)
        m2, p2 = permute_moments(perm, m, p)
        assert np.array_equal(m, m2) and np.array_equal(p, p2)

    def test_hand_reversal(self):
        perm = Permutation(np.array([1, 0]))
        m, p = permute_moments(perm, np.array([1.0, 2.0]), np.array([[1.0, 0.5], [0.5, 2.0]]))
        assert np.array_equal(m, [2.0, 1.0])
        assert np.array_equal(p, [[2.0, 0.5], [0.5, 1.0]])

    def test_roundtrip_bit_identical(self, rng):
        for _ in range(20):
            n = int(rng.integers(1, 30))
            perm = Permutation(rng.permutation(n))
            m = rng.standard_normal(n)
            p = random_spd(rng, n)
            mb, pb = permute_moments(perm, m, p)
            m2, p2 = permute_moments(perm.inverse, mb, pb)
            assert np.array_equal(m, m2)
            assert np.array_equal(p, p2)

    def test_eigenvalues_preserved(self, rng):
        n = 12
        perm = Permutation(rng.permutation(n))
        p = random_spd(rng, n)
        _, pb = permute_moments(perm, np.zeros(n), p)
        assert np.abs(np.linalg.eigvalsh(p) - np.linalg.eigvalsh(pb)).max() <= 1e-12 * n

    def test_invalid_indices(self):
        with pytest.raises(ValueError):
            Permutation(np.array([0, 0, 1]))
        with pytest.raises(ValueError):
            Permutation(np.array([0, 2]))

    def test_length_mismatch(self, rng):
        perm = Permutation.identity(3)
        with pytest.raises(ValueError):
            permute_moments(perm, np.zeros(4), np.eye(4))
