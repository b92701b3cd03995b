import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fimkit.data import PointCloud
from fimkit.diffusion import (KernelConfig, anisotropic_normalize, build_kernel, diffuse, load_matrix,
                              matrix_power, pairwise_distances, potential, row_normalize, save_matrix)


def random_operator(rng, n=8, d=3, knn=3):
    return diffuse(PointCloud(rng.normal(size=(n, d))), KernelConfig(knn=knn))


class TestDistances:
    def test_three_four_five(self):
        np.testing.assert_array_equal(pairwise_distances(np.array([[0.0, 0], [3, 4]])), [[0, 5], [5, 0]])

    def test_matches_scalar_loop(self, rng):
        X = rng.normal(size=(10, 3))
        D = pairwise_distances(X)
        for i in range(10):
            assert D[i, i] == 0
            for j in range(10):
                assert abs(D[i, j] - np.sqrt(np.sum((X[i] - X[j]) ** 2))) < 1e-12


class TestKernel:
    def test_fixed_gaussian(self):
        A = build_kernel(np.array([[0.0, 1], [1, 0]]), KernelConfig("fixed-gaussian", sigma=1.0))
        np.testing.assert_allclose(A, [[1, np.exp(-1)], [np.exp(-1), 1]], rtol=1e-15)

    def test_adaptive_equals_alpha_decay_beta2(self, rng):
        D = pairwise_distances(rng.normal(size=(7, 2)))
        a = build_kernel(D, KernelConfig("adaptive-gaussian", knn=3))
        b = build_kernel(D, KernelConfig("alpha-decay", knn=3, beta=2.0))
        np.testing.assert_array_equal(a, b)

    def test_adaptive_bandwidth_oracle(self, rng):
        X = rng.normal(size=(5, 2))
        D = pairwise_distances(X)
        A = build_kernel(D, KernelConfig("adaptive-gaussian", knn=2))
        sig = [sorted(D[i, j] for j in range(5) if j != i)[1] for i in range(5)]
        for i in range(5):
            for j in range(5):
                ref = 0.5 * np.exp(-(D[i, j] / sig[i]) ** 2) + 0.5 * np.exp(-(D[i, j] / sig[j]) ** 2)
                assert abs(A[i, j] - ref) < 1e-14
        np.testing.assert_array_equal(np.diag(A), 1.0)
        np.testing.assert_array_equal(A, A.T)

    def test_duplicate_points_name_index(self):
        X = np.array([[0.0, 0], [0, 0], [1, 1], [2, 2]])
        with pytest.raises(ValueError, match="point 0"):
            build_kernel(pairwise_distances(X), KernelConfig(knn=1))

    def test_permutation_equivariant(self, rng):
        X = rng.normal(size=(9, 3))
        perm = rng.permutation(9)
        cfg = KernelConfig(knn=3)
        A = build_kernel(pairwise_distances(X), cfg)
        Ap = build_kernel(pairwise_distances(X[perm]), cfg)
        np.testing.assert_allclose(Ap, A[np.ix_(perm, perm)], atol=1e-14)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            KernelConfig("fixed-gaussian")
        with pytest.raises(ValueError):
            KernelConfig("adaptive-gaussian", knn=3, anisotropy=1.5)
        with pytest.raises(ValueError):
            KernelConfig("box", knn=3)


class TestNormalization:
    def test_anisotropy_zero(self, rng):
        A = rng.random((4, 4))
        np.testing.assert_array_equal(anisotropic_normalize(A, 0.0), A)

    def test_anisotropy_one_quarter(self):
        np.testing.assert_allclose(anisotropic_normalize(np.ones((2, 2)), 1.0), np.full((2, 2), 0.25))

    def test_anisotropy_half_oracle(self, rng):
        B = rng.random((6, 6))
        A = B + B.T
        q = A.sum(axis=1)
        K = anisotropic_normalize(A, 0.5)
        np.testing.assert_allclose(K, A / np.sqrt(np.outer(q, q)), rtol=1e-14)
        np.testing.assert_array_equal(K, K.T)

    def test_row_normalize(self):
        op = row_normalize(np.array([[1.0, 1], [1, 3]]))
        np.testing.assert_array_equal(op.P, [[0.5, 0.5], [0.25, 0.75]])
        np.testing.assert_array_equal(op.degree, [2, 4])
        np.testing.assert_array_equal(op.P @ np.ones(2), np.ones(2))

    def test_zero_row(self):
        with pytest.raises(ValueError, match="row 1"):
            row_normalize(np.array([[1.0, 0], [0, 0]]))


class TestPowers:
    def test_t_one(self, rng):
        op = random_operator(rng)
        np.testing.assert_allclose(matrix_power(op, 1.0, method="spectral"), op.P, atol=1e-10)

    def test_t_two_matches_product(self, rng):
        # fixed-gaussian with large bandwidth gives a positive semidefinite kernel
        X = rng.normal(size=(8, 2))
        op = diffuse(PointCloud(X), KernelConfig("fixed-gaussian", sigma=4.0, anisotropy=0.0))
        r = np.sqrt(op.degree)
        assert np.linalg.eigvalsh(r[:, None] * op.P / r[None, :]).min() > -1e-12
        np.testing.assert_allclose(matrix_power(op, 2.0, method="spectral"), op.P @ op.P, atol=1e-8)

    def test_fractional_rows_sum_to_one(self, rng):
        Pt = matrix_power(random_operator(rng), 2.5)
        np.testing.assert_allclose(Pt.sum(axis=1), 1.0, atol=1e-8)
        assert Pt.min() > -1e-10

    def test_integer_path_is_exact_multiplication(self, rng):
        op = random_operator(rng)
        np.testing.assert_array_equal(matrix_power(op, 3), np.linalg.matrix_power(op.P, 3))

    def test_bad_t(self, rng):
        with pytest.raises(ValueError):
            matrix_power(random_operator(rng), 0.0)

    @given(st.integers(0, 10_000), st.floats(0.1, 20.0))
    def test_row_stochastic_property(self, seed, t):
        op = random_operator(np.random.default_rng(seed), n=10)
        np.testing.assert_allclose(op.P.sum(axis=1), 1.0, atol=1e-10)
        np.testing.assert_allclose(matrix_power(op, t).sum(axis=1), 1.0, atol=1e-8)

    @given(st.integers(0, 10_000))
    def test_spectrum_in_unit_interval(self, seed):
        op = random_operator(np.random.default_rng(seed), n=10)
        r = np.sqrt(op.degree)
        lam = np.linalg.eigvalsh(r[:, None] * op.P / r[None, :])
        assert lam.min() >= -1 - 1e-10 and lam.max() <= 1 + 1e-10


class TestPotential:
    def test_floor(self):
        op = row_normalize(np.eye(3))
        U = potential(op, 1, floor_eps=1e-7).U
        assert U[0, 1] == np.log(1e-7)

    def test_uniform(self):
        op = row_normalize(np.ones((4, 4)))
        np.testing.assert_allclose(potential(op, 3).U, np.log(0.25), rtol=1e-14)

    def test_nonpositive_and_finite(self, rng):
        U = potential(random_operator(rng), 4.5).U
        assert np.all(np.isfinite(U)) and U.max() <= 1e-12

    def test_bad_floor(self, rng):
        with pytest.raises(ValueError):
            potential(random_operator(rng), 1, floor_eps=0.0)


def test_density_insensitivity_diagnostic(rng):
    # duplicating a point barely moves transitions among the others when anisotropy = 1
    X = rng.normal(size=(30, 2))
    cfg = KernelConfig("fixed-gaussian", sigma=1.0, anisotropy=1.0)
    base = diffuse(PointCloud(X), cfg).P
    dup = diffuse(PointCloud(np.vstack([X, X[:1] + 1e-3])), cfg).P[:30, :30]
    off = ~np.eye(30, dtype=bool)
    change = np.max(np.abs(dup[off] / dup[off].sum() - base[off] / base[off].sum()))
    print(f"max relative transition change after duplicating a point: {change:.3e}")
    assert np.isfinite(change)


def test_matrix_csv_round_trip(tmp_path, rng):
    M = rng.normal(size=(5, 4)) * 10.0 ** rng.integers(-300, 300, size=(5, 4))
    save_matrix(M, tmp_path / "m.csv", ["a", "b", "c", "d"])
    np.testing.assert_array_equal(load_matrix(tmp_path / "m.csv", has_header=True), M)
