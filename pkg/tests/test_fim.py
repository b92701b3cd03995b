import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fimkit.fim import (JacobiNonConvergence, eigenspectrum, fim_at, fim_batch, fim_field, jacobi_eigh,
                        trace, volume_element)
from fimkit.infogeo import DiscreteFamily, discrete_family_fim
from fimkit.nn import Mlp, forward, init_mlp


def logistic_net():
    # softmax of (x, 0) is (sigmoid(x), 1 - sigmoid(x))
    return Mlp([1, 2], [np.array([[1.0], [0.0]])], [np.zeros(2)], "relu", "simplex")


def random_net(seed, act="selu"):
    r = np.random.default_rng(seed)
    d, m = int(r.integers(1, 6)), int(r.integers(2, 21))
    mlp = init_mlp([d, 12, m], act, "simplex", seed)
    for b in mlp.biases:
        b += r.normal(scale=0.3, size=b.shape)
    return mlp, r.normal(size=d)


def network_family_fim(mlp, x, h=1e-5):
    fam = DiscreteFamily(lambda th: forward(mlp, th), [(-np.inf, np.inf)] * x.size)
    return discrete_family_fim(fam, x, h)


def random_rotation(r, d):
    Q, R = np.linalg.qr(r.normal(size=(d, d)))
    return Q * np.sign(np.diag(R))


class TestFimAt:
    def test_logistic_at_zero(self):
        assert abs(fim_at(logistic_net(), [0.0]).g[0, 0] - 0.25) < 1e-6

    def test_logistic_grid(self):
        xs = np.linspace(-4, 4, 17)
        p = 1 / (1 + np.exp(-xs))
        G = fim_batch(logistic_net(), xs[:, None])[:, 0, 0]
        np.testing.assert_allclose(G, p * (1 - p), atol=1e-6)

    @pytest.mark.parametrize("mode", ["standard", "literal"])
    def test_constant_net(self, mode):
        mlp = init_mlp([3, 5, 4], seed=0)
        mlp.weights[-1][:] = 0
        np.testing.assert_array_equal(fim_at(mlp, np.ones(3), mode).g, np.zeros((3, 3)))

    def test_literal_logistic(self):
        # J^T diag(p) J with J = p(1-p) * (1, -1)
        p = 0.5
        assert abs(fim_at(logistic_net(), [0.0], "literal").g[0, 0] - (p * (1 - p)) ** 2 * (p + 1 - p)) < 1e-12

    def test_matches_finite_difference_oracle(self):
        for seed in range(20):
            mlp, x = random_net(seed)
            np.testing.assert_allclose(fim_at(mlp, x).g, network_family_fim(mlp, x), atol=1e-4)

    @given(st.integers(0, 10_000), st.sampled_from(["standard", "literal"]), st.sampled_from(["relu", "selu"]))
    def test_symmetric_psd(self, seed, mode, act):
        mlp, x = random_net(seed, act)
        g = fim_at(mlp, 3 * x, mode).g
        np.testing.assert_allclose(g, g.T, atol=1e-10)
        assert np.linalg.eigvalsh(g).min() >= -1e-8

    def test_linear_output_rejected(self):
        with pytest.raises(ValueError):
            fim_at(init_mlp([2, 3], output_mode="linear"), np.zeros(2))

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            fim_at(init_mlp([2, 3]), np.zeros(2), "other")


class TestScalars:
    def test_volume_examples(self):
        assert volume_element(np.eye(3)) == pytest.approx(1.0, abs=1e-14)
        assert volume_element(np.diag([1.0, 2.0])) == pytest.approx(np.sqrt(2), rel=1e-14)
        assert volume_element(np.zeros((2, 2))) == 0.0

    def test_trace_examples(self):
        assert trace(np.eye(5)) == 5.0
        assert trace(np.diag([1.0, 2.0])) == 3.0

    @given(st.integers(0, 10_000))
    def test_trace_is_eigen_sum(self, seed):
        r = np.random.default_rng(seed)
        A = r.normal(size=(5, 5))
        g = A + A.T
        assert abs(trace(g) - eigenspectrum(g).sum()) < 1e-8

    @given(st.integers(0, 10_000))
    def test_orthogonal_invariance(self, seed):
        r = np.random.default_rng(seed)
        d = int(r.integers(2, 7))
        A = r.normal(size=(d, d))
        g = A @ A.T
        Q = random_rotation(r, d)
        h = Q @ g @ Q.T
        assert volume_element(h) == pytest.approx(volume_element(g), rel=1e-9)
        assert trace(h) == pytest.approx(trace(g), rel=1e-12)


class TestJacobi:
    def test_diagonal(self):
        np.testing.assert_array_equal(eigenspectrum(np.diag([3.0, 1.0, 2.0])), [3.0, 2.0, 1.0])

    def test_two_by_two(self):
        np.testing.assert_allclose(eigenspectrum(np.array([[2.0, 1.0], [1.0, 2.0]])), [3.0, 1.0], atol=1e-14)

    @given(st.integers(0, 10_000), st.integers(1, 12))
    def test_reconstruction_and_orthogonality(self, seed, d):
        A = np.random.default_rng(seed).normal(size=(d, d))
        g = A + A.T
        w, V = jacobi_eigh(g)
        np.testing.assert_allclose(V @ np.diag(w) @ V.T, g, atol=1e-8)
        np.testing.assert_allclose(V.T @ V, np.eye(d), atol=1e-10)
        assert np.all(np.diff(w) <= 0)
        np.testing.assert_allclose(w, np.sort(np.linalg.eigvalsh(g))[::-1], atol=1e-8)

    def test_iteration_cap(self):
        A = np.random.default_rng(0).normal(size=(6, 6))
        with pytest.raises(JacobiNonConvergence, match="off-diagonal"):
            jacobi_eigh(A + A.T, max_sweeps=1)

    def test_non_square(self):
        with pytest.raises(ValueError):
            jacobi_eigh(np.zeros((2, 3)))


class TestField:
    def test_constant_net_field(self, rng):
        mlp = init_mlp([2, 4, 3], seed=0)
        mlp.weights[-1][:] = 0
        X = rng.normal(size=(7, 2))
        f = fim_field(mlp, X)
        assert len(f) == 7 and f.table().shape == (7, 1 + 2 + 2 + 2)
        assert np.all(f.volume == 0) and np.all(f.trace == 0)

    def test_table_layout(self, rng):
        mlp, _ = random_net(3)
        X = rng.normal(size=(4, mlp.in_dim))
        f = fim_field(mlp, X)
        T = f.table()
        np.testing.assert_array_equal(T[:, 0], np.arange(4))
        np.testing.assert_array_equal(T[:, 1:1 + mlp.in_dim], X)
        assert f.header()[0] == "index" and len(f.header()) == T.shape[1]
        g = fim_at(mlp, X[2]).g
        assert T[2, -mlp.in_dim - 1] == pytest.approx(np.trace(g), rel=1e-12)
        assert T[2, -mlp.in_dim - 2] == pytest.approx(volume_element(g), rel=1e-12)
