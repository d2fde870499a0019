import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cpnet.errors import ShapeError
from cpnet.tensor_core import (
    delta_operator,
    frob_inner,
    kron,
    mat,
    numerical_rank,
    psd_project,
    reshuffle,
    selection_pair,
    sym_eig,
    vec,
)


def brute_reshuffle(M, d):
    # literal entry rule with column-major pairing (i, j) -> i + j*d
    out = np.empty_like(M)
    for i in range(d):
        for j in range(d):
            for k in range(d):
                for l in range(d):
                    out[i + k * d, j + l * d] = M[i + j * d, k + l * d]
    return out


class TestVecMat:
    def test_vec_column_major(self):
        np.testing.assert_array_equal(vec([[1, 3], [2, 4]]), [1, 2, 3, 4])

    def test_vec_identity(self):
        np.testing.assert_array_equal(vec(np.eye(2)), [1, 0, 0, 1])

    def test_mat_identity(self):
        np.testing.assert_array_equal(mat([1, 0, 0, 1], 2, 2), np.eye(2))

    def test_mat_wrong_length(self):
        with pytest.raises(ShapeError):
            mat(np.arange(5.0), 2, 2)

    def test_vec_matches_loop(self, rng):
        M = rng.standard_normal((3, 2))
        expected = [M[i, j] for j in range(2) for i in range(3)]
        np.testing.assert_array_equal(vec(M), expected)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_round_trip_bitwise(self, rows, cols, seed):
        M = np.random.default_rng(seed).standard_normal((rows, cols))
        assert np.array_equal(mat(vec(M), rows, cols), M)
        x = vec(M)
        assert np.array_equal(vec(mat(x, rows, cols)), x)


class TestKron:
    def test_identity(self):
        np.testing.assert_array_equal(kron(np.eye(2), np.eye(3)), np.eye(6))

    def test_vec_identity(self, rng):
        for _ in range(200):
            p, q, s, t = rng.integers(1, 5, size=4)
            A = rng.standard_normal((p, q))
            W = rng.standard_normal((q, s))
            B = rng.standard_normal((s, t))
            lhs = vec(A @ W @ B)
            rhs = kron(B.T, A) @ vec(W)
            scale = max(1.0, np.linalg.norm(A) * np.linalg.norm(W) * np.linalg.norm(B))
            assert np.linalg.norm(lhs - rhs) <= 1e-12 * scale

    def test_column_vectors(self, rng):
        a = rng.standard_normal((3, 1))
        b = rng.standard_normal((4, 1))
        k = kron(a, b).ravel()
        expected = np.array([a[i, 0] * b[j, 0] for i in range(3) for j in range(4)])
        np.testing.assert_array_equal(k, expected)
        np.testing.assert_allclose(k, vec(b @ a.T), rtol=0, atol=1e-15)


class TestReshuffle:
    @pytest.mark.parametrize("d", [1, 2, 3, 4])
    def test_matches_entry_rule(self, rng, d):
        M = rng.standard_normal((d * d, d * d))
        np.testing.assert_array_equal(reshuffle(M), brute_reshuffle(M, d))

    def test_d1(self):
        np.testing.assert_array_equal(reshuffle(np.array([[2.5]])), [[2.5]])

    def test_involution(self, rng):
        for d in range(1, 6):
            M = rng.standard_normal((d * d, d * d))
            assert np.array_equal(reshuffle(reshuffle(M)), M)

    def test_is_permutation(self):
        for d in range(1, 5):
            m = d * d
            # image of each basis matrix is a basis matrix
            seen = set()
            for a in range(m):
                for b in range(m):
                    E = np.zeros((m, m))
                    E[a, b] = 1.0
                    R = reshuffle(E)
                    assert R.sum() == 1.0 and np.count_nonzero(R) == 1
                    seen.add(tuple(np.argwhere(R)[0]))
            assert len(seen) == m * m

    def test_inner_product_identity(self, rng):
        for _ in range(50):
            d = int(rng.integers(1, 5))
            A = rng.standard_normal((d, d))
            B = rng.standard_normal((d, d))
            W = rng.standard_normal((d, d))
            lhs = frob_inner(reshuffle(kron(B, A)), kron(W, W))
            rhs = frob_inner(kron(B, A), np.outer(vec(W), vec(W)))
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            reshuffle(np.zeros((3, 3)))
        with pytest.raises(ShapeError):
            reshuffle(np.zeros((4, 4)), d=3)


class TestDelta:
    def test_d1(self):
        np.testing.assert_array_equal(delta_operator(1), [[1.0]])

    @pytest.mark.parametrize("d", [1, 2, 3, 5])
    def test_matches_sum_of_units(self, d):
        expected = np.zeros((d * d, d * d))
        for i in range(d):
            for j in range(d):
                E = np.zeros((d, d))
                E[i, j] = 1.0
                expected += np.kron(E, E)
        np.testing.assert_array_equal(delta_operator(d), expected)

    def test_trace_of_identity(self):
        for d in range(1, 7):
            assert frob_inner(delta_operator(d), kron(np.eye(d), np.eye(d))) == d

    def test_contraction(self, rng):
        for _ in range(100):
            d = int(rng.integers(1, 7))
            A = rng.standard_normal((d, d))
            B = rng.standard_normal((d, d))
            assert abs(frob_inner(delta_operator(d), kron(A, B)) - frob_inner(A, B)) <= 1e-12 * max(
                1.0, np.linalg.norm(A) * np.linalg.norm(B)
            )


class TestSelection:
    def test_one_one(self):
        s = selection_pair(1, 1)
        np.testing.assert_array_equal(s.P_u, [[1], [0]])
        np.testing.assert_array_equal(s.P_v, [[0], [1]])

    def test_orthogonality(self):
        s = selection_pair(3, 2)
        np.testing.assert_array_equal(s.P_u.T @ s.P_u, np.eye(3))
        np.testing.assert_array_equal(s.P_v.T @ s.P_v, np.eye(2))
        np.testing.assert_array_equal(s.P_u.T @ s.P_v, np.zeros((3, 2)))
        np.testing.assert_array_equal(s.P_u @ s.P_u.T + s.P_v @ s.P_v.T, np.eye(5))

    def test_extracts_top_right_block(self, rng):
        s = selection_pair(2, 3)
        W = rng.standard_normal((5, 5))
        np.testing.assert_array_equal(s.P_u.T @ W @ s.P_v, W[:2, 2:])


class TestSymEig:
    def test_identity(self):
        np.testing.assert_allclose(sym_eig(np.eye(3), "jacobi").eigenvalues, [1, 1, 1])

    def test_diagonal(self):
        res = sym_eig(np.diag([3.0, -1.0]), "jacobi")
        np.testing.assert_allclose(res.eigenvalues, [3, -1])
        np.testing.assert_allclose(np.abs(res.eigenvectors), np.eye(2))

    @pytest.mark.parametrize("method", ["jacobi", "lapack"])
    def test_reconstruction(self, rng, method):
        for n in (1, 2, 5, 9, 16):
            A = rng.standard_normal((n, n))
            A = A + A.T
            res = sym_eig(A, method)
            V = res.eigenvectors
            assert np.linalg.norm(res.reconstruct() - A) <= 1e-10 * max(1.0, np.linalg.norm(A))
            assert np.linalg.norm(V.T @ V - np.eye(n)) <= 1e-10
            assert np.all(np.diff(res.eigenvalues) <= 0)

    def test_jacobi_agrees_with_lapack(self, rng):
        for n in (3, 7, 12):
            A = rng.standard_normal((n, n))
            A = A + A.T
            np.testing.assert_allclose(
                sym_eig(A, "jacobi").eigenvalues, sym_eig(A, "lapack").eigenvalues, atol=1e-11
            )

    def test_deterministic(self, rng):
        A = rng.standard_normal((6, 6))
        A = A + A.T
        r1, r2 = sym_eig(A), sym_eig(A)
        assert np.array_equal(r1.eigenvalues, r2.eigenvalues)
        assert np.array_equal(r1.eigenvectors, r2.eigenvectors)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_tiny_asymmetry_is_symmetrized(self):
        A = np.array([[2.0, 1.0], [1.0 + 1e-12, 3.0]])
        res = sym_eig(A)
        assert np.isfinite(res.eigenvalues).all()


class TestPSD:
    def test_identity_fixed(self):
        np.testing.assert_array_equal(psd_project(np.eye(3)), np.eye(3))

    def test_clamp(self):
        np.testing.assert_allclose(psd_project(np.diag([2.0, -5.0])), np.diag([2.0, 0.0]), atol=1e-14)

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (5, 5), elements=st.floats(-10, 10)))
    def test_output_psd(self, A):
        A = A + A.T
        P = psd_project(A)
        assert np.linalg.eigvalsh(P)[0] >= -1e-10 * max(1.0, np.linalg.norm(A))

    def test_fixed_point_on_psd(self, rng):
        G = rng.standard_normal((4, 6))
        A = G @ G.T
        np.testing.assert_allclose(psd_project(A), A, atol=1e-10)

    def test_nearest(self, rng):
        # any other PSD matrix is at least as far away
        A = rng.standard_normal((4, 4))
        A = A + A.T
        P = psd_project(A)
        for _ in range(50):
            G = rng.standard_normal((4, 4))
            assert np.linalg.norm(A - P) <= np.linalg.norm(A - G @ G.T) + 1e-12


class TestRank:
    def test_identity(self):
        assert numerical_rank(np.eye(4)) == 4

    def test_outer(self, rng):
        z = rng.standard_normal(5)
        assert numerical_rank(np.outer(z, z)) == 1

    def test_zero(self):
        assert numerical_rank(np.zeros((3, 3))) == 0
