import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from growformer.errors import ValidationError
from growformer.linalg import (
    causal_mask,
    eig_sym3,
    finite_diff_grad,
    gelu,
    gelu_derivative,
    matmul,
    qr_thin,
    softmax_rows,
    svd_small,
)


def triple_loop_matmul(a, b):
    """Independent oracle: explicit per-element accumulation."""
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


class TestMatmul:
    def test_identity(self):
        b = np.arange(12.0).reshape(3, 4)
        assert np.array_equal(matmul(np.eye(3), b), b)

    def test_hand_example(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[0.0], [1.0]])
        assert np.array_equal(matmul(a, b), np.array([[2.0], [4.0]]))

    def test_against_triple_loop(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=(7, 5))
        b = rng.normal(size=(5, 3))
        assert np.abs(matmul(a, b) - triple_loop_matmul(a, b)).max() < 1e-12

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ValidationError, match="2x3.*4x2"):
            matmul(np.zeros((2, 3)), np.zeros((4, 2)))

    def test_blocked_path_matches_triple_loop(self):
        rng = np.random.default_rng(8)
        a = rng.normal(size=(3, 700))
        b = rng.normal(size=(700, 2))
        assert np.abs(matmul(a, b) - triple_loop_matmul(a, b)).max() < 1e-10

    def test_zero_tail_channels_do_not_perturb(self):
        # appending zero input channels must leave old outputs bit-identical
        rng = np.random.default_rng(9)
        for k in (40, 300, 600, 900):
            a = rng.normal(size=(4, k))
            b = rng.normal(size=(k, 5))
            wide_a = np.hstack([a, np.zeros((4, 37))])
            wide_b = np.vstack([b, np.zeros((37, 5))])
            assert np.array_equal(matmul(a, b), matmul(wide_a, wide_b))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_associativity(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(4, 3))
        b = rng.normal(size=(3, 5))
        c = rng.normal(size=(5, 2))
        left = matmul(matmul(a, b), c)
        right = matmul(a, matmul(b, c))
        scale = max(np.abs(left).max(), 1.0)
        assert np.abs(left - right).max() / scale < 1e-9


class TestGelu:
    def test_zero_is_exactly_zero(self):
        assert gelu(np.array([[0.0]]))[0, 0] == 0.0

    def test_large_positive_asymptote(self):
        x = np.array([[12.0, 30.0]])
        assert np.abs(gelu(x) / x - 1.0).max() < 1e-9

    def test_derivative_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 3))
        g = finite_diff_grad(lambda m: float(gelu(m).sum()), x)
        assert np.abs(g - gelu_derivative(x)).max() < 1e-7


class TestSoftmaxRows:
    def test_uniform_row(self):
        out = softmax_rows(np.full((2, 5), 3.7))
        assert np.allclose(out, 0.2, atol=1e-15)

    def test_closed_form(self):
        out = softmax_rows(np.array([[0.0, np.log(3.0)]]))
        assert np.abs(out - [0.25, 0.75]).max() < 1e-14

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(6, 9)) * 30
        out = softmax_rows(x)
        direct = np.exp(x) / np.exp(x).sum(axis=1, keepdims=True)
        assert np.abs(out.sum(axis=1) - 1.0).max() < 1e-12
        assert np.abs(out - direct).max() < 1e-12

    def test_causal_mask_zeroes_future(self):
        x = np.zeros((4, 4))
        out = softmax_rows(x, causal_mask(4))
        assert np.array_equal(out[0, 1:], np.zeros(3))
        assert np.abs(out[3] - 0.25).max() < 1e-15

    def test_fully_masked_row_errors(self):
        mask = np.array([[True, True], [False, False]])
        with pytest.raises(ValidationError, match="fully masked"):
            softmax_rows(np.zeros((2, 2)), mask)


class TestQrThin:
    def test_orthonormal_input_roundtrip(self):
        q0 = np.linalg.qr(np.random.default_rng(0).normal(size=(4, 2)))[0]
        q, r = qr_thin(q0)
        assert np.abs(np.abs(q) - np.abs(q0)).max() < 1e-12
        assert np.abs(np.abs(r) - np.eye(2)).max() < 1e-12

    def test_closed_form_column(self):
        q, r = qr_thin(np.array([[3.0], [4.0]]))
        assert np.abs(q - [[0.6], [0.8]]).max() < 1e-15
        assert abs(r[0, 0] - 5.0) < 1e-15

    def test_reconstruction_and_orthonormality(self):
        rng = np.random.default_rng(21)
        m = rng.normal(size=(3, 2))
        q, r = qr_thin(m)
        assert np.abs(matmul(q, r) - m).max() < 1e-10
        assert np.abs(matmul(q.T, q) - np.eye(2)).max() < 1e-10

    def test_rank_deficient_errors(self):
        m = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
        with pytest.raises(ValidationError, match="rank"):
            qr_thin(m)


def charpoly_singular_values_2x2(m):
    """Oracle: eigenvalues of m^T m from the characteristic polynomial."""
    g = m.T @ m
    tr, det = g[0, 0] + g[1, 1], g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    disc = max(tr * tr - 4 * det, 0.0)
    lam1 = (tr + np.sqrt(disc)) / 2
    lam2 = (tr - np.sqrt(disc)) / 2
    return np.sqrt(max(lam1, 0.0)), np.sqrt(max(lam2, 0.0))


class TestSvdSmall:
    def test_identity(self):
        _, s, _ = svd_small(np.eye(2))
        assert np.allclose(s, [1.0, 1.0])

    def test_diagonal(self):
        _, s, _ = svd_small(np.diag([2.0, 0.5]))
        assert np.allclose(s, [2.0, 0.5])

    def test_against_charpoly_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            m = rng.normal(size=(2, 2))
            u, s, vt = svd_small(m)
            ref = charpoly_singular_values_2x2(m)
            assert np.abs(s - ref).max() < 1e-10
            assert np.abs(u @ np.diag(s) @ vt - m).max() < 1e-10
            assert s[0] >= s[1] >= 0

    def test_rejects_wide_inputs(self):
        with pytest.raises(ValidationError):
            svd_small(np.zeros((5, 4)))


def jacobi_eig_sym(c, sweeps=30):
    """Oracle: cyclic Jacobi rotations for a symmetric 3x3 matrix."""
    a = c.copy()
    v = np.eye(3)
    for _ in range(sweeps):
        for p in range(2):
            for q in range(p + 1, 3):
                if abs(a[p, q]) < 1e-15:
                    continue
                theta = 0.5 * np.arctan2(2 * a[p, q], a[q, q] - a[p, p])
                cos, sin = np.cos(theta), np.sin(theta)
                rot = np.eye(3)
                rot[p, p] = rot[q, q] = cos
                rot[p, q] = sin
                rot[q, p] = -sin
                a = rot.T @ a @ rot
                v = v @ rot
    order = np.argsort(np.diag(a))[::-1]
    return np.diag(a)[order], v[:, order]


class TestEigSym3:
    def test_diagonal(self):
        vals, vecs = eig_sym3(np.diag([3.0, 2.0, 1.0]))
        assert np.allclose(vals, [3.0, 2.0, 1.0])
        assert np.allclose(vecs, np.eye(3))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_trace_and_det_invariants(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(3, 3))
        c = (a + a.T) / 2
        vals, vecs = eig_sym3(c)
        assert abs(vals.sum() - np.trace(c)) < 1e-10
        det = np.linalg.det(c)
        assert abs(np.prod(vals) - det) <= 1e-8 * max(abs(det), 1.0)
        for i in range(3):
            assert np.abs(c @ vecs[:, i] - vals[i] * vecs[:, i]).max() < 1e-9

    def test_against_jacobi_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            a = rng.normal(size=(3, 3))
            c = (a + a.T) / 2
            vals, vecs = eig_sym3(c)
            ref_vals, ref_vecs = jacobi_eig_sym(c)
            assert np.abs(vals - ref_vals).max() < 1e-9
            # eigenvectors agree up to sign
            for i in range(3):
                dot = abs(float(vecs[:, i] @ ref_vecs[:, i]))
                assert abs(dot - 1.0) < 1e-8

    def test_sign_convention(self):
        vals, vecs = eig_sym3(np.diag([3.0, 2.0, 1.0]))
        for i in range(3):
            assert vecs[np.argmax(np.abs(vecs[:, i])), i] > 0

    def test_asymmetric_rejected(self):
        c = np.diag([3.0, 2.0, 1.0])
        c[0, 1] = 1e-6
        with pytest.raises(ValidationError, match="symmetric"):
            eig_sym3(c)


class TestFiniteDiffGrad:
    def test_sum_of_squares(self):
        x = np.array([[1.0, -2.0], [0.5, 3.0]])
        g = finite_diff_grad(lambda m: float((m**2).sum()), x)
        assert np.abs(g - 2 * x).max() < 1e-6

    def test_constant_function(self):
        g = finite_diff_grad(lambda m: 4.2, np.ones((2, 3)))
        assert np.array_equal(g, np.zeros((2, 3)))

    def test_gelu_sum_cross_check(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(3, 3))
        g = finite_diff_grad(lambda m: float(gelu(m).sum()), x)
        assert np.abs(g - gelu_derivative(x)).max() < 1e-6

    def test_bad_eps(self):
        with pytest.raises(ValidationError):
            finite_diff_grad(lambda m: 0.0, np.ones((1, 1)), eps=0.0)
