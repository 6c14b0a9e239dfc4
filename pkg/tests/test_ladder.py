import numpy as np
import pytest

from growformer.errors import ValidationError
from growformer.ladder import (
    DimLadder,
    LadderProjection,
    attention_backward,
    attention_forward,
    ladder_backward,
    ladder_forward,
    rank_bottleneck_check,
    validate_hierarchy,
)
from growformer.linalg import finite_diff_grad, gelu, softmax_rows
from growformer.rng import RngState


class TestHierarchy:
    def test_production_ladder_is_valid(self):
        assert validate_hierarchy(DimLadder(768, (780, 960), 768)) == []

    def test_inner_inversion_flagged_but_permitted(self):
        violations = validate_hierarchy(DimLadder(768, (1180, 960), 768))
        assert len(violations) == 1
        assert "960" in violations[0] and "1180" in violations[0]

    def test_equal_first_stage(self):
        violations = validate_hierarchy(DimLadder(4, (4, 8), 4))
        assert len(violations) == 1

    def test_strict_mode_raises(self):
        with pytest.raises(ValidationError, match="hierarchy"):
            validate_hierarchy(DimLadder(4, (4, 8), 4), strict=True)

    def test_output_width_unconstrained(self):
        assert validate_hierarchy(DimLadder(4, (8, 16), 4)) == []


def scalar_loop_forward(layer, x):
    """Oracle: the staged map evaluated with explicit scalar loops."""
    h = x
    for idx, w in enumerate(layer.weights):
        out = np.zeros((h.shape[0], w.shape[1]))
        for i in range(h.shape[0]):
            for j in range(w.shape[1]):
                acc = 0.0
                for k in range(h.shape[1]):
                    acc += h[i, k] * w[k, j]
                out[i, j] = acc
        h = gelu(out) if idx < len(layer.weights) - 1 else out
    return h


class TestLadderForward:
    def test_zero_input_gives_zero_output(self):
        layer = LadderProjection.init(DimLadder(4, (6, 8), 4), RngState(1))
        out, _ = ladder_forward(layer, np.zeros((3, 4)))
        assert np.array_equal(out, np.zeros((3, 4)))

    def test_zero_weights_give_zero_output(self):
        ladder = DimLadder(4, (6, 8), 4)
        layer = LadderProjection(
            ladder, [np.zeros((4, 6)), np.zeros((6, 8)), np.zeros((8, 4))]
        )
        x = np.random.default_rng(0).normal(size=(3, 4))
        out, _ = ladder_forward(layer, x)
        assert np.array_equal(out, np.zeros((3, 4)))

    def test_matches_scalar_loop_oracle(self):
        layer = LadderProjection.init(DimLadder(4, (6, 8), 4), RngState(9))
        x = np.random.default_rng(1).normal(size=(2, 4))
        out, _ = ladder_forward(layer, x)
        assert np.abs(out - scalar_loop_forward(layer, x)).max() < 1e-12

    def test_output_width_equals_d_out(self):
        for ladder in (DimLadder(3, (5, 7), 3), DimLadder(2, (4,), 6)):
            layer = LadderProjection.init(ladder, RngState(2), strict=False)
            out, _ = ladder_forward(layer, np.ones((2, ladder.d_in)))
            assert out.shape == (2, ladder.d_out)

    def test_width_mismatch(self):
        layer = LadderProjection.init(DimLadder(4, (6, 8), 4), RngState(1))
        with pytest.raises(ValidationError, match="width"):
            ladder_forward(layer, np.zeros((3, 5)))


class TestLadderBackward:
    def test_zero_upstream_gives_zero_grads(self):
        layer = LadderProjection.init(DimLadder(3, (4, 5), 3), RngState(4))
        x = np.random.default_rng(2).normal(size=(2, 3))
        _, cache = ladder_forward(layer, x)
        dx, grads = ladder_backward(layer, cache, np.zeros((2, 3)))
        assert np.array_equal(dx, np.zeros_like(x))
        for g in grads:
            assert not g.any()

    def test_matches_finite_differences(self):
        layer = LadderProjection.init(DimLadder(3, (4, 5), 3), RngState(7))
        rng = np.random.default_rng(3)
        x = rng.normal(size=(2, 3))
        proj = rng.normal(size=(2, 3))  # fixed linear functional of the output

        def loss_with(weights):
            temp = LadderProjection(layer.ladder, weights)
            out, _ = ladder_forward(temp, x)
            return float((out * proj).sum())

        _, cache = ladder_forward(layer, x)
        dx, grads = ladder_backward(layer, cache, proj)
        for i in range(3):
            def f(w, i=i):
                ws = [m.copy() for m in layer.weights]
                ws[i] = w
                return loss_with(ws)

            fd = finite_diff_grad(f, layer.weights[i], eps=1e-5)
            denom = np.maximum(np.abs(fd), 1e-4)
            assert (np.abs(grads[i] - fd) / denom).max() < 1e-5
        fd_x = finite_diff_grad(
            lambda m: float((ladder_forward(layer, m)[0] * proj).sum()), x, eps=1e-5
        )
        assert np.abs(dx - fd_x).max() < 1e-6

    def test_zero_middle_and_down_blocks_are_a_saddle(self):
        # with w_mid and w_down zero nothing reaches the output, and the
        # chain rule kills d_w_mid and d_w_up exactly (d_w_down too,
        # since its input gelu(0) is exactly zero)
        ladder = DimLadder(3, (4, 5), 3)
        layer = LadderProjection.init(ladder, RngState(5))
        layer.weights[1] = np.zeros((4, 5))
        layer.weights[2] = np.zeros((5, 3))
        x = np.random.default_rng(4).normal(size=(2, 3))
        out, cache = ladder_forward(layer, x)
        assert np.array_equal(out, np.zeros((2, 3)))
        _, grads = ladder_backward(layer, cache, np.ones((2, 3)))
        assert not grads[0].any()
        assert not grads[1].any()
        assert not grads[2].any()


class TestAttention:
    def _three(self, d, m, a, seed):
        rng = RngState(seed)
        ladder = DimLadder(d, (m, a), d)
        return (
            LadderProjection.init(ladder, rng),
            LadderProjection.init(ladder, rng),
            LadderProjection.init(ladder, rng),
        )

    def test_single_token_returns_value_row(self):
        q, k, v = self._three(4, 6, 8, 1)
        x = np.random.default_rng(5).normal(size=(1, 4))
        out, _ = attention_forward(q, k, v, x, n_heads=2)
        v_out, _ = ladder_forward(v, x)
        assert np.abs(out - v_out).max() < 1e-14

    def test_causality(self):
        q, k, v = self._three(4, 6, 8, 2)
        rng = np.random.default_rng(6)
        x = rng.normal(size=(5, 4))
        out, _ = attention_forward(q, k, v, x, n_heads=2, causal=True)
        x2 = x.copy()
        x2[3] += rng.normal(size=4)
        out2, _ = attention_forward(q, k, v, x2, n_heads=2, causal=True)
        assert np.array_equal(out[:3], out2[:3])
        assert np.abs(out2[3:] - out[3:]).max() > 0

    def test_matches_composed_oracle(self):
        # single head: the output is softmax(Q K^T / sqrt(D)) V with the
        # three staged projections applied first
        q, k, v = self._three(4, 6, 8, 3)
        x = np.random.default_rng(7).normal(size=(3, 4))
        out, _ = attention_forward(q, k, v, x, n_heads=1, causal=True)
        qm, _ = ladder_forward(q, x)
        km, _ = ladder_forward(k, x)
        vm, _ = ladder_forward(v, x)
        scores = (qm @ km.T) / np.sqrt(4)
        probs = softmax_rows(scores, np.tril(np.ones((3, 3), dtype=bool)))
        assert np.abs(out - probs @ vm).max() < 1e-10

    def test_backward_matches_finite_differences(self):
        q, k, v = self._three(4, 6, 8, 8)
        rng = np.random.default_rng(8)
        x = rng.normal(size=(3, 4))
        proj = rng.normal(size=(3, 4))
        out, cache = attention_forward(q, k, v, x, n_heads=2)
        dx, q_g, k_g, v_g = attention_backward(q, k, v, cache, proj)
        fd_x = finite_diff_grad(
            lambda m: float((attention_forward(q, k, v, m, n_heads=2)[0] * proj).sum()),
            x,
            eps=1e-5,
        )
        assert np.abs(dx - fd_x).max() < 1e-6

        def f_w(w):
            ws = [m.copy() for m in q.weights]
            ws[0] = w
            q2 = LadderProjection(q.ladder, ws)
            return float((attention_forward(q2, k, v, x, n_heads=2)[0] * proj).sum())

        fd_w = finite_diff_grad(f_w, q.weights[0], eps=1e-5)
        denom = np.maximum(np.abs(fd_w), 1e-4)
        assert (np.abs(q_g[0] - fd_w) / denom).max() < 1e-5

    def test_head_mismatch(self):
        q, k, v = self._three(4, 6, 8, 9)
        with pytest.raises(ValidationError, match="n_heads"):
            attention_forward(q, k, v, np.zeros((2, 4)), n_heads=3)


def planted_rank_matrix(rng, rows, cols, rank):
    return rng.normal(size=(rows, rank)) @ rng.normal(size=(rank, cols))


class TestRankBottleneck:
    def test_rank_one_w(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(4, 3))
        w = planted_rank_matrix(rng, 3, 3, 1)
        report = rank_bottleneck_check(x, w)
        assert report.rank_xw == 1
        assert report.inequality_holds

    def test_identity_w_preserves_rank(self):
        rng = np.random.default_rng(11)
        x = planted_rank_matrix(rng, 5, 4, 2)
        report = rank_bottleneck_check(x, np.eye(4))
        assert report.rank_xw == report.rank_x == 2

    def test_planted_ranks_50_pairs(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            rx = int(rng.integers(1, 4))
            rw = int(rng.integers(1, 4))
            x_rows = int(rng.integers(4, 8))
            w_cols = int(rng.integers(2, 7))
            x = planted_rank_matrix(rng, x_rows, 5, rx)
            w = planted_rank_matrix(rng, 5, w_cols, rw)
            report = rank_bottleneck_check(x, w)
            assert report.inequality_holds
            assert report.rank_x == min(rx, x_rows, 5)
            assert report.rank_w == min(rw, w_cols, 5)
