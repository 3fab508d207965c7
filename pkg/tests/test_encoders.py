"""Tests for the projection, context-encoder, and structure-encoder blocks."""

import numpy as np
import pytest

from proplearn.encoders import (
    ContextEncoder,
    EncoderConfig,
    FeatureProjection,
    GraphEncoder,
    MultiHeadAttention,
    UserEmbeddingProjection,
)
from proplearn.errors import ConfigError
from proplearn.tensor import Parameter, constant, grad_check, sum_of_squares


CFG = EncoderConfig(d_model=8, n_heads=2, context_depth=2, graph_depth=2)


def _path_adjacency(n):
    adj = np.zeros((n, n))
    for i in range(n - 1):
        adj[i, i + 1] = adj[i + 1, i] = 1.0
    return adj


class TestConfig:
    def test_head_divisibility(self):
        with pytest.raises(ConfigError, match="divisible"):
            EncoderConfig(d_model=10, n_heads=4)

    def test_unknown_activation(self):
        with pytest.raises(ConfigError, match="activation"):
            EncoderConfig(activation="swish")

    def test_default_ffn_width(self):
        assert EncoderConfig(d_model=16).d_ff == 32


class TestFeatureProjection:
    def test_identity_when_weights_are_identity(self):
        rng = np.random.default_rng(0)
        proj = FeatureProjection(3, 3, rng)
        proj.linear.W.data[...] = np.eye(3)
        proj.linear.b.data[...] = 0.0
        x = rng.normal(size=(5, 3))
        np.testing.assert_allclose(proj(x).data, x, atol=1e-15)

    def test_affine_formula(self):
        rng = np.random.default_rng(1)
        proj = FeatureProjection(4, 6, rng)
        x = rng.normal(size=(3, 4))
        expected = x @ proj.linear.W.data + proj.linear.b.data
        np.testing.assert_allclose(proj(x).data, expected, rtol=1e-12)


class TestContextEncoder:
    def test_permutation_equivariance(self):
        """Encoding commutes with any relabeling of the token rows."""
        rng = np.random.default_rng(2)
        enc = ContextEncoder(CFG, rng)
        x = rng.normal(size=(7, CFG.d_model))
        perm = rng.permutation(7)
        out = enc(constant(x)).data
        out_perm = enc(constant(x[perm])).data
        np.testing.assert_allclose(out_perm, out[perm], atol=1e-10)

    def test_permutation_equivariance_with_mask(self):
        rng = np.random.default_rng(3)
        enc = ContextEncoder(CFG, rng)
        x = rng.normal(size=(6, CFG.d_model))
        keep = np.array([True, False, True, True, False, True])
        perm = rng.permutation(6)
        out = enc(constant(x), key_mask=keep).data
        out_perm = enc(constant(x[perm]), key_mask=keep[perm]).data
        np.testing.assert_allclose(out_perm, out[perm], atol=1e-10)

    def test_duplicate_tokens_encode_identically(self):
        rng = np.random.default_rng(4)
        enc = ContextEncoder(CFG, rng)
        x = rng.normal(size=(4, CFG.d_model))
        x[2] = x[0]
        out = enc(constant(x)).data
        np.testing.assert_allclose(out[2], out[0], atol=1e-12)

    def test_masked_token_does_not_leak_into_others(self):
        rng = np.random.default_rng(5)
        enc = ContextEncoder(CFG, rng)
        x = rng.normal(size=(5, CFG.d_model))
        keep = np.array([True, True, False, True, True])
        base = enc(constant(x), key_mask=keep).data
        x2 = x.copy()
        # uniform shifts vanish inside layer norm, so perturb unevenly
        x2[2] += np.linspace(1.0, 4.0, CFG.d_model)
        bumped = enc(constant(x2), key_mask=keep).data
        kept = keep.nonzero()[0]
        np.testing.assert_allclose(bumped[kept], base[kept], atol=1e-12)
        assert np.abs(bumped[2] - base[2]).max() > 1e-3

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(6)
        cfg = EncoderConfig(d_model=4, n_heads=2, context_depth=1)
        enc = ContextEncoder(cfg, rng)
        x = rng.normal(size=(3, 4))
        report = grad_check(lambda: sum_of_squares(enc(constant(x))), enc.parameters())
        assert report.passed, str(report)


class TestMultiHeadAttention:
    def test_single_head_equals_full_attention(self):
        rng = np.random.default_rng(7)
        mha = MultiHeadAttention(6, 1, rng, "t")
        x = rng.normal(size=(4, 6))
        q = x @ mha.wq.W.data + mha.wq.b.data
        k = x @ mha.wk.W.data + mha.wk.b.data
        v = x @ mha.wv.W.data + mha.wv.b.data
        scores = q @ k.T / np.sqrt(6)
        weights = np.exp(scores - scores.max(axis=1, keepdims=True))
        weights /= weights.sum(axis=1, keepdims=True)
        expected = (weights @ v) @ mha.wo.W.data + mha.wo.b.data
        np.testing.assert_allclose(mha(constant(x)).data, expected, atol=1e-12)


class TestGraphEncoder:
    def test_no_edges_means_no_cross_talk(self):
        rng = np.random.default_rng(8)
        enc = GraphEncoder(CFG, 1, rng)
        adj, inv = GraphEncoder.prepare([np.zeros((4, 4))])
        x = rng.normal(size=(4, CFG.d_model))
        base = enc(constant(x), adj, inv).data
        x2 = x.copy()
        x2[3] += 5.0
        bumped = enc(constant(x2), adj, inv).data
        np.testing.assert_allclose(bumped[:3], base[:3], atol=1e-12)

    def test_receptive_field_is_depth_hops(self):
        """With L layers, node 0 cannot see features more than L hops away."""
        rng = np.random.default_rng(9)
        n = 6
        adjacency = _path_adjacency(n)
        x = rng.normal(size=(n, CFG.d_model))
        for depth in (1, 2):
            cfg = EncoderConfig(d_model=CFG.d_model, n_heads=2, graph_depth=depth)
            enc = GraphEncoder(cfg, 1, rng)
            adj, inv = GraphEncoder.prepare([adjacency])
            base = enc(constant(x), adj, inv).data
            x_far = x.copy()
            x_far[depth + 1] += 3.0  # just outside the L-hop ball of node 0
            far = enc(constant(x_far), adj, inv).data
            np.testing.assert_allclose(far[0], base[0], atol=1e-12)
            x_near = x.copy()
            x_near[depth] += 3.0  # on the boundary of the ball
            near = enc(constant(x_near), adj, inv).data
            assert np.abs(near[0] - base[0]).max() > 1e-6

    def test_cycle_symmetry(self):
        """Identical features on a ring stay identical through the stack."""
        rng = np.random.default_rng(10)
        n = 5
        adjacency = np.zeros((n, n))
        for i in range(n):
            adjacency[i, (i + 1) % n] = adjacency[(i + 1) % n, i] = 1.0
        enc = GraphEncoder(CFG, 1, rng)
        adj, inv = GraphEncoder.prepare([adjacency])
        x = np.tile(rng.normal(size=(1, CFG.d_model)), (n, 1))
        out = enc(constant(x), adj, inv).data
        np.testing.assert_allclose(out, np.tile(out[:1], (n, 1)), atol=1e-12)

    def test_single_layer_matches_numpy_recomputation(self):
        rng = np.random.default_rng(11)
        cfg = EncoderConfig(d_model=6, n_heads=2, graph_depth=1, activation="tanh")
        enc = GraphEncoder(cfg, 1, rng)
        adjacency = _path_adjacency(4)
        adj, inv = GraphEncoder.prepare([adjacency])
        x = rng.normal(size=(4, 6))
        layer = enc.layers[0]
        gate = 1.0 / (1.0 + np.exp(-layer.gate_raw[0].data.item()))
        counts = 1.0 + adjacency.sum(axis=1, keepdims=True)
        mean = (x + gate * adjacency @ x) / counts
        pre = mean @ layer.W.W.data
        mu = pre.mean(axis=1, keepdims=True)
        var = pre.var(axis=1, keepdims=True)
        normed = (pre - mu) / np.sqrt(var + 1e-5) * layer.ln.gain.data + layer.ln.bias.data
        expected = x + np.tanh(normed)
        np.testing.assert_allclose(enc(constant(x), adj, inv).data, expected, atol=1e-12)

    def test_per_relation_gates_act_independently(self):
        """Closing one relation's gate removes exactly its contribution."""
        rng = np.random.default_rng(12)
        cfg = EncoderConfig(d_model=6, n_heads=2, graph_depth=1)
        enc = GraphEncoder(cfg, 2, rng)
        A1 = _path_adjacency(4)
        A2 = np.zeros((4, 4))
        A2[0, 3] = A2[3, 0] = 1.0
        layer = enc.layers[0]
        layer.gate_raw[1].data[...] = -60.0  # gate ~ 0
        adj, inv = GraphEncoder.prepare([A1, A2])
        x = rng.normal(size=(4, 6))
        out = enc(constant(x), adj, inv).data

        gate1 = 1.0 / (1.0 + np.exp(-layer.gate_raw[0].data.item()))
        counts = 1.0 + (A1 + A2).sum(axis=1, keepdims=True)
        mean = (x + gate1 * A1 @ x) / counts  # relation 2 contributes nothing
        pre = mean @ layer.W.W.data
        mu = pre.mean(axis=1, keepdims=True)
        var = pre.var(axis=1, keepdims=True)
        normed = (pre - mu) / np.sqrt(var + 1e-5) * layer.ln.gain.data + layer.ln.bias.data
        expected = x + np.maximum(normed, 0.0)
        np.testing.assert_allclose(out, expected, atol=1e-10)

    def test_relation_count_mismatch(self):
        rng = np.random.default_rng(13)
        enc = GraphEncoder(CFG, 2, rng)
        adj, inv = GraphEncoder.prepare([np.zeros((3, 3))])
        with pytest.raises(Exception, match="relation adjacencies"):
            enc(constant(np.zeros((3, CFG.d_model))), adj, inv)

    def test_gradients_including_gates(self):
        rng = np.random.default_rng(14)
        cfg = EncoderConfig(d_model=4, n_heads=2, graph_depth=2)
        enc = GraphEncoder(cfg, 2, rng)
        A1 = _path_adjacency(4)
        A2 = np.eye(4)[::-1].copy()
        np.fill_diagonal(A2, 0.0)
        adj, inv = GraphEncoder.prepare([A1, A2])
        x = rng.normal(size=(4, 4))
        report = grad_check(lambda: sum_of_squares(enc(constant(x), adj, inv)),
                            enc.parameters())
        assert report.passed, str(report)


class TestUserEmbeddingProjection:
    def test_smoothing_averages_neighbours(self):
        rng = np.random.default_rng(15)
        adjacency = np.array([[0.0, 1.0], [1.0, 0.0]])
        users = UserEmbeddingProjection(2, 4, adjacency, rng)
        table = users.table.data
        smoothed = users().data
        np.testing.assert_allclose(smoothed[0], (table[0] + table[1]) / 2, rtol=1e-12)
        np.testing.assert_allclose(smoothed[1], (table[0] + table[1]) / 2, rtol=1e-12)

    def test_isolated_user_keeps_own_vector(self):
        rng = np.random.default_rng(16)
        adjacency = np.zeros((3, 3))
        users = UserEmbeddingProjection(3, 4, adjacency, rng)
        np.testing.assert_allclose(users().data, users.table.data, rtol=1e-12)

    def test_row_gather(self):
        rng = np.random.default_rng(17)
        adjacency = np.zeros((4, 4))
        users = UserEmbeddingProjection(4, 3, adjacency, rng)
        out = users(rows=np.array([2, 0]))
        np.testing.assert_allclose(out.data, users.table.data[[2, 0]], rtol=1e-12)

    def test_gradients_flow_to_table(self):
        rng = np.random.default_rng(18)
        adjacency = _path_adjacency(3)
        users = UserEmbeddingProjection(3, 4, adjacency, rng)
        report = grad_check(lambda: sum_of_squares(users(rows=np.array([0, 2]))),
                            [users.table])
        assert report.passed, str(report)


class TestParameterRegistry:
    def test_shared_modules_are_not_double_counted(self):
        rng = np.random.default_rng(19)
        enc = ContextEncoder(CFG, rng)
        params = enc.parameters()
        assert len({id(p) for p in params}) == len(params)
        # 2 blocks x (2 LN + 4 linear with bias + 2 ffn linear with bias) + final LN
        per_block = 2 * 2 + 4 * 2 + 2 * 2
        assert len(params) == 2 * per_block + 2

    def test_names_are_unique(self):
        rng = np.random.default_rng(20)
        enc = GraphEncoder(CFG, 2, rng)
        names = [p.name for p in enc.parameters()]
        assert len(set(names)) == len(names)
