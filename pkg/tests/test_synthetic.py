"""Tests for the competing-spread simulator."""

import numpy as np
import pytest

from proplearn.errors import ConfigError
from proplearn.graphs import build_view
from proplearn.synthetic import SyntheticConfig, simulate_process, simulate_synthetic


class TestConfigValidation:
    def test_graph_task_rejects_small_world(self):
        with pytest.raises(ConfigError, match="propagation trees"):
            SyntheticConfig(task="graph", topology=("tree", "small-world"))

    def test_node_task_accepts_small_world(self):
        cfg = SyntheticConfig(task="node", topology=("small-world",))
        assert cfg.topology == ("small-world",)

    def test_bad_beta(self):
        with pytest.raises(ConfigError, match="beta"):
            SyntheticConfig(beta=(0.4,))
        with pytest.raises(ConfigError, match="beta"):
            SyntheticConfig(beta=(-0.1, 0.2))

    def test_bad_label_rule(self):
        with pytest.raises(ConfigError, match="label_rule"):
            SyntheticConfig(label_rule="alternating")

    def test_string_topology_is_wrapped(self):
        cfg = SyntheticConfig(topology="star")
        assert cfg.topology == ("star",)


class TestProcess:
    def test_saturating_rate_infects_everything_with_item_one(self):
        """With beta = (1e6, 0) the seed's item floods every reachable node."""
        cfg = SyntheticConfig(task="graph", n_instances=10, beta=(1e6, 0.0),
                              label_rule="majority", steps=10, seed=3)
        data = simulate_synthetic(cfg)
        for tree in data.trees:
            assert tree.label == 0
            np.testing.assert_array_equal(tree.features[:, 1], np.ones(tree.n_nodes))
            np.testing.assert_array_equal(tree.features[:, 2], np.zeros(tree.n_nodes))

    def test_zero_rate_item_never_spreads(self):
        rng = np.random.default_rng(0)
        adjacency = np.ones((6, 6)) - np.eye(6)
        state, when = simulate_process(adjacency, {0: 1}, np.array([0.7, 0.0]),
                                       steps=10, dt=1.0, rng=rng)
        assert state[0] == 2 and when[0] == 0
        np.testing.assert_array_equal(state[1:], np.zeros(5))
        np.testing.assert_array_equal(when[1:], -np.ones(5))

    def test_star_leaf_infection_frequency(self):
        """One step on a star with beta1 = 0.3: each leaf flips with
        probability 1 - exp(-0.3); check a 10k-trial frequency to 3 sigma."""
        n_leaves = 10_000
        adjacency = np.zeros((n_leaves + 1, n_leaves + 1))
        adjacency[0, 1:] = adjacency[1:, 0] = 1.0
        rng = np.random.default_rng(7)
        state, when = simulate_process(adjacency, {0: 0}, np.array([0.3, 0.0]),
                                       steps=1, dt=1.0, rng=rng)
        p = 1.0 - np.exp(-0.3)
        freq = (state[1:] == 1).mean()
        sigma = np.sqrt(p * (1 - p) / n_leaves)
        assert abs(freq - p) < 3 * sigma

    def test_activation_times_respect_hops(self):
        """A node cannot activate before its BFS hop distance."""
        cfg = SyntheticConfig(task="graph", n_instances=20, beta=(5.0, 5.0), seed=11)
        data = simulate_synthetic(cfg)
        for tree in data.trees:
            view = build_view(tree)
            active = tree.features[:, -1] * cfg.steps
            for v in range(tree.n_nodes):
                if tree.features[v, 0] < 0.5:  # activated
                    assert active[v] >= view.hop[v] - 1e-9

    def test_determinism_per_index(self):
        cfg = SyntheticConfig(task="graph", n_instances=5, seed=21)
        a = simulate_synthetic(cfg)
        b = simulate_synthetic(cfg)
        for ta, tb in zip(a.trees, b.trees):
            assert ta.label == tb.label
            np.testing.assert_array_equal(ta.features, tb.features)

    def test_prefix_stability(self):
        """Growing the corpus leaves earlier instances untouched."""
        small = simulate_synthetic(SyntheticConfig(task="graph", n_instances=3, seed=5))
        large = simulate_synthetic(SyntheticConfig(task="graph", n_instances=6, seed=5))
        for ta, tb in zip(small.trees, large.trees[:3]):
            assert ta.label == tb.label and ta.edges == tb.edges
            np.testing.assert_array_equal(ta.features, tb.features)


class TestGraphCorpus:
    def test_balanced_rule_is_roughly_even(self):
        cfg = SyntheticConfig(task="graph", n_instances=400, seed=1)
        labels = np.array([t.label for t in simulate_synthetic(cfg).trees])
        assert 0.4 < labels.mean() < 0.6

    def test_majority_rule_follows_rates(self):
        cfg = SyntheticConfig(task="graph", n_instances=400, beta=(0.4, 0.1),
                              label_rule="majority", seed=2)
        labels = np.array([t.label for t in simulate_synthetic(cfg).trees])
        # P(item 2) = 0.2; 3 sigma of 400 draws is ~0.06
        assert abs(labels.mean() - 0.2) < 0.06

    def test_label_noise_flips_about_the_stated_fraction(self):
        base = SyntheticConfig(task="graph", n_instances=500, beta=(1e6, 0.0),
                               label_rule="majority", seed=9)
        noisy = SyntheticConfig(task="graph", n_instances=500, beta=(1e6, 0.0),
                                label_rule="majority", label_noise=0.1, seed=9)
        clean_labels = [t.label for t in simulate_synthetic(base).trees]
        assert set(clean_labels) == {0}
        flipped = np.mean([t.label for t in simulate_synthetic(noisy).trees])
        assert 0.05 < flipped < 0.16

    def test_feature_noise_perturbs_but_preserves_signal(self):
        cfg = SyntheticConfig(task="graph", n_instances=5, beta=(1e6, 0.0),
                              label_rule="majority", feature_noise=0.05, seed=4)
        for tree in simulate_synthetic(cfg).trees:
            assert np.abs(tree.features[:, 1] - 1.0).max() < 0.5
            assert np.abs(tree.features[:, 1] - 1.0).max() > 0.0

    def test_sizes_stay_in_range_and_star_shape(self):
        cfg = SyntheticConfig(task="graph", n_instances=30, topology=("star",),
                              min_nodes=5, max_nodes=9, seed=6)
        for tree in simulate_synthetic(cfg).trees:
            assert 5 <= tree.n_nodes <= 9
            assert all(u == "n0" for u, _ in tree.edges)


class TestNodeCorpus:
    def test_partial_labels_and_item_blind_features(self):
        cfg = SyntheticConfig(task="node", network_size=40, n_seeds=4,
                              beta=(0.8, 0.8), steps=6, seed=13)
        net = simulate_synthetic(cfg).network
        assert 0 < len(net.labels) <= 40
        assert set(net.labels.values()) <= {0, 1}
        # the two indicator columns are complementary
        np.testing.assert_allclose(net.features[:, 0] + net.features[:, 1],
                                   np.ones(40), atol=1e-12)

    def test_small_world_node_network(self):
        cfg = SyntheticConfig(task="node", topology=("small-world",),
                              network_size=30, beta=(1.5, 1.5), seed=8)
        net = simulate_synthetic(cfg).network
        assert net.n_nodes == 30
        assert len(net.relations[0]) > 0


class TestLinkCorpus:
    def test_cascades_have_at_least_two_events(self):
        cfg = SyntheticConfig(task="link", n_instances=25, network_size=30,
                              beta=(1.0, 0.5), steps=6, seed=17)
        corpus = simulate_synthetic(cfg).corpus
        assert len(corpus.cascades) == 25
        for cascade in corpus.cascades:
            assert len(cascade) >= 2
            stamps = [t for _, t in cascade.events]
            assert stamps[0] == 0.0
            assert all(b >= a for a, b in zip(stamps, stamps[1:]))

    def test_cascade_users_exist_in_network(self):
        cfg = SyntheticConfig(task="link", n_instances=10, network_size=20,
                              beta=(1.2, 0.3), seed=19)
        corpus = simulate_synthetic(cfg).corpus
        known = set(corpus.network.node_ids)
        for cascade in corpus.cascades:
            assert set(cascade.users) <= known
