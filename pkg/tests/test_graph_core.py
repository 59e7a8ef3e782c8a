"""Graph constructors, Laplacian variants, and graph metrics."""

import json

import numpy as np
import pytest

from graphband.errors import InvalidInputError
from graphband.graph_core import (
    Graph,
    GraphGenConfig,
    build_ba_graph,
    build_er_graph,
    build_rbf_graph,
    build_ws_graph,
    graph_from_json,
    graph_to_json,
    laplacians,
    smoothness,
    smoothness_pairwise,
    sparsity_measure,
)

from conftest import laplacian_of, random_weighted_graph


class TestGraphType:
    def test_rejects_asymmetric(self):
        with pytest.raises(InvalidInputError):
            Graph(np.array([[0.0, 1.0], [0.5, 0.0]]))

    def test_rejects_negative_and_diagonal_and_nonfinite(self):
        with pytest.raises(InvalidInputError):
            Graph(np.array([[0.0, -1.0], [-1.0, 0.0]]))
        with pytest.raises(InvalidInputError):
            Graph(np.array([[1.0, 0.0], [0.0, 0.0]]))
        with pytest.raises(InvalidInputError):
            Graph(np.array([[0.0, np.inf], [np.inf, 0.0]]))

    def test_degrees_match_weights(self, rng):
        g = random_weighted_graph(8, rng)
        np.testing.assert_array_equal(g.degrees, g.weights.sum(axis=1))

    def test_weights_immutable(self, rng):
        g = random_weighted_graph(5, rng)
        with pytest.raises(ValueError):
            g.weights[0, 1] = 3.0


class TestRbfGraph:
    def test_identical_rows_give_unit_weight(self):
        f = np.array([[1.0, 2.0], [1.0, 2.0]])
        g = build_rbf_graph(f, rho=1.0, threshold=0.0)
        np.testing.assert_allclose(g.weights, [[0.0, 1.0], [1.0, 0.0]])

    def test_threshold_one_empties_graph(self, rng):
        f = rng.standard_normal((5, 3))
        g = build_rbf_graph(f, rho=1.0, threshold=1.0)
        assert g.edge_count == 0

    def test_matches_scalar_loop(self, rng):
        f = rng.standard_normal((4, 3))
        rho, s = 2.0, 0.5
        g = build_rbf_graph(f, rho=rho, threshold=s)
        for i in range(4):
            for j in range(4):
                if i == j:
                    expected = 0.0
                else:
                    w = np.exp(-rho * float(np.sum((f[i] - f[j]) ** 2)))
                    expected = w if w >= s else 0.0
                assert abs(g.weights[i, j] - expected) < 1e-12

    def test_weight_equal_to_threshold_is_kept(self):
        # distance chosen so the kernel value is exactly representable
        f = np.array([[0.0], [1.0]])
        w = float(np.exp(-1.0))
        g = build_rbf_graph(f, rho=1.0, threshold=w)
        assert g.weights[0, 1] == w

    def test_rejects_nonfinite_features(self):
        with pytest.raises(InvalidInputError):
            build_rbf_graph(np.array([[np.nan, 0.0]]), rho=1.0)


class TestErGraph:
    def test_p_zero_empty(self):
        assert build_er_graph(10, 0.0, seed=1).edge_count == 0

    def test_p_one_complete(self):
        g = build_er_graph(10, 1.0, seed=1)
        assert g.edge_count == 10 * 9 // 2

    def test_deterministic(self):
        a = build_er_graph(30, 0.4, seed=9)
        b = build_er_graph(30, 0.4, seed=9)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_edge_count_matches_binomial_moments(self):
        # mean edge count over 200 seeds vs binomial(4950, 0.4)
        n, p, seeds = 100, 0.4, 200
        pairs = n * (n - 1) // 2
        counts = [build_er_graph(n, p, seed=s).edge_count for s in range(seeds)]
        expected = pairs * p
        std_of_mean = np.sqrt(pairs * p * (1 - p) / seeds)
        assert abs(np.mean(counts) - expected) < 3 * std_of_mean


class TestBaGraph:
    def test_core_plus_one_is_complete(self):
        m = 4
        g = build_ba_graph(m + 1, m, seed=0)
        assert g.edge_count == m * (m + 1) // 2
        assert np.all(g.weights[~np.eye(m + 1, dtype=bool)] == 1.0)

    @pytest.mark.parametrize("n,m", [(10, 1), (20, 3), (40, 5)])
    def test_edge_count_by_construction(self, n, m):
        g = build_ba_graph(n, m, seed=3)
        assert g.edge_count == (n - m) * m + m * (m - 1) // 2
        assert np.all(np.diag(g.weights) == 0)
        assert set(np.unique(g.weights)) <= {0.0, 1.0}

    def test_degree_distribution_heavy_tailed(self):
        ratios = []
        for seed in range(20):
            g = build_ba_graph(200, 5, seed=seed)
            deg = g.degrees
            ratios.append(deg.max() / np.median(deg))
        assert np.mean(ratios) > 3.0

    def test_m_ge_n_rejected(self):
        with pytest.raises(InvalidInputError):
            build_ba_graph(5, 5, seed=0)


class TestWsGraph:
    def test_ring_lattice(self):
        g = build_ws_graph(6, 2, 0.0, seed=0)
        expected = np.zeros((6, 6))
        for i in range(6):
            expected[i, (i + 1) % 6] = expected[(i + 1) % 6, i] = 1.0
        np.testing.assert_array_equal(g.weights, expected)

    @pytest.mark.parametrize("n,m", [(10, 2), (20, 4), (30, 6)])
    def test_no_rewiring_is_regular(self, n, m):
        g = build_ws_graph(n, m, 0.0, seed=0)
        np.testing.assert_array_equal(g.degrees, np.full(n, float(m)))

    def test_full_rewiring_preserves_edge_count(self):
        g = build_ws_graph(50, 4, 1.0, seed=5)
        assert g.edge_count == 50 * 4 // 2

    def test_odd_m_rejected(self):
        with pytest.raises(InvalidInputError):
            build_ws_graph(10, 3, 0.1, seed=0)


class TestLaplacians:
    def test_two_node_unit_graph(self):
        lap = laplacian_of([[0.0, 1.0], [1.0, 0.0]])
        expected = np.array([[1.0, -1.0], [-1.0, 1.0]])
        np.testing.assert_allclose(lap.random_walk, expected)
        np.testing.assert_allclose(lap.combinatorial, expected)
        np.testing.assert_allclose(lap.sym_normalized, expected)

    def test_path_graph_middle_row(self):
        w = np.zeros((3, 3))
        w[0, 1] = w[1, 0] = 1.0
        w[1, 2] = w[2, 1] = 1.0
        lap = laplacian_of(w)
        np.testing.assert_allclose(lap.random_walk[1], [-0.5, 1.0, -0.5])

    def test_isolated_node_row_is_identity(self):
        w = np.zeros((3, 3))
        w[0, 1] = w[1, 0] = 2.0
        lap = laplacian_of(w)
        np.testing.assert_array_equal(lap.random_walk[2], [0.0, 0.0, 1.0])
        np.testing.assert_array_equal(lap.sym_normalized[2], [0.0, 0.0, 1.0])
        assert lap.isolated_mask.tolist() == [False, False, True]

    def test_random_walk_structure(self, rng):
        for _ in range(10):
            g = random_weighted_graph(12, rng)
            lap = laplacians(g)
            rw = lap.random_walk
            np.testing.assert_allclose(np.diag(rw), 1.0)
            off = rw - np.diag(np.diag(rw))
            assert np.all(off <= 1e-15)
            non_isolated = ~lap.isolated_mask
            np.testing.assert_allclose(rw[non_isolated].sum(axis=1), 0.0, atol=1e-12)

    def test_combinatorial_psd_and_null_vector(self, rng):
        g = random_weighted_graph(10, rng)
        lap = laplacians(g)
        for _ in range(100):
            x = rng.standard_normal(10)
            assert x @ lap.combinatorial @ x >= -1e-10
        np.testing.assert_allclose(lap.combinatorial @ np.ones(10), 0.0, atol=1e-12)


class TestSmoothness:
    def test_constant_signal_on_connected_graph_is_zero(self, rng):
        w = np.ones((6, 6)) - np.eye(6)
        lap = laplacian_of(w)
        theta = np.tile(rng.standard_normal(4), (6, 1))
        assert abs(smoothness(theta, lap)) < 1e-12

    def test_empty_graph_gives_frobenius_norm(self, rng):
        lap = laplacian_of(np.zeros((4, 4)))
        theta = rng.standard_normal((4, 3))
        np.testing.assert_allclose(smoothness(theta, lap), np.sum(theta**2), rtol=1e-12)

    def test_trace_equals_pairwise_decomposition(self, rng):
        for _ in range(30):
            n = int(rng.integers(2, 21))
            d = int(rng.integers(1, 9))
            g = random_weighted_graph(n, rng)
            theta = rng.standard_normal((n, d))
            tr = smoothness(theta, laplacians(g))
            pw = smoothness_pairwise(theta, g)
            assert abs(tr - pw) <= 1e-10 * max(1.0, abs(tr))

    def test_symmetrization_identity(self, rng):
        g = random_weighted_graph(9, rng)
        lap = laplacians(g)
        theta = rng.standard_normal((9, 4))
        sym_form = float(np.sum(theta * (lap.random_walk_sym @ theta)))
        assert abs(smoothness(theta, lap) - sym_form) <= 1e-12 * max(1.0, abs(sym_form))

    def test_dimension_mismatch(self, rng):
        lap = laplacian_of(np.zeros((4, 4)))
        with pytest.raises(InvalidInputError):
            smoothness(rng.standard_normal((5, 2)), lap)


class TestSparsity:
    def test_complete_graph(self):
        g = Graph(np.ones((5, 5)) - np.eye(5))
        assert sparsity_measure(g) == 1.0

    def test_empty_graph(self):
        assert sparsity_measure(Graph(np.zeros((4, 4)))) == 0.0

    def test_path_graph(self):
        w = np.zeros((4, 4))
        for i in range(3):
            w[i, i + 1] = w[i + 1, i] = 1.0
        assert sparsity_measure(Graph(w)) == 0.5

    def test_single_node_rejected(self):
        with pytest.raises(InvalidInputError):
            sparsity_measure(Graph(np.zeros((1, 1))))


class TestSerialization:
    def test_round_trip(self, rng):
        g = random_weighted_graph(7, rng)
        restored = graph_from_json(graph_to_json(g))
        np.testing.assert_array_equal(g.weights, restored.weights)

    def test_edges_stored_once_upper_triangular(self, rng):
        g = random_weighted_graph(6, rng)
        doc = json.loads(graph_to_json(g))
        assert all(i < j for i, j, _ in doc["edges"])
        assert len(doc["edges"]) == g.edge_count

    def test_invalid_documents_rejected(self):
        with pytest.raises(InvalidInputError):
            graph_from_json(json.dumps({"n": 3, "edges": [[1, 0, 1.0]]}))
        with pytest.raises(InvalidInputError):
            graph_from_json(json.dumps({"n": 3, "edges": [[0, 1, 1.0], [0, 1, 2.0]]}))
        with pytest.raises(InvalidInputError):
            graph_from_json(json.dumps({"edges": []}))


class TestGenConfig:
    def test_validation(self):
        with pytest.raises(InvalidInputError):
            GraphGenConfig(model="unknown")
        with pytest.raises(InvalidInputError):
            GraphGenConfig(model="er", er_p=1.5)
        with pytest.raises(InvalidInputError):
            GraphGenConfig(model="ws", ws_m=3)
        with pytest.raises(InvalidInputError):
            GraphGenConfig(model="rbf", rbf_rho=0.0)

    def test_same_config_same_graph(self):
        cfg = GraphGenConfig(model="ba", ba_m=3, seed=17)
        a = build_ba_graph(25, cfg.ba_m, cfg.seed)
        b = build_ba_graph(25, cfg.ba_m, cfg.seed)
        np.testing.assert_array_equal(a.weights, b.weights)
