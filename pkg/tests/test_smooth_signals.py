"""Smooth-population generation and normalization."""

import numpy as np
import pytest

from graphband.errors import InvalidInputError
from graphband.graph_core import Graph, laplacians, smoothness
from graphband.smooth_signals import (
    UserPopulation,
    generate_smooth,
    normalize_population,
    population_from_json,
    population_to_json,
    random_theta0,
    smoothing_objective,
)

from conftest import laplacian_of, random_connected_graph


class TestRandomInit:
    def test_shapes_and_scalar_case(self):
        assert random_theta0(1, 1, seed=0).shape == (1, 1)
        assert random_theta0(7, 3, seed=0).shape == (7, 3)

    def test_deterministic(self):
        np.testing.assert_array_equal(random_theta0(5, 4, 3), random_theta0(5, 4, 3))

    def test_column_means_near_zero(self):
        theta = random_theta0(1000, 5, seed=2)
        assert np.all(np.abs(theta.mean(axis=0)) < 4 / np.sqrt(1000))

    def test_rejects_bad_sizes(self):
        with pytest.raises(InvalidInputError):
            random_theta0(0, 3, seed=0)


def complete_graph_lap(n):
    return laplacian_of(np.ones((n, n)) - np.eye(n))


class TestGenerateSmooth:
    def test_gamma_zero_is_identity(self, rng):
        lap = complete_graph_lap(5)
        theta0 = rng.standard_normal((5, 3))
        np.testing.assert_array_equal(generate_smooth(theta0, lap, 0.0), theta0)

    def test_large_gamma_kills_roughness(self, rng):
        lap = complete_graph_lap(8)
        theta0 = rng.standard_normal((8, 3))
        out = generate_smooth(theta0, lap, 1e6)
        assert abs(smoothness(out, lap)) < 1e-3 * abs(smoothness(theta0, lap))

    def test_smoothness_monotone_in_gamma(self, rng):
        g = random_connected_graph(10, rng)
        lap = laplacians(g)
        theta0 = rng.standard_normal((10, 4))
        values = [smoothness(generate_smooth(theta0, lap, gam), lap) for gam in (0.1, 0.5, 1, 2, 5, 10)]
        assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))

    def test_empty_graph_is_scalar_shrinkage(self, rng):
        lap = laplacian_of(np.zeros((6, 6)))
        theta0 = rng.standard_normal((6, 2))
        gamma = 3.7
        out = generate_smooth(theta0, lap, gamma)
        np.testing.assert_allclose(out, theta0 / (1 + gamma), rtol=1e-12)

    def test_output_is_local_minimum(self, rng):
        # perturbations in random unit directions must not improve the
        # objective; tested on a regular (circulant-weight) graph where the
        # objective is convex and the minimizer exists for every gamma
        n = 8
        offsets = rng.random(n // 2) + 0.1
        w = np.zeros((n, n))
        for i in range(n):
            for k, c in enumerate(offsets, start=1):
                j = (i + k) % n
                w[i, j] = w[j, i] = c
        np.fill_diagonal(w, 0.0)
        lap = laplacians(Graph(w))
        theta0 = rng.standard_normal((n, 3))
        gamma = 2.0
        out = generate_smooth(theta0, lap, gamma)
        base = smoothing_objective(out, theta0, lap, gamma)
        assert base <= smoothing_objective(theta0, theta0, lap, gamma) + 1e-12
        for _ in range(50):
            p = rng.standard_normal(out.shape)
            p /= np.linalg.norm(p)
            assert smoothing_objective(out + 1e-3 * p, theta0, lap, gamma) > base

    def test_gamma_negative_rejected(self, rng):
        with pytest.raises(InvalidInputError):
            generate_smooth(rng.standard_normal((4, 2)), complete_graph_lap(4), -1.0)

    def test_defined_for_large_gamma_on_irregular_graph(self, rng):
        # the symmetrized operator can have negative eigenvalues; the solve
        # must stay well-posed regardless of gamma
        w = np.zeros((3, 3))
        w[0, 1] = w[1, 0] = 1.0
        w[1, 2] = w[2, 1] = 1.0
        lap = laplacian_of(w)
        out = generate_smooth(rng.standard_normal((3, 2)), lap, 1e6)
        assert np.all(np.isfinite(out))


class TestNormalizePopulation:
    def test_identity_two_by_two(self):
        out, info = normalize_population(np.eye(2))
        # the matrix-norm stage maps I -> 2I; rows then exceed the unit
        # ball, so the cap divides by 2
        np.testing.assert_allclose(out * info.row_cap_scale, 2 * np.eye(2), atol=1e-12)
        assert info.row_cap_scale == 2.0
        np.testing.assert_allclose(out, np.eye(2), atol=1e-12)

    def test_idempotent(self, rng):
        theta = rng.standard_normal((12, 4))
        once, _ = normalize_population(theta)
        twice, _ = normalize_population(once)
        np.testing.assert_allclose(once, twice, atol=1e-10)

    def test_matrix_stage_hits_target_norm(self, rng):
        theta = rng.standard_normal((20, 5))
        out, info = normalize_population(theta)
        staged = out * info.row_cap_scale
        assert abs(np.linalg.norm(staged, ord=2) - 20) < 1e-8

    def test_frobenius_variant(self, rng):
        theta = rng.standard_normal((10, 3))
        out, info = normalize_population(theta, norm="fro")
        staged = out * info.row_cap_scale
        assert abs(np.linalg.norm(staged, "fro") - 10) < 1e-8
        assert info.norm_kind == "fro"

    def test_rows_capped_to_unit_ball(self, rng):
        out, _ = normalize_population(rng.standard_normal((15, 4)))
        assert np.all(np.linalg.norm(out, axis=1) <= 1.0 + 1e-12)

    def test_zero_matrix_rejected(self):
        with pytest.raises(InvalidInputError):
            normalize_population(np.zeros((3, 2)))


class TestUserPopulation:
    def test_rejects_rows_outside_unit_ball(self):
        with pytest.raises(InvalidInputError):
            UserPopulation(theta=np.full((2, 2), 2.0), gen_gamma=1.0, source_theta0=np.zeros((2, 2)))

    def test_rejects_nonfinite(self):
        with pytest.raises(InvalidInputError):
            UserPopulation(theta=np.array([[np.nan, 0.0]]), gen_gamma=1.0, source_theta0=np.zeros((1, 2)))

    def test_json_round_trip(self, rng):
        theta, _ = normalize_population(rng.standard_normal((6, 3)))
        pop = UserPopulation(theta=theta, gen_gamma=2.5, source_theta0=rng.standard_normal((6, 3)))
        restored = population_from_json(population_to_json(pop))
        np.testing.assert_allclose(restored.theta, pop.theta)
        np.testing.assert_allclose(restored.source_theta0, pop.source_theta0)
        assert restored.gen_gamma == 2.5
