"""Shared helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from graphband.estimator import UserStats
from graphband.graph_core import Graph, laplacians


def random_weighted_graph(n: int, rng: np.random.Generator, density: float = 0.5) -> Graph:
    """Random symmetric weighted graph; may contain isolated nodes."""
    w = rng.random((n, n))
    w = (w + w.T) / 2.0
    w[rng.random((n, n)) > density] = 0.0
    w = np.triu(w, k=1)
    w = w + w.T
    return Graph(w)


def random_connected_graph(n: int, rng: np.random.Generator) -> Graph:
    """Random weighted graph guaranteed connected (cycle backbone)."""
    w = np.zeros((n, n))
    for i in range(n):
        j = (i + 1) % n
        w[i, j] = w[j, i] = 0.5 + rng.random()
    extra = rng.random((n, n)) < 0.3
    vals = rng.random((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if extra[i, j]:
                w[i, j] = w[j, i] = vals[i, j]
    return Graph(w)


def random_trajectory(
    n: int,
    d: int,
    steps: int,
    rng: np.random.Generator,
    lam_gram: float = 0.01,
) -> list[UserStats]:
    """Per-user statistics after a stream of random arms and payoffs."""
    stats = [UserStats(d, lam_gram) for _ in range(n)]
    for _ in range(steps):
        i = int(rng.integers(n))
        x = rng.standard_normal(d)
        x /= max(1.0, np.linalg.norm(x))
        stats[i].update(x, float(rng.normal()))
    return stats


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def laplacian_of(w: np.ndarray):
    return laplacians(Graph(np.asarray(w, dtype=float)))
