"""User graphs: random-graph constructors, Laplacian variants, and graph metrics.

All constructors return an immutable :class:`Graph` whose weight matrix is
symmetric, nonnegative, and zero on the diagonal.  Randomized constructors
take an explicit seed and are bit-reproducible; no global RNG state is used.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "Graph",
    "LaplacianSet",
    "GraphGenConfig",
    "build_rbf_graph",
    "build_er_graph",
    "build_ba_graph",
    "build_ws_graph",
    "laplacians",
    "smoothness",
    "smoothness_pairwise",
    "sparsity_measure",
    "graph_to_json",
    "graph_from_json",
]

_SYM_TOL = 0.0  # weights must be exactly symmetric; constructors guarantee it


@dataclass(frozen=True)
class Graph:
    """An undirected weighted graph on ``n`` nodes.

    ``weights`` is the (n, n) adjacency matrix W with W[i, j] = W[j, i] >= 0
    and a zero diagonal.  ``degrees`` are the row sums of W.
    """

    weights: np.ndarray
    degrees: np.ndarray = field(init=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise InvalidInputError(f"weight matrix must be square, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise InvalidInputError("weight matrix contains non-finite entries")
        if np.any(w < 0):
            raise InvalidInputError("weight matrix contains negative entries")
        if np.any(np.diag(w) != 0):
            raise InvalidInputError("weight matrix must have a zero diagonal")
        if not np.array_equal(w, w.T):
            raise InvalidInputError("weight matrix must be symmetric")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        deg = w.sum(axis=1)
        deg.setflags(write=False)
        object.__setattr__(self, "degrees", deg)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def edge_count(self) -> int:
        """Number of undirected edges (nonzero weights above the diagonal)."""
        return int(np.count_nonzero(np.triu(self.weights, k=1)))


@dataclass(frozen=True)
class LaplacianSet:
    """The three Laplacian variants of a graph.

    ``combinatorial`` is D - W.  ``sym_normalized`` is D^-1/2 (D - W) D^-1/2.
    ``random_walk`` is D^-1 (D - W); it is row-normalized, generally
    asymmetric, has unit diagonal, and zero row sums on non-isolated nodes.
    Isolated nodes get an identity row/column in the normalized variants so
    downstream solvers never divide by zero degree.
    """

    combinatorial: np.ndarray
    sym_normalized: np.ndarray
    random_walk: np.ndarray
    isolated_mask: np.ndarray

    def __post_init__(self):
        for name in ("combinatorial", "sym_normalized", "random_walk", "isolated_mask"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.random_walk.shape[0]

    @property
    def random_walk_sym(self) -> np.ndarray:
        """Symmetric part of the random-walk Laplacian.

        The quadratic form of the random-walk Laplacian depends only on this
        matrix.  Note it is not positive semidefinite in general: for
        irregular graphs its smallest eigenvalue can be slightly negative.
        """
        rw = self.random_walk
        return (rw + rw.T) / 2.0


@dataclass(frozen=True)
class GraphGenConfig:
    """Parameters for the four supported random-graph models."""

    model: str  # one of "rbf", "er", "ba", "ws"
    rbf_rho: float = 0.05
    sparsity_threshold: float = 0.5
    er_p: float = 0.4
    ba_m: int = 5
    ws_m: int = 4
    ws_p: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.model not in ("rbf", "er", "ba", "ws"):
            raise InvalidInputError(f"unknown graph model {self.model!r}")
        if self.model == "rbf":
            if self.rbf_rho <= 0:
                raise InvalidInputError("rbf_rho must be positive")
            if not 0.0 <= self.sparsity_threshold <= 1.0:
                raise InvalidInputError("sparsity_threshold must lie in [0, 1]")
        if self.model == "er" and not 0.0 <= self.er_p <= 1.0:
            raise InvalidInputError("er_p must lie in [0, 1]")
        if self.model == "ba" and self.ba_m < 1:
            raise InvalidInputError("ba_m must be at least 1")
        if self.model == "ws":
            if self.ws_m % 2 != 0 or self.ws_m < 2:
                raise InvalidInputError("ws_m must be a positive even integer")
            if not 0.0 <= self.ws_p <= 1.0:
                raise InvalidInputError("ws_p must lie in [0, 1]")


def build_graph(config: GraphGenConfig, features: np.ndarray | None = None, n: int | None = None) -> Graph:
    """Dispatch to the model-specific constructor for ``config``.

    The RBF model needs node ``features``; the unweighted models need ``n``.
    """
    if config.model == "rbf":
        if features is None:
            raise InvalidInputError("RBF graph construction requires node features")
        return build_rbf_graph(features, config.rbf_rho, config.sparsity_threshold)
    if n is None:
        raise InvalidInputError(f"{config.model} graph construction requires a node count")
    if config.model == "er":
        return build_er_graph(n, config.er_p, config.seed)
    if config.model == "ba":
        return build_ba_graph(n, config.ba_m, config.seed)
    return build_ws_graph(n, config.ws_m, config.ws_p, config.seed)


def build_rbf_graph(features: np.ndarray, rho: float, threshold: float = 0.0) -> Graph:
    """Gaussian-kernel similarity graph: W[i, j] = exp(-rho * ||f_i - f_j||^2).

    Entries strictly below ``threshold`` are removed; entries equal to the
    threshold are kept.  The result is fully connected when ``threshold`` is 0.
    """
    f = np.asarray(features, dtype=float)
    if f.ndim != 2 or f.shape[0] < 1:
        raise InvalidInputError(f"features must be a (n, d) matrix, got shape {f.shape}")
    if not np.all(np.isfinite(f)):
        raise InvalidInputError("features contain non-finite entries")
    if rho <= 0:
        raise InvalidInputError("rho must be positive")
    if not 0.0 <= threshold <= 1.0:
        raise InvalidInputError("threshold must lie in [0, 1]")
    sq = np.sum(f * f, axis=1)
    dist_sq = sq[:, None] + sq[None, :] - 2.0 * (f @ f.T)
    np.maximum(dist_sq, 0.0, out=dist_sq)
    w = np.exp(-rho * dist_sq)
    w = (w + w.T) / 2.0  # kill rounding asymmetry from the Gram trick
    np.fill_diagonal(w, 0.0)
    w[w < threshold] = 0.0
    return Graph(w)


def build_er_graph(n: int, p: float, seed: int) -> Graph:
    """Erdos-Renyi graph: each of the n(n-1)/2 pairs is an edge w.p. ``p``."""
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError("p must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < p, k=1)
    w = upper.astype(float)
    w += w.T
    return Graph(w)


def build_ba_graph(n: int, m: int, seed: int) -> Graph:
    """Preferential-attachment graph.

    Starts from a complete core on ``m`` nodes; each of the remaining
    ``n - m`` nodes attaches ``m`` distinct edges to existing nodes with
    probability proportional to current degree.  Total edge count is
    therefore m(m-1)/2 + (n-m)m; with n = m+1 the result is the complete
    graph on m+1 nodes.
    """
    if m < 1:
        raise InvalidInputError("m must be at least 1")
    if m >= n:
        raise InvalidInputError(f"m must be smaller than n (got m={m}, n={n})")
    rng = np.random.default_rng(seed)
    w = np.zeros((n, n))
    w[:m, :m] = 1.0
    np.fill_diagonal(w, 0.0)
    degrees = w.sum(axis=1)
    for new in range(m, n):
        candidates = np.arange(new)
        weights = degrees[:new]
        total = weights.sum()
        if total == 0:
            probs = np.full(new, 1.0 / new)  # m = 1 core has degree zero
        else:
            probs = weights / total
        targets: list[int] = []
        # sample without replacement, degree-proportional
        remaining = candidates
        rem_probs = probs
        for _ in range(m):
            pick = rng.choice(remaining, p=rem_probs)
            targets.append(int(pick))
            keep = remaining != pick
            remaining = remaining[keep]
            rem_probs = rem_probs[keep]
            s = rem_probs.sum()
            if s > 0:
                rem_probs = rem_probs / s
            elif remaining.size:
                rem_probs = np.full(remaining.size, 1.0 / remaining.size)
        for t in targets:
            w[new, t] = w[t, new] = 1.0
            degrees[t] += 1.0
            degrees[new] += 1.0
    return Graph(w)


def build_ws_graph(n: int, m: int, p: float, seed: int) -> Graph:
    """Watts-Strogatz small-world graph.

    Starts from the m-regular ring lattice (``m`` even: m/2 neighbours on
    each side) and rewires the far endpoint of each lattice edge with
    probability ``p``, avoiding self-loops and duplicate edges.  The edge
    count n*m/2 is preserved; p = 0 returns the exact lattice.
    """
    if m % 2 != 0 or m < 2:
        raise InvalidInputError("m must be a positive even integer")
    if m >= n:
        raise InvalidInputError(f"m must be smaller than n (got m={m}, n={n})")
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError("p must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    w = np.zeros((n, n))
    for k in range(1, m // 2 + 1):
        for i in range(n):
            j = (i + k) % n
            w[i, j] = w[j, i] = 1.0
    if p > 0:
        for k in range(1, m // 2 + 1):
            for i in range(n):
                j = (i + k) % n
                if w[i, j] == 0.0:  # already rewired away by an earlier pass
                    continue
                if rng.random() >= p:
                    continue
                choices = np.flatnonzero((w[i] == 0.0))
                choices = choices[choices != i]
                if choices.size == 0:
                    continue
                new_j = int(rng.choice(choices))
                w[i, j] = w[j, i] = 0.0
                w[i, new_j] = w[new_j, i] = 1.0
    return Graph(w)


def laplacians(graph: Graph) -> LaplacianSet:
    """Compute the combinatorial, symmetric-normalized, and random-walk Laplacians.

    Isolated nodes (zero degree) get a unit diagonal entry and zero
    off-diagonals in both normalized variants.
    """
    w = graph.weights
    deg = graph.degrees
    n = graph.n
    isolated = deg == 0
    comb = np.diag(deg) - w

    safe_deg = np.where(isolated, 1.0, deg)
    inv_sqrt = 1.0 / np.sqrt(safe_deg)
    sym = inv_sqrt[:, None] * comb * inv_sqrt[None, :]
    rw = comb / safe_deg[:, None]
    if isolated.any():
        # an isolated node's W row/column is all-zero, so off-diagonal
        # entries are already 0 in both variants; only the diagonal needs
        # the unit convention
        idx = np.flatnonzero(isolated)
        sym[idx, idx] = 1.0
        rw[idx, idx] = 1.0
    return LaplacianSet(
        combinatorial=comb,
        sym_normalized=sym,
        random_walk=rw,
        isolated_mask=isolated,
    )


def smoothness(theta: np.ndarray, lap: LaplacianSet) -> float:
    """Quadratic-form smoothness tr(Theta^T Lrw Theta) of node signals.

    Rows of ``theta`` are per-node signal vectors.  Smaller values mean the
    signal varies less across strongly connected node pairs.  The value can
    be slightly negative for irregular graphs because the random-walk
    Laplacian's symmetric part is not guaranteed positive semidefinite.
    """
    th = np.asarray(theta, dtype=float)
    if th.ndim != 2 or th.shape[0] != lap.n:
        raise InvalidInputError(
            f"theta must be (n, d) with n={lap.n}, got shape {th.shape}"
        )
    return float(np.sum(th * (lap.random_walk @ th)))


def smoothness_pairwise(theta: np.ndarray, graph: Graph) -> float:
    """Edge-by-edge evaluation of the random-walk smoothness quadratic form.

    Independent scalar-loop cross-check for :func:`smoothness`.  Per ordered
    edge (i, j) with a = W[i,j]/D[i] and b = W[j,i]/D[j] the contribution is

        (1/4) * [(a + b) * (theta_i - theta_j)^2 + (a - b) * (theta_i^2 - theta_j^2)]

    summed over signal coordinates.  The second, antisymmetric term vanishes
    when the random walk is flow-balanced (a = b on every edge, e.g. regular
    graphs), leaving the classical weighted-difference sum.  Isolated nodes
    contribute their squared norm (unit diagonal convention).
    """
    th = np.asarray(theta, dtype=float)
    w = graph.weights
    deg = graph.degrees
    n = graph.n
    if th.ndim != 2 or th.shape[0] != n:
        raise InvalidInputError(f"theta must be (n, d) with n={n}, got shape {th.shape}")
    total = 0.0
    for i in range(n):
        if deg[i] == 0:
            total += float(th[i] @ th[i])
            continue
        for j in range(n):
            if w[i, j] == 0.0 and w[j, i] == 0.0:
                continue
            a = w[i, j] / deg[i]
            b = w[j, i] / deg[j]
            for k in range(th.shape[1]):
                diff = th[i, k] - th[j, k]
                total += 0.25 * ((a + b) * diff * diff + (a - b) * (th[i, k] ** 2 - th[j, k] ** 2))
    return total


def sparsity_measure(graph: Graph) -> float:
    """Fraction of ordered node pairs joined by an edge: edges / (n(n-1))."""
    n = graph.n
    if n < 2:
        raise InvalidInputError("sparsity requires at least 2 nodes")
    nonzero = np.count_nonzero(graph.weights) - np.count_nonzero(np.diag(graph.weights))
    return float(nonzero) / float(n * (n - 1))


def graph_to_json(graph: Graph) -> str:
    """Serialize to ``{"n": ..., "edges": [[i, j, w], ...]}`` with i < j."""
    rows, cols = np.nonzero(np.triu(graph.weights, k=1))
    edges = [[int(i), int(j), float(graph.weights[i, j])] for i, j in zip(rows, cols)]
    return json.dumps({"n": graph.n, "edges": edges})


def graph_from_json(text: str | Path) -> Graph:
    """Parse the :func:`graph_to_json` document; validates indices and weights."""
    if isinstance(text, Path):
        text = text.read_text()
    doc = json.loads(text)
    if not isinstance(doc, dict) or "n" not in doc or "edges" not in doc:
        raise InvalidInputError("graph document must contain 'n' and 'edges'")
    n = int(doc["n"])
    if n < 1:
        raise InvalidInputError("graph must have at least one node")
    w = np.zeros((n, n))
    for entry in doc["edges"]:
        if len(entry) != 3:
            raise InvalidInputError(f"edge entry must be [i, j, w], got {entry!r}")
        i, j, weight = int(entry[0]), int(entry[1]), float(entry[2])
        if not 0 <= i < j < n:
            raise InvalidInputError(f"edge ({i}, {j}) must satisfy 0 <= i < j < n={n}")
        if weight <= 0:
            raise InvalidInputError(f"edge ({i}, {j}) has non-positive weight {weight}")
        if w[i, j] != 0.0:
            raise InvalidInputError(f"duplicate edge ({i}, {j})")
        w[i, j] = w[j, i] = weight
    return Graph(w)
