"""Arm-selection policies behind a single select/observe interface.

Implemented policies:

* ``GraphUCBPolicy`` -- optimistic selection with the graph-aware precision
  and confidence width; refreshes the full estimate matrix through the
  exact joint solve after every observation.
* ``GraphUCBLocalPolicy`` -- same selection rule, but only the served
  user's row is recomputed, via the linear-cost local approximation.
* ``LinUCBPolicy`` -- independent per-user ridge + UCB, no graph.
* ``GobLinPolicy`` -- joint estimation coupled through the combinatorial
  Laplacian with a tunable sqrt(log t) exploration width.
* ``ClubPolicy`` -- adaptive user clustering: acts with a cluster-level
  ridge estimate and deletes graph edges between users whose estimates
  drift apart.

Policies are deterministic given their state; all randomness lives in the
environment.  ``select`` must be followed by exactly one ``observe`` for
the same user before the next ``select``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, StateError
from .estimator import (
    LAM_GRAM_DEFAULT,
    ConfidenceParams,
    JointState,
    UserStats,
    beta_width,
    delta_hat,
    estimate_local,
    solve_joint,
    user_precision,
)
from .graph_core import Graph, LaplacianSet

__all__ = [
    "Policy",
    "GraphUCBPolicy",
    "GraphUCBLocalPolicy",
    "LinUCBPolicy",
    "GobLinPolicy",
    "ClubPolicy",
    "mahalanobis_inv_norms",
]


def mahalanobis_inv_norms(arms: np.ndarray, mat: np.ndarray) -> np.ndarray:
    """Row-wise ||x||_{mat^{-1}} for an SPD matrix, via one Cholesky solve."""
    cho = scipy.linalg.cho_factor(mat, check_finite=False)
    z = scipy.linalg.cho_solve(cho, arms.T, check_finite=False)
    return np.sqrt(np.maximum(np.sum(arms.T * z, axis=0), 0.0))


class Policy:
    """Select/observe contract shared by all policies."""

    def __init__(self, n_users: int, dim: int):
        self.n_users = n_users
        self.dim = dim
        self.t = 0  # completed observations
        self.last_select_info: dict = {}
        self._pending: int | None = None

    # -- subclass hooks -------------------------------------------------
    def _select(self, user: int, arms: np.ndarray) -> tuple[int, dict]:
        raise NotImplementedError

    def _observe(self, user: int, x: np.ndarray, y: float) -> None:
        raise NotImplementedError

    # -- public protocol ------------------------------------------------
    def select(self, user: int, arms: np.ndarray) -> int:
        arms = np.asarray(arms, dtype=float)
        if arms.ndim != 2 or arms.shape[0] == 0:
            raise InvalidInputError("arm set must be a non-empty (m, d) matrix")
        if self._pending is not None:
            raise StateError(
                f"select called while observation for user {self._pending} is pending"
            )
        if not 0 <= user < self.n_users:
            raise InvalidInputError(f"user index {user} out of range")
        idx, info = self._select(user, arms)
        self._pending = user
        self.last_select_info = info
        return idx

    def observe(self, user: int, x: np.ndarray, y: float) -> None:
        if self._pending is None:
            raise StateError("observe called without a matching select")
        if self._pending != user:
            raise StateError(
                f"observe for user {user} does not match pending select for user {self._pending}"
            )
        self._observe(user, np.asarray(x, dtype=float), float(y))
        self._pending = None
        self.t += 1

    def diagnostics(self) -> dict:
        """Metrics captured by the most recent select."""
        return dict(self.last_select_info)


class _GraphUCBBase(Policy):
    """Shared state and selection rule of the two graph-aware policies."""

    def __init__(
        self,
        lap: LaplacianSet,
        dim: int,
        params: ConfidenceParams,
        lam_gram: float = LAM_GRAM_DEFAULT,
    ):
        super().__init__(lap.n, dim)
        self.lap = lap
        self.alpha = params.alpha
        self.params = params
        self.stats = [UserStats(dim, lam_gram) for _ in range(lap.n)]
        self.theta_hat = np.zeros((lap.n, dim))

    def _delta_row(self, user: int) -> np.ndarray:
        return delta_hat(user, self.theta_hat, self.lap)

    def _select(self, user: int, arms: np.ndarray) -> tuple[int, dict]:
        prec = user_precision(user, self.stats, self.lap, self.alpha)
        gap = self._delta_row(user)
        beta = beta_width(prec.v_mat, self.params.with_delta_vec(gap))
        bonus = mahalanobis_inv_norms(arms, prec.lambda_mat)
        scores = arms @ self.theta_hat[user] + beta * bonus
        idx = int(np.argmax(scores))  # ties resolve to the lowest index
        x = arms[idx]
        v_norms = mahalanobis_inv_norms(x[None, :], prec.v_mat)
        info = {
            "beta": beta,
            "ucb": float(scores[idx]),
            "delta_norm": float(np.linalg.norm(gap)),
            "psi_num_term": float(bonus[idx] ** 2),
            "psi_den_term": float(v_norms[0] ** 2),
        }
        return idx, info


class GraphUCBPolicy(_GraphUCBBase):
    """Exact-joint variant: every observation refreshes all user estimates."""

    def __init__(
        self,
        lap: LaplacianSet,
        dim: int,
        params: ConfidenceParams,
        lam_gram: float = LAM_GRAM_DEFAULT,
        joint_ridge: float = 0.0,
    ):
        super().__init__(lap, dim, params, lam_gram)
        self.joint = JointState(lap, dim, params.alpha, joint_ridge)
        self.delta_all = np.zeros((lap.n, dim))

    def _delta_row(self, user: int) -> np.ndarray:
        return self.delta_all[user]

    def _observe(self, user: int, x: np.ndarray, y: float) -> None:
        self.stats[user].update(x, y)
        self.joint.add_observation(user, x, y)
        self.theta_hat = solve_joint(self.joint)
        self.delta_all = self.lap.random_walk @ self.theta_hat


class GraphUCBLocalPolicy(_GraphUCBBase):
    """Linear-cost variant: only the served user's row is recomputed.

    The Gram ridge defaults to alpha rather than the global tiny default:
    the local update is a first-order expansion of the coupled inverse whose
    correction term is a contraction only when the Gram floor is on the
    alpha scale; with a much smaller floor the early-run estimates diverge
    (documented behavior, override via ``lam_gram`` to reproduce it).
    """

    def __init__(
        self,
        lap: LaplacianSet,
        dim: int,
        params: ConfidenceParams,
        lam_gram: float | None = None,
    ):
        super().__init__(lap, dim, params, params.alpha if lam_gram is None else lam_gram)

    def _observe(self, user: int, x: np.ndarray, y: float) -> None:
        self.stats[user].update(x, y)
        self.theta_hat[user] = estimate_local(user, self.stats, self.lap, self.alpha)


class LinUCBPolicy(Policy):
    """Independent per-user ridge UCB (disjoint models, no graph)."""

    def __init__(self, n_users: int, dim: int, params: ConfidenceParams):
        super().__init__(n_users, dim)
        self.params = params
        self.alpha = params.alpha
        self.a_mats = [params.alpha * np.eye(dim) for _ in range(n_users)]
        self.b_vecs = np.zeros((n_users, dim))
        self.theta_hat = np.zeros((n_users, dim))

    def _select(self, user: int, arms: np.ndarray) -> tuple[int, dict]:
        a = self.a_mats[user]
        # the no-graph specialization replaces the neighborhood gap by the
        # user's own estimate
        beta = beta_width(a, self.params.with_delta_vec(self.theta_hat[user]))
        bonus = mahalanobis_inv_norms(arms, a)
        scores = arms @ self.theta_hat[user] + beta * bonus
        idx = int(np.argmax(scores))
        return idx, {"beta": beta, "ucb": float(scores[idx])}

    def _observe(self, user: int, x: np.ndarray, y: float) -> None:
        self.a_mats[user] += np.outer(x, x)
        self.b_vecs[user] += y * x
        self.theta_hat[user] = np.linalg.solve(self.a_mats[user], self.b_vecs[user])


class GobLinPolicy(Policy):
    """Joint estimation coupled through the combinatorial Laplacian.

    The coupled system is lam_gram * I + alpha * (L kron I) plus the
    accumulated observation outer products; the small ridge keeps it
    invertible from the first step, so the inverse is maintained by
    rank-one updates.  Exploration width is lambda_explore * sqrt(log(t+1)).
    """

    def __init__(
        self,
        lap: LaplacianSet,
        dim: int,
        alpha: float,
        lambda_explore: float,
        lam_gram: float = LAM_GRAM_DEFAULT,
    ):
        if lambda_explore < 0:
            raise InvalidInputError("lambda_explore must be nonnegative")
        if alpha <= 0:
            raise InvalidInputError("alpha must be positive")
        super().__init__(lap.n, dim)
        self.alpha = float(alpha)
        self.lambda_explore = float(lambda_explore)
        nd = lap.n * dim
        m = lam_gram * np.eye(nd) + alpha * np.kron(lap.combinatorial, np.eye(dim))
        self.m_inv = np.linalg.inv(m)
        self.b = np.zeros(nd)
        self.vec_theta = np.zeros(nd)

    def _block(self, user: int) -> slice:
        return slice(user * self.dim, (user + 1) * self.dim)

    def _select(self, user: int, arms: np.ndarray) -> tuple[int, dict]:
        blk = self._block(user)
        width = self.lambda_explore * np.sqrt(np.log(self.t + 1.0))
        inv_block = self.m_inv[blk, blk]
        bonus = np.sqrt(np.maximum(np.sum((arms @ inv_block) * arms, axis=1), 0.0))
        scores = arms @ self.vec_theta[blk] + width * bonus
        idx = int(np.argmax(scores))
        return idx, {"beta": float(width), "ucb": float(scores[idx])}

    def _observe(self, user: int, x: np.ndarray, y: float) -> None:
        blk = self._block(user)
        u = self.m_inv[:, blk] @ x  # M^-1 phi for the sparse one-block phi
        denom = 1.0 + float(x @ u[blk])
        self.m_inv -= np.outer(u, u) / denom
        self.b[blk] += y * x
        self.vec_theta = self.m_inv @ self.b


def _connected_components(adj: np.ndarray) -> np.ndarray:
    """Component labels of a boolean adjacency matrix (BFS)."""
    n = adj.shape[0]
    labels = np.full(n, -1, dtype=int)
    current = 0
    for start in range(n):
        if labels[start] >= 0:
            continue
        stack = [start]
        labels[start] = current
        while stack:
            node = stack.pop()
            for nbr in np.flatnonzero(adj[node]):
                if labels[nbr] < 0:
                    labels[nbr] = current
                    stack.append(int(nbr))
        current += 1
    return labels


class ClubPolicy(Policy):
    """Cluster-then-act baseline.

    Users start in the connected components of the given graph.  Each user
    keeps an independent ridge estimate; after every observation, edges from
    the served user to neighbours whose estimates differ by more than
    alpha2 * (cb_i + cb_j) are deleted, where cb is a count-based confidence
    radius.  Selection runs ridge UCB on the served user's current cluster
    aggregate.
    """

    def __init__(self, graph: Graph, dim: int, params: ConfidenceParams, alpha2: float):
        if alpha2 < 0:
            raise InvalidInputError("alpha2 must be nonnegative")
        super().__init__(graph.n, dim)
        self.params = params
        self.alpha = params.alpha
        self.alpha2 = float(alpha2)
        self.adjacency = graph.weights > 0
        self.labels = _connected_components(self.adjacency)
        self.a_mats = [params.alpha * np.eye(dim) for _ in range(graph.n)]
        self.b_vecs = np.zeros((graph.n, dim))
        self.theta_hat = np.zeros((graph.n, dim))
        self.counts = np.zeros(graph.n)

    def _confidence_radius(self, user: int) -> float:
        c = self.counts[user]
        return float(np.sqrt((1.0 + np.log(1.0 + c)) / (1.0 + c)))

    def _cluster_system(self, user: int) -> tuple[np.ndarray, np.ndarray]:
        members = np.flatnonzero(self.labels == self.labels[user])
        a = self.alpha * np.eye(self.dim)
        b = np.zeros(self.dim)
        for j in members:
            a += self.a_mats[j] - self.alpha * np.eye(self.dim)
            b += self.b_vecs[j]
        return a, b

    def _select(self, user: int, arms: np.ndarray) -> tuple[int, dict]:
        a, b = self._cluster_system(user)
        theta_c = np.linalg.solve(a, b)
        beta = beta_width(a, self.params.with_delta_vec(theta_c))
        bonus = mahalanobis_inv_norms(arms, a)
        scores = arms @ theta_c + beta * bonus
        idx = int(np.argmax(scores))
        cluster_size = int(np.sum(self.labels == self.labels[user]))
        return idx, {"beta": beta, "ucb": float(scores[idx]), "cluster_size": cluster_size}

    def _observe(self, user: int, x: np.ndarray, y: float) -> None:
        self.a_mats[user] += np.outer(x, x)
        self.b_vecs[user] += y * x
        self.theta_hat[user] = np.linalg.solve(self.a_mats[user], self.b_vecs[user])
        self.counts[user] += 1
        deleted = False
        cb_user = self._confidence_radius(user)
        for j in np.flatnonzero(self.adjacency[user]):
            gap = np.linalg.norm(self.theta_hat[user] - self.theta_hat[j])
            if gap > self.alpha2 * (cb_user + self._confidence_radius(int(j))):
                self.adjacency[user, j] = self.adjacency[j, user] = False
                deleted = True
        if deleted:
            self.labels = _connected_components(self.adjacency)
