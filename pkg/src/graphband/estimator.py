"""Graph-coupled ridge estimation: per-user statistics, the exact joint
solve, its linear-cost local approximation, precision matrices, and
confidence widths.

Two estimation paths are provided and kept deliberately distinct:

* the *joint* path solves the full coupled system over all users
  (block-diagonal Gram plus the graph coupling term) and is exact;
* the *local* path approximates a single user's row from cached per-user
  Gram inverses at O(n d^2) cost per call.

The joint system uses the raw Gram sums (the graph term already
regularizes it), while the local path works with ridged Grams so the
per-user inverses always exist.  This asymmetry is intentional.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, NumericalError
from .graph_core import LaplacianSet

__all__ = [
    "LAM_GRAM_DEFAULT",
    "UserStats",
    "JointState",
    "PrecisionState",
    "ConfidenceParams",
    "solve_joint",
    "estimate_local",
    "user_precision",
    "delta_hat",
    "beta_width",
    "stats_to_checkpoint",
    "stats_from_checkpoint",
]

LAM_GRAM_DEFAULT = 0.01
_REINVERT_EVERY = 500
_JOINT_RESIDUAL_RTOL = 1e-8
_NORM_SLACK = 1e-9

CHECKPOINT_SCHEMA = "graphband-estimator/1"


class UserStats:
    """Sufficient statistics of one user's interaction history.

    ``gram`` is lam_gram * I + sum of x x^T over the user's served arms and
    is kept positive definite by the ridge; ``gram_inv`` is maintained by
    rank-one updates and refreshed from scratch every few hundred updates to
    cap drift.  ``b_vec`` is the payoff-weighted arm sum.
    """

    __slots__ = ("gram", "b_vec", "count", "gram_inv", "lam_gram", "_since_reinvert")

    def __init__(self, d: int, lam_gram: float = LAM_GRAM_DEFAULT):
        if d < 1:
            raise InvalidInputError("dimension must be positive")
        if lam_gram <= 0:
            raise InvalidInputError("lam_gram must be positive so Gram inverses exist")
        self.lam_gram = float(lam_gram)
        self.gram = np.eye(d) * self.lam_gram
        self.gram_inv = np.eye(d) / self.lam_gram
        self.b_vec = np.zeros(d)
        self.count = 0
        self._since_reinvert = 0

    @property
    def dim(self) -> int:
        return self.b_vec.shape[0]

    def update(self, x: np.ndarray, y: float) -> "UserStats":
        """Fold in one observation: gram += x x^T, b += y x, count += 1."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise InvalidInputError(f"arm vector must have shape ({self.dim},)")
        if np.linalg.norm(x) > 1.0 + _NORM_SLACK:
            raise InvalidInputError(f"arm norm {np.linalg.norm(x):.6f} exceeds the unit ball")
        if not np.isfinite(y):
            raise InvalidInputError("payoff must be finite")
        self.gram = self.gram + np.outer(x, x)
        self.b_vec = self.b_vec + y * x
        self.count += 1
        self._since_reinvert += 1
        if self._since_reinvert >= _REINVERT_EVERY:
            self.gram_inv = np.linalg.inv(self.gram)
            self._since_reinvert = 0
        else:
            u = self.gram_inv @ x
            self.gram_inv = self.gram_inv - np.outer(u, u) / (1.0 + x @ u)
        return self

    def ridge_estimate(self) -> np.ndarray:
        """Per-user ridge solution gram^-1 b."""
        return self.gram_inv @ self.b_vec

    def raw_gram(self) -> np.ndarray:
        """Gram sum without the ridge offset (joint-system block)."""
        return self.gram - self.lam_gram * np.eye(self.dim)

    def copy(self) -> "UserStats":
        out = UserStats(self.dim, self.lam_gram)
        out.gram = self.gram.copy()
        out.gram_inv = self.gram_inv.copy()
        out.b_vec = self.b_vec.copy()
        out.count = self.count
        out._since_reinvert = self._since_reinvert
        return out


@dataclass(frozen=True)
class PrecisionState:
    """Graph-aware precision Lambda and its graph-agnostic lower bound V."""

    lambda_mat: np.ndarray
    v_mat: np.ndarray


@dataclass(frozen=True)
class ConfidenceParams:
    """Hyperparameters of the confidence width.

    ``delta_vec`` is the per-user neighborhood-gap vector (empirical
    counterpart of sum_j Lrw[i, j] theta_j); ``None`` means zero.
    """

    alpha: float
    delta: float
    sigma: float
    delta_vec: np.ndarray | None = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise InvalidInputError("alpha must be positive")
        if not 0.0 < self.delta <= 1.0:
            raise InvalidInputError("delta must lie in (0, 1]")
        if self.sigma < 0:
            raise InvalidInputError("sigma must be nonnegative")

    def with_delta_vec(self, delta_vec: np.ndarray | None) -> "ConfidenceParams":
        return replace(self, delta_vec=delta_vec)


class JointState:
    """The coupled linear system over all users.

    Maintains M = sum of observation outer products (block i for user i)
    plus alpha * (Lrw kron I) plus an optional extra ridge, and the stacked
    right-hand side b.  The layout is user-blocked: coordinates
    [i*d, (i+1)*d) belong to user i, which is the only layout compatible
    with the Kronecker coupling block structure.
    """

    __slots__ = ("n", "d", "alpha", "joint_ridge", "m_mat", "b")

    def __init__(self, lap: LaplacianSet, d: int, alpha: float, joint_ridge: float = 0.0):
        if alpha <= 0:
            raise InvalidInputError("alpha must be positive")
        n = lap.n
        self.n, self.d = n, d
        self.alpha = float(alpha)
        self.joint_ridge = float(joint_ridge)
        self.m_mat = alpha * np.kron(lap.random_walk, np.eye(d))
        if joint_ridge:
            self.m_mat += joint_ridge * np.eye(n * d)
        self.b = np.zeros(n * d)

    def add_observation(self, i: int, x: np.ndarray, y: float) -> None:
        x = np.asarray(x, dtype=float)
        lo = i * self.d
        hi = lo + self.d
        self.m_mat[lo:hi, lo:hi] += np.outer(x, x)
        self.b[lo:hi] += y * x

    @classmethod
    def from_stats(
        cls,
        stats: list[UserStats],
        lap: LaplacianSet,
        alpha: float,
        joint_ridge: float = 0.0,
    ) -> "JointState":
        """Build the system from per-user statistics (ridge offsets removed)."""
        joint = cls(lap, stats[0].dim, alpha, joint_ridge)
        d = joint.d
        for i, s in enumerate(stats):
            lo = i * d
            joint.m_mat[lo : lo + d, lo : lo + d] += s.raw_gram()
            joint.b[lo : lo + d] = s.b_vec
        return joint


def solve_joint(joint: JointState) -> np.ndarray:
    """Solve the coupled system and return the (n, d) estimate matrix.

    Early in a run M is singular (the graph term alone has a nullspace), but
    the system stays consistent, so a direct solve is attempted first and a
    minimum-norm least-squares solve is used as fallback.  Raises
    :class:`NumericalError` if the residual exceeds 1e-8 relative to ||b||.
    """
    m, b = joint.m_mat, joint.b
    v: np.ndarray | None = None
    try:
        with warnings.catch_warnings():
            # early-run systems are singular by construction; the residual
            # check below decides whether the fallback path is needed
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            v = scipy.linalg.solve(m, b, check_finite=False)
        if not np.all(np.isfinite(v)):
            v = None
    except (np.linalg.LinAlgError, ValueError):
        v = None
    scale = max(np.linalg.norm(b), 1e-300)
    if v is None or np.linalg.norm(m @ v - b) > _JOINT_RESIDUAL_RTOL * scale:
        v, *_ = np.linalg.lstsq(m, b, rcond=None)
    residual = np.linalg.norm(m @ v - b)
    if residual > _JOINT_RESIDUAL_RTOL * scale:
        raise NumericalError(
            f"joint solve residual {residual:.3e} exceeds {_JOINT_RESIDUAL_RTOL:.0e} * ||b||",
            cond=float(np.linalg.cond(m)),
        )
    return v.reshape(joint.n, joint.d)


def estimate_local(
    i: int, stats: list[UserStats], lap: LaplacianSet, alpha: float
) -> np.ndarray:
    """Linear-cost approximation of user i's row of the joint estimate.

    First-order expansion of the coupled inverse around the decoupled one:

        theta_i ~= r_i - alpha * gram_i^-1 * sum_j Lrw[i, j] r_j

    with r_j the per-user ridge solutions from cached inverses.  Cost is
    O(n d^2) per call.  ``alpha`` = 0 returns the plain ridge estimate.
    """
    if alpha < 0:
        raise InvalidInputError("alpha must be nonnegative")
    row = lap.random_walk[i]
    r_i = stats[i].ridge_estimate()
    if alpha == 0:
        return r_i
    acc = np.zeros(stats[i].dim)
    for j in np.flatnonzero(row):
        acc += row[j] * stats[j].ridge_estimate()
    return r_i - alpha * (stats[i].gram_inv @ acc)


def user_precision(
    i: int, stats: list[UserStats], lap: LaplacianSet, alpha: float
) -> PrecisionState:
    """Per-user precision pair.

    Lambda_i = gram_i + 2 alpha Lrw[i,i] I + alpha^2 sum_j Lrw[i,j]^2 gram_j^-1
    is the i-th diagonal block of the joint precision; V_i = gram_i +
    alpha Lrw[i,i] I ignores the graph and satisfies Lambda_i >= V_i.
    """
    if alpha < 0:
        raise InvalidInputError("alpha must be nonnegative")
    d = stats[i].dim
    row = lap.random_walk[i]
    eye = np.eye(d)
    v_mat = stats[i].gram + alpha * row[i] * eye
    lam = stats[i].gram + 2.0 * alpha * row[i] * eye
    if alpha > 0:
        a2 = alpha * alpha
        for j in np.flatnonzero(row):
            lam = lam + a2 * row[j] * row[j] * stats[j].gram_inv
    return PrecisionState(lambda_mat=lam, v_mat=v_mat)


def delta_hat(i: int, theta_hat: np.ndarray, lap: LaplacianSet) -> np.ndarray:
    """Neighborhood gap of user i: the row combination sum_j Lrw[i, j] theta_j.

    Zero when user i's estimate equals the weighted average of its
    neighbors'; equals theta_i itself on the empty graph.
    """
    th = np.asarray(theta_hat, dtype=float)
    if th.ndim != 2 or th.shape[0] != lap.n:
        raise InvalidInputError(
            f"theta_hat must be (n, d) with n={lap.n}, got shape {th.shape}"
        )
    return lap.random_walk[i] @ th


def beta_width(v_mat: np.ndarray, params: ConfidenceParams) -> float:
    """Confidence-ellipsoid radius.

    sigma * sqrt(2 * log(det(V)^1/2 / (delta * det(alpha I)^1/2)))
    + sqrt(alpha) * ||delta_vec||_2.

    The determinant ratio is >= 1 whenever V = (PSD) + alpha I, but ridge
    bookkeeping can push it below 1 by rounding, so the log argument is
    clamped at 1.
    """
    v = np.asarray(v_mat, dtype=float)
    d = v.shape[0]
    try:
        chol = np.linalg.cholesky(v)
    except np.linalg.LinAlgError:
        raise InvalidInputError("V must be positive definite") from None
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    half_log_ratio = 0.5 * (logdet - d * np.log(params.alpha))
    half_log_ratio = max(half_log_ratio, 0.0)
    noise_term = params.sigma * np.sqrt(2.0 * (half_log_ratio - np.log(params.delta)))
    gap_norm = 0.0 if params.delta_vec is None else float(np.linalg.norm(params.delta_vec))
    return float(noise_term + np.sqrt(params.alpha) * gap_norm)


def stats_to_checkpoint(stats: list[UserStats], extra: dict | None = None) -> str:
    """Serialize per-user statistics (and optional run metadata) to JSON."""
    doc = {
        "schema": CHECKPOINT_SCHEMA,
        "users": [
            {
                "gram": s.gram.ravel().tolist(),
                "b_vec": s.b_vec.tolist(),
                "count": s.count,
                "lam_gram": s.lam_gram,
            }
            for s in stats
        ],
    }
    if extra:
        doc["extra"] = extra
    return json.dumps(doc)


def stats_from_checkpoint(text: str) -> tuple[list[UserStats], dict]:
    """Inverse of :func:`stats_to_checkpoint`; inverse caches are rebuilt."""
    doc = json.loads(text)
    if doc.get("schema") != CHECKPOINT_SCHEMA:
        raise InvalidInputError(f"unsupported checkpoint schema {doc.get('schema')!r}")
    stats = []
    for entry in doc["users"]:
        b = np.array(entry["b_vec"], dtype=float)
        d = b.shape[0]
        s = UserStats(d, lam_gram=float(entry["lam_gram"]))
        s.gram = np.array(entry["gram"], dtype=float).reshape(d, d)
        s.gram_inv = np.linalg.inv(s.gram)
        s.b_vec = b
        s.count = int(entry["count"])
        stats.append(s)
    return stats, doc.get("extra", {})
