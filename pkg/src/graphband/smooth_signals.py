"""Ground-truth user populations: graph-smooth feature matrices.

The generator draws a random matrix, pulls it toward graph-smoothness by
solving a shrinkage system built from the random-walk Laplacian, and then
normalizes so the population satisfies the norm assumptions the bandit
policies rely on (unit-ball rows, unit-ball arms, payoffs in [-1, 1]).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, NumericalError
from .graph_core import LaplacianSet

__all__ = [
    "UserPopulation",
    "NormalizationInfo",
    "random_theta0",
    "generate_smooth",
    "normalize_population",
    "population_to_json",
    "population_from_json",
]


@dataclass(frozen=True)
class NormalizationInfo:
    """Scales applied by :func:`normalize_population`.

    ``matrix_scale`` maps the input onto matrix norm n; ``row_cap_scale``
    (>= 1) is the extra shrink applied afterwards so every row fits in the
    unit ball.  ``norm_kind`` records which matrix norm was targeted.
    """

    matrix_scale: float
    row_cap_scale: float
    norm_kind: str


@dataclass(frozen=True)
class UserPopulation:
    """Ground-truth user feature rows plus how they were generated."""

    theta: np.ndarray
    gen_gamma: float
    source_theta0: np.ndarray
    normalization: NormalizationInfo | None = None

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float)
        if not np.all(np.isfinite(th)):
            raise InvalidInputError("population contains non-finite entries")
        row_norms = np.linalg.norm(th, axis=1)
        if np.any(row_norms > 1.0 + 1e-9):
            raise InvalidInputError(
                f"population rows must lie in the unit ball (max norm {row_norms.max():.6f})"
            )
        th = th.copy()
        th.setflags(write=False)
        object.__setattr__(self, "theta", th)

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    @property
    def d(self) -> int:
        return self.theta.shape[1]


def random_theta0(n: int, d: int, seed: int) -> np.ndarray:
    """Standard-normal (n, d) initial matrix, deterministic per seed."""
    if n < 1 or d < 1:
        raise InvalidInputError(f"n and d must be positive, got ({n}, {d})")
    return np.random.default_rng(seed).standard_normal((n, d))


def generate_smooth(theta0: np.ndarray, lap: LaplacianSet, gamma: float) -> np.ndarray:
    """Minimize ||Theta - Theta0||_F^2 + gamma * tr(Theta^T Lrw Theta).

    The quadratic form only depends on the symmetric part S of the
    random-walk Laplacian, giving the shrinkage system
    (I + gamma * S) Theta = Theta0, solved column by column.  On irregular
    graphs S can have slightly negative eigenvalues, which would make the
    objective unbounded for large gamma; the solve therefore uses the
    positive-semidefinite part of S (negative eigenvalues clamped to zero),
    which coincides with S whenever the objective is well-posed and keeps
    the generator defined for every gamma >= 0.
    """
    th0 = np.asarray(theta0, dtype=float)
    if gamma < 0:
        raise InvalidInputError("gamma must be nonnegative")
    if th0.ndim != 2 or th0.shape[0] != lap.n:
        raise InvalidInputError(
            f"theta0 must be (n, d) with n={lap.n}, got shape {th0.shape}"
        )
    if gamma == 0:
        return th0.copy()
    sym = lap.random_walk_sym
    eigvals, eigvecs = np.linalg.eigh(sym)
    if eigvals[0] < 0:
        sym = (eigvecs * np.maximum(eigvals, 0.0)) @ eigvecs.T
    system = np.eye(lap.n) + gamma * sym
    try:
        cho = scipy.linalg.cho_factor(system, check_finite=False)
    except np.linalg.LinAlgError as exc:  # defensive; system is PD by construction
        raise NumericalError(
            f"shrinkage system not positive definite at gamma={gamma}",
            cond=float(np.linalg.cond(system)),
        ) from exc
    return scipy.linalg.cho_solve(cho, th0, check_finite=False)


def smoothing_objective(theta: np.ndarray, theta0: np.ndarray, lap: LaplacianSet, gamma: float) -> float:
    """Objective value minimized by :func:`generate_smooth` (test hook)."""
    diff = theta - theta0
    quad = float(np.sum(theta * (lap.random_walk @ theta)))
    return float(np.sum(diff * diff)) + gamma * quad


def normalize_population(
    theta: np.ndarray, norm: str = "spectral"
) -> tuple[np.ndarray, NormalizationInfo]:
    """Scale a feature matrix to matrix norm n, then cap rows to the unit ball.

    The first stage fixes the population's overall energy so smoothness
    values are comparable across sweep settings; the second stage divides by
    max_i ||theta_i||_2 when any row exceeds unit norm, which the payoff
    bound requires.  ``norm`` selects the spectral (default) or Frobenius
    matrix norm for the first stage.
    """
    th = np.asarray(theta, dtype=float)
    if th.ndim != 2:
        raise InvalidInputError(f"theta must be a matrix, got shape {th.shape}")
    if norm not in ("spectral", "fro"):
        raise InvalidInputError(f"norm must be 'spectral' or 'fro', got {norm!r}")
    current = np.linalg.norm(th, ord=2 if norm == "spectral" else "fro")
    if current == 0:
        raise InvalidInputError("cannot normalize the zero matrix")
    n = th.shape[0]
    matrix_scale = n / current
    scaled = th * matrix_scale
    max_row = float(np.linalg.norm(scaled, axis=1).max())
    row_cap_scale = max(1.0, max_row)
    return scaled / row_cap_scale, NormalizationInfo(
        matrix_scale=float(matrix_scale),
        row_cap_scale=row_cap_scale,
        norm_kind=norm,
    )


def population_to_json(pop: UserPopulation) -> str:
    return json.dumps(
        {
            "n": pop.n,
            "d": pop.d,
            "gamma": pop.gen_gamma,
            "theta": pop.theta.ravel().tolist(),
            "theta0": np.asarray(pop.source_theta0).ravel().tolist(),
        }
    )


def population_from_json(text: str) -> UserPopulation:
    doc = json.loads(text)
    n, d = int(doc["n"]), int(doc["d"])
    theta = np.array(doc["theta"], dtype=float).reshape(n, d)
    theta0 = np.array(doc["theta0"], dtype=float).reshape(n, d)
    return UserPopulation(theta=theta, gen_gamma=float(doc["gamma"]), source_theta0=theta0)
