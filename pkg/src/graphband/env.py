"""Multi-user bandit simulation: uniform user arrival, noisy linear payoffs,
regret accounting, and the running estimator diagnostics.

A run is fully determined by (environment, policy configuration, seed); the
policy never touches the RNG, so ledgers are bit-reproducible and two
policies given the same seed face identical user and noise streams.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import InvalidInputError
from .policies import Policy

__all__ = [
    "Environment",
    "RegretLedger",
    "Diagnostics",
    "RunResult",
    "AggregateResult",
    "make_unit_ball_arms",
    "run",
    "aggregate_runs",
]

_NORM_SLACK = 1e-9


@dataclass(frozen=True)
class Environment:
    """Ground truth of a simulation: user features, arm supply, noise scale.

    Arms are supplied in one of two modes.  With ``arms`` set, the same
    fixed arm set is presented every round.  With ``pool_size`` set, a
    fresh pool of that many unit-ball vectors is drawn from the run's RNG
    stream each round (the usual recommender protocol: the candidate pool
    changes per round, which also keeps every user's Gram matrix
    well-conditioned).  Exactly one of the two must be given.
    """

    theta: np.ndarray  # (n, d) true user features, rows in the unit ball
    sigma: float
    arms: np.ndarray | None = None  # (m, d) fixed arm set, rows in the unit ball
    pool_size: int | None = None

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim != 2:
            raise InvalidInputError("theta must be a matrix")
        if self.sigma < 0:
            raise InvalidInputError("sigma must be nonnegative")
        if (self.arms is None) == (self.pool_size is None):
            raise InvalidInputError("exactly one of arms / pool_size must be set")
        if self.pool_size is not None and self.pool_size < 1:
            raise InvalidInputError("pool_size must be positive")
        norms = np.linalg.norm(theta, axis=1)
        if np.any(norms > 1.0 + _NORM_SLACK):
            raise InvalidInputError(
                f"theta rows must lie in the unit ball (max norm {norms.max():.6f})"
            )
        theta = theta.copy()
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        if self.arms is not None:
            arms = np.asarray(self.arms, dtype=float)
            if arms.ndim != 2 or arms.shape[1] != theta.shape[1]:
                raise InvalidInputError("arms must be (m, d) with d matching theta")
            norms = np.linalg.norm(arms, axis=1)
            if np.any(norms > 1.0 + _NORM_SLACK):
                raise InvalidInputError(
                    f"arms rows must lie in the unit ball (max norm {norms.max():.6f})"
                )
            arms = arms.copy()
            arms.setflags(write=False)
            object.__setattr__(self, "arms", arms)

    @property
    def n_users(self) -> int:
        return self.theta.shape[0]

    @property
    def n_arms(self) -> int:
        return self.pool_size if self.arms is None else self.arms.shape[0]

    @property
    def dim(self) -> int:
        return self.theta.shape[1]


def make_unit_ball_arms(m: int, d: int, seed) -> np.ndarray:
    """Draw m arm vectors uniformly from the d-dimensional unit ball.

    ``seed`` may be anything ``np.random.default_rng`` accepts, including an
    existing Generator (which is then consumed in place).
    """
    if m < 1 or d < 1:
        raise InvalidInputError("m and d must be positive")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((m, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radii = rng.random(m) ** (1.0 / d)
    return g * radii[:, None]


class RegretLedger:
    """Per-step pseudo-regret record (noiseless optimal mean minus chosen mean)."""

    def __init__(self):
        self.steps: list[int] = []
        self.users: list[int] = []
        self.arms: list[int] = []
        self.regrets: list[float] = []

    def add(self, t: int, user: int, arm: int, regret: float) -> None:
        self.steps.append(t)
        self.users.append(user)
        self.arms.append(arm)
        self.regrets.append(regret)

    def __len__(self) -> int:
        return len(self.steps)

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.regrets)

    def per_user_total(self, n_users: int) -> np.ndarray:
        totals = np.zeros(n_users)
        for user, r in zip(self.users, self.regrets):
            totals[user] += r
        return totals

    def write_csv(self, path: Path | str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "user", "arm", "regret", "cum_regret"])
            cum = 0.0
            for t, user, arm, r in zip(self.steps, self.users, self.arms, self.regrets):
                cum += r
                writer.writerow([t, user, arm, repr(r), repr(cum)])


class Diagnostics:
    """Running estimator-quality indicators logged at a fixed cadence.

    Tracks, per user, the accumulated predictive-variance ratio (graph-aware
    over graph-agnostic), the neighborhood-gap norms, and the two sides of
    the noise-propagation inequality that underpins the confidence width.
    """

    def __init__(self, n_users: int, dim: int, cadence: int = 10):
        if cadence < 1:
            raise InvalidInputError("cadence must be at least 1")
        self.cadence = cadence
        self.psi_num = np.zeros(n_users)
        self.psi_den = np.zeros(n_users)
        self.xi = np.zeros((n_users, dim))  # accumulated noise-weighted arms
        self.rows: list[tuple] = []  # (t, user, psi, delta_norm, nb_lhs, nb_rhs)
        self.smoothness_of_truth: float | None = None

    def psi_ratio(self, user: int) -> float | None:
        """Accumulated variance ratio for ``user``; None before the first serve."""
        if self.psi_den[user] <= 0:
            return None
        return float(self.psi_num[user] / self.psi_den[user])

    def psi_update(self, user: int, x: np.ndarray, lambda_mat: np.ndarray, v_mat: np.ndarray) -> None:
        """Accrue ||x||^2 under both inverse metrics for ``user``."""
        num = float(x @ np.linalg.solve(lambda_mat, x))
        den = float(x @ np.linalg.solve(v_mat, x))
        self.add_psi_terms(user, num, den)

    def add_psi_terms(self, user: int, num_term: float, den_term: float) -> None:
        self.psi_num[user] += num_term
        self.psi_den[user] += den_term

    def record(self, t: int, user: int, delta_norm: float | None, nb: tuple[float, float] | None) -> None:
        psi = self.psi_ratio(user)
        self.rows.append(
            (
                t,
                user,
                psi if psi is not None else float("nan"),
                delta_norm if delta_norm is not None else float("nan"),
                nb[0] if nb else float("nan"),
                nb[1] if nb else float("nan"),
            )
        )

    def noise_bound_pairs(self) -> np.ndarray:
        """(k, 2) array of recorded (lhs, rhs) pairs, NaN rows dropped."""
        if not self.rows:
            return np.empty((0, 2))
        arr = np.array([(r[4], r[5]) for r in self.rows], dtype=float)
        return arr[~np.isnan(arr).any(axis=1)]

    def psi_series(self, user: int) -> np.ndarray:
        """(k, 2) array of (t, psi) checkpoints for one user."""
        pts = [(r[0], r[2]) for r in self.rows if r[1] == user and not np.isnan(r[2])]
        return np.array(pts, dtype=float) if pts else np.empty((0, 2))

    def write_csv(self, path: Path | str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "user", "psi", "delta_norm", "nb_lhs", "nb_rhs"])
            for row in self.rows:
                writer.writerow([row[0], row[1]] + [repr(v) for v in row[2:]])


@dataclass
class RunResult:
    ledger: RegretLedger
    diagnostics: Diagnostics


def _noise_bound_pair(policy: Policy, user: int, xi: np.ndarray) -> tuple[float, float] | None:
    """Both sides of the noise-propagation inequality, when the policy
    exposes graph-aware statistics (stats list, Laplacian, alpha).

    The left side shrinks the user's accumulated noise vector by the
    graph-weighted combination of all users' noise vectors passed through
    their Gram inverses, exactly the term entering the local estimator's
    error decomposition; the claim under test is that this shrunk vector is
    no longer than the raw one in the inverse-V metric.
    """
    stats = getattr(policy, "stats", None)
    lap = getattr(policy, "lap", None)
    alpha = getattr(policy, "alpha", None)
    if stats is None or lap is None or alpha is None:
        return None
    xi_user = xi[user]
    if not np.any(xi_user):
        return None
    row = lap.random_walk[user]
    correction = np.zeros_like(xi_user)
    for j in np.flatnonzero(row):
        correction += row[j] * (stats[j].gram_inv @ xi[j])
    shrunk = xi_user - alpha * correction
    v_mat = stats[user].gram + alpha * row[user] * np.eye(xi_user.shape[0])
    cho = scipy.linalg.cho_factor(v_mat, check_finite=False)
    lhs = float(np.sqrt(max(shrunk @ scipy.linalg.cho_solve(cho, shrunk), 0.0)))
    rhs = float(np.sqrt(max(xi_user @ scipy.linalg.cho_solve(cho, xi_user), 0.0)))
    return lhs, rhs


def run(
    env: Environment,
    policy: Policy,
    horizon: int,
    seed,
    diag_every: int = 10,
    checkpoint_every: int = 0,
    checkpoint_sink: Callable[[int, Policy], None] | None = None,
) -> RunResult:
    """Simulate ``horizon`` steps and return the regret ledger and diagnostics.

    Each step samples a user uniformly, presents the arm pool (the fixed set
    or a freshly drawn one, per the environment's mode), lets the policy pick,
    draws a Gaussian payoff around the true mean, and records pseudo-regret
    against the best arm in that round's pool.  Runs are bit-reproducible per
    seed; the policy consumes no randomness.  ``checkpoint_sink`` is invoked
    every ``checkpoint_every`` steps when both are provided.
    """
    if horizon < 1:
        raise InvalidInputError("horizon must be at least 1")
    rng = np.random.default_rng(seed)
    fixed_means = None
    if env.arms is not None:
        fixed_means = env.arms @ env.theta.T  # (m, n)
        fixed_best = fixed_means.max(axis=0)
    ledger = RegretLedger()
    diag = Diagnostics(env.n_users, env.dim, cadence=diag_every)
    for t in range(1, horizon + 1):
        user = int(rng.integers(env.n_users))
        if env.arms is not None:
            pool = env.arms
            pool_means = fixed_means[:, user]
            best = float(fixed_best[user])
        else:
            pool = make_unit_ball_arms(env.pool_size, env.dim, rng)
            pool_means = pool @ env.theta[user]
            best = float(pool_means.max())
        arm_idx = policy.select(user, pool)
        noise = rng.normal(0.0, env.sigma) if env.sigma > 0 else 0.0
        mean = float(pool_means[arm_idx])
        policy.observe(user, pool[arm_idx], mean + noise)
        ledger.add(t, user, arm_idx, best - mean)
        info = policy.last_select_info
        if "psi_num_term" in info:
            diag.add_psi_terms(user, info["psi_num_term"], info["psi_den_term"])
        diag.xi[user] += noise * pool[arm_idx]
        if t % diag_every == 0:
            nb = _noise_bound_pair(policy, user, diag.xi)
            diag.record(t, user, info.get("delta_norm"), nb)
        if checkpoint_every and checkpoint_sink is not None and t % checkpoint_every == 0:
            checkpoint_sink(t, policy)
    return RunResult(ledger=ledger, diagnostics=diag)


@dataclass
class AggregateResult:
    """Pointwise mean/std of cumulative regret across equal-horizon runs."""

    mean_curve: np.ndarray
    std_curve: np.ndarray
    per_user_mean: np.ndarray
    n_runs: int = field(default=0)

    @property
    def final_mean(self) -> float:
        return float(self.mean_curve[-1])

    @property
    def final_std(self) -> float:
        return float(self.std_curve[-1])

    @property
    def final_stderr(self) -> float:
        return self.final_std / np.sqrt(self.n_runs) if self.n_runs else float("nan")


def aggregate_runs(ledgers: list[RegretLedger], n_users: int | None = None) -> AggregateResult:
    """Combine runs into a mean cumulative-regret curve with a std band."""
    if not ledgers:
        raise InvalidInputError("need at least one ledger")
    horizons = {len(l) for l in ledgers}
    if len(horizons) != 1:
        raise InvalidInputError(f"ledgers have mismatched horizons: {sorted(horizons)}")
    cum = np.stack([l.cumulative() for l in ledgers])
    mean = cum.mean(axis=0)
    std = cum.std(axis=0, ddof=1) if len(ledgers) > 1 else np.zeros_like(mean)
    if n_users is None:
        n_users = max(max(l.users) for l in ledgers) + 1
    per_user = np.stack([l.per_user_total(n_users) for l in ledgers]).mean(axis=0)
    return AggregateResult(
        mean_curve=mean, std_curve=std, per_user_mean=per_user, n_runs=len(ledgers)
    )
