"""Ratings-matrix ingestion: CSV loading, low-rank completion by alternating
least squares, and conversion into a bandit instance (user graph, arm
features, ground-truth population).

Input format is a headed CSV of ``user_id,item_id,rating`` triples.  IDs are
remapped to dense indices (the mapping is preserved on the dataset); each
(user, item) pair may appear at most once.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, ParseError
from .graph_core import Graph, build_rbf_graph

__all__ = [
    "RatingsDataset",
    "FactorizedModel",
    "BanditInstance",
    "load_ratings",
    "normalize_ratings",
    "factorize",
    "build_bandit_instance",
    "rating_histogram",
]


@dataclass(frozen=True)
class RatingsDataset:
    """Sparse ratings in dense-index triple form."""

    users: np.ndarray  # int indices in [0, n_users)
    items: np.ndarray  # int indices in [0, n_items)
    ratings: np.ndarray
    n_users: int
    n_items: int
    rating_range: tuple[float, float]
    user_ids: list[str]
    item_ids: list[str]

    def __len__(self) -> int:
        return self.users.shape[0]


@dataclass(frozen=True)
class FactorizedModel:
    """Low-rank completion M ~= U X with users in U's rows, items in X's columns."""

    user_factors: np.ndarray  # (n_users, rank)
    item_factors: np.ndarray  # (rank, n_items)
    rank: int
    rmse_history: tuple[float, ...]

    def reconstruction(self) -> np.ndarray:
        return self.user_factors @ self.item_factors


@dataclass(frozen=True)
class BanditInstance:
    """Environment inputs derived from a completed ratings matrix."""

    theta: np.ndarray  # (n_sample, rank) sampled user rows, unit-ball scaled
    arms: np.ndarray  # (n_items, rank) item columns, unit-ball scaled
    graph: Graph
    sampled_users: np.ndarray
    theta_scale: float
    arm_scale: float


def load_ratings(
    path: Path | str, rating_range: tuple[float, float] | None = None
) -> RatingsDataset:
    """Stream-parse a ratings CSV.

    Malformed rows raise :class:`ParseError` with the 1-based line number;
    duplicate (user, item) pairs report both offending lines.  When
    ``rating_range`` is given, out-of-range ratings are rejected; otherwise
    the range is inferred from the data.
    """
    path = Path(path)
    users: list[int] = []
    items: list[int] = []
    ratings: list[float] = []
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    seen: dict[tuple[int, int], int] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:3]] != ["user_id", "item_id", "rating"]:
            raise ParseError(f"expected header 'user_id,item_id,rating', got {header!r}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", line=lineno)
            uid, iid, raw = (f.strip() for f in row)
            try:
                rating = float(raw)
            except ValueError:
                raise ParseError(f"rating {raw!r} is not a number", line=lineno) from None
            if not np.isfinite(rating):
                raise ParseError(f"rating {raw!r} is not finite", line=lineno)
            if rating_range is not None and not rating_range[0] <= rating <= rating_range[1]:
                raise ParseError(
                    f"rating {rating} outside declared range {rating_range}", line=lineno
                )
            u = user_index.setdefault(uid, len(user_index))
            i = item_index.setdefault(iid, len(item_index))
            if (u, i) in seen:
                raise ParseError(
                    f"duplicate rating for user {uid!r}, item {iid!r} "
                    f"(first seen on line {seen[(u, i)]})",
                    line=lineno,
                )
            seen[(u, i)] = lineno
            users.append(u)
            items.append(i)
            ratings.append(rating)
    if not users:
        raise ParseError("ratings file contains no data rows", line=2)
    ratings_arr = np.array(ratings)
    rng = rating_range or (float(ratings_arr.min()), float(ratings_arr.max()))
    return RatingsDataset(
        users=np.array(users, dtype=int),
        items=np.array(items, dtype=int),
        ratings=ratings_arr,
        n_users=len(user_index),
        n_items=len(item_index),
        rating_range=rng,
        user_ids=list(user_index),
        item_ids=list(item_index),
    )


def normalize_ratings(data: RatingsDataset) -> RatingsDataset:
    """Affinely map ratings onto [0, 1]: the range minimum goes exactly to 0,
    the maximum exactly to 1."""
    lo, hi = data.rating_range
    if hi <= lo:
        raise InvalidInputError(f"degenerate rating range {data.rating_range}")
    scaled = (data.ratings - lo) / (hi - lo)
    return RatingsDataset(
        users=data.users,
        items=data.items,
        ratings=scaled,
        n_users=data.n_users,
        n_items=data.n_items,
        rating_range=(0.0, 1.0),
        user_ids=data.user_ids,
        item_ids=data.item_ids,
    )


def _observed_rmse(data: RatingsDataset, u: np.ndarray, x: np.ndarray) -> float:
    pred = np.sum(u[data.users] * x[:, data.items].T, axis=1)
    return float(np.sqrt(np.mean((pred - data.ratings) ** 2)))


def factorize(
    data: RatingsDataset,
    rank: int = 10,
    reg: float = 0.1,
    iters: int = 20,
    seed: int = 0,
) -> FactorizedModel:
    """Complete the ratings matrix by alternating ridge least squares.

    Each outer iteration solves every user row against fixed item factors,
    then every item column against fixed user factors.  ``rmse_history``
    records the observed-entry RMSE after each outer iteration.
    """
    if rank < 1:
        raise InvalidInputError("rank must be at least 1")
    if len(data) == 0:
        raise InvalidInputError("cannot factorize an empty dataset")
    if iters < 1:
        raise InvalidInputError("iters must be at least 1")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((data.n_users, rank)) * 0.1
    x = rng.standard_normal((rank, data.n_items)) * 0.1

    by_user = [np.flatnonzero(data.users == i) for i in range(data.n_users)]
    by_item = [np.flatnonzero(data.items == j) for j in range(data.n_items)]
    eye = np.eye(rank)
    history = []
    for _ in range(iters):
        for i, idx in enumerate(by_user):
            if idx.size == 0:
                continue
            cols = x[:, data.items[idx]]  # (rank, k)
            a = cols @ cols.T + reg * eye
            u[i] = np.linalg.solve(a, cols @ data.ratings[idx])
        for j, idx in enumerate(by_item):
            if idx.size == 0:
                continue
            rows = u[data.users[idx]]  # (k, rank)
            a = rows.T @ rows + reg * eye
            x[:, j] = np.linalg.solve(a, rows.T @ data.ratings[idx])
        history.append(_observed_rmse(data, u, x))
    return FactorizedModel(
        user_factors=u, item_factors=x, rank=rank, rmse_history=tuple(history)
    )


def build_bandit_instance(
    model: FactorizedModel,
    rho: float,
    threshold: float,
    n_sample: int,
    seed: int = 0,
) -> BanditInstance:
    """Turn a completed factorization into bandit-environment inputs.

    Samples ``n_sample`` users without replacement, builds the user graph
    from the sampled factor rows with the Gaussian kernel, and rescales user
    rows and item columns by their respective largest norms so every vector
    fits in the unit ball (one global scale per side, preserving payoff
    order).
    """
    n_users = model.user_factors.shape[0]
    if n_sample < 1 or n_sample > n_users:
        raise InvalidInputError(
            f"n_sample must lie in [1, {n_users}], got {n_sample}"
        )
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(n_users, size=n_sample, replace=False))
    u_rows = model.user_factors[chosen]
    graph = build_rbf_graph(u_rows, rho, threshold)
    theta_scale = float(np.linalg.norm(u_rows, axis=1).max())
    arm_cols = model.item_factors.T  # (n_items, rank)
    arm_scale = float(np.linalg.norm(arm_cols, axis=1).max())
    theta_scale = max(theta_scale, 1e-300)
    arm_scale = max(arm_scale, 1e-300)
    return BanditInstance(
        theta=u_rows / theta_scale,
        arms=arm_cols / arm_scale,
        graph=graph,
        sampled_users=chosen,
        theta_scale=theta_scale,
        arm_scale=arm_scale,
    )


def rating_histogram(data: RatingsDataset, bins: int = 10) -> dict:
    """Histogram of the rating distribution as a JSON-ready dict."""
    counts, edges = np.histogram(data.ratings, bins=bins, range=data.rating_range)
    return {
        "bins": bins,
        "range": list(data.rating_range),
        "edges": edges.tolist(),
        "counts": counts.tolist(),
        "total": int(len(data)),
    }


def write_instance_bundle(instance: BanditInstance, out_dir: Path | str) -> list[Path]:
    """Write the instance as a directory bundle the experiment runner consumes."""
    from .graph_core import graph_to_json

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    graph_path = out / "graph.json"
    graph_path.write_text(graph_to_json(instance.graph))
    paths.append(graph_path)
    arrays = {
        "theta": instance.theta,
        "arms": instance.arms,
    }
    meta = {
        "schema": "graphband-instance/1",
        "sampled_users": instance.sampled_users.tolist(),
        "theta_scale": instance.theta_scale,
        "arm_scale": instance.arm_scale,
        "n": int(instance.theta.shape[0]),
        "d": int(instance.theta.shape[1]),
        "m": int(instance.arms.shape[0]),
    }
    for name, arr in arrays.items():
        p = out / f"{name}.csv"
        np.savetxt(p, arr, delimiter=",")
        paths.append(p)
    meta_path = out / "instance.json"
    meta_path.write_text(json.dumps(meta, indent=2))
    paths.append(meta_path)
    return paths


def read_instance_bundle(in_dir: Path | str) -> BanditInstance:
    """Inverse of :func:`write_instance_bundle`."""
    from .graph_core import graph_from_json

    src = Path(in_dir)
    meta = json.loads((src / "instance.json").read_text())
    if meta.get("schema") != "graphband-instance/1":
        raise InvalidInputError(f"unsupported instance schema {meta.get('schema')!r}")
    theta = np.loadtxt(src / "theta.csv", delimiter=",", ndmin=2)
    arms = np.loadtxt(src / "arms.csv", delimiter=",", ndmin=2)
    return BanditInstance(
        theta=theta,
        arms=arms,
        graph=graph_from_json((src / "graph.json").read_text()),
        sampled_users=np.array(meta["sampled_users"], dtype=int),
        theta_scale=float(meta["theta_scale"]),
        arm_scale=float(meta["arm_scale"]),
    )
