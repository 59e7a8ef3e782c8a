"""Configuration-driven experiment runner.

Produces data-only artifacts (CSV + JSON): per-run regret ledgers,
diagnostics, aggregated mean/std regret curves, sweep summaries, scaling
benchmarks, and a manifest that echoes the configuration, lists every
output file with its hash, and records the seeds needed to reproduce each
run bit-identically.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import env as envmod
from .errors import ConfigError, InvalidInputError
from .estimator import ConfidenceParams, stats_to_checkpoint
from .graph_core import (
    Graph,
    GraphGenConfig,
    LaplacianSet,
    build_graph,
    laplacians,
    smoothness,
    sparsity_measure,
)
from .ingest import read_instance_bundle
from .policies import (
    ClubPolicy,
    GobLinPolicy,
    GraphUCBLocalPolicy,
    GraphUCBPolicy,
    LinUCBPolicy,
    Policy,
)
from .smooth_signals import UserPopulation, generate_smooth, normalize_population, random_theta0

__all__ = [
    "ExperimentConfig",
    "Instance",
    "build_instance",
    "make_policy",
    "run_experiment",
    "sweep",
    "bench_scaling",
    "tune_goblin_lambda",
    "SWEEP_AXES",
]

MANIFEST_SCHEMA = "graphband-manifest/1"

POLICY_NAMES = ("graphucb", "graphucb_local", "linucb", "goblin", "club")

_TOP_KEYS = {
    "name",
    "n",
    "d",
    "arms",
    "arm_mode",
    "horizon",
    "runs",
    "base_seed",
    "sigma",
    "diag_every",
    "graph",
    "signal",
    "policies",
    "instance_dir",
}
_GRAPH_KEYS = {"model", "rbf_rho", "threshold", "er_p", "ba_m", "ws_m", "ws_p"}
_SIGNAL_KEYS = {"gamma", "norm"}
_POLICY_KEYS = {
    "graphucb": {"name", "alpha", "delta", "sigma", "lam_gram", "joint_ridge"},
    "graphucb_local": {"name", "alpha", "delta", "sigma", "lam_gram"},
    "linucb": {"name", "alpha", "delta", "sigma"},
    "goblin": {"name", "alpha", "lambda_explore", "lam_gram", "tune_runs", "tune_horizon"},
    "club": {"name", "alpha", "delta", "sigma", "alpha2"},
}

SWEEP_AXES = {
    "gamma": ("signal", "gamma", None),
    "threshold": ("graph", "threshold", "rbf"),
    "er_p": ("graph", "er_p", "er"),
    "ba_m": ("graph", "ba_m", "ba"),
    "ws_p": ("graph", "ws_p", "ws"),
    "ws_m": ("graph", "ws_m", "ws"),
}

# seed-stream tags so the run, tuning, and bench namespaces never collide
_RUN_TAG, _TUNE_TAG, _BENCH_TAG = 101, 202, 303


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment settings; construct with :meth:`from_dict`."""

    name: str = "experiment"
    n: int = 20
    d: int = 5
    arms: int = 100
    arm_mode: str = "fresh"
    horizon: int = 1000
    runs: int = 20
    base_seed: int = 0
    sigma: float = 0.01
    diag_every: int = 10
    graph: dict = field(default_factory=lambda: {"model": "rbf", "rbf_rho": 0.05, "threshold": 0.5})
    signal: dict = field(default_factory=lambda: {"gamma": 10.0, "norm": "spectral"})
    policies: tuple = (
        {"name": "graphucb", "alpha": 1.0, "delta": 0.01},
    )
    instance_dir: str | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = sorted(set(doc) - _TOP_KEYS)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}", keys=unknown)
        base = cls()
        merged = {f: getattr(base, f) for f in cls.__dataclass_fields__}
        merged.update({k: v for k, v in doc.items() if k in _TOP_KEYS})

        graph = dict(base.graph)
        graph.update(doc.get("graph", {}))
        unknown = sorted(set(graph) - _GRAPH_KEYS)
        if unknown:
            raise ConfigError(f"unknown graph keys: {unknown}", keys=[f"graph.{k}" for k in unknown])
        merged["graph"] = graph

        signal = dict(base.signal)
        signal.update(doc.get("signal", {}))
        unknown = sorted(set(signal) - _SIGNAL_KEYS)
        if unknown:
            raise ConfigError(f"unknown signal keys: {unknown}", keys=[f"signal.{k}" for k in unknown])
        merged["signal"] = signal

        policies = []
        for k, p in enumerate(doc.get("policies", base.policies)):
            if not isinstance(p, dict) or "name" not in p:
                raise ConfigError(f"policy entry {k} must be an object with a 'name'")
            name = p["name"]
            if name not in POLICY_NAMES:
                raise ConfigError(f"unknown policy {name!r} (entry {k})", keys=[f"policies[{k}].name"])
            unknown = sorted(set(p) - _POLICY_KEYS[name])
            if unknown:
                raise ConfigError(
                    f"unknown keys for policy {name!r}: {unknown}",
                    keys=[f"policies[{k}].{u}" for u in unknown],
                )
            policies.append(dict(p))
        merged["policies"] = tuple(policies)

        cfg = cls(**merged)
        cfg._validate()
        return cfg

    def _validate(self) -> None:
        for fieldname in ("n", "d", "arms", "horizon", "runs", "diag_every"):
            if int(getattr(self, fieldname)) < 1:
                raise ConfigError(f"{fieldname} must be a positive integer")
        if self.sigma < 0:
            raise ConfigError("sigma must be nonnegative")
        if self.arm_mode not in ("fresh", "fixed"):
            raise ConfigError("arm_mode must be 'fresh' or 'fixed'")
        # constructor-level validation of graph parameters happens here so a
        # bad config fails before any run starts
        try:
            _graph_gen_config(self, seed=0)
        except InvalidInputError as exc:
            raise ConfigError(f"invalid graph parameters: {exc}") from exc
        if self.signal.get("gamma", 0.0) < 0:
            raise ConfigError("signal.gamma must be nonnegative")
        if self.signal.get("norm", "spectral") not in ("spectral", "fro"):
            raise ConfigError("signal.norm must be 'spectral' or 'fro'")
        for k, p in enumerate(self.policies):
            delta = p.get("delta", 0.01)
            if not 0.0 < delta <= 1.0:
                raise ConfigError(f"policies[{k}].delta must lie in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "d": self.d,
            "arms": self.arms,
            "arm_mode": self.arm_mode,
            "horizon": self.horizon,
            "runs": self.runs,
            "base_seed": self.base_seed,
            "sigma": self.sigma,
            "diag_every": self.diag_every,
            "graph": dict(self.graph),
            "signal": dict(self.signal),
            "policies": [dict(p) for p in self.policies],
            "instance_dir": self.instance_dir,
        }

    def replace(self, **changes) -> "ExperimentConfig":
        doc = self.to_dict()
        for key, value in changes.items():
            if "." in key:
                outer, inner = key.split(".", 1)
                doc[outer] = {**doc[outer], inner: value}
            else:
                doc[key] = value
        return ExperimentConfig.from_dict(doc)


@dataclass
class Instance:
    """One run's ground truth plus the seed for its user/noise stream."""

    env: envmod.Environment
    graph: Graph
    lap: LaplacianSet
    population: UserPopulation | None
    run_seed: np.random.SeedSequence

    def sm(self) -> float:
        return smoothness(self.env.theta, self.lap)

    def sp(self) -> float:
        return sparsity_measure(self.graph)


def _graph_gen_config(cfg: ExperimentConfig, seed) -> GraphGenConfig:
    g = cfg.graph
    return GraphGenConfig(
        model=g.get("model", "rbf"),
        rbf_rho=g.get("rbf_rho", 0.05),
        sparsity_threshold=g.get("threshold", 0.5),
        er_p=g.get("er_p", 0.4),
        ba_m=g.get("ba_m", 5),
        ws_m=g.get("ws_m", 4),
        ws_p=g.get("ws_p", 0.2),
        seed=seed,
    )


def build_instance(cfg: ExperimentConfig, run_idx: int, tag: int = _RUN_TAG) -> Instance:
    """Materialize the ground truth for one run.

    Synthetic pipeline: random initial features -> graph (RBF graphs are
    built from those features) -> graph-smoothing with gamma -> matrix-norm
    and row-cap normalization -> arm supply (a fixed unit-ball arm set, or
    per-round fresh pools, per ``arm_mode``).  All streams derive from
    (base_seed, tag, run_idx).
    """
    ss = np.random.SeedSequence(entropy=(cfg.base_seed, tag, run_idx))
    s_theta, s_graph, s_arms, s_run = ss.spawn(4)
    if cfg.instance_dir is not None:
        bundle = read_instance_bundle(cfg.instance_dir)
        graph = bundle.graph
        lap = laplacians(graph)
        environment = envmod.Environment(theta=bundle.theta, sigma=cfg.sigma, arms=bundle.arms)
        return Instance(env=environment, graph=graph, lap=lap, population=None, run_seed=s_run)

    theta0 = random_theta0(cfg.n, cfg.d, s_theta)
    gcfg = _graph_gen_config(cfg, s_graph)
    graph = build_graph(gcfg, features=theta0, n=cfg.n)
    lap = laplacians(graph)
    gamma = float(cfg.signal.get("gamma", 1.0))
    smooth = generate_smooth(theta0, lap, gamma)
    theta, norm_info = normalize_population(smooth, cfg.signal.get("norm", "spectral"))
    population = UserPopulation(
        theta=theta, gen_gamma=gamma, source_theta0=theta0, normalization=norm_info
    )
    if cfg.arm_mode == "fixed":
        arms = envmod.make_unit_ball_arms(cfg.arms, cfg.d, s_arms)
        environment = envmod.Environment(theta=theta, sigma=cfg.sigma, arms=arms)
    else:
        environment = envmod.Environment(theta=theta, sigma=cfg.sigma, pool_size=cfg.arms)
    return Instance(env=environment, graph=graph, lap=lap, population=population, run_seed=s_run)


def make_policy(pspec: dict, inst: Instance, cfg: ExperimentConfig) -> Policy:
    """Instantiate a fresh policy from its config entry for one run."""
    name = pspec["name"]
    sigma = pspec.get("sigma", cfg.sigma)
    alpha = pspec.get("alpha", 1.0)
    delta = pspec.get("delta", 0.01)
    if name == "graphucb":
        params = ConfidenceParams(alpha=alpha, delta=delta, sigma=sigma)
        return GraphUCBPolicy(
            inst.lap,
            inst.env.dim,
            params,
            lam_gram=pspec.get("lam_gram", 0.01),
            joint_ridge=pspec.get("joint_ridge", 0.0),
        )
    if name == "graphucb_local":
        params = ConfidenceParams(alpha=alpha, delta=delta, sigma=sigma)
        return GraphUCBLocalPolicy(
            inst.lap,
            inst.env.dim,
            params,
            lam_gram=pspec.get("lam_gram"),
        )
    if name == "linucb":
        params = ConfidenceParams(alpha=alpha, delta=delta, sigma=sigma)
        return LinUCBPolicy(inst.env.n_users, inst.env.dim, params)
    if name == "goblin":
        lam = pspec.get("lambda_explore")
        if lam is None:
            raise InvalidInputError(
                "goblin lambda_explore unresolved; run tune_goblin_lambda first"
            )
        return GobLinPolicy(
            inst.lap,
            inst.env.dim,
            alpha=alpha,
            lambda_explore=lam,
            lam_gram=pspec.get("lam_gram", 0.01),
        )
    if name == "club":
        params = ConfidenceParams(alpha=alpha, delta=delta, sigma=sigma)
        return ClubPolicy(inst.graph, inst.env.dim, params, alpha2=pspec.get("alpha2", 1.0))
    raise InvalidInputError(f"unknown policy {name!r}")


def tune_goblin_lambda(cfg: ExperimentConfig, pspec: dict) -> float:
    """Grid-search the exploration scale on a held-out seed namespace.

    Scans [0, 1] in steps of 0.1 over a few short runs and returns the value
    with the lowest mean final regret (ties break toward the smaller value).
    """
    tune_runs = int(pspec.get("tune_runs", 3))
    tune_horizon = int(pspec.get("tune_horizon", min(cfg.horizon, 500)))
    grid = [round(0.1 * k, 1) for k in range(11)]
    best_lam, best_score = grid[0], float("inf")
    for lam in grid:
        finals = []
        for r in range(tune_runs):
            inst = build_instance(cfg, r, tag=_TUNE_TAG)
            policy = make_policy({**pspec, "lambda_explore": lam}, inst, cfg)
            result = envmod.run(inst.env, policy, tune_horizon, inst.run_seed, diag_every=max(tune_horizon, 1))
            finals.append(result.ledger.cumulative()[-1])
        score = float(np.mean(finals))
        if score < best_score - 1e-12:
            best_score, best_lam = score, lam
    return best_lam


def _resolve_policies(cfg: ExperimentConfig) -> tuple[ExperimentConfig, dict]:
    """Fill in tuned hyperparameters (currently: goblin's lambda_explore)."""
    resolved = {}
    policies = []
    for p in cfg.policies:
        p = dict(p)
        if p["name"] == "goblin" and p.get("lambda_explore") is None:
            p["lambda_explore"] = tune_goblin_lambda(cfg, p)
            resolved["goblin_lambda"] = p["lambda_explore"]
        policies.append(p)
    return cfg.replace(policies=policies), resolved


def _policy_label(pspec: dict) -> str:
    return pspec["name"]


def _execute_run(args: tuple) -> dict:
    """Worker: simulate every policy on one run's instance and write files."""
    cfg_doc, run_idx, out_dir, checkpoint_every = args
    cfg = ExperimentConfig.from_dict(cfg_doc)
    out = Path(out_dir)
    inst = build_instance(cfg, run_idx)
    sm, sp = inst.sm(), inst.sp()
    payload: dict = {"run": run_idx, "sm": sm, "sp": sp, "policies": {}, "files": []}
    for pspec in cfg.policies:
        label = _policy_label(pspec)
        policy = make_policy(pspec, inst, cfg)
        sink = None
        if checkpoint_every:
            ckpt_dir = out / "runs" / label
            ckpt_dir.mkdir(parents=True, exist_ok=True)

            def sink(t: int, pol: Policy, _dir=ckpt_dir, _r=run_idx) -> None:
                stats = getattr(pol, "stats", None)
                if stats is None:
                    return
                path = _dir / f"run_{_r}_t{t}.ckpt.json"
                path.write_text(stats_to_checkpoint(stats))

        result = envmod.run(
            inst.env,
            policy,
            cfg.horizon,
            inst.run_seed,
            diag_every=cfg.diag_every,
            checkpoint_every=checkpoint_every,
            checkpoint_sink=sink,
        )
        run_dir = out / "runs" / label
        run_dir.mkdir(parents=True, exist_ok=True)
        ledger_path = run_dir / f"run_{run_idx}.csv"
        diag_path = run_dir / f"diag_{run_idx}.csv"
        result.ledger.write_csv(ledger_path)
        result.diagnostics.write_csv(diag_path)
        nb = result.diagnostics.noise_bound_pairs()
        payload["policies"][label] = {
            "cum": result.ledger.cumulative().tolist(),
            "noise_bound_total": int(nb.shape[0]),
            "noise_bound_holds": int(np.sum(nb[:, 0] <= nb[:, 1] + 1e-12)) if nb.size else 0,
        }
        payload["files"].extend(
            str(p.relative_to(out)) for p in (ledger_path, diag_path)
        )
    return payload


def _hash_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: Path | str,
    jobs: int = 1,
    checkpoint_every: int = 0,
) -> dict:
    """Run every configured policy over all runs and write the artifact tree.

    Layout: ``runs/<policy>/run_<r>.csv`` ledgers, ``runs/<policy>/diag_<r>.csv``
    diagnostics, ``regret_mean_std.csv`` aggregate curves, ``manifest.json``.
    Returns the manifest dict.  A mid-run failure still writes a manifest,
    flagged ``status: partial`` with the error message.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg, resolved = _resolve_policies(cfg)
    cfg_doc = cfg.to_dict()
    args = [(cfg_doc, r, str(out), checkpoint_every) for r in range(cfg.runs)]
    payloads: list[dict] = []
    error: str | None = None
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                payloads = list(pool.map(_execute_run, args))
        else:
            payloads = [_execute_run(a) for a in args]
    except Exception as exc:  # noqa: BLE001 - recorded in the manifest
        error = f"{type(exc).__name__}: {exc}"

    labels = [_policy_label(p) for p in cfg.policies]
    metrics: dict = {}
    files: list[str] = [f for p in payloads for f in p["files"]]
    if payloads and error is None:
        curves = {
            label: np.array([p["policies"][label]["cum"] for p in payloads])
            for label in labels
        }
        summary_path = out / "regret_mean_std.csv"
        with open(summary_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"{l}_mean" for l in labels] + [f"{l}_std" for l in labels])
            t_axis = np.arange(1, cfg.horizon + 1)
            means = {l: curves[l].mean(axis=0) for l in labels}
            stds = {
                l: (curves[l].std(axis=0, ddof=1) if cfg.runs > 1 else np.zeros(cfg.horizon))
                for l in labels
            }
            for k, t in enumerate(t_axis):
                writer.writerow(
                    [t]
                    + [repr(float(means[l][k])) for l in labels]
                    + [repr(float(stds[l][k])) for l in labels]
                )
        files.append(str(summary_path.relative_to(out)))
        metrics = {
            "final_mean": {l: float(means[l][-1]) for l in labels},
            "final_std": {l: float(stds[l][-1]) for l in labels},
            "sm_mean": float(np.mean([p["sm"] for p in payloads])),
            "sp_mean": float(np.mean([p["sp"] for p in payloads])),
            "noise_bound": {
                l: {
                    "holds": int(sum(p["policies"][l]["noise_bound_holds"] for p in payloads)),
                    "total": int(sum(p["policies"][l]["noise_bound_total"] for p in payloads)),
                }
                for l in labels
            },
        }

    manifest = {
        "schema": MANIFEST_SCHEMA,
        "name": cfg.name,
        "config": cfg_doc,
        "config_sha256": hashlib.sha256(
            json.dumps(cfg_doc, sort_keys=True).encode()
        ).hexdigest(),
        "seeds": {
            "base_seed": cfg.base_seed,
            "runs": [[cfg.base_seed, _RUN_TAG, r] for r in range(cfg.runs)],
        },
        "resolved": resolved,
        "status": "complete" if error is None else "partial",
        "error": error,
        "metrics": metrics,
        "files": [],
    }
    manifest["files"] = [
        {"path": rel, "bytes": (out / rel).stat().st_size, "sha256": _hash_file(out / rel)}
        for rel in sorted(files)
    ]
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def sweep(
    cfg: ExperimentConfig,
    axis: str,
    values: list,
    out_dir: Path | str,
    jobs: int = 1,
) -> dict:
    """One experiment per axis value plus a summary CSV of final regret,
    smoothness (sm), and sparsity (sp) against the swept value."""
    if axis not in SWEEP_AXES:
        raise InvalidInputError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    section, key, required_model = SWEEP_AXES[axis]
    if required_model is not None and cfg.graph.get("model") != required_model:
        raise InvalidInputError(
            f"axis {axis!r} applies to the {required_model!r} graph model, "
            f"config uses {cfg.graph.get('model')!r}"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels = [_policy_label(p) for p in cfg.policies]
    rows = []
    manifests = {}
    for value in values:
        sub_cfg = cfg.replace(**{f"{section}.{key}": value})
        sub_dir = out / f"{axis}_{value}"
        manifest = run_experiment(sub_cfg, sub_dir, jobs=jobs)
        manifests[str(value)] = manifest
        entry = {"value": value, "sm": manifest["metrics"].get("sm_mean"), "sp": manifest["metrics"].get("sp_mean")}
        for label in labels:
            entry[f"{label}_final_mean"] = manifest["metrics"]["final_mean"][label]
            entry[f"{label}_final_std"] = manifest["metrics"]["final_std"][label]
        rows.append(entry)
    summary_path = out / "sweep_summary.csv"
    fieldnames = list(rows[0].keys())
    with open(summary_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    doc = {"axis": axis, "values": [r["value"] for r in rows], "summary": str(summary_path)}
    (out / "sweep_manifest.json").write_text(
        json.dumps({**doc, "manifests": {k: m["config_sha256"] for k, m in manifests.items()}}, indent=2)
    )
    return {**doc, "rows": rows, "manifests": manifests}


def bench_scaling(
    cfg: ExperimentConfig,
    n_values: list[int],
    out_dir: Path | str,
    steps: int = 240,
    warmup: int = 40,
) -> dict:
    """Median per-step observe latency for each (policy, user count).

    Runs a short simulation at each user count, timing only the observe
    calls, and emits both the raw medians and the growth ratio per
    successive user-count step.
    """
    if sorted(n_values) != list(n_values):
        raise InvalidInputError("n_values must be increasing")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels = [_policy_label(p) for p in cfg.policies]
    medians: dict[str, dict[int, float]] = {l: {} for l in labels}
    for n in n_values:
        sub_cfg = cfg.replace(n=n, horizon=max(steps, warmup + 1), runs=1)
        inst = build_instance(sub_cfg, 0, tag=_BENCH_TAG)
        for pspec in sub_cfg.policies:
            label = _policy_label(pspec)
            policy = make_policy(pspec, inst, sub_cfg)
            rng = np.random.default_rng(inst.run_seed)
            times = []
            for t in range(steps):
                user = int(rng.integers(n))
                pool = (
                    inst.env.arms
                    if inst.env.arms is not None
                    else envmod.make_unit_ball_arms(inst.env.pool_size, inst.env.dim, rng)
                )
                idx = policy.select(user, pool)
                y = float(pool[idx] @ inst.env.theta[user])
                start = time.perf_counter_ns()
                policy.observe(user, pool[idx], y)
                elapsed = time.perf_counter_ns() - start
                if t >= warmup:
                    times.append(elapsed)
            medians[label][n] = float(np.median(times)) / 1e3  # microseconds
    rows = [
        {"policy": label, "n": n, "median_observe_us": medians[label][n]}
        for label in labels
        for n in n_values
    ]
    with open(out / "bench.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["policy", "n", "median_observe_us"])
        writer.writeheader()
        writer.writerows(rows)
    ratio_rows = []
    for label in labels:
        for lo, hi in zip(n_values, n_values[1:]):
            ratio_rows.append(
                {
                    "policy": label,
                    "n_from": lo,
                    "n_to": hi,
                    "ratio": medians[label][hi] / medians[label][lo],
                }
            )
    with open(out / "bench_ratios.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["policy", "n_from", "n_to", "ratio"])
        writer.writeheader()
        writer.writerows(ratio_rows)
    return {"medians": medians, "ratios": ratio_rows}
