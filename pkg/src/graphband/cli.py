"""Command-line entry point.

Subcommands:

* ``run``    -- execute an experiment config, writing ledgers + manifest
* ``sweep``  -- repeat an experiment along one axis (gamma, threshold, ...)
* ``bench``  -- per-step observe-latency scaling across user counts
* ``ingest`` -- ratings CSV -> factorization -> bandit-instance bundle

Exit codes: 0 success, 2 configuration/input error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, GraphBandError, InvalidInputError, ParseError
from .experiment import ExperimentConfig, SWEEP_AXES, bench_scaling, run_experiment, sweep
from .ingest import (
    build_bandit_instance,
    factorize,
    load_ratings,
    normalize_ratings,
    rating_histogram,
    write_instance_bundle,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _load_config(path: str, seed_override: int | None) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    cfg = ExperimentConfig.from_dict(doc)
    if seed_override is not None:
        cfg = cfg.replace(base_seed=seed_override)
    return cfg


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="experiment config JSON")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override base_seed")
    parser.add_argument("--jobs", type=int, default=1, help="parallel runs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphband")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment")
    _add_common(p_run)
    p_run.add_argument(
        "--checkpoint-every", type=int, default=0, help="estimator snapshot cadence (0=off)"
    )

    p_sweep = sub.add_parser("sweep", help="sweep one axis")
    _add_common(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    p_sweep.add_argument(
        "--values", required=True, help="comma-separated axis values, e.g. 0,1,10"
    )

    p_bench = sub.add_parser("bench", help="observe-latency scaling benchmark")
    _add_common(p_bench)
    p_bench.add_argument("--n-values", required=True, help="comma-separated user counts")
    p_bench.add_argument("--steps", type=int, default=240)

    p_ingest = sub.add_parser("ingest", help="ratings CSV to bandit instance bundle")
    p_ingest.add_argument("--ratings", required=True, help="user_id,item_id,rating CSV")
    p_ingest.add_argument("--out", required=True, help="output bundle directory")
    p_ingest.add_argument("--rank", type=int, default=10)
    p_ingest.add_argument("--reg", type=float, default=0.1)
    p_ingest.add_argument("--iters", type=int, default=20)
    p_ingest.add_argument("--rho", type=float, default=0.05)
    p_ingest.add_argument("--threshold", type=float, default=0.5)
    p_ingest.add_argument("--sample", type=int, default=0, help="users to sample (0=all)")
    p_ingest.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config, args.seed)
    manifest = run_experiment(
        cfg, args.out, jobs=args.jobs, checkpoint_every=args.checkpoint_every
    )
    if manifest["status"] != "complete":
        print(f"experiment failed mid-run: {manifest['error']}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {len(manifest['files'])} files to {args.out}")
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config, args.seed)
    values = []
    for raw in args.values.split(","):
        raw = raw.strip()
        values.append(int(raw) if raw.lstrip("-").isdigit() else float(raw))
    result = sweep(cfg, args.axis, values, args.out, jobs=args.jobs)
    print(f"swept {args.axis} over {result['values']}; summary at {result['summary']}")
    return EXIT_OK


def _cmd_bench(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config, args.seed)
    n_values = [int(v) for v in args.n_values.split(",")]
    result = bench_scaling(cfg, n_values, args.out, steps=args.steps)
    for row in result["ratios"]:
        print(
            f"{row['policy']}: n {row['n_from']} -> {row['n_to']}  "
            f"observe ratio {row['ratio']:.2f}"
        )
    return EXIT_OK


def _cmd_ingest(args: argparse.Namespace) -> int:
    data = load_ratings(args.ratings)
    data = normalize_ratings(data)
    model = factorize(data, rank=args.rank, reg=args.reg, iters=args.iters, seed=args.seed)
    n_sample = args.sample or data.n_users
    instance = build_bandit_instance(
        model, rho=args.rho, threshold=args.threshold, n_sample=n_sample, seed=args.seed
    )
    out = Path(args.out)
    paths = write_instance_bundle(instance, out)
    hist_path = out / "rating_histogram.json"
    hist_path.write_text(json.dumps(rating_histogram(data), indent=2))
    paths.append(hist_path)
    print(f"wrote instance bundle ({len(paths)} files) to {out}")
    print(f"final factorization RMSE: {model.rmse_history[-1]:.6f}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "bench": _cmd_bench,
        "ingest": _cmd_ingest,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, ParseError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GraphBandError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
