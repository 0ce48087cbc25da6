"""Benchmark command line (console script ``eee-bench``).

One invocation runs a batch of independent optimization runs for a single
(problem, algorithm) cell and writes two CSV files into the output
directory: ``runs.csv`` with one row per run and ``aggregate.csv`` with the
usual query-count statistics (t_0.5, t_mean, t_sigma, t_max, r_f).

Configuration comes from flags, optionally seeded by a flat ``key = value``
config file (``--config``); flags override the file, and the environment
variables ``EEE_SEED`` and ``EEE_WORKERS`` override everything. All
randomness derives from the master seed, so repeating a command reproduces
its CSVs byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .baselines import BaselineConfig, ga_run, pso_run, random_search
from .errors import ConfigError, ProtocolError
from .external import DEFAULT_TIMEOUT, ExternalProblem, ExternalValidatorClient
from .orchestrator import EEEConfig, RunRecord, aggregate, run
from .validation import PROBLEM_NAMES, ErrorSpec, ImplicitBlock, make_problem

__all__ = ["RunConfig", "parse_config", "run_matrix", "main"]

ALGOS = ("eee", "random", "pso", "ga")
KERNELS = ("identity", "perceptron", "mlp")

RUNS_COLUMNS = [
    "run_id",
    "seed",
    "success",
    "queries",
    "final_e_o",
    "rounds",
    "gate_fires",
    "explore_queries",
]
AGGREGATE_COLUMNS = [
    "problem",
    "algo",
    "kernel",
    "init",
    "runs",
    "t_0.5",
    "t_mean",
    "t_sigma",
    "t_max",
    "r_f",
]


@dataclass
class RunConfig:
    """One benchmark cell: what to optimize, with what, how many times."""

    problem: str | None = None
    external_cmd: str | None = None
    algo: str = "eee"
    kernel: str | None = None
    ensemble_size: int = 4
    seed_count: int = 64
    init: int = 64
    budget: int = 1000
    runs: int = 20
    out: str = "results"
    seed: int = 0
    workers: int | None = None
    external_dx: int = 3
    external_de: int = 3
    external_epsilon: float = 0.02
    external_timeout: float = DEFAULT_TIMEOUT

    def validate(self) -> None:
        if self.problem is None and self.external_cmd is None:
            raise ConfigError("one of problem or external-cmd is required")
        if self.problem is not None and self.external_cmd is not None:
            raise ConfigError("problem and external-cmd are mutually exclusive")
        if self.problem is not None and self.problem not in PROBLEM_NAMES:
            raise ConfigError(
                f"unknown problem {self.problem!r}; "
                f"choose from {', '.join(PROBLEM_NAMES)}"
            )
        if self.algo not in ALGOS:
            raise ConfigError(f"unknown algo {self.algo!r}; choose from {', '.join(ALGOS)}")
        if self.kernel is not None and self.algo != "eee":
            raise ConfigError(
                f"kernel={self.kernel!r} applies only to algo='eee', "
                f"got algo={self.algo!r}"
            )
        if self.kernel is not None and self.kernel not in KERNELS:
            raise ConfigError(
                f"unknown kernel {self.kernel!r}; choose from {', '.join(KERNELS)}"
            )
        if self.init not in (32, 64):
            raise ConfigError(f"init must be 32 or 64, got {self.init}")
        if self.ensemble_size < 2:
            raise ConfigError("ensemble-size must be >= 2")
        if self.seed_count < 1:
            raise ConfigError("seed-count must be positive")
        if self.budget < 1:
            raise ConfigError("budget must be positive")
        if self.runs < 1:
            raise ConfigError("runs must be positive")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be positive")
        if self.external_dx < 1 or self.external_de < 1:
            raise ConfigError("external-dx and external-de must be positive")
        if self.external_epsilon <= 0 or self.external_timeout <= 0:
            raise ConfigError("external-epsilon and external-timeout must be positive")

    @property
    def resolved_kernel(self) -> str:
        return self.kernel if self.kernel is not None else "identity"


# config-file keys mirror the flags 1:1 (dashes in the file, underscores here)
_KEY_TO_FIELD = {f.name.replace("_", "-"): f.name for f in fields(RunConfig)}
_INT_FIELDS = {
    "ensemble_size", "seed_count", "init", "budget", "runs", "seed", "workers",
    "external_dx", "external_de",
}
_FLOAT_FIELDS = {"external_epsilon", "external_timeout"}


def _coerce(key: str, field_name: str, value: str):
    try:
        if field_name in _INT_FIELDS:
            return int(value)
        if field_name in _FLOAT_FIELDS:
            return float(value)
    except ValueError:
        raise ConfigError(f"config key {key!r} needs a number, got {value!r}") from None
    return value


def read_config_file(path: str | Path) -> dict[str, object]:
    """Flat ``key = value`` file; ``[section]`` headers group, ``#`` comments."""
    values: dict[str, object] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEY_TO_FIELD:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        field_name = _KEY_TO_FIELD[key]
        values[field_name] = _coerce(key, field_name, value)
    return values


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="eee-bench",
        description="Run a batch of seeded optimization runs and emit CSV metrics.",
    )
    p.add_argument("--config", metavar="FILE", help="key = value config file")
    p.add_argument(
        "--problem",
        choices=PROBLEM_NAMES,
        help="built-in benchmark problem (mutually exclusive with --external-cmd)",
    )
    p.add_argument(
        "--external-cmd",
        metavar="CMD",
        help="external validator command speaking line-delimited JSON on stdio",
    )
    p.add_argument("--algo", choices=ALGOS, help="optimizer (default: eee)")
    p.add_argument(
        "--kernel",
        choices=KERNELS,
        help="search kernel, eee only (default: identity)",
    )
    p.add_argument("--ensemble-size", type=int, metavar="L",
                   help="estimator count (default: 4)")
    p.add_argument("--seed-count", type=int, metavar="N",
                   help="search seed-set size (default: 64)")
    p.add_argument("--init", type=int, choices=(32, 64),
                   help="initial samples (default: 64)")
    p.add_argument("--budget", type=int, help="validation-query budget (default: 1000)")
    p.add_argument("--runs", type=int, help="independent runs (default: 20)")
    p.add_argument("--out", metavar="DIR", help="output directory (default: results)")
    p.add_argument("--seed", type=int, metavar="MASTER",
                   help="master seed; every run seed derives from it (default: 0)")
    p.add_argument("--workers", type=int,
                   help="parallel runs (default: logical cores)")
    p.add_argument("--external-dx", type=int, metavar="D",
                   help="state dimension of the external validator (default: 3)")
    p.add_argument("--external-de", type=int, metavar="D",
                   help="implicit error components it returns (default: 3)")
    p.add_argument("--external-epsilon", type=float, metavar="EPS",
                   help="acceptance threshold for the external problem (default: 0.02)")
    p.add_argument("--external-timeout", type=float, metavar="SEC",
                   help="per-request timeout (default: 60)")
    return p


def parse_config(argv: list[str] | None = None) -> RunConfig:
    """Defaults < config file < flags < EEE_SEED / EEE_WORKERS environment."""
    args = _build_parser().parse_args(argv)
    merged: dict[str, object] = {}
    if args.config:
        merged.update(read_config_file(args.config))
    for field_name in _KEY_TO_FIELD.values():
        flag_value = getattr(args, field_name)
        if flag_value is not None:
            merged[field_name] = flag_value
    for env_name, field_name in (("EEE_SEED", "seed"), ("EEE_WORKERS", "workers")):
        raw = os.environ.get(env_name)
        if raw is not None:
            try:
                merged[field_name] = int(raw)
            except ValueError:
                raise ConfigError(f"{env_name} must be an integer, got {raw!r}") from None
    cfg = RunConfig(**merged)
    cfg.validate()
    return cfg


def _external_spec(cfg: RunConfig) -> ErrorSpec:
    # layout the protocol cannot carry: unit-weight implicit components only,
    # so the local assembly matches any validator whose e_o sums its e_imp
    return ErrorSpec(
        implicit_blocks=[ImplicitBlock("external", np.ones(cfg.external_de))],
        explicit_blocks=[],
        epsilon=cfg.external_epsilon,
        d_x=cfg.external_dx,
    )


def _aborted_record(cfg: RunConfig, seed: int, why: str) -> RunRecord:
    return RunRecord(
        success=False,
        queries_to_success=None,
        final_e_o=float("inf"),
        best_state=None,
        seed=seed,
        budget=cfg.budget,
        rounds=0,
        init_queries=0,
        gate_fires=0,
        explore_queries=0,
        total_queries=0,
        final_state_spread=0.0,
        aborted=True,
        diagnostic=why,
    )


def _dispatch(cfg: RunConfig, problem, seed: int) -> RunRecord:
    if cfg.algo == "eee":
        eee_cfg = EEEConfig(
            kernel=cfg.resolved_kernel,
            ensemble_size=cfg.ensemble_size,
            seed_count=cfg.seed_count,
            init_samples=cfg.init,
            budget=cfg.budget,
        )
        return run(problem, eee_cfg, seed=seed)
    if cfg.algo == "random":
        return random_search(problem, cfg.budget, seed)
    base_cfg = BaselineConfig(
        algorithm=cfg.algo, population=cfg.init, budget=cfg.budget, seed=seed
    )
    return pso_run(problem, base_cfg) if cfg.algo == "pso" else ga_run(problem, base_cfg)


def _single_run(cfg: RunConfig, seed: int) -> RunRecord:
    try:
        if cfg.external_cmd is not None:
            with ExternalValidatorClient(
                cfg.external_cmd, timeout=cfg.external_timeout
            ) as client:
                problem = ExternalProblem("external", _external_spec(cfg), client)
                return _dispatch(cfg, problem, seed)
        return _dispatch(cfg, make_problem(cfg.problem), seed)
    except ProtocolError as exc:
        # mid-run breaks already yield aborted records inside the optimizer;
        # this catches spawn failures and breaks during baseline evaluation
        return _aborted_record(cfg, seed, str(exc))


def _write_csvs(cfg: RunConfig, records: list[RunRecord]) -> tuple[Path, Path]:
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs_path = out_dir / "runs.csv"
    agg_path = out_dir / "aggregate.csv"

    with open(runs_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RUNS_COLUMNS)
        for run_id, rec in enumerate(records):
            t = rec.queries_to_success if rec.success else rec.budget
            writer.writerow(
                [
                    run_id,
                    rec.seed,
                    int(rec.success),
                    t,
                    rec.final_e_o,
                    rec.rounds,
                    rec.gate_fires,
                    rec.explore_queries,
                ]
            )

    stats = aggregate(records)
    is_eee = cfg.algo == "eee"
    with open(agg_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AGGREGATE_COLUMNS)
        writer.writerow(
            [
                cfg.problem if cfg.problem is not None else "external",
                cfg.algo,
                cfg.resolved_kernel if is_eee else "-",
                cfg.init if is_eee else "-",
                cfg.runs,
                stats["t_0.5"],
                stats["t_mean"],
                stats["t_sigma"],
                stats["t_max"],
                stats["r_f"],
            ]
        )
    return runs_path, agg_path


def run_matrix(cfg: RunConfig) -> int:
    """Run the batch, write CSVs, return the process exit code."""
    seeds = [
        int(s)
        for s in np.random.SeedSequence(cfg.seed).generate_state(
            cfg.runs, dtype=np.uint32
        )
    ]
    workers = cfg.workers if cfg.workers is not None else (os.cpu_count() or 1)
    if workers == 1 or cfg.runs == 1:
        records = [_single_run(cfg, seed) for seed in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_single_run, cfg, seed) for seed in seeds]
            records = [f.result() for f in futures]  # run_id order, not finish order

    for run_id, rec in enumerate(records):
        t = rec.queries_to_success if rec.success else rec.budget
        status = "aborted" if rec.aborted else ("ok" if rec.success else "fail")
        note = f" ({rec.diagnostic})" if rec.aborted and rec.diagnostic else ""
        print(f"run {run_id + 1}/{cfg.runs}: {status} queries={t}{note}", file=sys.stderr)

    runs_path, agg_path = _write_csvs(cfg, records)
    stats = aggregate(records)
    print(
        f"{cfg.problem or 'external'} {cfg.algo}: "
        f"t_0.5={stats['t_0.5']:g} t_mean={stats['t_mean']:g} "
        f"t_sigma={stats['t_sigma']:g} t_max={stats['t_max']:g} "
        f"r_f={stats['r_f']}/{cfg.runs}"
    )
    print(f"wrote {runs_path} and {agg_path}")
    if all(rec.aborted for rec in records):
        print("error: every run aborted on the external validator", file=sys.stderr)
        return 3
    return 0


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run_matrix(cfg)


if __name__ == "__main__":
    sys.exit(main())
