"""Reference optimizers under the same query accounting as the main loop.

Random search, global-best particle swarm, and a generational real-coded
genetic algorithm. Every fitness evaluation costs one validation query;
runs stop at the first accepted report or when the budget is spent, so
query counts are directly comparable across optimizers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .orchestrator import RunRecord
from .searcher import simplex_batch

__all__ = ["BaselineConfig", "random_search", "pso_run", "ga_run"]

ALGORITHMS = ("random", "pso", "ga")


@dataclass
class BaselineConfig:
    """Knobs shared by the population baselines.

    The population size mirrors the initial-sample count used by the main
    optimizer so comparisons start from the same sampling effort.
    """

    algorithm: str = "pso"
    population: int = 64
    budget: int = 1000
    seed: int = 0
    inertia: float = 0.72
    cognitive: float = 1.49
    social: float = 1.49
    crossover_rate: float = 0.9
    mutation_sigma: float = 0.1
    elitism: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown baseline algorithm {self.algorithm!r}")
        if self.population < 2:
            raise ConfigError("population must be >= 2")
        if self.budget < self.population:
            raise ConfigError("budget must cover at least one full population")


class _Evaluator:
    """Counts queries, applies the problem codec, tracks the running best."""

    def __init__(self, problem, budget: int):
        self.problem = problem
        self.codec = getattr(problem, "codec", None)
        self.budget = int(budget)
        self.spent = 0
        self.best_e_o = np.inf
        self.best_state: np.ndarray | None = None
        self.accepted_at: int | None = None

    @property
    def exhausted(self) -> bool:
        return self.spent >= self.budget or self.accepted_at is not None

    def __call__(self, x: np.ndarray) -> float:
        state = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
        if self.codec == "simplex":
            state = simplex_batch(state[None, :])[0]
        report = self.problem.validate(state)
        self.spent += 1
        if report.e_o < self.best_e_o:
            self.best_e_o = report.e_o
            self.best_state = report.state.copy()
        if report.accepted and self.accepted_at is None:
            self.accepted_at = self.spent
        return float(report.e_o)

    def record(self, seed: int, rounds: int) -> RunRecord:
        success = self.accepted_at is not None
        return RunRecord(
            success=success,
            queries_to_success=self.accepted_at if success else None,
            final_e_o=float(self.best_e_o),
            best_state=self.best_state,
            seed=int(seed),
            budget=self.budget,
            rounds=int(rounds),
            init_queries=0,
            gate_fires=0,
            explore_queries=0,
            total_queries=self.spent,
            final_state_spread=0.0,
            trace=[],
        )


def random_search(problem, budget: int, seed: int) -> RunRecord:
    """Uniform box samples validated one by one until acceptance or budget."""
    if budget < 1:
        raise ConfigError("budget must be positive")
    rng = np.random.default_rng(seed)
    ev = _Evaluator(problem, budget)
    d_x = problem.spec.d_x
    while not ev.exhausted:
        ev(rng.uniform(0.0, 1.0, d_x))
    return ev.record(seed, rounds=0)


def pso_run(problem, cfg: BaselineConfig) -> RunRecord:
    """Global-best particle swarm with a velocity clamp of 0.2 box widths."""
    rng = np.random.default_rng(cfg.seed)
    d_x = problem.spec.d_x
    n = cfg.population
    ev = _Evaluator(problem, cfg.budget)

    pos = rng.uniform(0.0, 1.0, (n, d_x))
    vel = np.zeros((n, d_x))
    pbest_pos = pos.copy()
    pbest_val = np.full(n, np.inf)
    gbest_pos = pos[0].copy()
    gbest_val = np.inf
    rounds = 0

    for i in range(n):
        if ev.exhausted:
            break
        val = ev(pos[i])
        pbest_val[i] = val
        if val < gbest_val:
            gbest_val, gbest_pos = val, pos[i].copy()

    while not ev.exhausted:
        rounds += 1
        for i in range(n):
            if ev.exhausted:
                break
            r1 = rng.uniform(0.0, 1.0, d_x)
            r2 = rng.uniform(0.0, 1.0, d_x)
            vel[i] = (
                cfg.inertia * vel[i]
                + cfg.cognitive * r1 * (pbest_pos[i] - pos[i])
                + cfg.social * r2 * (gbest_pos - pos[i])
            )
            np.clip(vel[i], -0.2, 0.2, out=vel[i])
            pos[i] = np.clip(pos[i] + vel[i], 0.0, 1.0)
            val = ev(pos[i])
            if val < pbest_val[i]:
                pbest_val[i] = val
                pbest_pos[i] = pos[i].copy()
            if val < gbest_val:
                gbest_val, gbest_pos = val, pos[i].copy()
    return ev.record(cfg.seed, rounds)


def ga_run(problem, cfg: BaselineConfig) -> RunRecord:
    """Generational real-coded GA: tournament selection (k=2), blend
    crossover (alpha=0.5), per-gene Gaussian mutation at rate 1/D_x,
    single-elite carryover (the elite is not re-evaluated)."""
    rng = np.random.default_rng(cfg.seed)
    d_x = problem.spec.d_x
    n = cfg.population
    ev = _Evaluator(problem, cfg.budget)

    pop = rng.uniform(0.0, 1.0, (n, d_x))
    fit = np.full(n, np.inf)
    rounds = 0
    for i in range(n):
        if ev.exhausted:
            break
        fit[i] = ev(pop[i])

    def tournament() -> np.ndarray:
        a, b = rng.integers(0, n, 2)
        return pop[a] if fit[a] <= fit[b] else pop[b]

    while not ev.exhausted:
        rounds += 1
        elite_idx = int(np.argmin(fit))
        elite, elite_fit = pop[elite_idx].copy(), fit[elite_idx]
        children = [elite]
        child_fit = [elite_fit]
        while len(children) < n and not ev.exhausted:
            p1, p2 = tournament(), tournament()
            if rng.uniform() < cfg.crossover_rate:
                # blend crossover: each gene uniform on the alpha-expanded span
                lo = np.minimum(p1, p2)
                hi = np.maximum(p1, p2)
                span = hi - lo
                child = rng.uniform(lo - 0.5 * span, hi + 0.5 * span)
            else:
                child = p1.copy()
            mask = rng.uniform(size=d_x) < 1.0 / d_x
            child = child + mask * rng.normal(0.0, cfg.mutation_sigma, d_x)
            child = np.clip(child, 0.0, 1.0)
            children.append(child)
            child_fit.append(ev(child))
        if len(child_fit) == n:
            pop = np.array(children)
            fit = np.array(child_fit)
    return ev.record(cfg.seed, rounds)
