"""Outer optimization loop.

Each run: validate a batch of initial random samples (excluded from query
metrics), then iterate {train estimators -> kernel search -> gated candidate
validation -> disagreement-driven exploration} until a state is accepted, the
post-init query budget runs out, or the round cap is reached. Every
validation query is counted and conserved.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ProtocolError, StateError
from .estimators import (
    EXPLORATION,
    HISTORY,
    EstimatorEnsemble,
    SampleBuffer,
    disagreement,
    train_epochs,
)
from .explorer import LineGenerator, reinit, sample_candidates, select_exploration_state
from .searcher import (
    KERNEL_KINDS,
    SearchKernel,
    SeedSet,
    generate_states,
    pick_candidate,
    search_round,
    simplex_batch,
)

__all__ = [
    "C_F_DEFAULTS",
    "KERNEL_HIDDEN_DEFAULTS",
    "EEEConfig",
    "Schedule",
    "RoundTrace",
    "RunRecord",
    "r_ram_for",
    "gate",
    "run",
    "aggregate",
]

# gate multipliers by problem; anything unknown falls back to 1.5
C_F_DEFAULTS = {
    "p1-spectra2": 1.5,
    "p2-cycle11": 1.5,
    "p3-actuator20": 2.0,
    "p4-pwm30": 5.0,
}
FALLBACK_C_F = 1.5

# hidden width for learnable search kernels; the wide net on the PWM problem
# is what makes generation-space collapse observable there
KERNEL_HIDDEN_DEFAULTS = {
    "p1-spectra2": 20,
    "p2-cycle11": 20,
    "p3-actuator20": 20,
    "p4-pwm30": 256,
}
FALLBACK_KERNEL_HIDDEN = 20


@dataclass
class Schedule:
    """Per-run training/gating knobs resolved from config and problem."""

    r_t: int = 20
    r_b: int = 1
    eps_es: float = 1e-3
    c_f: float = 1.5
    c_f_policy: str = "constant"
    r_max: int = 400
    budget: int = 1000

    def __post_init__(self):
        if self.c_f <= 1.0:
            raise ConfigError("focus coefficient c_f must exceed 1")
        if self.budget < 0:
            raise ConfigError("budget must be nonnegative")
        if self.r_b < 1 or self.r_t < self.r_b:
            raise ConfigError("need r_t >= r_b >= 1 so r_ep >= 1")
        if self.r_max < 1:
            raise ConfigError("need at least one round")
        if self.c_f_policy not in ("constant", "adaptive"):
            raise ConfigError(f"unknown c_f policy {self.c_f_policy!r}")

    @property
    def r_ep(self) -> int:
        return self.r_t // self.r_b


@dataclass
class EEEConfig:
    """Run configuration for the full framework."""

    kernel: str = "identity"
    ensemble_size: int = 4
    seed_count: int = 64
    init_samples: int = 64
    budget: int = 1000
    r_max: int = 400
    r_t: int = 20
    eps_es: float = 1e-3
    c_f: float | None = None
    c_f_policy: str = "constant"
    est_hidden: int = 16
    est_lr: float = 1e-3
    kernel_hidden: int | None = None
    kernel_lr: float | None = None
    explore_candidates: int = 256
    explore_members: int | None = None
    collapse_reg: bool | None = None

    def __post_init__(self):
        if self.kernel not in KERNEL_KINDS:
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if self.ensemble_size < 2:
            raise ConfigError("ensemble size must be >= 2")
        if self.seed_count < 1 or self.init_samples < 1:
            raise ConfigError("seed count and initial samples must be positive")
        if self.explore_candidates < 1:
            raise ConfigError("need at least one exploration candidate")
        if self.explore_members is not None and not (
            2 <= self.explore_members <= self.ensemble_size
        ):
            raise ConfigError(
                "exploration committee must have between 2 and ensemble_size members"
            )

    def schedule_for(self, problem) -> Schedule:
        c_f = self.c_f
        if c_f is None:
            c_f = C_F_DEFAULTS.get(getattr(problem, "name", ""), FALLBACK_C_F)
        r_b = 10 if self.kernel == "mlp" else 1
        return Schedule(
            r_t=self.r_t,
            r_b=r_b,
            eps_es=self.eps_es,
            c_f=c_f,
            c_f_policy=self.c_f_policy,
            r_max=self.r_max,
            budget=self.budget,
        )


@dataclass
class RoundTrace:
    """What one outer round did."""

    l: int
    candidate_e_hat: float
    gate_fired: bool
    explore_disagreement: float | None


@dataclass
class RunRecord:
    """Outcome and audit trail of one run."""

    success: bool
    queries_to_success: int | None
    final_e_o: float
    best_state: np.ndarray | None
    seed: int
    budget: int
    rounds: int
    init_queries: int
    gate_fires: int
    explore_queries: int
    total_queries: int
    final_state_spread: float
    trace: list[RoundTrace] = field(default_factory=list)
    aborted: bool = False
    diagnostic: str | None = None


def r_ram_for(l: int, ensemble_size: int, r_b: int) -> int:
    """Kernel training steps this round: (int(2l/L) + 1) * r_b."""
    if not 0 <= l <= ensemble_size:
        raise ValueError(f"l must be in [0, {ensemble_size}], got {l}")
    return (int(2 * l / ensemble_size) + 1) * r_b


def gate(e_hat: float, epsilon: float, c_f: float) -> bool:
    """Spend a query on the candidate? True iff strictly below c_f * epsilon."""
    return e_hat < c_f * epsilon


def run(problem, config: EEEConfig, seed: int) -> RunRecord:
    """Execute one full optimization run against the problem."""
    schedule = config.schedule_for(problem)
    spec = problem.spec
    codec = getattr(problem, "codec", None)
    counter_start = problem.queries

    streams = np.random.SeedSequence(seed).spawn(4)
    init_rng = np.random.default_rng(streams[0])
    round_rng = np.random.default_rng(streams[1])
    ens_seed = int(streams[2].generate_state(1)[0])
    seeds_seed = int(streams[3].generate_state(1)[0])

    buf = SampleBuffer(spec.d_x, spec.d_e_imp)
    best_e_o = np.inf
    best_state: np.ndarray | None = None
    init_queries = 0
    gate_fires = 0
    explore_queries = 0
    trace: list[RoundTrace] = []
    success = False
    queries_to_success: int | None = None
    aborted = False
    diagnostic: str | None = None

    ens = EstimatorEnsemble(
        d_x=spec.d_x,
        d_e_imp=spec.d_e_imp,
        ensemble_size=config.ensemble_size,
        hidden=config.est_hidden,
        eps_es=schedule.eps_es,
        lr=config.est_lr,
        batch_start=config.init_samples,
        seed=ens_seed,
    )
    collapse = config.collapse_reg
    if collapse is None:
        collapse = config.kernel == "mlp" and codec == "simplex"
    hidden = config.kernel_hidden
    if hidden is None:
        hidden = KERNEL_HIDDEN_DEFAULTS.get(
            getattr(problem, "name", ""), FALLBACK_KERNEL_HIDDEN
        )
    kernel = SearchKernel(
        config.kernel,
        d_x=spec.d_x,
        hidden=hidden,
        codec=codec,
        collapse_reg=collapse,
        lr=config.kernel_lr,
        seed=ens_seed + 1,
    )
    seeds = SeedSet(config.seed_count, kernel.d_s, seed=seeds_seed)
    gen = LineGenerator(spec.d_x, seed=int(round_rng.integers(1 << 62)))

    def post_init_spent() -> int:
        return problem.queries - counter_start - init_queries

    def record_report(report, origin: str) -> None:
        nonlocal best_e_o, best_state
        buf.append(report.state, report.e_imp, report.e_o, origin)
        if report.e_o < best_e_o:
            best_e_o = report.e_o
            best_state = report.state.copy()

    try:
        # initial sampling: validated and stored, but free of the budget
        init_states = init_rng.uniform(0.0, 1.0, size=(config.init_samples, spec.d_x))
        if codec == "simplex":
            init_states = simplex_batch(init_states)
        for x in init_states:
            report = problem.validate(x)
            init_queries += 1
            record_report(report, EXPLORATION)
            if report.accepted:
                success = True
                queries_to_success = 0
                break

        rounds = 0
        while not success and rounds < schedule.r_max:
            if post_init_spent() >= schedule.budget:
                break
            rounds += 1
            ens.reset_convergence()
            l = train_epochs(ens, buf, schedule.r_ep)
            c_f = schedule.c_f
            if schedule.c_f_policy == "adaptive":
                c_f = schedule.c_f * config.ensemble_size / max(l, 1)
            search_round(
                kernel, seeds, spec, ens, r_ram_for(l, config.ensemble_size, schedule.r_b)
            )
            candidate, e_hat = pick_candidate(
                spec, ens, generate_states(kernel, seeds)
            )
            fired = gate(e_hat, spec.epsilon, c_f)
            row = RoundTrace(l, float(e_hat), False, None)
            trace.append(row)
            if fired:
                if post_init_spent() >= schedule.budget:
                    break
                report = problem.validate(np.clip(candidate, 0.0, 1.0))
                gate_fires += 1
                row.gate_fired = True
                record_report(report, HISTORY)
                if report.accepted:
                    success = True
                    queries_to_success = post_init_spent()
                    break
            if post_init_spent() >= schedule.budget:
                break
            reinit(gen, int(round_rng.integers(1 << 62)))
            cands = sample_candidates(
                gen, config.explore_candidates, int(round_rng.integers(1 << 62))
            )
            if codec == "simplex":
                cands = simplex_batch(cands)
            x_ex = select_exploration_state(cands, ens, config.explore_members)
            row.explore_disagreement = float(
                disagreement(ens, x_ex[None, :], config.explore_members)[0]
            )
            report = problem.validate(x_ex)
            explore_queries += 1
            record_report(report, EXPLORATION)
            if report.accepted:
                success = True
                queries_to_success = post_init_spent()
                break
    except ProtocolError as exc:
        aborted = True
        diagnostic = str(exc)
        rounds = len(trace)

    total = problem.queries - counter_start
    if total != init_queries + gate_fires + explore_queries:
        raise StateError(
            f"query conservation violated: counter advanced {total}, "
            f"accounted {init_queries}+{gate_fires}+{explore_queries}"
        )
    if config.seed_count >= 2:
        spread = float(generate_states(kernel, seeds)[:, 0].std())
    else:
        spread = 0.0
    return RunRecord(
        success=success,
        queries_to_success=queries_to_success,
        final_e_o=float(best_e_o),
        best_state=best_state,
        seed=seed,
        budget=schedule.budget,
        rounds=len(trace),
        init_queries=init_queries,
        gate_fires=gate_fires,
        explore_queries=explore_queries,
        total_queries=total,
        final_state_spread=spread,
        trace=trace,
        aborted=aborted,
        diagnostic=diagnostic,
    )


def aggregate(records: list[RunRecord]) -> dict:
    """Benchmark metrics over a set of runs.

    Failed runs enter the t-statistics at their full budget; the failure
    count r_f is reported separately so either reading is recoverable.
    The median interpolates between the central order statistics for even
    counts.
    """
    if not records:
        raise StateError("cannot aggregate zero runs")
    values = np.array(
        [r.queries_to_success if r.success else r.budget for r in records],
        dtype=np.float64,
    )
    return {
        "t_0.5": float(np.median(values)),
        "t_mean": float(values.mean()),
        "t_sigma": float(values.std()),
        "t_max": float(values.max()),
        "r_f": int(sum(1 for r in records if not r.success)),
    }
