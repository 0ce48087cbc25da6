"""Validation module: error taxonomy, overall-error assembly, query counting,
built-in benchmark problems, and the error-blurriness diagnostic.

Errors split into two families. Implicit components (distance to the target
observation, hidden constraint penalties) are only observable through a
validation query. Explicit components (boundary error, state spread, ordering
violations) have closed forms in the state and carry analytic gradients so
search can descend them without spending queries.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, UndefinedRatioError, ValidationInputError

__all__ = [
    "ErrorReport",
    "ImplicitBlock",
    "BoundaryBlock",
    "SpreadBlock",
    "OrderingBlock",
    "ErrorSpec",
    "Problem",
    "BlurrinessInput",
    "boundary_error",
    "assemble_overall",
    "validate",
    "error_blurriness",
    "make_problem",
    "PROBLEM_NAMES",
]


def boundary_error(x_norm: np.ndarray) -> np.ndarray:
    """Per-entry distance outside the unit box: max(x-1,0) + max(-x,0)."""
    x = np.asarray(x_norm, dtype=np.float64)
    return np.maximum(x - 1.0, 0.0) + np.maximum(-x, 0.0)


@dataclass(frozen=True)
class ImplicitBlock:
    """One named group of implicit error entries and its weights."""

    name: str
    weights: np.ndarray

    @property
    def dim(self) -> int:
        return self.weights.shape[0]


class BoundaryBlock:
    """Explicit component: per-entry unit-box violation."""

    name = "boundary"

    def __init__(self, d_x: int, weight_each: float):
        self.dim = d_x
        self.weights = np.full(d_x, weight_each, dtype=np.float64)

    def value(self, states: np.ndarray) -> np.ndarray:
        return boundary_error(states)

    def vjp(self, states: np.ndarray, out_grad: np.ndarray) -> np.ndarray:
        sign = (states > 1.0).astype(np.float64) - (states < 0.0).astype(np.float64)
        return out_grad * sign


class SpreadBlock:
    """Explicit component: population standard deviation of the state entries."""

    name = "spread"

    def __init__(self, d_x: int, weight: float):
        self.dim = 1
        self.d_x = d_x
        self.weights = np.array([weight], dtype=np.float64)

    def value(self, states: np.ndarray) -> np.ndarray:
        return states.std(axis=1, keepdims=True)

    def vjp(self, states: np.ndarray, out_grad: np.ndarray) -> np.ndarray:
        centered = states - states.mean(axis=1, keepdims=True)
        std = states.std(axis=1, keepdims=True)
        # zero subgradient at the constant-state kink
        safe = np.where(std > 0.0, std, 1.0)
        return out_grad * np.where(std > 0.0, centered / (self.d_x * safe), 0.0)


class OrderingBlock:
    """Explicit component: adjacent-pair ordering violations max(x_i - x_{i+1}, 0)."""

    name = "ordering"

    def __init__(self, d_x: int, weight_each: float):
        self.dim = d_x - 1
        self.weights = np.full(d_x - 1, weight_each, dtype=np.float64)

    def value(self, states: np.ndarray) -> np.ndarray:
        return np.maximum(states[:, :-1] - states[:, 1:], 0.0)

    def vjp(self, states: np.ndarray, out_grad: np.ndarray) -> np.ndarray:
        active = (states[:, :-1] - states[:, 1:] > 0.0).astype(np.float64)
        grad = np.zeros_like(states)
        grad[:, :-1] += out_grad * active
        grad[:, 1:] -= out_grad * active
        return grad


class ErrorSpec:
    """Weights and evaluators defining how component errors combine into e_o."""

    def __init__(
        self,
        implicit_blocks: list[ImplicitBlock],
        explicit_blocks: list,
        epsilon: float,
        d_x: int,
    ):
        self.implicit_blocks = list(implicit_blocks)
        self.explicit_blocks = list(explicit_blocks)
        self.epsilon = float(epsilon)
        self.d_x = int(d_x)
        self.w_imp = (
            np.concatenate([b.weights for b in implicit_blocks])
            if implicit_blocks
            else np.zeros(0)
        )
        self.w_exp = (
            np.concatenate([b.weights for b in explicit_blocks])
            if explicit_blocks
            else np.zeros(0)
        )
        if np.any(self.w_imp < 0) or np.any(self.w_exp < 0):
            raise ValueError("component weights must be nonnegative")
        if self.w_imp.sum() + self.w_exp.sum() <= 0:
            raise ValueError("at least one component weight must be positive")

    @property
    def d_e_imp(self) -> int:
        return self.w_imp.shape[0]

    @property
    def d_e_exp(self) -> int:
        return self.w_exp.shape[0]

    @property
    def d_e(self) -> int:
        return self.d_e_imp + self.d_e_exp

    def explicit_values(self, states: np.ndarray) -> np.ndarray:
        """Batched explicit errors: (n, D_x) -> (n, d_e_exp)."""
        states = np.asarray(states, dtype=np.float64)
        if states.ndim != 2 or states.shape[1] != self.d_x:
            raise DimensionError(f"states must be (n, {self.d_x}), got {states.shape}")
        if not self.explicit_blocks:
            return np.zeros((states.shape[0], 0))
        return np.concatenate([b.value(states) for b in self.explicit_blocks], axis=1)

    def explicit_vjp(self, states: np.ndarray, out_grad: np.ndarray) -> np.ndarray:
        """d(out_grad . e_exp)/d(states), batched."""
        states = np.asarray(states, dtype=np.float64)
        out_grad = np.asarray(out_grad, dtype=np.float64)
        if out_grad.shape != (states.shape[0], self.d_e_exp):
            raise DimensionError(
                f"out_grad must be (n, {self.d_e_exp}), got {out_grad.shape}"
            )
        grad = np.zeros_like(states)
        col = 0
        for block in self.explicit_blocks:
            grad += block.vjp(states, out_grad[:, col : col + block.dim])
            col += block.dim
        return grad


@dataclass(frozen=True)
class ErrorReport:
    """Outcome of one validation query."""

    state: np.ndarray
    e_imp: np.ndarray
    e_exp: np.ndarray
    e_o: float
    accepted: bool


def assemble_overall(spec: ErrorSpec, e_imp: np.ndarray, e_exp: np.ndarray) -> float:
    """Overall error: weighted sum of implicit and explicit components."""
    e_imp = np.asarray(e_imp, dtype=np.float64)
    e_exp = np.asarray(e_exp, dtype=np.float64)
    if e_imp.shape != (spec.d_e_imp,):
        raise DimensionError(f"e_imp must have {spec.d_e_imp} entries, got {e_imp.shape}")
    if e_exp.shape != (spec.d_e_exp,):
        raise DimensionError(f"e_exp must have {spec.d_e_exp} entries, got {e_exp.shape}")
    return float(spec.w_imp @ e_imp + spec.w_exp @ e_exp)


class Problem:
    """A validation target: hidden forward model, target observation, spec,
    and the query counter. Every successful validate call costs one query."""

    def __init__(self, name: str, spec: ErrorSpec, implicit_fn, codec: str | None = None):
        self.name = name
        self.spec = spec
        self.codec = codec
        self.queries = 0
        self._implicit_fn = implicit_fn

    @property
    def d_x(self) -> int:
        return self.spec.d_x

    @property
    def epsilon(self) -> float:
        return self.spec.epsilon

    def validate(self, x: np.ndarray) -> ErrorReport:
        return validate(self, x)


def validate(problem: Problem, x: np.ndarray) -> ErrorReport:
    """Run the forward model at x and assemble the full error report.

    Increments the problem's query counter by exactly 1. Non-finite or
    wrong-dimension states are rejected before evaluation and do not count.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape != (problem.spec.d_x,):
        raise ValidationInputError(
            f"state must have {problem.spec.d_x} entries, got {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise ValidationInputError("state contains non-finite entries")
    e_imp = np.asarray(problem._implicit_fn(x), dtype=np.float64)
    e_exp = problem.spec.explicit_values(x[None, :])[0]
    e_o = assemble_overall(problem.spec, e_imp, e_exp)
    problem.queries += 1
    return ErrorReport(
        state=x.copy(),
        e_imp=e_imp,
        e_exp=e_exp,
        e_o=e_o,
        accepted=e_o < problem.spec.epsilon,
    )


@dataclass(frozen=True)
class BlurrinessInput:
    """Inputs to the error-blurriness diagnostic.

    sigma2 is a caller-supplied variance proxy for the estimator noise (e.g.
    mean squared ensemble disagreement on a probe set); it is not observable
    directly.
    """

    m: int
    n: int
    w_exp: np.ndarray
    w_imp: np.ndarray
    ensemble_size: int
    sigma2: float

    def __post_init__(self):
        if self.m < 0 or self.n < 0 or self.m + self.n < 1:
            raise ValueError("need m >= 0, n >= 0 and at least one term")
        if self.ensemble_size < 1:
            raise ValueError("ensemble size must be >= 1")
        if self.sigma2 < 0:
            raise ValueError("variance proxy must be nonnegative")
        w_exp = np.asarray(self.w_exp, dtype=np.float64).ravel()
        w_imp = np.asarray(self.w_imp, dtype=np.float64).ravel()
        if w_exp.shape != (self.m,):
            raise DimensionError(f"w_exp must have m={self.m} entries, got {w_exp.shape}")
        if w_imp.shape != (self.n,):
            raise DimensionError(f"w_imp must have n={self.n} entries, got {w_imp.shape}")
        object.__setattr__(self, "w_exp", w_exp)
        object.__setattr__(self, "w_imp", w_imp)


def error_blurriness(b: BlurrinessInput) -> float:
    """Share of the overall error attributable to estimator noise.

    EB = [(n/L) sum(w_imp)] / [m sum(w_exp) + (n/L) sum(w_imp)] * sigma2.
    Equals sigma2 with no explicit terms, 0 with no implicit terms, and
    shrinks toward 0 as the ensemble grows.
    """
    imp_mass = (b.n / b.ensemble_size) * float(np.sum(b.w_imp))
    exp_mass = b.m * float(np.sum(b.w_exp))
    denom = exp_mass + imp_mass
    if denom == 0.0:
        raise UndefinedRatioError("all component weights are zero")
    if imp_mass == 0.0:
        return 0.0
    return imp_mass / denom * b.sigma2


PROBLEM_NAMES = ("p1-spectra2", "p2-cycle11", "p3-actuator20", "p4-pwm30")


def _make_p1(seed: int) -> Problem:
    # Peak-fitting analog: state (t, c) places a Gaussian bump on a 50-point
    # grid; implicit error is the RMS distance to the target curve.
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, 1.0, 50)
    x_star = np.array([rng.uniform(0.2, 0.8), rng.uniform(0.4, 0.9)])

    def forward(x: np.ndarray) -> np.ndarray:
        t, c = x
        return c * np.exp(-((grid - t) ** 2) / 0.02)

    y_0 = forward(x_star)

    def implicit(x: np.ndarray) -> np.ndarray:
        diff = forward(x) - y_0
        return np.array([np.sqrt(np.mean(diff * diff))])

    spec = ErrorSpec(
        implicit_blocks=[ImplicitBlock("distance", np.array([1.0]))],
        explicit_blocks=[BoundaryBlock(2, 1.0 / 2)],
        epsilon=0.1,
        d_x=2,
    )
    prob = Problem("p1-spectra2", spec, implicit)
    prob._forward = forward
    prob._x_star = x_star
    prob.y_0 = y_0
    return prob


def _centered_mix(coeffs: np.ndarray, x: np.ndarray) -> float:
    """Normalized projection of x - 0.5, in [-0.5, 0.5] inside the box."""
    return float(coeffs @ (x - 0.5)) / float(np.sum(np.abs(coeffs)))


def _make_p2(seed: int) -> Problem:
    # Two smooth responses of 11 inputs: a cosine of a weighted sum and a
    # cosine of a weighted geometric mean (product nonlinearity). Each phase
    # offset puts the target on the steep mid-slope of its response, so a
    # random state matches both responses only rarely.
    rng = np.random.default_rng(seed)
    a1 = rng.uniform(-1.0, 1.0, 11)
    w2 = rng.uniform(0.2, 1.0, 11)
    w2 /= w2.sum()
    x_star = 0.5 + rng.uniform(-0.15, 0.15, 11)

    def angle1(x: np.ndarray) -> float:
        return 3.0 * np.pi * _centered_mix(a1, x)

    def angle2(x: np.ndarray) -> float:
        gm = np.prod((0.2 + 0.8 * np.clip(x, 0.0, 1.0)) ** w2)
        return 4.0 * np.pi * (gm - 0.2) / 0.8

    offsets = np.array([np.pi / 2 - angle1(x_star), np.pi / 2 - angle2(x_star)])

    def forward(x: np.ndarray) -> np.ndarray:
        return np.array([
            0.5 + 0.5 * np.cos(angle1(x) + offsets[0]),
            0.5 + 0.5 * np.cos(angle2(x) + offsets[1]),
        ])

    y_0 = forward(x_star)

    # Distance scale trades acceptance-region size against estimator bias at
    # the gate: 0.9 keeps random acceptance near 2e-3 while leaving margin.
    def implicit(x: np.ndarray) -> np.ndarray:
        return 0.9 * np.abs(forward(x) - y_0)

    spec = ErrorSpec(
        implicit_blocks=[ImplicitBlock("distance", np.full(2, 0.5))],
        explicit_blocks=[SpreadBlock(11, 0.1), BoundaryBlock(11, 0.1 / 11)],
        epsilon=0.05,
        d_x=11,
    )
    prob = Problem("p2-cycle11", spec, implicit)
    prob._forward = forward
    prob._x_star = x_star
    prob.y_0 = y_0
    return prob


def _make_p3(seed: int) -> Problem:
    # Two trigonometric objectives of 20 inputs plus 7 hidden inequality
    # constraints that are active over a fair share of the box; penalties
    # are implicit (only a query reveals them). The generating state is
    # redrawn until it is feasible by a margin.
    rng = np.random.default_rng(seed)
    b1 = rng.uniform(-1.0, 1.0, 20)
    b2 = rng.uniform(-1.0, 1.0, 20)
    d = rng.uniform(-1.0, 1.0, (7, 20))
    q = rng.uniform(0.2, 0.8, 7)

    def constraints(x: np.ndarray) -> np.ndarray:
        centered = x - 0.5
        return d @ centered / 4.0 + q * np.mean(centered * centered) - 0.04

    while True:
        x_star = 0.5 + rng.uniform(-0.05, 0.05, 20)
        if np.all(constraints(x_star) < -0.01):
            break

    offsets = np.array([
        np.pi / 2 - 3.0 * np.pi * _centered_mix(b1, x_star),
        np.pi / 2 - 3.0 * np.pi * _centered_mix(b2, x_star),
    ])

    def forward(x: np.ndarray) -> np.ndarray:
        return np.array([
            0.5 + 0.5 * np.cos(3.0 * np.pi * _centered_mix(b1, x) + offsets[0]),
            0.5 + 0.5 * np.cos(3.0 * np.pi * _centered_mix(b2, x) + offsets[1]),
        ])

    y_0 = forward(x_star)

    def implicit(x: np.ndarray) -> np.ndarray:
        distance = np.minimum(4.0 * np.abs(forward(x) - y_0), 0.95)
        return np.concatenate([distance, np.maximum(constraints(x), 0.0)])

    spec = ErrorSpec(
        implicit_blocks=[
            ImplicitBlock("distance", np.full(2, 1.0 / 9)),
            ImplicitBlock("constraints", np.full(7, 1.0 / 9)),
        ],
        explicit_blocks=[BoundaryBlock(20, 0.1 / 20)],
        epsilon=0.05,
        d_x=20,
    )
    prob = Problem("p3-actuator20", spec, implicit)
    prob._forward = forward
    prob._x_star = x_star
    prob.y_0 = y_0
    return prob


def _make_p4(seed: int) -> Problem:
    # 30 switching instants that must ascend; two harmonic distortion-like
    # objectives. Ordering violations are explicit with a heavy weight, so
    # optimizers are expected to search through the simplex codec.
    from .searcher import simplex_batch, simplex_transform

    rng = np.random.default_rng(seed)
    # Early switching instants dominate the response, so the projections
    # decay along the state; magnitudes stay away from zero so every seed
    # gives both responses real variation over ascending states.
    decay = np.exp(-np.arange(30) / 4.0)
    a1 = rng.uniform(0.5, 1.0, 30) * rng.choice([-1.0, 1.0], 30) * decay
    a2 = rng.uniform(0.5, 1.0, 30) * rng.choice([-1.0, 1.0], 30) * decay

    # Decorrelate the two responses over ascending states and give each a
    # fixed phase dispersion there, so the difficulty is seed-stable.
    probe = simplex_batch(rng.uniform(0.0, 1.0, (1500, 30)))
    probe -= probe.mean(axis=0)
    s1 = probe @ a1
    a2 = a2 - a1 * (float(s1 @ (probe @ a2)) / float(s1 @ s1))
    scales = np.array([
        2.0 * float(np.sum(np.abs(a))) / float(np.std(probe @ a))
        for a in (a1, a2)
    ])

    # The generating state is itself a codec image, so every optimizer that
    # searches through the ascending-state codec can reach it exactly.
    x_star = simplex_transform(rng.uniform(0.0, 1.0, 30))

    offsets = np.array([
        np.pi / 2 - scales[0] * _centered_mix(a1, x_star),
        np.pi / 2 - scales[1] * _centered_mix(a2, x_star),
    ])

    def forward(x: np.ndarray) -> np.ndarray:
        return np.array([
            0.5 + 0.5 * np.cos(scales[0] * _centered_mix(a1, x) + offsets[0]),
            0.5 + 0.5 * np.cos(scales[1] * _centered_mix(a2, x) + offsets[1]),
        ])

    y_0 = forward(x_star)

    def implicit(x: np.ndarray) -> np.ndarray:
        return np.minimum(3.0 * np.abs(forward(x) - y_0), 0.95)

    spec = ErrorSpec(
        implicit_blocks=[ImplicitBlock("distance", np.full(2, 0.25))],
        explicit_blocks=[OrderingBlock(30, 10.0 / 29), BoundaryBlock(30, 0.1 / 30)],
        epsilon=0.05,
        d_x=30,
    )
    prob = Problem("p4-pwm30", spec, implicit, codec="simplex")
    prob._forward = forward
    prob._x_star = x_star
    prob.y_0 = y_0
    return prob


_FACTORIES = {
    "p1-spectra2": _make_p1,
    "p2-cycle11": _make_p2,
    "p3-actuator20": _make_p3,
    "p4-pwm30": _make_p4,
}


def make_problem(name: str, seed: int = 0) -> Problem:
    """Build one of the benchmark problems with a seeded target."""
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise KeyError(
            f"unknown problem {name!r}; choose from {', '.join(PROBLEM_NAMES)}"
        ) from None
    return factory(seed)
