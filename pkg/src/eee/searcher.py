"""Seed-driven candidate search.

A kernel maps a fixed set of random seed vectors to candidate states and is
trained to descend the estimated overall error: explicit components in closed
form, implicit components through the estimator ensemble's input gradients.
No validation queries are spent here. The greedy candidate (lowest estimated
error) is what the orchestrator considers validating.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionError, StateError
from .estimators import EstimatorEnsemble, predict_mean, predict_mean_grad
from .netcore import DenseNet, MomentOptimizer, backward, forward, forward_tape, step
from .validation import ErrorSpec

__all__ = [
    "COLLAPSE_THRESHOLD",
    "KERNEL_KINDS",
    "SeedSet",
    "SearchKernel",
    "generate_states",
    "estimated_overall",
    "estimated_overall_grad",
    "search_round",
    "pick_candidate",
    "simplex_transform",
    "simplex_batch",
    "simplex_vjp",
    "collapse_penalty",
]

# 0.288 is the std of the uniform distribution on [0,1]; the penalty keeps
# the spread of generated first entries above a tenth of that.
COLLAPSE_THRESHOLD = 0.288 / 10

KERNEL_KINDS = ("identity", "perceptron", "mlp")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def simplex_batch(states: np.ndarray) -> np.ndarray:
    """Hyper-triangle transform, one row per state.

    Entry 1 passes through; entry i >= 2 becomes
    x_1 + logistic(sum of entries 1..i) * (1 - x_1), so it lands in [x_1, 1]
    and, for nonnegative inputs, rows come out ascending.
    """
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[1] < 2:
        raise DimensionError("simplex transform needs rows of at least 2 entries")
    first = states[:, :1]
    sig = _sigmoid(np.cumsum(states, axis=1)[:, 1:])
    return np.concatenate([first, first + sig * (1.0 - first)], axis=1)


def simplex_transform(x_norm: np.ndarray) -> np.ndarray:
    """Single-state hyper-triangle transform."""
    return simplex_batch(np.asarray(x_norm, dtype=np.float64)[None, :])[0]


def simplex_vjp(states: np.ndarray, out_grad: np.ndarray) -> np.ndarray:
    """d(out_grad . simplex_batch(states))/d(states), row-wise.

    With s_i = logistic(c_i) over running sums c_i, entry i >= 2 of the
    output depends on x_1 directly, through the (1 - x_1) factor, and through
    c_i; entries j in 2..i only through c_i.
    """
    states = np.asarray(states, dtype=np.float64)
    out_grad = np.asarray(out_grad, dtype=np.float64)
    if out_grad.shape != states.shape:
        raise DimensionError("out_grad must match states shape")
    first = states[:, :1]
    sig = _sigmoid(np.cumsum(states, axis=1)[:, 1:])
    tail_grad = out_grad[:, 1:]
    through_sum = tail_grad * sig * (1.0 - sig) * (1.0 - first)
    grad = np.zeros_like(states)
    # suffix sums: c_i contains every entry up to i, including the first
    suffix = np.cumsum(through_sum[:, ::-1], axis=1)[:, ::-1]
    grad[:, 1:] = suffix
    grad[:, 0] = (
        out_grad[:, 0]
        + np.sum(tail_grad * (1.0 - sig), axis=1)
        + suffix[:, 0]
    )
    return grad


def collapse_penalty(first_entries: np.ndarray) -> float:
    """e_gc: positive when the population std of generated first entries
    drops below the collapse threshold."""
    first_entries = np.asarray(first_entries, dtype=np.float64).ravel()
    if first_entries.size < 2:
        raise StateError("collapse penalty needs at least 2 states")
    return float(max(COLLAPSE_THRESHOLD - first_entries.std(), 0.0))


class SeedSet:
    """Fixed matrix of seed vectors, drawn once per run, rows in [0,1]^{D_s}."""

    def __init__(self, count: int, d_s: int, seed: int = 0):
        if count < 1:
            raise ValueError("need at least one seed")
        rng = np.random.default_rng(seed)
        self.matrix = rng.uniform(0.0, 1.0, size=(count, d_s))
        self.matrix.flags.writeable = False

    @property
    def count(self) -> int:
        return self.matrix.shape[0]

    @property
    def d_s(self) -> int:
        return self.matrix.shape[1]


class SearchKernel:
    """identity: the seed matrix itself is the parameter set and descent
    moves states directly. perceptron: scalar seeds through one affine layer.
    mlp: seeds through a D_x -> h -> 2h -> h -> D_x net.

    The optional codec ("simplex") reshapes every generated state into the
    hyper-triangle; the collapse flag adds e_gc to the search loss.
    """

    def __init__(
        self,
        kind: str,
        d_x: int,
        hidden: int = 64,
        codec: str | None = None,
        collapse_reg: bool = False,
        update_rule: str = "adam",
        lr: float | None = None,
        mlp_head: str = "sigmoid",
        seed: int = 0,
    ):
        if kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {kind!r}")
        if codec not in (None, "simplex"):
            raise ValueError(f"unknown codec {codec!r}")
        if update_rule not in ("adam", "sgd"):
            raise ValueError(f"unknown update rule {update_rule!r}")
        self.kind = kind
        self.d_x = int(d_x)
        self.codec = codec
        self.collapse_reg = bool(collapse_reg)
        self.update_rule = update_rule
        self.lr = float(lr) if lr is not None else (2.5e-2 if kind == "identity" else 1e-3)
        self.params: np.ndarray | None = None
        self.net: DenseNet | None = None
        if kind == "perceptron":
            self.net = DenseNet([1, d_x], output="identity", seed=seed)
        elif kind == "mlp":
            self.net = DenseNet(
                [d_x, hidden, 2 * hidden, hidden, d_x], output=mlp_head, seed=seed
            )
        self._opt = MomentOptimizer(lr=self.lr) if update_rule == "adam" else None

    @property
    def d_s(self) -> int:
        """Seed dimensionality the kernel expects."""
        return 1 if self.kind == "perceptron" else self.d_x

    def _bind(self, seeds: SeedSet) -> None:
        if seeds.d_s != self.d_s:
            raise DimensionError(
                f"{self.kind} kernel expects seed dimension {self.d_s}, got {seeds.d_s}"
            )
        if self.kind == "identity":
            if self.params is None:
                self.params = seeds.matrix.copy()
            elif self.params.shape != seeds.matrix.shape:
                raise DimensionError("seed set shape changed after binding")


def generate_states(kernel: SearchKernel, seeds: SeedSet) -> np.ndarray:
    """One candidate state per seed; codec applied last if configured."""
    kernel._bind(seeds)
    if kernel.kind == "identity":
        raw = kernel.params.copy()
    else:
        raw = forward(kernel.net, seeds.matrix)
    return simplex_batch(raw) if kernel.codec == "simplex" else raw


def estimated_overall(
    spec: ErrorSpec, ens: EstimatorEnsemble | None, states: np.ndarray
) -> np.ndarray:
    """Estimated overall error per state: explicit terms in closed form,
    implicit terms from the ensemble mean."""
    states = np.asarray(states, dtype=np.float64)
    e_o = spec.explicit_values(states) @ spec.w_exp
    if spec.d_e_imp > 0:
        if ens is None:
            raise StateError("spec has implicit components but no ensemble given")
        e_o = e_o + predict_mean(ens, states) @ spec.w_imp
    return e_o


def estimated_overall_grad(
    spec: ErrorSpec, ens: EstimatorEnsemble | None, states: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-state estimated overall error and its gradient d ê_o(x_s)/d x_s."""
    states = np.asarray(states, dtype=np.float64)
    n = states.shape[0]
    e_o = spec.explicit_values(states) @ spec.w_exp
    grads = spec.explicit_vjp(states, np.tile(spec.w_exp, (n, 1)))
    if spec.d_e_imp > 0:
        if ens is None:
            raise StateError("spec has implicit components but no ensemble given")
        pred, dimp = predict_mean_grad(ens, states, np.tile(spec.w_imp, (n, 1)))
        e_o = e_o + pred @ spec.w_imp
        grads = grads + dimp
    return e_o, grads


def _collapse_grad(states: np.ndarray) -> tuple[float, np.ndarray]:
    """e_gc over generated first entries and its gradient w.r.t. the states."""
    first = states[:, 0]
    penalty = collapse_penalty(first)
    grad = np.zeros_like(states)
    std = first.std()
    if penalty > 0.0 and std > 0.0:
        grad[:, 0] = -(first - first.mean()) / (first.size * std)
    return penalty, grad


def search_round(
    kernel: SearchKernel,
    seeds: SeedSet,
    spec: ErrorSpec,
    ens: EstimatorEnsemble | None,
    r_ram: int,
) -> SearchKernel:
    """r_ram descent steps on the mean estimated overall error over all
    seeds (plus the collapse penalty when enabled). Spends no queries."""
    if r_ram < 0:
        raise ValueError("r_ram must be nonnegative")
    kernel._bind(seeds)
    n = seeds.count
    for _ in range(r_ram):
        tape = None
        if kernel.kind == "identity":
            raw = kernel.params
        else:
            raw, tape = forward_tape(kernel.net, seeds.matrix)
        states = simplex_batch(raw) if kernel.codec == "simplex" else raw
        _, state_grads = estimated_overall_grad(spec, ens, states)
        state_grads = state_grads / n
        if kernel.collapse_reg:
            _, pen_grad = _collapse_grad(states)
            state_grads = state_grads + pen_grad
        raw_grads = (
            simplex_vjp(raw, state_grads) if kernel.codec == "simplex" else state_grads
        )
        if kernel.kind == "identity":
            if kernel.update_rule == "adam":
                kernel._opt.update([kernel.params], [raw_grads])
            else:
                kernel.params -= kernel.lr * raw_grads
        else:
            grads, _ = backward(kernel.net, tape, raw_grads)
            if kernel.update_rule == "adam":
                step(kernel._opt, kernel.net, grads)
            else:
                for (dW, db), W, b in zip(grads, kernel.net.weights, kernel.net.biases):
                    W -= kernel.lr * dW
                    b -= kernel.lr * db
    return kernel


def pick_candidate(
    spec: ErrorSpec, ens: EstimatorEnsemble | None, states: np.ndarray
) -> tuple[np.ndarray, float]:
    """Greedy choice: the state with minimal estimated overall error
    (ties -> lowest row index)."""
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[0] == 0:
        raise StateError("candidate state set is empty")
    e_o = estimated_overall(spec, ens, states)
    best = int(np.argmin(e_o))
    return states[best].copy(), float(e_o[best])
