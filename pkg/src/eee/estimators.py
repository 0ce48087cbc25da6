"""Ensemble of implicit-error estimators.

L sigmoid-output MLPs are trained independently on bootstrapped batches from
the exploration and history buffers. The ensemble mean is the implicit-error
prediction; the spread across members is the exploration signal. Members stop
training the first epoch their mean loss drops below the early-stop threshold
and rejoin training when the caller resets the flags for a new round.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionError, StateError
from .netcore import DenseNet, MomentOptimizer, backward, forward, forward_tape, sigmoid

__all__ = [
    "SampleBuffer",
    "EstimatorEnsemble",
    "bootstrap_batches",
    "train_epochs",
    "predict_mean",
    "predict_mean_grad",
    "disagreement",
]

EXPLORATION = "exploration"
HISTORY = "history"
BATCHES_PER_EPOCH = 40
BATCH_CEILING = 64
BATCH_RAMP = 8


class SampleBuffer:
    """Validated (state, e_imp, e_o) records tagged by origin.

    With a capacity set, the buffer behaves as a ring: old records are
    overwritten, so the record count never decreases.
    """

    def __init__(self, d_x: int, d_e_imp: int, capacity: int | None = None):
        self.d_x = int(d_x)
        self.d_e_imp = int(d_e_imp)
        self.capacity = capacity
        self._states: list[np.ndarray] = []
        self._targets: list[np.ndarray] = []
        self._overall: list[float] = []
        self._origins: list[str] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._states)

    def append(self, state: np.ndarray, e_imp: np.ndarray, e_o: float, origin: str) -> None:
        state = np.asarray(state, dtype=np.float64)
        e_imp = np.asarray(e_imp, dtype=np.float64)
        if state.shape != (self.d_x,):
            raise DimensionError(f"state must have {self.d_x} entries, got {state.shape}")
        if e_imp.shape != (self.d_e_imp,):
            raise DimensionError(f"e_imp must have {self.d_e_imp} entries, got {e_imp.shape}")
        if np.any(e_imp < 0):
            raise ValueError("implicit errors must be nonnegative")
        if origin not in (EXPLORATION, HISTORY):
            raise ValueError(f"unknown origin {origin!r}")
        if self.capacity is not None and len(self._states) >= self.capacity:
            k = self._next % self.capacity
            self._states[k] = state.copy()
            self._targets[k] = e_imp.copy()
            self._overall[k] = float(e_o)
            self._origins[k] = origin
        else:
            self._states.append(state.copy())
            self._targets.append(e_imp.copy())
            self._overall.append(float(e_o))
            self._origins.append(origin)
        self._next += 1

    def states(self) -> np.ndarray:
        return np.array(self._states) if self._states else np.zeros((0, self.d_x))

    def targets(self) -> np.ndarray:
        return np.array(self._targets) if self._targets else np.zeros((0, self.d_e_imp))

    def overall(self) -> np.ndarray:
        return np.asarray(self._overall, dtype=np.float64)

    def origins(self) -> list[str]:
        return list(self._origins)


class EstimatorEnsemble:
    """L bootstrapped estimators D_x -> h -> 2h -> h -> D_e_imp with
    sigmoid outputs, each with its own optimizer and convergence flag."""

    def __init__(
        self,
        d_x: int,
        d_e_imp: int,
        ensemble_size: int = 4,
        hidden: int = 32,
        eps_es: float = 1e-3,
        lr: float = 1e-3,
        batch_start: int = 32,
        seed: int = 0,
    ):
        if ensemble_size < 2:
            raise ValueError("disagreement needs at least two ensemble members")
        self.d_x = int(d_x)
        self.d_e_imp = int(d_e_imp)
        self.ensemble_size = int(ensemble_size)
        self.eps_es = float(eps_es)
        self.batch_start = int(batch_start)
        widths = [d_x, hidden, 2 * hidden, hidden, d_e_imp]
        seeds = np.random.SeedSequence(seed).spawn(ensemble_size + 1)
        self.members = [
            DenseNet(widths, output="sigmoid", seed=int(s.generate_state(1)[0]))
            for s in seeds[:-1]
        ]
        self.optimizers = [MomentOptimizer(lr=lr) for _ in range(ensemble_size)]
        self.converged = [False] * ensemble_size
        self.last_losses = [np.inf] * ensemble_size
        self.epochs_trained = [0] * ensemble_size
        self._rng = np.random.default_rng(seeds[-1])

    def reset_convergence(self) -> None:
        """Clear all flags so members rejoin training for a fresh round."""
        self.converged = [False] * self.ensemble_size

    def update_convergence_flags(self) -> int:
        """Recompute flags from last epoch-mean losses; returns the count."""
        self.converged = [loss < self.eps_es for loss in self.last_losses]
        return sum(self.converged)

    def convergence_count(self) -> int:
        return sum(self.converged)

    def _check_states(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        if states.ndim != 2 or states.shape[1] != self.d_x:
            raise DimensionError(f"states must be (n, {self.d_x}), got {states.shape}")
        return states


def bootstrap_batches(
    buf: SampleBuffer, batch_size: int, batches: int, seed
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Batches drawn uniformly with replacement from the buffer union."""
    if len(buf) == 0:
        raise StateError("cannot sample from an empty buffer")
    rng = np.random.default_rng(seed)
    states = buf.states()
    targets = buf.targets()
    out = []
    for _ in range(batches):
        idx = rng.integers(0, len(buf), size=batch_size)
        out.append((states[idx], targets[idx]))
    return out


def _flat_views(flat: np.ndarray, widths: list[int]) -> tuple[list, list]:
    """Per-layer (g, n_in, n_out) weight and (g, n_out) bias views of a
    (g, n_params) buffer laid out [W0, b0, W1, b1, ...]."""
    w_views, b_views = [], []
    offset = 0
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        w_views.append(flat[:, offset:offset + n_in * n_out].reshape(-1, n_in, n_out))
        offset += n_in * n_out
        b_views.append(flat[:, offset:offset + n_out])
        offset += n_out
    return w_views, b_views


def _stacked_epoch(
    ens: EstimatorEnsemble,
    group: list[int],
    states: np.ndarray,
    targets: np.ndarray,
    batch_size: int,
) -> np.ndarray:
    """One epoch of 40 bootstrap batches for several members at once.

    Member parameters and moment buffers are flattened into (g, n_params)
    buffers so each batch is a few broadcast matmuls plus one vectorized
    adaptive-moment step; the arithmetic (relu hidden layers, sigmoid head,
    mean absolute error) matches training one member at a time.
    """
    nets = [ens.members[k] for k in group]
    opts = [ens.optimizers[k] for k in group]
    for net, opt in zip(nets, opts):
        opt._buffers_for(net.parameters())
    g_n = len(group)
    widths = nets[0].widths
    n_layers = nets[0].n_layers
    n_params = sum(p.size for p in nets[0].parameters())
    theta = np.empty((g_n, n_params))
    mom1 = np.empty_like(theta)
    mom2 = np.empty_like(theta)
    for i, (net, opt) in enumerate(zip(nets, opts)):
        offset = 0
        for p, m, v in zip(net.parameters(), opt._m, opt._v):
            theta[i, offset:offset + p.size] = p.ravel()
            mom1[i, offset:offset + p.size] = m.ravel()
            mom2[i, offset:offset + p.size] = v.ravel()
            offset += p.size
    ws, bs = _flat_views(theta, widths)
    grad = np.zeros_like(theta)
    gws, gbs = _flat_views(grad, widths)
    lr = opts[0].lr
    beta1, beta2, eps = opts[0].beta1, opts[0].beta2, opts[0].eps
    steps = np.array([opt.step_count for opt in opts], dtype=np.int64)

    idx = ens._rng.integers(0, len(states), size=(BATCHES_PER_EPOCH, g_n, batch_size))
    loss_sum = np.zeros(g_n)
    for b in range(BATCHES_PER_EPOCH):
        bx = states[idx[b]]
        by = targets[idx[b]]
        acts = [bx]
        pres = []
        a = bx
        for l in range(n_layers):
            z = a @ ws[l] + bs[l][:, None, :]
            a = np.maximum(z, 0.0) if l < n_layers - 1 else sigmoid(z)
            pres.append(z)
            acts.append(a)
        diff = a - by
        loss_sum += np.abs(diff).mean(axis=(1, 2))
        delta = np.sign(diff) / (batch_size * ens.d_e_imp)
        delta = delta * a * (1.0 - a)
        for l in range(n_layers - 1, -1, -1):
            np.matmul(acts[l].transpose(0, 2, 1), delta, out=gws[l])
            np.sum(delta, axis=1, out=gbs[l])
            if l > 0:
                delta = delta @ ws[l].transpose(0, 2, 1)
                delta *= pres[l - 1] > 0.0
        steps += 1
        b1c = (1.0 - beta1**steps)[:, None]
        b2c = (1.0 - beta2**steps)[:, None]
        mom1 *= beta1
        mom1 += (1.0 - beta1) * grad
        np.square(grad, out=grad)
        grad *= 1.0 - beta2
        mom2 *= beta2
        mom2 += grad
        update = mom1 / b1c
        denom = np.sqrt(mom2 / b2c)
        denom += eps
        update /= denom
        update *= lr
        theta -= update

    for i, (net, opt) in enumerate(zip(nets, opts)):
        offset = 0
        for p, m, v in zip(net.parameters(), opt._m, opt._v):
            p[...] = theta[i, offset:offset + p.size].reshape(p.shape)
            m[...] = mom1[i, offset:offset + p.size].reshape(p.shape)
            v[...] = mom2[i, offset:offset + p.size].reshape(p.shape)
            offset += p.size
        opt.step_count = int(steps[i])
    return loss_sum / BATCHES_PER_EPOCH


def train_epochs(ens: EstimatorEnsemble, buf: SampleBuffer, r_ep: int) -> int:
    """Train each unconverged member for up to r_ep epochs of 40 batches,
    minimizing mean absolute error; returns the converged-member count l.

    Batch size ramps from the configured start by +8 per member epoch up to
    64. A member stops the first epoch its mean loss falls below eps_es;
    already-converged members are skipped entirely.
    """
    if r_ep < 1:
        raise ValueError("r_ep must be >= 1")
    if len(buf) == 0:
        raise StateError("cannot train on an empty buffer")
    states = buf.states()
    targets = buf.targets()
    for _ in range(r_ep):
        by_size: dict[int, list[int]] = {}
        for k in range(ens.ensemble_size):
            if ens.converged[k]:
                continue
            size = min(BATCH_CEILING, ens.batch_start + BATCH_RAMP * ens.epochs_trained[k])
            by_size.setdefault(size, []).append(k)
        if not by_size:
            break
        for size, group in sorted(by_size.items()):
            losses = _stacked_epoch(ens, group, states, targets, size)
            for k, loss in zip(group, losses):
                ens.epochs_trained[k] += 1
                ens.last_losses[k] = float(loss)
                if loss < ens.eps_es:
                    ens.converged[k] = True
    return ens.convergence_count()


def predict_mean(ens: EstimatorEnsemble, states: np.ndarray) -> np.ndarray:
    """Componentwise arithmetic mean of all member predictions."""
    states = ens._check_states(states)
    total = np.zeros((states.shape[0], ens.d_e_imp))
    for net in ens.members:
        total += forward(net, states)
    return total / ens.ensemble_size


def predict_mean_grad(
    ens: EstimatorEnsemble, states: np.ndarray, out_grad: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Mean prediction plus d(out_grad . mean)/d(states).

    out_grad has one row per state; the returned input gradient is the
    average of the member input gradients, which is what search descends.
    """
    states = ens._check_states(states)
    out_grad = np.asarray(out_grad, dtype=np.float64)
    if out_grad.shape != (states.shape[0], ens.d_e_imp):
        raise DimensionError(
            f"out_grad must be (n, {ens.d_e_imp}), got {out_grad.shape}"
        )
    total = np.zeros((states.shape[0], ens.d_e_imp))
    input_grads = np.zeros_like(states)
    for net in ens.members:
        pred, tape = forward_tape(net, states)
        total += pred
        _, dx = backward(net, tape, out_grad)
        input_grads += dx
    return total / ens.ensemble_size, input_grads / ens.ensemble_size


def disagreement(
    ens: EstimatorEnsemble, states: np.ndarray, members: int | None = None
) -> np.ndarray:
    """Population std across members per component, mean-reduced over
    components: one nonnegative scalar per state.

    `members` restricts the committee to the first `members` nets; by
    default every member votes.
    """
    states = ens._check_states(states)
    if members is None:
        members = ens.ensemble_size
    if not 2 <= members <= ens.ensemble_size:
        raise ValueError("committee must have between 2 and ensemble_size members")
    preds = np.stack([forward(net, states) for net in ens.members[:members]])
    return preds.std(axis=0).mean(axis=1)
