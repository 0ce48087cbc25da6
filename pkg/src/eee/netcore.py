"""Minimal dense-network engine with reverse-mode gradients.

Fully-connected layers, ReLU hidden activations, sigmoid or identity output
head, float64 everywhere. Gradients are computed with respect to parameters
*and* the input batch, because the identity search kernel differentiates the
estimated error directly through the estimator nets into the states.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionError, StateError

__all__ = ["DenseNet", "GradTape", "MomentOptimizer", "forward", "forward_tape", "backward", "step"]


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class DenseNet:
    """ReLU MLP with a sigmoid or identity output head.

    ``widths`` lists layer sizes input-first, e.g. ``[2, 32, 64, 32, 1]``.
    Parameters are drawn uniformly in +-sqrt(1/fan_in); two nets built with
    the same seed and widths are bit-identical.
    """

    def __init__(self, widths: list[int], output: str = "sigmoid", seed: int = 0):
        if len(widths) < 2:
            raise ValueError("widths must list at least input and output sizes")
        if any(w < 1 for w in widths):
            raise ValueError(f"layer widths must be positive, got {widths}")
        if output == "linear":
            output = "identity"
        if output not in ("identity", "sigmoid"):
            raise ValueError(f"unknown output activation {output!r}")
        self.widths = [int(w) for w in widths]
        self.hidden = "relu"
        self.output = output
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for n_in, n_out in zip(self.widths[:-1], self.widths[1:]):
            bound = np.sqrt(1.0 / n_in)
            self.weights.append(rng.uniform(-bound, bound, size=(n_in, n_out)))
            self.biases.append(rng.uniform(-bound, bound, size=n_out))

    @property
    def in_width(self) -> int:
        return self.widths[0]

    @property
    def out_width(self) -> int:
        return self.widths[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        """Weight and bias arrays, layer by layer (views, not copies)."""
        out: list[np.ndarray] = []
        for W, b in zip(self.weights, self.biases):
            out.append(W)
            out.append(b)
        return out

    def copy(self) -> "DenseNet":
        dup = DenseNet.__new__(DenseNet)
        dup.widths = list(self.widths)
        dup.hidden = self.hidden
        dup.output = self.output
        dup.seed = self.seed
        dup.weights = [W.copy() for W in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        return dup


class GradTape:
    """Forward values recorded for one batch, plus gradient accumulators
    shaped exactly like the net's parameters."""

    def __init__(self, net: DenseNet):
        self.net = net
        self.inputs: np.ndarray | None = None
        self.pre: list[np.ndarray] = []
        self.post: list[np.ndarray] = []
        self.weight_grads = [np.zeros_like(W) for W in net.weights]
        self.bias_grads = [np.zeros_like(b) for b in net.biases]

    def reset(self) -> None:
        """Drop recorded values and zero the accumulators."""
        self.inputs = None
        self.pre = []
        self.post = []
        for g in self.weight_grads:
            g[...] = 0.0
        for g in self.bias_grads:
            g[...] = 0.0


def _check_batch(net: DenseNet, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2:
        raise DimensionError(f"batch must be 2-D (rows are states), got shape {batch.shape}")
    if batch.shape[1] != net.in_width:
        raise DimensionError(
            f"batch has {batch.shape[1]} columns but net input width is {net.in_width}"
        )
    return batch


def forward(net: DenseNet, batch: np.ndarray) -> np.ndarray:
    """Plain inference: (n, in_width) -> (n, out_width)."""
    a = _check_batch(net, batch)
    last = net.n_layers - 1
    for k, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ W + b
        if k < last:
            a = np.maximum(z, 0.0)
        elif net.output == "sigmoid":
            a = sigmoid(z)
        else:
            a = z
    return a


def forward_tape(net: DenseNet, batch: np.ndarray) -> tuple[np.ndarray, GradTape]:
    """Forward pass that records everything backward() needs."""
    a = _check_batch(net, batch)
    tape = GradTape(net)
    tape.inputs = a
    last = net.n_layers - 1
    for k, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ W + b
        tape.pre.append(z)
        if k < last:
            a = np.maximum(z, 0.0)
        elif net.output == "sigmoid":
            a = sigmoid(z)
        else:
            a = z
        tape.post.append(a)
    return a, tape


def backward(
    net: DenseNet, tape: GradTape, loss_grad: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Reverse pass from d(loss)/d(output).

    Returns ``(param_grads, input_grads)`` where ``param_grads`` is a
    ``(dW, db)`` pair per layer and ``input_grads`` has the batch's shape.
    Gradients are also accumulated on the tape.
    """
    if tape.net is not net or tape.inputs is None or len(tape.pre) != net.n_layers:
        raise StateError("backward() needs a tape recorded by a forward pass on this net")
    loss_grad = np.asarray(loss_grad, dtype=np.float64)
    if loss_grad.shape != tape.post[-1].shape:
        raise DimensionError(
            f"loss_grad shape {loss_grad.shape} does not match output shape {tape.post[-1].shape}"
        )
    last = net.n_layers - 1
    delta = loss_grad
    if net.output == "sigmoid":
        y = tape.post[-1]
        delta = delta * y * (1.0 - y)
    for k in range(last, -1, -1):
        a_prev = tape.inputs if k == 0 else tape.post[k - 1]
        tape.weight_grads[k] += a_prev.T @ delta
        tape.bias_grads[k] += delta.sum(axis=0)
        delta = delta @ net.weights[k].T
        if k > 0:
            delta = delta * (tape.pre[k - 1] > 0.0)
    grads = [(dW, db) for dW, db in zip(tape.weight_grads, tape.bias_grads)]
    return grads, delta


class MomentOptimizer:
    """Adaptive-moment gradient descent (decay 0.9/0.999, guard 1e-8)."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None

    def _buffers_for(self, params: list[np.ndarray]) -> None:
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        elif len(self._m) != len(params) or any(
            m.shape != p.shape for m, p in zip(self._m, params)
        ):
            raise DimensionError("optimizer moment buffers do not match parameter shapes")

    def update(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """Apply one adaptive-moment step to ``params`` in place."""
        if len(params) != len(grads):
            raise DimensionError(f"{len(params)} parameters but {len(grads)} gradients")
        for p, g in zip(params, grads):
            if p.shape != np.shape(g):
                raise DimensionError(f"gradient shape {np.shape(g)} != parameter shape {p.shape}")
        self._buffers_for(params)
        self.step_count += 1
        b1c = 1.0 - self.beta1**self.step_count
        b2c = 1.0 - self.beta2**self.step_count
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def step(
    opt: MomentOptimizer, net: DenseNet, grads: list[tuple[np.ndarray, np.ndarray]]
) -> DenseNet:
    """One optimizer step over all of the net's parameters (in place)."""
    if len(grads) != net.n_layers:
        raise DimensionError(f"expected {net.n_layers} (dW, db) pairs, got {len(grads)}")
    flat = []
    for dW, db in grads:
        flat.append(dW)
        flat.append(db)
    opt.update(net.parameters(), flat)
    return net
