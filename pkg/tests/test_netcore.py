"""Dense-net engine: gradient correctness against finite differences,
optimizer behaviour, determinism."""
import numpy as np
import pytest

from eee.errors import DimensionError, StateError
from eee.netcore import (
    DenseNet,
    GradTape,
    MomentOptimizer,
    backward,
    forward,
    forward_tape,
    step,
)

FD_STEP = 1e-4
FD_RTOL = 1e-4
FD_FLOOR = 1e-8


def numeric_grads(net, x, coeffs):
    """Central-difference gradients of loss = sum(coeffs * forward(net, x))
    for every parameter entry and every input entry. Oracle for backward()."""

    def loss():
        return float(np.sum(coeffs * forward(net, x)))

    param_grads = []
    for arr in net.parameters():
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + FD_STEP
            lp = loss()
            arr[idx] = old - FD_STEP
            lm = loss()
            arr[idx] = old
            g[idx] = (lp - lm) / (2.0 * FD_STEP)
        param_grads.append(g)
    input_grads = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + FD_STEP
        lp = loss()
        x[idx] = old - FD_STEP
        lm = loss()
        x[idx] = old
        input_grads[idx] = (lp - lm) / (2.0 * FD_STEP)
    return param_grads, input_grads


def rel_err(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), FD_FLOOR)


def test_gradients_match_finite_differences():
    # 100 random (net, input) pairs; skip draws where a pre-activation sits
    # within the finite-difference step of a rectifier kink, where the
    # two-sided estimate is not a valid oracle.
    rng = np.random.default_rng(7)
    checked = 0
    draws = 0
    while checked < 100:
        draws += 1
        assert draws < 500, "too many rejected draws; kink filter is broken"
        widths = [int(rng.integers(1, 5)), int(rng.integers(2, 7)),
                  int(rng.integers(2, 7)), int(rng.integers(1, 4))]
        output = "sigmoid" if rng.random() < 0.5 else "identity"
        net = DenseNet(widths, output=output, seed=int(rng.integers(1 << 30)))
        x = rng.uniform(-1.0, 1.0, size=(int(rng.integers(1, 5)), widths[0]))
        _, tape = forward_tape(net, x)
        if min(np.abs(z).min() for z in tape.pre[:-1]) < 10 * FD_STEP:
            continue
        coeffs = rng.normal(size=(x.shape[0], widths[-1]))
        grads, input_grads = backward(net, tape, coeffs)
        num_params, num_inputs = numeric_grads(net, x, coeffs)
        flat = []
        for dW, db in grads:
            flat.append(dW)
            flat.append(db)
        for analytic, numeric in zip(flat, num_params):
            assert rel_err(analytic, numeric).max() < FD_RTOL
        assert rel_err(input_grads, num_inputs).max() < FD_RTOL
        checked += 1


def test_forward_single_linear_layer():
    net = DenseNet([1, 1], output="identity", seed=0)
    net.weights[0][:] = [[2.0]]
    net.biases[0][:] = [0.0]
    out = forward(net, np.array([[3.0]]))
    np.testing.assert_allclose(out, [[6.0]])


def test_forward_empty_batch():
    net = DenseNet([3, 5, 2], seed=1)
    out = forward(net, np.empty((0, 3)))
    assert out.shape == (0, 2)


def test_forward_sigmoid_output_in_unit_interval():
    rng = np.random.default_rng(2)
    net = DenseNet([4, 8, 3], output="sigmoid", seed=3)
    out = forward(net, rng.uniform(-50.0, 50.0, size=(64, 4)))
    assert np.all(out > 0.0) and np.all(out < 1.0)


def test_forward_width_mismatch():
    net = DenseNet([3, 2], seed=0)
    with pytest.raises(DimensionError):
        forward(net, np.zeros((4, 5)))


def test_backward_scalar_product():
    # y = w*x at w=2, x=3 with loss = y: dL/dw = 3, dL/dx = 2
    net = DenseNet([1, 1], output="identity", seed=0)
    net.weights[0][:] = [[2.0]]
    net.biases[0][:] = [0.0]
    _, tape = forward_tape(net, np.array([[3.0]]))
    grads, input_grads = backward(net, tape, np.array([[1.0]]))
    np.testing.assert_allclose(grads[0][0], [[3.0]])
    np.testing.assert_allclose(grads[0][1], [1.0])
    np.testing.assert_allclose(input_grads, [[2.0]])


def test_backward_unused_output_has_zero_grad():
    # Loss touches only output column 0, so the last layer's column 1
    # parameters get exactly zero gradient.
    net = DenseNet([3, 6, 2], output="identity", seed=5)
    x = np.random.default_rng(6).uniform(-1, 1, size=(4, 3))
    _, tape = forward_tape(net, x)
    loss_grad = np.zeros((4, 2))
    loss_grad[:, 0] = 1.0
    grads, _ = backward(net, tape, loss_grad)
    np.testing.assert_array_equal(grads[-1][0][:, 1], 0.0)
    np.testing.assert_array_equal(grads[-1][1][1], 0.0)


def test_backward_without_forward_raises():
    net = DenseNet([2, 2], seed=0)
    tape = GradTape(net)
    with pytest.raises(StateError):
        backward(net, tape, np.zeros((1, 2)))


def test_backward_after_reset_raises():
    net = DenseNet([2, 3, 2], seed=0)
    _, tape = forward_tape(net, np.zeros((1, 2)))
    tape.reset()
    with pytest.raises(StateError):
        backward(net, tape, np.zeros((1, 2)))


def test_tape_reset_zeroes_accumulators():
    net = DenseNet([2, 3, 1], seed=9)
    x = np.random.default_rng(9).uniform(-1, 1, size=(3, 2))
    _, tape = forward_tape(net, x)
    backward(net, tape, np.ones((3, 1)))
    assert any(np.any(g != 0) for g in tape.weight_grads)
    tape.reset()
    assert all(np.all(g == 0) for g in tape.weight_grads)
    assert all(np.all(g == 0) for g in tape.bias_grads)


def test_step_zero_gradient_is_noop():
    net = DenseNet([2, 4, 1], seed=11)
    before = [p.copy() for p in net.parameters()]
    opt = MomentOptimizer()
    grads = [(np.zeros_like(W), np.zeros_like(b)) for W, b in zip(net.weights, net.biases)]
    step(opt, net, grads)
    for p, q in zip(net.parameters(), before):
        np.testing.assert_array_equal(p, q)
    assert opt.step_count == 1


def test_step_scalar_quadratic_converges():
    # min (w-5)^2 from w=0 at step size 1e-2
    w = np.array([0.0])
    opt = MomentOptimizer(lr=1e-2)
    for _ in range(2000):
        opt.update([w], [2.0 * (w - 5.0)])
    assert abs(w[0] - 5.0) < 1e-3


def test_step_determinism():
    rng = np.random.default_rng(13)
    nets = [DenseNet([3, 5, 2], seed=42) for _ in range(2)]
    opts = [MomentOptimizer(lr=1e-3) for _ in range(2)]
    for _ in range(20):
        grads = [
            (rng.normal(size=W.shape), rng.normal(size=b.shape))
            for W, b in zip(nets[0].weights, nets[0].biases)
        ]
        for net, opt in zip(nets, opts):
            step(opt, net, grads)
    for p, q in zip(nets[0].parameters(), nets[1].parameters()):
        np.testing.assert_array_equal(p, q)


def test_seed_determinism():
    a = DenseNet([4, 7, 3], seed=99)
    b = DenseNet([4, 7, 3], seed=99)
    for p, q in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(p, q)
    x = np.random.default_rng(0).uniform(-1, 1, size=(5, 4))
    np.testing.assert_array_equal(forward(a, x), forward(b, x))
    c = DenseNet([4, 7, 3], seed=100)
    assert any(np.any(p != q) for p, q in zip(a.parameters(), c.parameters()))


def test_step_shape_mismatch():
    net = DenseNet([2, 3], seed=0)
    opt = MomentOptimizer()
    bad = [(np.zeros((2, 4)), np.zeros(3))]
    with pytest.raises(DimensionError):
        step(opt, net, bad)


def test_optimizer_rejects_changed_shapes():
    opt = MomentOptimizer()
    w = np.zeros(3)
    opt.update([w], [np.ones(3)])
    with pytest.raises(DimensionError):
        opt.update([np.zeros(4)], [np.ones(4)])


def test_net_copy_is_independent():
    net = DenseNet([2, 3, 1], seed=4)
    dup = net.copy()
    dup.weights[0][0, 0] += 1.0
    assert net.weights[0][0, 0] != dup.weights[0][0, 0]
