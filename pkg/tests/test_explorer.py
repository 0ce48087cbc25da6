"""Line-based exploration: generator reinit, candidate sampling,
disagreement-driven selection."""
import numpy as np
import pytest

from eee.errors import StateError
from eee.estimators import EstimatorEnsemble
from eee.explorer import (
    LineGenerator,
    reinit,
    sample_candidates,
    select_exploration_state,
)
from eee.netcore import DenseNet


def mirror_ensemble():
    """Two 1-D members computing x and -x, so disagreement at state x is
    exactly |x| (controllable per candidate)."""
    ens = EstimatorEnsemble(d_x=1, d_e_imp=1, ensemble_size=2, hidden=4, seed=0)
    plus = DenseNet([1, 1], output="identity", seed=0)
    plus.weights[0][:] = [[1.0]]
    plus.biases[0][:] = [0.0]
    minus = DenseNet([1, 1], output="identity", seed=0)
    minus.weights[0][:] = [[-1.0]]
    minus.biases[0][:] = [0.0]
    ens.members = [plus, minus]
    return ens


def test_reinit_distinct_seeds_distinct_directions():
    gen = LineGenerator(d_x=5, seed=1)
    d1 = gen.direction.copy()
    reinit(gen, seed=2)
    assert np.any(gen.direction != d1)


def test_reinit_same_seed_identical():
    a = LineGenerator(d_x=4, seed=7)
    b = LineGenerator(d_x=4, seed=7)
    np.testing.assert_array_equal(a.bias, b.bias)
    np.testing.assert_array_equal(a.direction, b.direction)


def test_reinit_direction_never_zero():
    gen = LineGenerator(d_x=3, seed=0)
    for seed in range(50):
        reinit(gen, seed)
        assert np.linalg.norm(gen.direction) > 0.0
        np.testing.assert_allclose(np.linalg.norm(gen.direction), 0.5)
        assert np.all(gen.bias >= 0.0) and np.all(gen.bias <= 1.0)


def test_states_at_hand_case():
    gen = LineGenerator(d_x=3, seed=0)
    gen.bias = np.zeros(3)
    gen.direction = np.array([1.0, 0.0, 0.0])
    out = gen.states_at(np.array([0.0, 1.0]))
    np.testing.assert_array_equal(out, [[0, 0, 0], [1, 0, 0]])


def test_candidates_inside_box_and_on_line():
    gen = LineGenerator(d_x=6, seed=3)
    cands = sample_candidates(gen, 256, seed=4)
    assert cands.shape == (256, 6)
    assert np.all(cands >= 0.0) and np.all(cands <= 1.0)
    # unclamped candidates are collinear with the direction
    raw = cands[np.all((cands > 0) & (cands < 1), axis=1)]
    if len(raw) >= 2:
        diffs = raw[1:] - raw[0]
        cross = diffs - (diffs @ gen.direction)[:, None] * gen.direction / 0.25
        assert np.abs(cross).max() < 1e-9


def test_single_candidate():
    gen = LineGenerator(d_x=2, seed=5)
    assert sample_candidates(gen, 1, seed=6).shape == (1, 2)
    with pytest.raises(ValueError):
        sample_candidates(gen, 0, seed=6)


def test_sampling_deterministic():
    gen = LineGenerator(d_x=4, seed=8)
    a = sample_candidates(gen, 32, seed=9)
    b = sample_candidates(gen, 32, seed=9)
    np.testing.assert_array_equal(a, b)


def test_select_argmax_disagreement():
    ens = mirror_ensemble()
    cands = np.array([[0.1], [0.5], [0.2]])
    np.testing.assert_array_equal(select_exploration_state(cands, ens), [0.5])


def test_select_tie_breaks_to_lowest_index():
    ens = mirror_ensemble()
    # identical members disagree nowhere
    ens.members = [ens.members[0], ens.members[0].copy()]
    cands = np.array([[0.4], [0.9], [0.1]])
    np.testing.assert_array_equal(select_exploration_state(cands, ens), [0.4])


def test_select_single_candidate():
    ens = mirror_ensemble()
    np.testing.assert_array_equal(
        select_exploration_state(np.array([[0.7]]), ens), [0.7]
    )


def test_select_empty_set():
    ens = mirror_ensemble()
    with pytest.raises(StateError):
        select_exploration_state(np.zeros((0, 1)), ens)


def test_selected_state_is_a_candidate():
    ens = EstimatorEnsemble(d_x=3, d_e_imp=2, ensemble_size=3, hidden=6, seed=1)
    gen = LineGenerator(d_x=3, seed=2)
    for round_seed in range(5):
        reinit(gen, round_seed)
        cands = sample_candidates(gen, 64, seed=round_seed + 100)
        x = select_exploration_state(cands, ens)
        assert any(np.array_equal(x, c) for c in cands)


def test_coverage_spans_full_space():
    # candidates pooled over many reinits must not sit in a proper subspace
    d_x = 5
    gen = LineGenerator(d_x=d_x, seed=0)
    pool = []
    for k in range(500):
        reinit(gen, seed=k)
        pool.append(sample_candidates(gen, 20, seed=10_000 + k))
    pool = np.concatenate(pool)
    assert pool.shape == (10_000, d_x)
    cov = np.cov(pool.T)
    assert np.linalg.matrix_rank(cov, tol=1e-8) == d_x
