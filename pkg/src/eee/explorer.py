"""Constrained ensemble exploration.

Each round a throwaway affine generator maps scalars from [-1, 1] onto a line
segment through the unit box. The candidate where the estimator ensemble
disagrees most is sent to validation; the generator is re-initialized, never
trained.
"""
from __future__ import annotations

import numpy as np

from .errors import StateError
from .estimators import EstimatorEnsemble, disagreement

__all__ = ["LineGenerator", "reinit", "sample_candidates", "select_exploration_state"]


class LineGenerator:
    """Single-layer affine map t -> bias + t * direction, t scalar."""

    def __init__(self, d_x: int, seed: int = 0):
        self.d_x = int(d_x)
        self.bias: np.ndarray | None = None
        self.direction: np.ndarray | None = None
        reinit(self, seed)

    def states_at(self, t: np.ndarray) -> np.ndarray:
        """Map scalar inputs onto the line, clamped to the unit box."""
        t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
        return np.clip(self.bias + t * self.direction, 0.0, 1.0)


def reinit(gen: LineGenerator, seed) -> LineGenerator:
    """Draw fresh affine parameters: bias uniform in the box, direction
    uniform on the sphere scaled by 0.5 (resampled if degenerate)."""
    rng = np.random.default_rng(seed)
    gen.bias = rng.uniform(0.0, 1.0, gen.d_x)
    while True:
        raw = rng.normal(size=gen.d_x)
        norm = np.linalg.norm(raw)
        if norm > 0.0:
            gen.direction = 0.5 * raw / norm
            return gen


def sample_candidates(gen: LineGenerator, n: int, seed) -> np.ndarray:
    """n states from uniform [-1, 1] inputs, clamped to [0,1]^{D_x}."""
    if n < 1:
        raise ValueError("need at least one candidate")
    rng = np.random.default_rng(seed)
    return gen.states_at(rng.uniform(-1.0, 1.0, n))


def select_exploration_state(
    cands: np.ndarray, ens: EstimatorEnsemble, members: int | None = None
) -> np.ndarray:
    """The candidate with maximal ensemble disagreement (ties -> lowest index).

    `members` restricts the disagreement committee to the first `members`
    estimators, which keeps exploration noise comparable when sweeping the
    ensemble size; all members vote by default.
    """
    cands = np.asarray(cands, dtype=np.float64)
    if cands.ndim != 2 or cands.shape[0] == 0:
        raise StateError("candidate set is empty")
    scores = disagreement(ens, cands, members)
    return cands[int(np.argmax(scores))].copy()
