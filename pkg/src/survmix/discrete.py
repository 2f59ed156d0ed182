"""Shared survival-model adapter for discrete-time learners.

Any learner that can produce per-bin conditional event probabilities for a
covariate profile plugs in here and gains the survival/hazard interface the
estimand engine expects:

  S(t) = prod_{l <= r(t)} (1 - p_l)        r(t) = bin containing t
  lambda(t) = p_{r(t)} / bin width
"""

from __future__ import annotations

import numpy as np

from .data import BinGrid, ExposureProfile, hazard_from_bin_prob, survival_from_bin_probs

__all__ = ["DiscreteTimeModel"]


class DiscreteTimeModel:
    """Wraps prob_fn(profile) -> (R,) per-bin event probabilities."""

    def __init__(self, grid: BinGrid, prob_fn):
        self.grid = grid
        self._prob_fn = prob_fn

    def bin_probs(self, profile: ExposureProfile) -> np.ndarray:
        p = np.asarray(self._prob_fn(profile), dtype=float)
        if p.shape != (self.grid.n_bins,):
            raise ValueError(f"expected {self.grid.n_bins} bin probabilities, got {p.shape}")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("bin probabilities outside [0, 1]")
        return p

    def survival(self, profile: ExposureProfile, t: float) -> float:
        if t <= 0:
            return 1.0
        r = self.grid.bin_containing(t)
        return float(survival_from_bin_probs(self.bin_probs(profile))[r - 1])

    def hazard(self, profile: ExposureProfile, t: float) -> float:
        if t <= 0:
            raise ValueError("hazard evaluation time must be positive")
        r = self.grid.bin_containing(t)
        return hazard_from_bin_prob(self.bin_probs(profile)[r - 1], self.grid, r)
