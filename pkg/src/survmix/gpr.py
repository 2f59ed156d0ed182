"""Kernel-weighted discrete-time survival estimation.

Per-bin event probabilities are Nadaraya-Watson averages of the augmented
binary outcomes with a Gaussian kernel K = exp{-||chi - chi'||^2 / rho} over
standardized features (metals, confounders, bin time).  The bandwidth rho is
the median pairwise squared distance (no cross-validation; the median
heuristic is the whole tuning rule, with the 0.1/0.9 distance quantiles kept
as a diagnostic band).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .data import AugmentedDataset, Dataset, ExposureProfile, augment, make_bin_grid
from .discrete import DiscreteTimeModel

__all__ = ["KernelModel", "median_heuristic_rho", "fit_gpr"]

_MEDIAN_SUBSAMPLE = 2000


def median_heuristic_rho(features: np.ndarray, seed: int = 0) -> float:
    """Median pairwise squared Euclidean distance, subsampled above 2000 rows."""
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or len(X) < 2:
        raise ValueError("need at least 2 feature rows")
    if len(X) > _MEDIAN_SUBSAMPLE:
        idx = np.random.default_rng(seed).choice(len(X), _MEDIAN_SUBSAMPLE, replace=False)
        X = X[np.sort(idx)]
    d2 = pdist(X, metric="sqeuclidean")
    rho = float(np.median(d2))
    if rho == 0.0:
        raise ValueError("zero bandwidth: all (subsampled) feature rows identical")
    return rho


def distance_quantile_band(features: np.ndarray, seed: int = 0) -> tuple[float, float]:
    """(0.1, 0.9) quantiles of the pairwise squared distances — diagnostic only."""
    X = np.asarray(features, dtype=float)
    if len(X) > _MEDIAN_SUBSAMPLE:
        idx = np.random.default_rng(seed).choice(len(X), _MEDIAN_SUBSAMPLE, replace=False)
        X = X[np.sort(idx)]
    d2 = pdist(X, metric="sqeuclidean")
    lo, hi = np.quantile(d2, [0.1, 0.9])
    return float(lo), float(hi)


@dataclass
class KernelModel:
    """Standardized training features, outcomes, and the fixed bandwidth."""

    features: np.ndarray  # standardized, (n_rows, d)
    y: np.ndarray
    rho: float
    mean: np.ndarray
    sd: np.ndarray
    grid: object
    rho_band: tuple[float, float] = (np.nan, np.nan)

    def standardize(self, raw: np.ndarray) -> np.ndarray:
        return (raw - self.mean) / self.sd

    def predict_rows(self, raw_queries: np.ndarray) -> np.ndarray:
        """Event probability for each raw (unstandardized) query row."""
        Q = self.standardize(np.atleast_2d(raw_queries))
        # ||q - x||^2 expanded; clip tiny negatives from cancellation
        d2 = (
            (Q**2).sum(1)[:, None]
            - 2.0 * Q @ self.features.T
            + (self.features**2).sum(1)[None, :]
        )
        np.maximum(d2, 0.0, out=d2)
        # subtract the row minimum before exponentiating: weights are scale
        # free, and this keeps the sums away from underflow
        logk = -d2 / self.rho
        shift = logk.max(axis=1, keepdims=True)
        K = np.exp(logk - shift)
        totals = K.sum(axis=1)
        out = np.empty(len(Q))
        for i in range(len(Q)):
            if totals[i] == 0.0 or not np.isfinite(totals[i]):
                warnings.warn("kernel weights underflowed; falling back to nearest neighbor")
                out[i] = float(self.y[np.argmin(d2[i])])
                continue
            w = K[i] / totals[i]
            assert np.all(w >= 0) and abs(w.sum() - 1.0) < 1e-8
            out[i] = float(w @ self.y)
        return out

    def predict_event_prob(self, profile: ExposureProfile, r: int) -> float:
        row = np.concatenate([profile.metals, profile.confounders, [self.grid.bin_times[r - 1]]])
        return float(self.predict_rows(row[None, :])[0])


def build_kernel_model(augmented: AugmentedDataset, seed: int = 0) -> KernelModel:
    raw = augmented.feature_matrix()
    mean = raw.mean(axis=0)
    sd = raw.std(axis=0)
    if np.any(sd == 0):
        bad = [augmented.feature_names()[i] for i in np.flatnonzero(sd == 0)]
        raise ValueError(f"zero-variance feature columns: {bad}")
    features = (raw - mean) / sd
    rho = median_heuristic_rho(features, seed=seed)
    band = distance_quantile_band(features, seed=seed)
    return KernelModel(
        features=features,
        y=augmented.y.astype(float),
        rho=rho,
        mean=mean,
        sd=sd,
        grid=augmented.grid,
        rho_band=band,
    )


def fit_gpr(dataset: Dataset, grid=None, n_bins: int = 5, seed: int = 0) -> DiscreteTimeModel:
    """Kernel model over the person-period expansion, as a survival model."""
    if grid is None:
        grid = make_bin_grid(dataset, n_bins)
    model = build_kernel_model(augment(dataset, grid), seed=seed)

    def prob_fn(profile: ExposureProfile) -> np.ndarray:
        base = np.concatenate([profile.metals, profile.confounders])
        rows = np.column_stack([np.tile(base, (grid.n_bins, 1)), grid.bin_times])
        return model.predict_rows(rows)

    out = DiscreteTimeModel(grid, prob_fn)
    out.kernel = model
    return out
