"""Accuracy metrics aggregated over simulation replicates.

Relative bias keeps the truth-minus-estimate sign convention, so a method
that over-estimates a positive truth has *negative* relative bias.  All four
scalar metrics exclude degenerate (non-finite) estimates consistently for a
given cell and report how many were dropped; extreme values are never
truncated, but median/IQR summaries are carried alongside so heavy tails can
be inspected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MetricsSummary",
    "relative_bias",
    "rmse",
    "coverage",
    "mise",
    "summarize_cell",
]

CURVE_GRID_SIZE = 19


def _finite(estimates: np.ndarray) -> np.ndarray:
    e = np.asarray(estimates, dtype=float)
    if e.ndim != 1 or len(e) == 0:
        raise ValueError("estimates must be a nonempty 1-d array")
    return e[np.isfinite(e)]


def relative_bias(estimates, truth) -> float:
    """(1/F) sum (truth - estimate) / truth.

    `truth` may be a scalar or a per-replicate vector (profiles are empirical
    percentiles, so the target can vary across simulated cohorts).
    """
    e = np.asarray(estimates, dtype=float)
    t = np.broadcast_to(np.asarray(truth, dtype=float), e.shape)
    if np.any(t == 0):
        raise ValueError("relative bias undefined at truth 0; use absolute bias")
    keep = np.isfinite(e)
    if e.ndim != 1 or len(e) == 0:
        raise ValueError("estimates must be a nonempty 1-d array")
    return float(np.mean((t[keep] - e[keep]) / t[keep]))


def rmse(estimates, truth) -> float:
    e = np.asarray(estimates, dtype=float)
    t = np.broadcast_to(np.asarray(truth, dtype=float), e.shape)
    keep = np.isfinite(e)
    if e.ndim != 1 or len(e) == 0:
        raise ValueError("estimates must be a nonempty 1-d array")
    return float(np.sqrt(np.mean((t[keep] - e[keep]) ** 2)))


def coverage(lowers, uppers, truth) -> float:
    """Fraction of intervals containing the truth (finite intervals only)."""
    lo = np.asarray(lowers, dtype=float)
    hi = np.asarray(uppers, dtype=float)
    if lo.shape != hi.shape:
        raise ValueError("interval bounds must align")
    t = np.broadcast_to(np.asarray(truth, dtype=float), lo.shape)
    good = np.isfinite(lo) & np.isfinite(hi)
    if not good.any():
        return np.nan
    return float(np.mean((lo[good] <= t[good]) & (t[good] <= hi[good])))


def mise(curves, truth_curve) -> float:
    """(1/F) sum_f (1/19) sum_k (S_hat_{f,k} - S_{f,k})^2 on the percentile grid.

    `truth_curve` is either one 19-point curve shared by all rows or a matrix
    aligned with `curves` (one truth curve per replicate).
    """
    curves = np.atleast_2d(np.asarray(curves, dtype=float))
    truth_curve = np.asarray(truth_curve, dtype=float)
    if curves.shape[1] != CURVE_GRID_SIZE or truth_curve.shape[-1] != CURVE_GRID_SIZE:
        raise ValueError(
            f"curves must live on the {CURVE_GRID_SIZE}-point percentile grid"
        )
    truth_curve = np.broadcast_to(truth_curve, curves.shape)
    good = np.isfinite(curves).all(axis=1)
    if not good.any():
        return np.nan
    return float(np.mean((curves[good] - truth_curve[good]) ** 2))


@dataclass(frozen=True)
class MetricsSummary:
    relative_bias: float
    sd: float
    rmse: float
    coverage: float
    mise: float
    F: int
    degenerate_count: int
    median: float
    iqr: float


def summarize_cell(
    estimates,
    lowers,
    uppers,
    truth: float,
    curves=None,
    truth_curve=None,
) -> MetricsSummary:
    """All metrics for one (scenario, method, estimand) cell.

    Estimates with non-finite values are excluded from every metric, and the
    matching intervals are excluded from coverage, so all columns describe
    the same retained replicates.  The exact decomposition
    rmse^2 = bias^2 + variance is asserted on the retained set (population
    variance, absolute bias).
    """
    e = np.asarray(estimates, dtype=float)
    lo = np.asarray(lowers, dtype=float)
    hi = np.asarray(uppers, dtype=float)
    if not (e.shape == lo.shape == hi.shape):
        raise ValueError("estimates and interval bounds must align")
    t = np.broadcast_to(np.asarray(truth, dtype=float), e.shape)
    keep = np.isfinite(e)
    degenerate = int(len(e) - keep.sum())
    if keep.sum() == 0:
        return MetricsSummary(
            relative_bias=np.nan,
            sd=np.nan,
            rmse=np.nan,
            coverage=np.nan,
            mise=np.nan,
            F=0,
            degenerate_count=degenerate,
            median=np.nan,
            iqr=np.nan,
        )
    e, tk = e[keep], t[keep]
    root = rmse(e, tk)
    # Decomposition on the error scale truth - estimate, which also covers
    # per-replicate truths.
    errors = tk - e
    abs_bias = float(np.mean(errors))
    variance = float(np.var(errors))
    assert abs(root**2 - (abs_bias**2 + variance)) < 1e-12 * max(1.0, root**2)
    q25, med, q75 = np.percentile(e, [25, 50, 75])
    curve_metric = np.nan
    if curves is not None:
        tc = np.asarray(truth_curve, dtype=float)
        if tc.ndim == 2:
            tc = tc[keep]
        curve_metric = mise(np.atleast_2d(curves)[keep], tc)
    return MetricsSummary(
        relative_bias=relative_bias(e, tk),
        sd=float(np.std(e)),
        rmse=root,
        coverage=coverage(lo[keep], hi[keep], tk),
        mise=curve_metric,
        F=int(keep.sum()),
        degenerate_count=degenerate,
        median=float(med),
        iqr=float(q75 - q25),
    )
