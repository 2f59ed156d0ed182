"""Interval estimation: bootstrap percentile intervals and posterior quantiles.

Frequentist fits get nonparametric bootstrap intervals — subjects are
resampled with replacement before person-period augmentation, the full fit
recipe (including any cross-validation) is rerun on each resample, and the
interval is the (2.5, 97.5) empirical percentile range of the B estimates.
Tree-ensemble fits instead summarize their posterior draws directly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .simulate import replicate_rng

__all__ = [
    "IntervalEstimate",
    "resample_subjects",
    "bootstrap_estimands",
    "posterior_interval",
]

_DEGENERATE_FRACTION_LIMIT = 0.20


@dataclass(frozen=True)
class IntervalEstimate:
    """Point estimate with a 95% interval.

    Percentile intervals are not forced to contain the point estimate (they
    can exclude it for skewed resampling distributions); only lower <= upper
    is guaranteed.
    """

    point: float
    lower: float
    upper: float
    sd: float
    source: str  # "bootstrap_percentile" or "posterior"
    n_samples: int
    n_degenerate: int = 0
    unreliable: bool = False

    def __post_init__(self):
        if np.isfinite(self.lower) and np.isfinite(self.upper):
            assert self.lower <= self.upper

    def contains(self, value: float) -> bool:
        return bool(self.lower <= value <= self.upper)


def resample_subjects(dataset: Dataset, rng: np.random.Generator) -> Dataset:
    """Draw n subjects with replacement; each keeps its full covariate row
    and outcome, and resampled copies get fresh ids so downstream grouping
    treats them as distinct subjects."""
    n = len(dataset.ids)
    idx = rng.integers(0, n, size=n)
    return Dataset(
        ids=np.arange(n),
        time=dataset.time[idx],
        event=dataset.event[idx],
        metals=dataset.metals[idx],
        confounders=dataset.confounders[idx],
        metal_names=dataset.metal_names,
        confounder_names=dataset.confounder_names,
    )


def _interval_from_values(values, point, source, n_total) -> IntervalEstimate:
    values = np.asarray(values, dtype=float)
    good = values[np.isfinite(values)]
    n_degen = n_total - len(good)
    if len(good) == 0:
        return IntervalEstimate(
            point=point,
            lower=np.nan,
            upper=np.nan,
            sd=np.nan,
            source=source,
            n_samples=n_total,
            n_degenerate=n_degen,
            unreliable=True,
        )
    lower, upper = np.percentile(good, [2.5, 97.5])
    unreliable = n_degen > _DEGENERATE_FRACTION_LIMIT * n_total
    if unreliable:
        warnings.warn(
            f"{n_degen}/{n_total} degenerate resamples; interval flagged unreliable"
        )
    return IntervalEstimate(
        point=point,
        lower=float(lower),
        upper=float(upper),
        sd=float(np.std(good, ddof=1)) if len(good) > 1 else 0.0,
        source=source,
        n_samples=n_total,
        n_degenerate=n_degen,
        unreliable=unreliable,
    )


def bootstrap_estimands(
    dataset: Dataset,
    fit_recipe,
    points: dict[str, float],
    B: int = 100,
    seed: int = 0,
) -> dict[str, IntervalEstimate]:
    """Percentile intervals for every estimand a recipe produces.

    `fit_recipe(dataset) -> dict[name, value]` must run the whole pipeline on
    the resample (fit, tuning, estimand evaluation); degenerate estimands are
    returned as NaN and dropped per estimand with a count.  `points` carries
    the original-data estimates the intervals are attached to.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    samples = {name: np.full(B, np.nan) for name in points}
    for b in range(B):
        rng = replicate_rng(seed, b)
        resample = resample_subjects(dataset, rng)
        try:
            values = fit_recipe(resample)
        except Exception as exc:  # isolate resample-level fit failures
            warnings.warn(f"bootstrap resample {b} failed: {exc}")
            continue
        for name in points:
            samples[name][b] = values.get(name, np.nan)
    return {
        name: _interval_from_values(
            samples[name], points[name], "bootstrap_percentile", B
        )
        for name in points
    }


def posterior_interval(draw_estimands, level: float = 95.0) -> IntervalEstimate:
    """Posterior mean and central quantile interval from per-draw estimands."""
    draws = np.asarray(draw_estimands, dtype=float)
    if draws.ndim != 1 or len(draws) < 10:
        raise ValueError("need at least 10 posterior draws")
    good = draws[np.isfinite(draws)]
    n_degen = len(draws) - len(good)
    if len(good) == 0:
        return IntervalEstimate(
            point=np.nan,
            lower=np.nan,
            upper=np.nan,
            sd=np.nan,
            source="posterior",
            n_samples=len(draws),
            n_degenerate=n_degen,
            unreliable=True,
        )
    half = (100.0 - level) / 2.0
    lower, upper = np.percentile(good, [half, 100.0 - half])
    return IntervalEstimate(
        point=float(good.mean()),
        lower=float(lower),
        upper=float(upper),
        sd=float(np.std(good, ddof=1)) if len(good) > 1 else 0.0,
        source="posterior",
        n_samples=len(draws),
        n_degenerate=n_degen,
        unreliable=n_degen > _DEGENERATE_FRACTION_LIMIT * len(draws),
    )
