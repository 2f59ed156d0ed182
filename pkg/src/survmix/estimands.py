"""Mixture estimands computed uniformly from any fitted survival model.

Five estimands are supported, all evaluated at a single time t_spec (the
80th percentile of observed follow-up by default):

  individual_hr        hazard ratio for an IQR change in one metal
  individual_survdiff  survival-probability difference for the same contrast
  mixture_hr           hazard ratio, all metals jointly 75th vs 25th pct
  mixture_survdiff     survival difference for the joint contrast
  interaction_mult     multiplicative interaction between two metals

All non-contrasted metals and all confounders sit at their medians.  Models
need only expose survival(profile, t) and hazard(profile, t).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, ExposureProfile

__all__ = [
    "ESTIMAND_KINDS",
    "EstimandRequest",
    "ProfileSet",
    "DegenerateEstimate",
    "compute_t_spec",
    "build_profiles",
    "hazard_ratio",
    "survival_difference",
    "multiplicative_interaction",
    "compute_estimand",
    "compute_all_estimands",
    "exposure_response_curve",
    "CURVE_PERCENTILES",
]

ESTIMAND_KINDS = (
    "individual_hr",
    "individual_survdiff",
    "mixture_hr",
    "mixture_survdiff",
    "interaction_mult",
)

CURVE_PERCENTILES = np.arange(5, 100, 5)  # 5, 10, ..., 95


class DegenerateEstimate(ValueError):
    """Raised when a hazard in a ratio denominator is exactly zero."""


@dataclass(frozen=True)
class EstimandRequest:
    """Which contrasts to evaluate: metal index j, interaction partner j2,
    percentile pair (low, high)."""

    metal: int = 0
    metal2: int = 2
    lo_pct: float = 25.0
    hi_pct: float = 75.0

    def __post_init__(self):
        if self.metal == self.metal2:
            raise ValueError("interaction requires two distinct metals")
        if not (0 < self.lo_pct < self.hi_pct < 100):
            raise ValueError("percentiles must satisfy 0 < lo < hi < 100")


@dataclass(frozen=True)
class ProfileSet:
    """All covariate profiles needed for the five estimands."""

    median: ExposureProfile
    ind_high: ExposureProfile
    ind_low: ExposureProfile
    mix_high: ExposureProfile
    mix_low: ExposureProfile
    int_hh: ExposureProfile
    int_hl: ExposureProfile
    int_lh: ExposureProfile
    int_ll: ExposureProfile
    request: EstimandRequest
    metal_percentiles: np.ndarray  # (19, J) grid used for exposure-response curves


def compute_t_spec(dataset: Dataset, percentile: float = 80.0) -> float:
    """Empirical percentile of observed follow-up (events and censorings
    pooled), linear-interpolation quantile convention."""
    return float(np.percentile(dataset.time, percentile))


def build_profiles(
    metals: np.ndarray, confounders: np.ndarray, request: EstimandRequest | None = None
) -> ProfileSet:
    """Profiles from empirical percentiles of the given covariate matrices."""
    if request is None:
        request = EstimandRequest()
    metals = np.atleast_2d(metals)
    med_m = np.percentile(metals, 50, axis=0)
    med_c = np.percentile(np.atleast_2d(confounders), 50, axis=0)
    lo = np.percentile(metals, request.lo_pct, axis=0)
    hi = np.percentile(metals, request.hi_pct, axis=0)
    j, j2 = request.metal, request.metal2

    base = ExposureProfile(med_m, med_c)

    def with_levels(**levels) -> ExposureProfile:
        m = med_m.copy()
        for idx, val in levels.items():
            m[int(idx)] = val
        return ExposureProfile(m, med_c)

    mix_high = ExposureProfile(hi, med_c)
    mix_low = ExposureProfile(lo, med_c)
    grid = np.percentile(metals, CURVE_PERCENTILES, axis=0)
    return ProfileSet(
        median=base,
        ind_high=base.with_metal(j, hi[j]),
        ind_low=base.with_metal(j, lo[j]),
        mix_high=mix_high,
        mix_low=mix_low,
        int_hh=with_levels(**{str(j): hi[j], str(j2): hi[j2]}),
        int_hl=with_levels(**{str(j): hi[j], str(j2): lo[j2]}),
        int_lh=with_levels(**{str(j): lo[j], str(j2): hi[j2]}),
        int_ll=with_levels(**{str(j): lo[j], str(j2): lo[j2]}),
        request=request,
        metal_percentiles=grid,
    )


def hazard_ratio(model, high: ExposureProfile, low: ExposureProfile, t_spec: float) -> float:
    denom = model.hazard(low, t_spec)
    if denom == 0:
        raise DegenerateEstimate("zero hazard in ratio denominator")
    return model.hazard(high, t_spec) / denom


def survival_difference(model, high: ExposureProfile, low: ExposureProfile, t_spec: float) -> float:
    return model.survival(high, t_spec) - model.survival(low, t_spec)


def multiplicative_interaction(model, profiles: ProfileSet, t_spec: float) -> float:
    cells = [
        model.hazard(profiles.int_hh, t_spec),
        model.hazard(profiles.int_ll, t_spec),
        model.hazard(profiles.int_lh, t_spec),
        model.hazard(profiles.int_hl, t_spec),
    ]
    if cells[2] == 0 or cells[3] == 0:
        raise DegenerateEstimate("zero hazard in interaction cell")
    return (cells[0] * cells[1]) / (cells[2] * cells[3])


def compute_estimand(model, kind: str, profiles: ProfileSet, t_spec: float) -> float:
    if kind == "individual_hr":
        return hazard_ratio(model, profiles.ind_high, profiles.ind_low, t_spec)
    if kind == "individual_survdiff":
        return survival_difference(model, profiles.ind_high, profiles.ind_low, t_spec)
    if kind == "mixture_hr":
        return hazard_ratio(model, profiles.mix_high, profiles.mix_low, t_spec)
    if kind == "mixture_survdiff":
        return survival_difference(model, profiles.mix_high, profiles.mix_low, t_spec)
    if kind == "interaction_mult":
        return multiplicative_interaction(model, profiles, t_spec)
    raise ValueError(f"unknown estimand kind: {kind}")


def compute_all_estimands(model, profiles: ProfileSet, t_spec: float) -> dict[str, float]:
    out = {}
    for kind in ESTIMAND_KINDS:
        try:
            out[kind] = compute_estimand(model, kind, profiles, t_spec)
        except DegenerateEstimate:
            out[kind] = np.nan
    return out


def exposure_response_curve(
    model, profiles: ProfileSet, t_spec: float, metal: int | None = None
) -> np.ndarray:
    """(19, 2) array of (exposure value, survival probability) at the 5th
    through 95th percentiles of one metal, all else at medians."""
    j = profiles.request.metal if metal is None else metal
    values = profiles.metal_percentiles[:, j]
    out = np.empty((len(values), 2))
    for i, v in enumerate(values):
        out[i, 0] = v
        out[i, 1] = model.survival(profiles.median.with_metal(j, v), t_spec)
    return out
