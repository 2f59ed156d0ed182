"""Estimand formulas checked against hand-computable models."""

import numpy as np
import pytest

from survmix.data import ExposureProfile
from survmix.estimands import (
    CURVE_PERCENTILES,
    DegenerateEstimate,
    EstimandRequest,
    build_profiles,
    compute_all_estimands,
    compute_estimand,
    compute_t_spec,
    exposure_response_curve,
    hazard_ratio,
    multiplicative_interaction,
    survival_difference,
)


class LogLinearModel:
    """hazard = exp(b . m), survival = exp(-t * hazard); exact PH."""

    def __init__(self, beta):
        self.beta = np.asarray(beta, dtype=float)

    def hazard(self, profile, t):
        return float(np.exp(self.beta @ profile.metals))

    def survival(self, profile, t):
        return float(np.exp(-t * self.hazard(profile, t)))


class InteractingModel(LogLinearModel):
    """Adds a product term between metals 0 and 2 on the log-hazard scale."""

    def __init__(self, beta, delta):
        super().__init__(beta)
        self.delta = float(delta)

    def hazard(self, profile, t):
        m = profile.metals
        return float(np.exp(self.beta @ m + self.delta * m[0] * m[2]))


@pytest.fixture(scope="module")
def grid_metals():
    # 101 evenly spaced values per metal -> percentiles land exactly on points
    rng = np.random.default_rng(7)
    base = np.linspace(0.0, 1.0, 101)
    cols = [rng.permutation(base) for _ in range(5)]
    return np.column_stack(cols)


@pytest.fixture(scope="module")
def profiles(grid_metals):
    conf = np.zeros((101, 2))
    return build_profiles(grid_metals, conf)


class TestProfiles:
    def test_percentiles_of_uniform_grid(self, profiles):
        # percentiles of {0, .01, ..., 1} are exact under linear interpolation
        assert profiles.median.metals == pytest.approx(np.full(5, 0.5))
        assert profiles.mix_high.metals == pytest.approx(np.full(5, 0.75))
        assert profiles.mix_low.metals == pytest.approx(np.full(5, 0.25))

    def test_individual_profile_changes_only_one_metal(self, profiles):
        diff = profiles.ind_high.metals - profiles.median.metals
        assert diff[0] == pytest.approx(0.25)
        assert np.all(diff[1:] == 0)

    def test_interaction_cells(self, profiles):
        for prof, (v0, v2) in [
            (profiles.int_hh, (0.75, 0.75)),
            (profiles.int_hl, (0.75, 0.25)),
            (profiles.int_lh, (0.25, 0.75)),
            (profiles.int_ll, (0.25, 0.25)),
        ]:
            assert prof.metals[0] == pytest.approx(v0)
            assert prof.metals[2] == pytest.approx(v2)
            assert prof.metals[1] == pytest.approx(0.5)

    def test_same_metal_rejected(self):
        with pytest.raises(ValueError):
            EstimandRequest(metal=1, metal2=1)

    def test_bad_percentile_order_rejected(self):
        with pytest.raises(ValueError):
            EstimandRequest(lo_pct=75.0, hi_pct=25.0)

    def test_curve_grid_shape(self, profiles):
        assert profiles.metal_percentiles.shape == (19, 5)
        assert list(CURVE_PERCENTILES) == list(range(5, 100, 5))


class TestEstimandValues:
    def test_individual_hr_closed_form(self, profiles):
        model = LogLinearModel([0.8, 0.1, -0.3, 0.0, 0.2])
        hr = compute_estimand(model, "individual_hr", profiles, t_spec=1.0)
        assert hr == pytest.approx(np.exp(0.8 * 0.5))

    def test_mixture_hr_closed_form(self, profiles):
        beta = np.array([0.8, 0.1, -0.3, 0.0, 0.2])
        model = LogLinearModel(beta)
        hr = compute_estimand(model, "mixture_hr", profiles, t_spec=1.0)
        assert hr == pytest.approx(np.exp(beta.sum() * 0.5))

    def test_survdiffs_closed_form(self, profiles):
        beta = np.array([0.8, 0.1, -0.3, 0.0, 0.2])
        model = LogLinearModel(beta)
        t = 2.0
        for kind, hi, lo in [
            ("individual_survdiff", profiles.ind_high, profiles.ind_low),
            ("mixture_survdiff", profiles.mix_high, profiles.mix_low),
        ]:
            expected = np.exp(-t * np.exp(beta @ hi.metals)) - np.exp(
                -t * np.exp(beta @ lo.metals)
            )
            assert compute_estimand(model, kind, profiles, t) == pytest.approx(expected)

    def test_interaction_is_one_without_product_term(self, profiles):
        model = LogLinearModel([0.8, 0.1, -0.3, 0.0, 0.2])
        val = compute_estimand(model, "interaction_mult", profiles, t_spec=1.0)
        assert val == pytest.approx(1.0)

    def test_interaction_recovers_product_coefficient(self, profiles):
        model = InteractingModel([0.8, 0.1, -0.3, 0.0, 0.2], delta=0.6)
        val = compute_estimand(model, "interaction_mult", profiles, t_spec=1.0)
        # log interaction = delta * (hi - lo)^2 for the two contrasted metals
        assert np.log(val) == pytest.approx(0.6 * 0.5**2)

    def test_compute_all_returns_every_kind(self, profiles):
        model = LogLinearModel([0.8, 0.1, -0.3, 0.0, 0.2])
        out = compute_all_estimands(model, profiles, t_spec=1.0)
        assert set(out) == {
            "individual_hr",
            "individual_survdiff",
            "mixture_hr",
            "mixture_survdiff",
            "interaction_mult",
        }
        assert all(np.isfinite(v) for v in out.values())


class TestDegenerate:
    class ZeroHazardModel:
        def hazard(self, profile, t):
            return 0.0

        def survival(self, profile, t):
            return 1.0

    def test_zero_denominator_raises(self, profiles):
        model = self.ZeroHazardModel()
        with pytest.raises(DegenerateEstimate):
            hazard_ratio(model, profiles.ind_high, profiles.ind_low, 1.0)
        with pytest.raises(DegenerateEstimate):
            multiplicative_interaction(model, profiles, 1.0)

    def test_compute_all_maps_degenerate_to_nan(self, profiles):
        out = compute_all_estimands(self.ZeroHazardModel(), profiles, 1.0)
        assert np.isnan(out["individual_hr"])
        assert np.isnan(out["interaction_mult"])
        # survival differences are still defined
        assert out["individual_survdiff"] == 0.0


class TestCurve:
    def test_curve_values_and_monotonicity(self, profiles):
        model = LogLinearModel([1.0, 0.0, 0.0, 0.0, 0.0])
        curve = exposure_response_curve(model, profiles, t_spec=1.0)
        assert curve.shape == (19, 2)
        assert curve[:, 0] == pytest.approx(np.arange(5, 100, 5) / 100.0)
        # harmful metal -> survival decreasing along the grid
        assert np.all(np.diff(curve[:, 1]) < 0)
        expected = np.exp(-np.exp(curve[:, 0]))
        assert curve[:, 1] == pytest.approx(expected)

    def test_curve_other_metal_is_flat(self, profiles):
        model = LogLinearModel([1.0, 0.0, 0.0, 0.0, 0.0])
        curve = exposure_response_curve(model, profiles, t_spec=1.0, metal=3)
        assert np.ptp(curve[:, 1]) == 0.0


def test_t_spec_is_80th_percentile():
    from survmix.data import Dataset

    time = np.arange(1.0, 102.0)  # 1..101
    ds = Dataset(
        ids=np.arange(101),
        time=time,
        event=np.ones(101, bool),
        metals=np.zeros((101, 1)),
        confounders=np.zeros((101, 0)),
        metal_names=("m1",),
        confounder_names=(),
    )
    assert compute_t_spec(ds) == pytest.approx(81.0)
