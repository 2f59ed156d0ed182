"""Penalized-spline Cox: penalty structure, limiting behavior, curve recovery."""

import numpy as np
import pytest

from survmix.coxph import CoxPartialLikelihood, CoxSurvivalModel, fit_cox, newton_cox
from survmix.estimands import build_profiles, compute_all_estimands, compute_t_spec
from survmix.simulate import default_config, simulate_cohort
from survmix.splines import (
    SplineBasisSpec,
    SplineCoxDesign,
    _basis_matrix,
    _uniform_knots,
    fit_cox_psplines,
    main_effect_curve,
)


def _cohort(scenario, n, seed):
    cfg = default_config(scenario)
    cfg = type(cfg)(**{**cfg.__dict__, "n": n, "seed": seed})
    return cfg, simulate_cohort(cfg)


@pytest.fixture(scope="module")
def scen1_fit():
    cfg, ds = _cohort(1, 1000, 31)
    return cfg, ds, fit_cox_psplines(ds, seed=2)


class TestBasis:
    def test_partition_of_unity(self):
        kn = _uniform_knots(0.0, 1.0, 8, 3)
        x = np.linspace(0, 1, 57)
        B = _basis_matrix(x, kn, 3)
        assert B.shape == (57, 8)
        assert B.sum(axis=1) == pytest.approx(np.ones(57))

    def test_degenerate_range_rejected(self):
        with pytest.raises(ValueError, match="degenerate"):
            _uniform_knots(1.0, 1.0, 8, 3)

    def test_basis_size_validation(self):
        with pytest.raises(ValueError):
            SplineBasisSpec(main_size=3)

    def test_out_of_range_evaluation_clamped(self):
        kn = _uniform_knots(0.0, 1.0, 8, 3)
        B = _basis_matrix(np.array([-0.5, 1.5]), kn, 3)
        assert np.isfinite(B).all()
        assert B.sum(axis=1) == pytest.approx(np.ones(2))


class TestPenaltyStructure:
    @pytest.fixture(scope="class")
    def design(self):
        _, ds = _cohort(1, 200, 5)
        return SplineCoxDesign.from_dataset(ds, SplineBasisSpec())

    def test_column_layout(self, design):
        # 5 mains of 7 cols, 10 tensors of 16, 3 confounders
        assert design.n_cols == 5 * 7 + 10 * 16 + 3
        assert len(design.term_names) == design.n_cols

    def test_penalty_psd_and_block(self, design):
        P = design.penalty_matrix(2.0, 3.0)
        assert P == pytest.approx(P.T)
        eig = np.linalg.eigvalsh(P)
        assert eig.min() > -1e-8
        # confounder rows unpenalized
        assert np.all(P[-3:, :] == 0)

    def test_main_null_space_is_centered_line(self, design):
        term = design.terms[0]
        eig = np.linalg.eigvalsh(term.penalty)
        # exactly one zero eigenvalue: the centered linear direction
        assert np.sum(eig < 1e-10 * eig.max()) == 1

    def test_tensor_null_space_is_pure_product(self, design):
        term = next(t for t in design.terms if len(t.metals) == 2)
        eig = np.linalg.eigvalsh(term.penalty)
        assert np.sum(eig < 1e-10 * eig.max()) == 1


class TestLimits:
    def test_infinite_smoothing_gives_straight_line(self):
        _, ds = _cohort(1, 300, 9)
        fit = fit_cox_psplines(ds, tau_grid=(1e9,), seed=0)
        q = np.percentile(ds.metals[:, 0], [5, 95])
        x = np.linspace(q[0], q[1], 40)
        c = main_effect_curve(fit, 0, x)
        A = np.column_stack([np.ones_like(x), x])
        resid = c - A @ np.linalg.lstsq(A, c, rcond=None)[0]
        assert np.abs(resid).max() < 1e-3

    def test_zero_penalty_linear_design_matches_fit_cox(self):
        # the penalized solver with tau=0 reduces to plain Newton-Raphson
        _, ds = _cohort(1, 300, 9)
        X = np.hstack([ds.metals, ds.confounders])
        pl = CoxPartialLikelihood(ds.time, ds.event)
        beta_pen, _, _, _ = newton_cox(pl, X, penalty=np.zeros((8, 8)))
        assert beta_pen == pytest.approx(fit_cox(ds).beta, abs=1e-6)


class TestCurveRecovery:
    def test_linear_truth_recovered(self, scen1_fit):
        cfg, ds, fit = scen1_fit
        q = np.percentile(ds.metals[:, 0], [5, 95])
        x = np.linspace(q[0], q[1], 25)
        c = main_effect_curve(fit, 0, x)
        # truth on the log-hazard scale: slope -beta_1, centered
        truth = -cfg.beta[0] * x
        truth = truth - truth.mean()
        assert np.abs((c - c.mean()) - truth).max() < 0.15

    def test_scenario2_m3_direction_is_increasing(self):
        _, ds = _cohort(2, 1000, 13)
        fit = fit_cox_psplines(ds, seed=1)
        q = np.percentile(ds.metals[:, 2], [5, 95])
        x = np.linspace(q[0], q[1], 25)
        c = main_effect_curve(fit, 2, x)
        assert c[-1] - c[0] > 0.5
        assert np.polyfit(x, c, 1)[0] > 0

    def test_survival_model_contract(self, scen1_fit):
        _, ds, fit = scen1_fit
        model = CoxSurvivalModel(fit)
        profiles = build_profiles(ds.metals, ds.confounders)
        t_spec = compute_t_spec(ds)
        out = compute_all_estimands(model, profiles, t_spec)
        assert all(np.isfinite(v) for v in out.values())
        ts = np.linspace(0.5, t_spec, 20)
        surv = [model.survival(profiles.median, t) for t in ts]
        assert np.all(np.diff(surv) <= 1e-12)

    def test_metadata_records_selection(self, scen1_fit):
        _, _, fit = scen1_fit
        assert fit.meta["model"] == "cox_ps"
        assert fit.meta["tau_main"] in [10.0 ** v for v in np.linspace(-3, 6, 7)]


class TestValidation:
    def test_empty_grid_rejected(self):
        _, ds = _cohort(1, 100, 3)
        with pytest.raises(ValueError, match="empty"):
            fit_cox_psplines(ds, tau_grid=())

    def test_no_events_rejected(self):
        from survmix.data import Dataset

        _, ds = _cohort(1, 100, 3)
        dead = Dataset(
            ids=ds.ids,
            time=ds.time,
            event=np.zeros_like(ds.event),
            metals=ds.metals,
            confounders=ds.confounders,
            metal_names=ds.metal_names,
            confounder_names=ds.confounder_names,
        )
        with pytest.raises(ValueError, match="event"):
            fit_cox_psplines(dead)

    def test_deterministic(self):
        _, ds = _cohort(1, 250, 7)
        grid = (1.0, 1e3)
        f1 = fit_cox_psplines(ds, tau_grid=grid, seed=4)
        f2 = fit_cox_psplines(ds, tau_grid=grid, seed=4)
        assert f1.meta == f2.meta
        assert np.array_equal(f1.beta, f2.beta)
