"""Elastic-net Cox: solver oracles, path invariants, CV selection behavior."""

import numpy as np
import pytest

from survmix.coxnet import (
    CoxENResult,
    ElasticNetPath,
    _kappa_grid,
    cv_select,
    en_solve,
    fit_cox_en,
    path_table,
)
from survmix.coxph import CoxPartialLikelihood, fit_cox, newton_cox
from survmix.data import Dataset
from survmix.simulate import default_config, replicate_rng, simulate_cohort


def toy_dataset(n=60, seed=5, n_metals=2, n_conf=1, beta=None):
    rng = np.random.default_rng(seed)
    metals = rng.normal(size=(n, n_metals))
    conf = rng.normal(size=(n, n_conf))
    if beta is None:
        beta = np.zeros(n_metals + n_conf)
        beta[0] = 0.8
        beta[-1] = 0.5
    eta = np.hstack([metals, conf]) @ beta
    time = rng.exponential(1.0 / np.exp(eta))
    cens = rng.exponential(2.0, size=n)
    event = time <= cens
    obs = np.minimum(time, cens)
    return Dataset(
        ids=np.arange(n),
        time=obs,
        event=event,
        metals=metals,
        confounders=conf,
        metal_names=tuple(f"m{j+1}" for j in range(n_metals)),
        confounder_names=tuple(f"c{j+1}" for j in range(n_conf)),
    )


class TestSolverOracles:
    def test_kappa_zero_matches_unpenalized_cox(self):
        ds = toy_dataset()
        pl = CoxPartialLikelihood(ds.time, ds.event)
        X = np.hstack([ds.metals, ds.confounders])
        penalized = np.array([True, True, False])
        beta_en = en_solve(pl, X, penalized, kappa=0.0, omega=1.0)
        beta_cox = fit_cox(ds).beta
        assert beta_en == pytest.approx(beta_cox, abs=1e-4)

    def test_kappa_max_zeroes_penalized_only(self):
        ds = toy_dataset()
        pl = CoxPartialLikelihood(ds.time, ds.event)
        X = np.hstack([ds.metals, ds.confounders])
        Xs = (X - X.mean(0)) / X.std(0)
        penalized = np.array([True, True, False])
        kappas, beta0 = _kappa_grid(pl, Xs, penalized, omega=1.0, n_kappa=100, min_ratio=1e-3)
        beta = en_solve(pl, Xs, penalized, kappas[0], omega=1.0, beta0=beta0)
        assert np.all(beta[:2] == 0.0)
        # confounder coefficient equals a confounder-only unpenalized fit
        bconf, _, _, _ = newton_cox(pl, Xs[:, [2]])
        assert beta[2] == pytest.approx(bconf[0], abs=1e-4)
        assert beta[2] != 0.0

    def test_lasso_against_grid_search(self):
        # brute-force minimizer of -loglik + kappa*|beta_1| on a fine 2-D grid
        ds = toy_dataset(n=40, seed=9, n_metals=1, n_conf=1, beta=np.array([0.7, 0.4]))
        pl = CoxPartialLikelihood(ds.time, ds.event)
        X = np.hstack([ds.metals, ds.confounders])
        penalized = np.array([True, False])
        kappa = 3.0
        beta_en = en_solve(pl, X, penalized, kappa, omega=1.0)

        grid = np.linspace(-1.5, 1.5, 301)
        best, best_val = None, np.inf
        for b1 in grid:
            for b2 in grid:
                val = -pl.loglik(X @ np.array([b1, b2])) + kappa * abs(b1)
                if val < best_val:
                    best_val, best = val, (b1, b2)
        assert beta_en == pytest.approx(best, abs=0.011)

    def test_ridge_against_grid_search(self):
        ds = toy_dataset(n=40, seed=9, n_metals=1, n_conf=1, beta=np.array([0.7, 0.4]))
        pl = CoxPartialLikelihood(ds.time, ds.event)
        X = np.hstack([ds.metals, ds.confounders])
        penalized = np.array([True, False])
        kappa = 5.0
        beta_en = en_solve(pl, X, penalized, kappa, omega=0.0)
        grid = np.linspace(-1.5, 1.5, 301)
        vals = np.array(
            [
                [-pl.loglik(X @ np.array([b1, b2])) + 0.5 * kappa * b1**2 for b2 in grid]
                for b1 in grid
            ]
        )
        i, j = np.unravel_index(np.argmin(vals), vals.shape)
        assert beta_en == pytest.approx((grid[i], grid[j]), abs=0.011)


@pytest.fixture(scope="module")
def en_result():
    cfg = default_config(1)
    cfg = type(cfg)(**{**cfg.__dict__, "n": 300, "seed": 17})
    ds = simulate_cohort(cfg)
    return ds, fit_cox_en(ds, omega_grid=(0.0, 0.5, 1.0), folds=5, seed=4, n_kappa=50)


class TestPath:
    def test_kappa_strictly_decreasing(self, en_result):
        _, res = en_result
        for path in res.paths:
            assert np.all(np.diff(path.kappas) < 0)

    def test_first_kappa_metal_coefs_zero(self, en_result):
        _, res = en_result
        for path in res.paths:
            if path.omega == 0.0:
                continue  # pure ridge never hits exact zero
            assert np.all(path.coefs[path.penalized, 0] == 0.0)

    def test_path_continuity(self, en_result):
        _, res = en_result
        for path in res.paths:
            jumps = np.max(np.abs(np.diff(path.coefs, axis=1)), axis=0)
            assert np.max(jumps) < 0.25

    def test_confounders_never_penalized(self, en_result):
        ds, res = en_result
        n_conf = len(ds.confounder_names)
        for path in res.paths:
            assert not path.penalized[-n_conf:].any()
            # confounder effects present even at kappa_max
            assert np.any(np.abs(path.coefs[~path.penalized, 0]) > 1e-3)

    def test_table_export_shape(self, en_result):
        _, res = en_result
        tab = path_table(res)
        n_terms = len(res.paths[0].term_names)
        assert len(tab) == sum(len(p.kappas) for p in res.paths) * n_terms
        assert set(tab.columns) == {"omega", "kappa", "term", "coefficient", "cv_score"}
        assert tab["cv_score"].notna().all()


class TestCVSelection:
    def test_selected_grid_point_has_best_score(self, en_result):
        _, res = en_result
        best = max(float(np.max(p.cv_scores)) for p in res.paths)
        star = next(p for p in res.paths if p.omega == res.omega_star)
        k = int(np.argmin(np.abs(star.kappas - res.kappa_star)))
        assert star.cv_scores[k] == pytest.approx(best)

    def test_deterministic_given_seed(self):
        ds = toy_dataset(n=80, seed=2)
        r1 = fit_cox_en(ds, omega_grid=(0.5, 1.0), seed=7, n_kappa=30)
        r2 = fit_cox_en(ds, omega_grid=(0.5, 1.0), seed=7, n_kappa=30)
        assert r1.omega_star == r2.omega_star
        assert r1.kappa_star == r2.kappa_star
        assert np.array_equal(r1.fit.beta, r2.fit.beta)

    def test_invariant_to_row_order(self):
        ds = toy_dataset(n=80, seed=2)
        perm = np.random.default_rng(0).permutation(len(ds.time))
        ds_perm = Dataset(
            ids=ds.ids[perm],
            time=ds.time[perm],
            event=ds.event[perm],
            metals=ds.metals[perm],
            confounders=ds.confounders[perm],
            metal_names=ds.metal_names,
            confounder_names=ds.confounder_names,
        )
        r1 = fit_cox_en(ds, omega_grid=(1.0,), seed=7, n_kappa=30)
        r2 = fit_cox_en(ds_perm, omega_grid=(1.0,), seed=7, n_kappa=30)
        assert r1.kappa_star == pytest.approx(r2.kappa_star)
        assert r1.fit.beta == pytest.approx(r2.fit.beta, abs=1e-5)

    def test_noise_metals_mostly_zeroed(self):
        # pure-noise metals with a strong confounder: lasso-leaning CV should
        # zero at least half the metal coefficients in the median replicate
        zero_counts = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            n = 120
            metals = rng.normal(size=(n, 4))
            conf = rng.normal(size=(n, 1))
            eta = 1.2 * conf[:, 0]
            time = rng.exponential(1.0 / np.exp(eta))
            cens = rng.exponential(2.0, size=n)
            ds = Dataset(
                ids=np.arange(n),
                time=np.minimum(time, cens),
                event=time <= cens,
                metals=metals,
                confounders=conf,
                metal_names=("m1", "m2", "m3", "m4"),
                confounder_names=("c1",),
            )
            res = fit_cox_en(ds, omega_grid=(0.2, 0.6, 1.0), seed=seed, n_kappa=40)
            zero_counts.append(int(np.sum(res.fit.beta[:4] == 0.0)))
        assert np.median(zero_counts) >= 2

    def test_duplicated_rows_reproducible(self):
        ds = toy_dataset(n=50, seed=3)
        idx = np.concatenate([np.arange(50), np.arange(50)])
        dup = Dataset(
            ids=np.arange(100),
            time=ds.time[idx],
            event=ds.event[idx],
            metals=ds.metals[idx],
            confounders=ds.confounders[idx],
            metal_names=ds.metal_names,
            confounder_names=ds.confounder_names,
        )
        r1 = fit_cox_en(dup, omega_grid=(1.0,), seed=1, n_kappa=25)
        r2 = fit_cox_en(dup, omega_grid=(1.0,), seed=1, n_kappa=25)
        assert np.isfinite(r1.paths[0].cv_scores).all()
        assert r1.kappa_star == r2.kappa_star

    def test_empty_grid_rejected(self):
        ds = toy_dataset()
        with pytest.raises(ValueError, match="empty"):
            fit_cox_en(ds, omega_grid=())

    def test_bad_omega_rejected(self):
        ds = toy_dataset()
        with pytest.raises(ValueError, match="omega"):
            fit_cox_en(ds, omega_grid=(0.5, 1.5))

    def test_no_events_rejected(self):
        ds = toy_dataset()
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
            fit_cox_en(dead)


class TestInteractions:
    def test_interaction_columns_penalized(self):
        ds = toy_dataset(n=100, seed=8, n_metals=3)
        res = fit_cox_en(ds, omega_grid=(1.0,), include_interactions=True, seed=0, n_kappa=30)
        path = res.paths[0]
        # 3 mains + 3 products penalized, 1 confounder not
        assert path.penalized.sum() == 6
        assert len(path.term_names) == 7
        assert np.all(path.coefs[path.penalized, 0] == 0.0)

    def test_survival_model_contract(self, en_result):
        from survmix.coxph import CoxSurvivalModel
        from survmix.estimands import build_profiles, compute_all_estimands, compute_t_spec

        ds, res = en_result
        model = CoxSurvivalModel(res.fit)
        profiles = build_profiles(ds.metals, ds.confounders)
        out = compute_all_estimands(model, profiles, compute_t_spec(ds))
        assert all(np.isfinite(v) for v in out.values())
        assert out["individual_hr"] > 0
