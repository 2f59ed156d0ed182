"""Cox proportional-hazards estimation via the partial likelihood.

Covers the plain fit, the all-two-way-metal-interaction fit, and the Breslow
baseline cumulative hazard, so every fit exposes survival/hazard predictions
at arbitrary covariate profiles.  Ties are handled with the Breslow
approximation throughout.

The partial-likelihood derivatives are computed with reverse cumulative sums
over the time-sorted frame, which makes the full Hessian a pair of dense
matrix products (no per-risk-set loops).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, ExposureProfile

__all__ = [
    "CoxPartialLikelihood",
    "LinearCoxDesign",
    "CoxFit",
    "CoxSurvivalModel",
    "fit_cox",
    "breslow_baseline",
    "cox_linear_predictor",
    "newton_cox",
]


class CoxPartialLikelihood:
    """Breslow partial likelihood over a fixed (time, event) frame.

    All methods take/return quantities in the ORIGINAL row order; internal
    computations run on the time-sorted frame.
    """

    def __init__(self, time: np.ndarray, event: np.ndarray):
        time = np.asarray(time, dtype=float)
        event = np.asarray(event, dtype=bool)
        self.n = len(time)
        self.n_events = int(event.sum())
        order = np.argsort(time, kind="stable")
        self._order = order
        self._ts = time[order]
        self._ds = event[order]
        # time-tie groups in the sorted frame
        uniq, inv = np.unique(self._ts, return_inverse=True)
        self._group_of_row = inv
        self._group_first = np.searchsorted(self._ts, uniq, side="left")
        self._d_per_group = np.bincount(inv, weights=self._ds.astype(float))
        self._event_rows_sorted = np.flatnonzero(self._ds)

    def _risk_sums(self, eta_sorted: np.ndarray, X_sorted: np.ndarray | None = None):
        w = np.exp(eta_sorted)
        rc = np.cumsum(w[::-1])[::-1]
        s0_group = rc[self._group_first]  # S0 at each distinct time
        if X_sorted is None:
            return w, s0_group, None
        rcs1 = np.cumsum((w[:, None] * X_sorted)[::-1], axis=0)[::-1]
        s1_group = rcs1[self._group_first]
        return w, s0_group, s1_group

    def loglik(self, eta: np.ndarray) -> float:
        es = eta[self._order]
        _, s0, _ = self._risk_sums(es)
        ev = self._event_rows_sorted
        return float(es[ev].sum() - np.sum(self._d_per_group * np.log(s0)))

    def loglik_grad_eta(self, eta: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        """(loglik, d loglik / d eta, diagonal Hessian weights), original order.

        The weights are the diagonal of minus the Hessian in eta, used by the
        elastic-net quadratic approximation.
        """
        es = eta[self._order]
        w, s0, _ = self._risk_sums(es)
        ratio = np.where(s0 > 0, self._d_per_group / s0, 0.0)
        ratio2 = np.where(s0 > 0, self._d_per_group / s0**2, 0.0)
        cum_a = np.cumsum(ratio)[self._group_of_row]
        cum_b = np.cumsum(ratio2)[self._group_of_row]
        grad_s = self._ds.astype(float) - w * cum_a
        diag_s = np.maximum(w * cum_a - w**2 * cum_b, 0.0)
        ll = float(es[self._event_rows_sorted].sum() - np.sum(self._d_per_group * np.log(s0)))
        grad = np.empty_like(grad_s)
        diag = np.empty_like(diag_s)
        grad[self._order] = grad_s
        diag[self._order] = diag_s
        return ll, grad, diag

    def loglik_grad_hess(self, X: np.ndarray, beta: np.ndarray):
        """(loglik, score, negative Hessian) of the partial likelihood in beta."""
        Xs = X[self._order]
        es = Xs @ beta
        w, s0, s1 = self._risk_sums(es, Xs)
        ratio = np.where(s0 > 0, self._d_per_group / s0, 0.0)
        cum_a = np.cumsum(ratio)[self._group_of_row]
        grad_s = self._ds.astype(float) - w * cum_a
        score = Xs.T @ grad_s
        # H = sum_g d_g [ S2/S0 - mu mu' ];  sum_g d_g S2_g/S0_g = X' diag(w cumA) X
        H1 = (Xs * (w * cum_a)[:, None]).T @ Xs
        with np.errstate(invalid="ignore", divide="ignore"):
            mu = np.where(s0[:, None] > 0, s1 / s0[:, None], 0.0)
        U = mu * np.sqrt(self._d_per_group)[:, None]
        neg_hess = H1 - U.T @ U
        ll = float(es[self._event_rows_sorted].sum() - np.sum(self._d_per_group * np.log(s0)))
        return ll, score, neg_hess

    def breslow_cumhaz(self, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(event times, cumulative baseline hazard) step function."""
        es = eta[self._order]
        _, s0, _ = self._risk_sums(es)
        has_event = self._d_per_group > 0
        if not np.any(has_event):
            raise ValueError("no events: empty risk set for the baseline")
        times = self._ts[self._group_first][has_event]
        incr = self._d_per_group[has_event] / s0[has_event]
        return times, np.cumsum(incr)


def newton_cox(
    pl: CoxPartialLikelihood,
    X: np.ndarray,
    penalty: np.ndarray | None = None,
    beta0: np.ndarray | None = None,
    max_iter: int = 100,
    score_tol: float = 1e-8,
    ll_tol: float = 1e-10,
    max_beta_norm: float = 50.0,
):
    """Newton-Raphson maximizer of the (optionally penalized) log partial
    likelihood; returns (beta, loglik, n_iter, trace)."""
    p = X.shape[1]
    beta = np.zeros(p) if beta0 is None else beta0.copy()
    trace = []
    ll_pen_prev = -np.inf
    for it in range(1, max_iter + 1):
        ll, score, neg_hess = pl.loglik_grad_hess(X, beta)
        if penalty is not None:
            ll_pen = ll - 0.5 * beta @ penalty @ beta
            score = score - penalty @ beta
            neg_hess = neg_hess + penalty
        else:
            ll_pen = ll
        trace.append((it, ll_pen, float(np.max(np.abs(score)))))
        if np.max(np.abs(score)) < score_tol:
            return beta, ll, it, trace
        try:
            step = np.linalg.solve(neg_hess + 1e-10 * np.eye(p), score)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"singular (penalized) Hessian at iteration {it}") from exc
        # Newton decrement: expected objective gain from a full step.  For the
        # unpenalized fit this only counts as converged once the score itself
        # is small; on badly scaled designs the decrement can go flat while
        # the gradient is still visibly nonzero.
        score_ok = penalty is not None or np.max(np.abs(score)) < 1e-6
        if 0.5 * score @ step < 1e-14 * (abs(ll_pen) + 1) and score_ok:
            return beta, ll, it, trace
        # step halving against divergence
        scale = 1.0
        improved = False
        for _ in range(30):
            cand = beta + scale * step
            ll_c = pl.loglik(X @ cand)
            if penalty is not None:
                ll_c -= 0.5 * cand @ penalty @ cand
            if ll_c >= ll_pen - 1e-12:
                improved = True
                break
            scale /= 2
        if not improved:
            # objective cannot be raised at machine precision: numerical optimum
            return beta, ll, it, trace
        beta = beta + scale * step
        if np.linalg.norm(beta) > max_beta_norm:
            raise RuntimeError(
                "divergent coefficients (norm > 50); likely monotone partial likelihood"
            )
        new_pen = ll_c
        if (
            ll_pen_prev > -np.inf
            and abs(new_pen - ll_pen_prev) <= ll_tol * (abs(ll_pen_prev) + 1)
            and score_ok
        ):
            return beta, pl.loglik(X @ beta), it, trace
        ll_pen_prev = new_pen
    raise RuntimeError(f"Newton-Raphson did not converge in {max_iter} iterations; trace={trace[-5:]}")


@dataclass(frozen=True)
class LinearCoxDesign:
    """Metals (+ optional all two-way metal products) + linear confounders."""

    metal_names: tuple[str, ...]
    confounder_names: tuple[str, ...]
    include_interactions: bool = False

    @property
    def term_names(self) -> tuple[str, ...]:
        names = list(self.metal_names)
        if self.include_interactions:
            J = len(self.metal_names)
            for j in range(J):
                for k in range(j + 1, J):
                    names.append(f"{self.metal_names[j]}:{self.metal_names[k]}")
        names.extend(self.confounder_names)
        return tuple(names)

    def matrix(self, metals: np.ndarray, confounders: np.ndarray) -> np.ndarray:
        metals = np.atleast_2d(metals)
        confounders = np.atleast_2d(confounders)
        cols = [metals]
        if self.include_interactions:
            J = metals.shape[1]
            prods = [metals[:, [j]] * metals[:, [k]] for j in range(J) for k in range(j + 1, J)]
            cols.extend(prods)
        cols.append(confounders)
        return np.hstack(cols)

    def row(self, profile: ExposureProfile) -> np.ndarray:
        return self.matrix(profile.metals[None, :], profile.confounders[None, :])[0]


@dataclass
class CoxFit:
    """A converged Cox-family fit plus its Breslow baseline."""

    design: object  # exposes .matrix(metals, conf), .row(profile), .term_names
    beta: np.ndarray
    loglik: float
    n_iter: int
    baseline_times: np.ndarray = field(default=None)
    baseline_cumhaz: np.ndarray = field(default=None)
    meta: dict = field(default_factory=dict)

    def linear_predictor(self, profile: ExposureProfile) -> float:
        return float(self.design.row(profile) @ self.beta)

    def cumulative_baseline(self, t: float) -> float:
        idx = np.searchsorted(self.baseline_times, t, side="right")
        return 0.0 if idx == 0 else float(self.baseline_cumhaz[idx - 1])

    def summary_dict(self) -> dict:
        return {
            "terms": {n: float(b) for n, b in zip(self.design.term_names, self.beta)},
            "loglik": self.loglik,
            "n_iter": self.n_iter,
            "baseline": "breslow",
            **self.meta,
        }


class CoxSurvivalModel:
    """FittedSurvivalModel contract for proportional-hazards fits.

    survival(p, t) = exp{-Lambda0(t) e^eta}; hazard(p, t) uses the average
    baseline rate Lambda0(t)/t, which is positive and cancels in every
    hazard-ratio estimand (PH ratios are time-free by construction).
    """

    def __init__(self, fit: CoxFit):
        self.fit = fit

    def survival(self, profile: ExposureProfile, t: float) -> float:
        eta = self.fit.linear_predictor(profile)
        return float(np.exp(-self.fit.cumulative_baseline(t) * np.exp(eta)))

    def hazard(self, profile: ExposureProfile, t: float) -> float:
        if t <= 0:
            raise ValueError("hazard evaluation time must be positive")
        eta = self.fit.linear_predictor(profile)
        return float(self.fit.cumulative_baseline(t) / t * np.exp(eta))


def _check_rank(X: np.ndarray, names) -> None:
    scale = np.linalg.norm(X, axis=0)
    if np.any(scale == 0):
        bad = [names[i] for i in np.flatnonzero(scale == 0)]
        raise ValueError(f"design is rank deficient; zero columns: {bad}")
    R = np.linalg.qr(X / scale, mode="r")
    diag = np.abs(np.diag(R))
    tol = X.shape[0] * np.finfo(float).eps * diag.max()
    if np.any(diag < tol):
        bad = [names[i] for i in np.flatnonzero(diag < tol)]
        raise ValueError(f"design is rank deficient; collinear columns: {bad}")


def fit_cox(dataset: Dataset, include_interactions: bool = False) -> CoxFit:
    """Plain Cox PH fit (optionally with all two-way metal interactions)."""
    if not np.any(dataset.event):
        raise ValueError("dataset has no events")
    design = LinearCoxDesign(dataset.metal_names, dataset.confounder_names, include_interactions)
    X = design.matrix(dataset.metals, dataset.confounders)
    _check_rank(X, design.term_names)
    pl = CoxPartialLikelihood(dataset.time, dataset.event)
    beta, ll, it, _ = newton_cox(pl, X)
    fit = CoxFit(design=design, beta=beta, loglik=ll, n_iter=it,
                 meta={"model": "cox_int" if include_interactions else "cox"})
    breslow_baseline(fit, dataset, pl=pl, X=X)
    return fit


def breslow_baseline(fit: CoxFit, dataset: Dataset, pl=None, X=None) -> tuple[np.ndarray, np.ndarray]:
    """Attach/return the Breslow cumulative baseline hazard step function."""
    if pl is None:
        pl = CoxPartialLikelihood(dataset.time, dataset.event)
    if X is None:
        X = fit.design.matrix(dataset.metals, dataset.confounders)
    times, cumhaz = pl.breslow_cumhaz(X @ fit.beta)
    fit.baseline_times = times
    fit.baseline_cumhaz = cumhaz
    return times, cumhaz


def cox_linear_predictor(fit: CoxFit, profile: ExposureProfile) -> float:
    return fit.linear_predictor(profile)
