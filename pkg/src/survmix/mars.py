"""Discrete-time survival MARS: mirrored-hinge regression with a logistic link.

The forward pass greedily adds mirrored hinge pairs parent * (x - c)+ and
parent * (c - x)+ over the hingeable variables (metals and bin time;
confounders stay forced-in linear columns).  Selection uses the least-squares
gain on the binary outcomes — the Gaussian working surrogate of the
log-likelihood gain — with all distinct observed values as knot candidates,
scanned in one pass per (parent, variable) via suffix/prefix cumulative sums
against the current orthonormal basis.

The backward pass deletes terms stepwise by generalized cross-validation
(effective parameters: one per coefficient plus two per knot), and the
retained basis is refit by logistic maximum likelihood (IRLS).  (P, D) are
tuned by subject-stratified 5-fold cross-validation on out-of-fold AUC.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .coxnet import _fold_assignments
from .data import AugmentedDataset, Dataset, ExposureProfile, augment, make_bin_grid
from .discrete import DiscreteTimeModel

__all__ = [
    "HingeFactor",
    "HingeTerm",
    "HingeBasis",
    "fit_mars",
    "cv_tune_mars",
    "fit_mars_model",
    "roc_auc",
    "DEFAULT_P_GRID",
    "DEFAULT_D_GRID",
]

DEFAULT_P_GRID = tuple(range(5, 55, 5))
DEFAULT_D_GRID = (1, 2)

_GAIN_TOL = 1e-10


@dataclass(frozen=True)
class HingeFactor:
    var: int  # index into the hingeable variables (metals..., bin_time)
    knot: float
    direction: int  # +1: (x - knot)+, -1: (knot - x)+


@dataclass(frozen=True)
class HingeTerm:
    factors: tuple[HingeFactor, ...]

    @property
    def degree(self) -> int:
        return len(self.factors)

    def value(self, H: np.ndarray) -> np.ndarray:
        v = np.ones(len(H))
        for f in self.factors:
            v = v * np.maximum(f.direction * (H[:, f.var] - f.knot), 0.0)
        return v

    def describe(self, var_names) -> str:
        if not self.factors:
            return "1"
        parts = []
        for f in self.factors:
            name = var_names[f.var]
            if f.direction > 0:
                parts.append(f"({name} - {f.knot:.4g})+")
            else:
                parts.append(f"({f.knot:.4g} - {name})+")
        return " * ".join(parts)


@dataclass
class HingeBasis:
    """Fitted hinge model: [intercept, confounders..., hinge terms...]."""

    terms: list[HingeTerm]
    coefs: np.ndarray
    var_names: tuple[str, ...]
    conf_names: tuple[str, ...]
    meta: dict = field(default_factory=dict)

    def design(self, H: np.ndarray, C: np.ndarray) -> np.ndarray:
        cols = [np.ones(len(H)), *C.T]
        cols.extend(t.value(H) for t in self.terms)
        return np.column_stack(cols)

    def predict_prob(self, H: np.ndarray, C: np.ndarray) -> np.ndarray:
        eta = self.design(H, C) @ self.coefs
        return 1.0 / (1.0 + np.exp(-eta))

    def describe(self) -> str:
        names = ["1", *self.conf_names] + [t.describe(self.var_names) for t in self.terms]
        return "\n".join(f"{c:+.5g} * {n}" for c, n in zip(self.coefs, names))


def roc_auc(y: np.ndarray, score: np.ndarray) -> float:
    """Rank-based (Mann-Whitney) area under the ROC curve."""
    y = np.asarray(y).astype(bool)
    n1, n0 = int(y.sum()), int((~y).sum())
    if n1 == 0 or n0 == 0:
        raise ValueError("AUC needs both outcome classes")
    ranks = rankdata(score)
    return float((ranks[y].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


class _ForwardState:
    """QR-style incremental least squares over the growing basis."""

    def __init__(self, y: np.ndarray, forced: np.ndarray):
        self.n = len(y)
        self.y = y.astype(float)
        self.Q = np.empty((self.n, 0))
        self.cols: list[np.ndarray] = []  # raw hinge columns, design order
        for c in forced.T:
            self.append_column(c)
        self.resid = self.y - self.Q @ (self.Q.T @ self.y)
        self.sse = float(self.resid @ self.resid)

    def append_column(self, col: np.ndarray) -> bool:
        v = col - self.Q @ (self.Q.T @ col)
        v = v - self.Q @ (self.Q.T @ v)  # second pass for stability
        norm = np.linalg.norm(v)
        if norm < 1e-9 * max(1.0, np.linalg.norm(col)):
            return False
        self.Q = np.column_stack([self.Q, v / norm])
        return True

    def refresh_residual(self):
        self.resid = self.y - self.Q @ (self.Q.T @ self.y)
        self.sse = float(self.resid @ self.resid)


def _scan_variable(state: _ForwardState, g: np.ndarray, x: np.ndarray, order: np.ndarray):
    """Best-knot gain for mirrored hinges parent*(x-c)+/(x<c) over all
    distinct values of x, against the current basis.  Returns (gain, knot)."""
    xs = x[order]
    gs = g[order]
    S = np.column_stack([state.resid, state.Q])[order]  # residual first
    p1 = S.shape[1]

    gx = (gs * xs)[:, None] * S
    g0 = gs[:, None] * S
    suf1 = np.cumsum(gx[::-1], axis=0)[::-1]
    suf0 = np.cumsum(g0[::-1], axis=0)[::-1]
    pre1 = np.cumsum(gx, axis=0)
    pre0 = np.cumsum(g0, axis=0)

    g2 = gs**2
    q2 = g2 * xs**2
    q1 = g2 * xs
    sufq = np.column_stack([q2, q1, g2])
    preq = np.cumsum(sufq, axis=0)
    sufq = np.cumsum(sufq[::-1], axis=0)[::-1]

    # candidate knots: distinct values; rows strictly above use suffix sums
    # starting past the value's last occurrence, rows strictly below use
    # prefix sums up to just before its first occurrence
    change = np.flatnonzero(np.diff(xs) != 0)
    first = np.concatenate([[0], change + 1])
    last = np.concatenate([change, [len(xs) - 1]])
    c = xs[first]

    def suffix_at(A, k):  # sum over rows k..end, 0 past the end
        out = np.zeros((len(k), A.shape[1]))
        ok = k < len(xs)
        out[ok] = A[k[ok]]
        return out

    def prefix_at(A, k):  # sum over rows 0..k, 0 when k < 0
        out = np.zeros((len(k), A.shape[1]))
        ok = k >= 0
        out[ok] = A[k[ok]]
        return out

    Sp1 = suffix_at(suf1, last + 1)
    Sp0 = suffix_at(suf0, last + 1)
    Sm1 = prefix_at(pre1, first - 1)
    Sm0 = prefix_at(pre0, first - 1)
    Qp = suffix_at(sufq, last + 1)
    Qm = prefix_at(preq, first - 1)

    # inner products of h+ / h- with [resid, Q] and their squared norms
    Ap = Sp1 - c[:, None] * Sp0
    Am = c[:, None] * Sm0 - Sm1
    np_ = Qp[:, 0] - 2 * c * Qp[:, 1] + c**2 * Qp[:, 2]
    nm_ = Qm[:, 0] - 2 * c * Qm[:, 1] + c**2 * Qm[:, 2]

    zp, zm = Ap[:, 0], Am[:, 0]
    qp, qm = Ap[:, 1:], Am[:, 1:]
    ntp = np_ - (qp**2).sum(axis=1)
    ntm = nm_ - (qm**2).sum(axis=1)
    cross = -(qp * qm).sum(axis=1)

    tol = 1e-10 * max(state.sse, 1.0)
    ntp = np.maximum(ntp, 0.0)
    ntm = np.maximum(ntm, 0.0)
    gain = np.zeros(len(c))
    with np.errstate(divide="ignore", invalid="ignore"):
        only_p = (ntp > tol) & (ntm <= tol)
        only_m = (ntm > tol) & (ntp <= tol)
        both = (ntp > tol) & (ntm > tol)
        gain[only_p] = zp[only_p] ** 2 / ntp[only_p]
        gain[only_m] = zm[only_m] ** 2 / ntm[only_m]
        det = ntp * ntm - cross**2
        ok = both & (det > tol * np.maximum(ntp * ntm, tol))
        gain[ok] = (
            zp[ok] ** 2 * ntm[ok] - 2 * zp[ok] * zm[ok] * cross[ok] + zm[ok] ** 2 * ntp[ok]
        ) / det[ok]
        fal = both & ~ok  # nearly parallel pair: use the better single hinge
        gain[fal] = np.maximum(zp[fal] ** 2 / ntp[fal], zm[fal] ** 2 / ntm[fal])
    k = int(np.argmax(gain))
    return float(gain[k]), float(c[k])


def _forward_pass(H, forced, y, D, max_terms):
    """Greedy mirrored-hinge selection; returns (terms, state)."""
    state = _ForwardState(y, forced)
    terms: list[HingeTerm] = []
    orders = [np.argsort(H[:, v], kind="stable") for v in range(H.shape[1])]
    while len(terms) < max_terms:
        best = (0.0, None, None, None)  # gain, parent index (-1 intercept), var, knot
        parents = [-1] + [i for i, t in enumerate(terms) if t.degree < D]
        for pi in parents:
            g = np.ones(len(y)) if pi < 0 else state.cols[pi]
            used = set() if pi < 0 else {f.var for f in terms[pi].factors}
            for v in range(H.shape[1]):
                if v in used:
                    continue
                gain, knot = _scan_variable(state, g, H[:, v], orders[v])
                if gain > best[0]:
                    best = (gain, pi, v, knot)
        gain, pi, v, knot = best
        if pi is None or gain <= _GAIN_TOL * max(state.sse, 1.0):
            break
        parent_factors = () if pi < 0 else terms[pi].factors
        sse_before = state.sse
        added = False
        for direction in (+1, -1):
            term = HingeTerm(parent_factors + (HingeFactor(v, knot, direction),))
            col = term.value(H)
            if state.append_column(col):
                terms.append(term)
                state.cols.append(col)
                added = True
            if len(terms) >= max_terms:
                break
        if not added:
            break
        state.refresh_residual()
        # accepted pair must improve the (Gaussian surrogate) fit
        assert state.sse <= sse_before + 1e-9 * max(sse_before, 1.0)
    return terms, state


def _gcv(sse, n, n_coefs, n_knots):
    c_eff = n_coefs + 2 * n_knots
    if c_eff >= n:
        return np.inf
    return (sse / n) / (1.0 - c_eff / n) ** 2


def _knot_count(terms) -> int:
    """Effective knots: one per hinge factor of every retained term."""
    return sum(t.degree for t in terms)


def _backward_prune(X, y, n_forced, terms):
    """Stepwise GCV deletion of hinge columns.  Returns the GCV-best subset
    (term indices into `terms`) and a dict size -> best subset of that size."""
    n, p = X.shape
    active = list(range(p))
    G = X.T @ X + 1e-10 * np.eye(p)
    XtY = X.T @ y

    def ls_sse(idx):
        sub = np.ix_(idx, idx)
        beta = np.linalg.solve(G[sub], XtY[idx])
        return float(y @ y - XtY[idx] @ beta)

    def terms_of(idx):
        return [terms[i - n_forced] for i in idx if i >= n_forced]

    best_by_size = {}
    sse = ls_sse(active)
    cur_terms = terms_of(active)
    best = (_gcv(sse, n, len(active), _knot_count(cur_terms)), list(active))
    best_by_size[len(cur_terms)] = list(active)
    while any(i >= n_forced for i in active):
        # drop the hinge column whose removal minimizes GCV
        cand_best = (np.inf, None)
        for i in active:
            if i < n_forced:
                continue
            idx = [j for j in active if j != i]
            g = _gcv(ls_sse(idx), n, len(idx), _knot_count(terms_of(idx)))
            if g < cand_best[0]:
                cand_best = (g, i)
        _, drop = cand_best
        active = [j for j in active if j != drop]
        cur_terms = terms_of(active)
        g = _gcv(ls_sse(active), n, len(active), _knot_count(cur_terms))
        size = len(cur_terms)
        if size not in best_by_size:
            best_by_size[size] = list(active)
        if g < best[0]:
            best = (g, list(active))
    return best[1], best_by_size, best[0]


def _logistic_irls(X, y, max_iter=100, tol=1e-8, ridge=0.0):
    n, p = X.shape
    beta = np.zeros(p)
    for _ in range(max_iter):
        eta = np.clip(X @ beta, -30, 30)
        mu = 1.0 / (1.0 + np.exp(-eta))
        w = np.maximum(mu * (1 - mu), 1e-10)
        A = (X * w[:, None]).T @ X
        if ridge > 0:
            A = A + ridge * np.eye(p)
        grad = X.T @ (y - mu) - ridge * beta
        try:
            step = np.linalg.solve(A, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(A, grad, rcond=None)[0]
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            break
    return beta


def _refit_logistic(X, y):
    beta = _logistic_irls(X, y)
    if np.linalg.norm(beta) > 30:
        warnings.warn("logistic refit near separation; falling back to ridge")
        beta = _logistic_irls(X, y, ridge=1e-3)
    return beta


def fit_mars(augmented: AugmentedDataset, P_max: int, D: int) -> HingeBasis:
    """Forward to 2*P_max hinge terms, GCV-prune, refit by logistic IRLS."""
    y = augmented.y.astype(float)
    if y.min() == y.max():
        raise ValueError("augmented outcome has a single class")
    if D < 1:
        raise ValueError("interaction degree must be >= 1")
    H = np.column_stack([augmented.metals, augmented.bin_time])
    C = augmented.confounders
    forced = np.column_stack([np.ones(len(y)), C])
    terms, state = _forward_pass(H, forced, y, D, 2 * P_max)

    X = np.column_stack([forced] + state.cols[: len(terms)]) if terms else forced
    n_forced = forced.shape[1]
    active, _, gcv_best = _backward_prune(X, y, n_forced, terms)
    kept = [terms[i - n_forced] for i in active if i >= n_forced]
    Xk = X[:, active]
    coefs = _refit_logistic(Xk, y)

    var_names = augmented.dataset.metal_names + ("bin_time",)
    return HingeBasis(
        terms=kept,
        coefs=coefs,
        var_names=var_names,
        conf_names=augmented.dataset.confounder_names,
        meta={"P_max": P_max, "D": D, "gcv": gcv_best, "n_forward_terms": len(terms)},
    )


def cv_tune_mars(
    augmented: AugmentedDataset,
    P_grid=DEFAULT_P_GRID,
    D_grid=DEFAULT_D_GRID,
    folds: int = 5,
    seed: int = 0,
):
    """(P*, D*) maximizing mean out-of-fold AUC; folds stratified by subject."""
    if len(P_grid) == 0 or len(D_grid) == 0:
        raise ValueError("empty tuning grid")
    ds = augmented.dataset
    subj_fold = _fold_assignments(ds.ids, folds, seed)
    row_fold = subj_fold[augmented.subject_row]
    # no subject's rows may straddle folds
    assert all(
        len(np.unique(row_fold[augmented.subject_row == s])) == 1
        for s in np.unique(augmented.subject_row)[:50]
    )
    y = augmented.y.astype(float)
    H = np.column_stack([augmented.metals, augmented.bin_time])
    C = augmented.confounders
    max_terms = 2 * max(P_grid)

    scores = np.zeros((len(P_grid), len(D_grid)))
    counts = np.zeros_like(scores)
    for k in range(folds):
        test = row_fold == k
        train = ~test
        if y[train].min() == y[train].max() or y[test].min() == y[test].max():
            warnings.warn(f"fold {k} single-class; dropped from MARS tuning")
            continue
        forced = np.column_stack([np.ones(train.sum()), C[train]])
        for dj, D in enumerate(D_grid):
            terms, state = _forward_pass(H[train], forced, y[train], D, max_terms)
            n_forced = forced.shape[1]
            Xf = np.column_stack([forced] + state.cols[: len(terms)]) if terms else forced
            for pj, P in enumerate(P_grid):
                n_cols = n_forced + min(2 * P, len(terms))
                sub_terms = terms[: n_cols - n_forced]
                active, _, _ = _backward_prune(Xf[:, :n_cols], y[train], n_forced, sub_terms)
                kept = [sub_terms[i - n_forced] for i in active if i >= n_forced]
                coefs = _refit_logistic(Xf[:, active], y[train])
                model = HingeBasis(
                    terms=kept,
                    coefs=coefs,
                    var_names=ds.metal_names + ("bin_time",),
                    conf_names=ds.confounder_names,
                )
                prob = model.predict_prob(H[test], C[test])
                scores[pj, dj] += roc_auc(y[test], prob)
                counts[pj, dj] += 1
    if counts.max() == 0:
        raise ValueError("all folds degenerate in MARS tuning")
    mean_auc = scores / np.maximum(counts, 1)
    pj, dj = np.unravel_index(np.argmax(mean_auc), mean_auc.shape)
    return int(P_grid[pj]), int(D_grid[dj]), mean_auc


def fit_mars_model(
    dataset: Dataset,
    grid=None,
    n_bins: int = 5,
    P_grid=DEFAULT_P_GRID,
    D_grid=DEFAULT_D_GRID,
    folds: int = 5,
    seed: int = 0,
    fixed_pd: tuple[int, int] | None = None,
) -> DiscreteTimeModel:
    """Augment, tune (unless fixed_pd is given), fit, wrap as survival model."""
    if grid is None:
        grid = make_bin_grid(dataset, n_bins)
    aug = augment(dataset, grid)
    if fixed_pd is None:
        P_star, D_star, _ = cv_tune_mars(aug, P_grid, D_grid, folds=folds, seed=seed)
    else:
        P_star, D_star = fixed_pd
    basis = fit_mars(aug, P_star, D_star)

    def prob_fn(profile: ExposureProfile) -> np.ndarray:
        Hq = np.column_stack(
            [np.tile(profile.metals, (grid.n_bins, 1)), grid.bin_times]
        )
        Cq = np.tile(profile.confounders, (grid.n_bins, 1))
        return basis.predict_prob(Hq, Cq)

    out = DiscreteTimeModel(grid, prob_fn)
    out.basis = basis
    out.tuning = {"P": P_star, "D": D_star}
    return out
