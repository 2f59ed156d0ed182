"""Benchmark orchestration: replicates x methods with deterministic streams.

Each (scenario, replicate) task simulates a cohort, derives the evaluation
time and exposure profiles, fits every configured method, evaluates the five
estimands plus the per-metal exposure-response curves, and attaches intervals
(bootstrap percentile for frequentist fits, posterior quantiles for the tree
ensemble).  RNG streams are keyed by (seed, scenario, replicate, method), so
parallel and serial execution give byte-identical outputs.
"""

from __future__ import annotations

import hashlib
import json
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .bart import BartConfig, fit_bart_model
from .coxnet import DEFAULT_OMEGA_GRID, fit_cox_en
from .coxph import CoxSurvivalModel, fit_cox
from .data import Dataset, make_bin_grid, read_dataset_csv
from .estimands import (
    CURVE_PERCENTILES,
    ESTIMAND_KINDS,
    build_profiles,
    compute_all_estimands,
    compute_t_spec,
    exposure_response_curve,
)
from .gpr import fit_gpr
from .mars import DEFAULT_D_GRID, DEFAULT_P_GRID, fit_mars_model
from .metrics import mise, summarize_cell
from .simulate import default_config, replicate_rng, simulate_cohort, true_survival
from .splines import DEFAULT_TAU_GRID, fit_cox_psplines
from .uncertainty import bootstrap_estimands, posterior_interval

__all__ = [
    "METHODS",
    "BenchConfig",
    "RunManifest",
    "desk_preset",
    "paper_preset",
    "run_bench",
    "run_real",
    "emit_curve_table",
]

METHODS = ("cox", "cox_int", "cox_ps", "coxen", "coxen_int", "mars", "gpr", "bart")

# Scale of each estimand, for the summary tables.
ESTIMAND_SCALE = {
    "individual_hr": ("individual", "ratio"),
    "individual_survdiff": ("individual", "difference"),
    "mixture_hr": ("mixture", "ratio"),
    "mixture_survdiff": ("mixture", "difference"),
    "interaction_mult": ("interaction", "ratio"),
}


@dataclass(frozen=True)
class BenchConfig:
    scenarios: tuple = (1, 2, 3, 4, 5)
    F: int = 400
    n: int = 1000
    B: int = 100
    R: int = 5
    methods: tuple = METHODS
    seed: int = 0
    workers: int = 1
    out_dir: str = "results"
    # per-method keyword overrides, e.g. {"bart": {"draws": 200, "thin": 10}}
    method_settings: dict = field(default_factory=dict)
    preset: str = "custom"

    def __post_init__(self):
        if min(self.F, self.n, self.B, self.R) < 1 or self.workers < 1:
            raise ValueError("F, n, B, R, workers must be positive")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        if not self.scenarios or set(self.scenarios) - {1, 2, 3, 4, 5}:
            raise ValueError("scenarios must be a nonempty subset of 1-5")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scenarios"] = list(self.scenarios)
        d["methods"] = list(self.methods)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        d = dict(d)
        for key in ("scenarios", "methods"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def config_hash(self) -> str:
        # Execution details (worker count, output location) do not affect the
        # results, so equal science-configs hash equally across them.
        payload = self.to_dict()
        payload.pop("workers")
        payload.pop("out_dir")
        return hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode()
        ).hexdigest()[:12]


def desk_preset(**overrides) -> BenchConfig:
    """Reduced-cost preset: fewer replicates/resamples, smaller tuning grids,
    and a short (clearly non-production) MCMC schedule."""
    settings = {
        "coxen": {"omega_grid": (0.0, 0.5, 1.0), "n_kappa": 30, "kappa_min_ratio": 0.01},
        "coxen_int": {"omega_grid": (0.0, 0.5, 1.0), "n_kappa": 30, "kappa_min_ratio": 0.01},
        "cox_ps": {"tau_grid": tuple(10.0 ** np.linspace(-3, 6, 4))},
        "mars": {"P_grid": (5, 10, 15), "D_grid": (1, 2), "reuse_tuning": True},
        "bart": {"burn_in": 250, "draws": 200, "thin": 10},
    }
    base = dict(
        scenarios=(1, 2, 3),
        F=50,
        B=50,
        method_settings=settings,
        preset="desk",
    )
    base.update(overrides)
    return BenchConfig(**base)


def paper_preset(**overrides) -> BenchConfig:
    """Full-scale protocol: F=400 replicates, B=100 resamples, production
    MCMC schedule.  Expect multi-day serial runtimes."""
    base = dict(F=400, B=100, preset="paper")
    base.update(overrides)
    return BenchConfig(**base)


@dataclass
class RunManifest:
    config: dict
    config_hash: str
    version: str
    cells: list = field(default_factory=list)

    @property
    def n_failed(self) -> int:
        return sum(c["status"] == "failed" for c in self.cells)

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True))


def _method_seed(master_seed: int, scenario: int, replicate: int, method: str) -> int:
    stream = replicate_rng(master_seed, scenario, replicate, 100 + METHODS.index(method))
    return int(stream.integers(2**31 - 1))


def _estimand_values(model, profiles, t_spec) -> dict:
    return compute_all_estimands(model, profiles, t_spec)


def _curves(model, profiles, t_spec, n_metals: int) -> np.ndarray:
    """(J, 19, 2) per-metal exposure-response curves."""
    out = np.empty((n_metals, len(CURVE_PERCENTILES), 2))
    for j in range(n_metals):
        out[j] = exposure_response_curve(model, profiles, t_spec, metal=j)
    return out


def _fit_method(method: str, dataset: Dataset, grid, settings: dict, seed: int):
    """Dispatch to one estimator; returns an object with survival/hazard."""
    settings = dict(settings)
    settings.pop("reuse_tuning", None)
    if method == "cox":
        return CoxSurvivalModel(fit_cox(dataset))
    if method == "cox_int":
        return CoxSurvivalModel(fit_cox(dataset, include_interactions=True))
    if method == "cox_ps":
        return CoxSurvivalModel(fit_cox_psplines(dataset, seed=seed, **settings))
    if method == "coxen":
        return CoxSurvivalModel(fit_cox_en(dataset, seed=seed, **settings).fit)
    if method == "coxen_int":
        return CoxSurvivalModel(
            fit_cox_en(dataset, include_interactions=True, seed=seed, **settings).fit
        )
    if method == "mars":
        return fit_mars_model(dataset, grid=grid, seed=seed, **settings)
    if method == "gpr":
        return fit_gpr(dataset, grid=grid, seed=seed)
    if method == "bart":
        cfg = BartConfig(**settings) if settings else BartConfig()
        return fit_bart_model(dataset, grid=grid, config=cfg, seed=seed)
    raise ValueError(f"unknown method: {method}")


def _bart_intervals(model, profiles, t_spec) -> dict:
    """Posterior quantile intervals from per-draw estimand values."""
    posterior = model.posterior
    draws = {kind: np.empty(posterior.n_draws) for kind in ESTIMAND_KINDS}
    for d in range(posterior.n_draws):
        values = compute_all_estimands(posterior.draw_model(d), profiles, t_spec)
        for kind in ESTIMAND_KINDS:
            draws[kind][d] = values[kind]
    return {kind: posterior_interval(draws[kind]) for kind in ESTIMAND_KINDS}


def _replicate_task(config_dict: dict, scenario: int, replicate: int) -> dict:
    """Everything for one (scenario, replicate): rows, curves, statuses."""
    config = BenchConfig.from_dict(config_dict)
    sim = default_config(scenario, n=config.n)
    cohort = simulate_cohort(sim, replicate_rng(config.seed, scenario, replicate))
    grid = make_bin_grid(cohort, config.R)
    t_spec = compute_t_spec(cohort)
    profiles = build_profiles(cohort.metals, cohort.confounders)
    n_metals = cohort.metals.shape[1]

    from .simulate import truth_oracle

    truth = truth_oracle(sim, profiles, t_spec)
    truth_map = truth.as_dict()
    truth_curves = np.empty((n_metals, len(CURVE_PERCENTILES), 2))
    for j in range(n_metals):
        for k, v in enumerate(profiles.metal_percentiles[:, j]):
            truth_curves[j, k, 0] = v
            truth_curves[j, k, 1] = true_survival(
                sim, profiles.median.with_metal(j, v), t_spec
            )

    rows, curve_rows, statuses = [], [], []
    base_curves = [
        {
            "scenario": scenario,
            "method": "oracle",
            "replicate": replicate,
            "metal": cohort.metal_names[j],
            "percentile": int(CURVE_PERCENTILES[k]),
            "exposure_value": truth_curves[j, k, 0],
            "survival": truth_curves[j, k, 1],
        }
        for j in range(n_metals)
        for k in range(len(CURVE_PERCENTILES))
    ]
    curve_rows.extend(base_curves)

    for method in config.methods:
        settings = config.method_settings.get(method, {})
        seed = _method_seed(config.seed, scenario, replicate, method)
        started = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                model = _fit_method(method, cohort, grid, settings, seed)
                points = _estimand_values(model, profiles, t_spec)
                curves = _curves(model, profiles, t_spec, n_metals)
                if method == "bart":
                    intervals = _bart_intervals(model, profiles, t_spec)
                else:
                    recipe = _bootstrap_recipe(
                        method, grid, settings, profiles, t_spec, model
                    )
                    intervals = bootstrap_estimands(
                        cohort, recipe, points, B=config.B, seed=seed
                    )
        except Exception as exc:
            statuses.append(
                {
                    "scenario": scenario,
                    "replicate": replicate,
                    "method": method,
                    "status": "failed",
                    "seconds": round(time.perf_counter() - started, 3),
                    "error": f"{type(exc).__name__}: {exc}",
                }
            )
            continue
        for kind in ESTIMAND_KINDS:
            est_name, scale = ESTIMAND_SCALE[kind]
            iv = intervals[kind]
            rows.append(
                {
                    "scenario": scenario,
                    "replicate": replicate,
                    "method": method,
                    "estimand": est_name,
                    "scale": scale,
                    "kind": kind,
                    "estimate": points[kind],
                    "lower": iv.lower,
                    "upper": iv.upper,
                    "sd": iv.sd,
                    "truth": truth_map[kind],
                    "interval_source": iv.source,
                    "n_degenerate": iv.n_degenerate,
                    "unreliable": iv.unreliable,
                }
            )
        for j in range(n_metals):
            for k in range(len(CURVE_PERCENTILES)):
                curve_rows.append(
                    {
                        "scenario": scenario,
                        "method": method,
                        "replicate": replicate,
                        "metal": cohort.metal_names[j],
                        "percentile": int(CURVE_PERCENTILES[k]),
                        "exposure_value": curves[j, k, 0],
                        "survival": curves[j, k, 1],
                    }
                )
        statuses.append(
            {
                "scenario": scenario,
                "replicate": replicate,
                "method": method,
                "status": "ok",
                "seconds": round(time.perf_counter() - started, 3),
                "error": "",
            }
        )
    return {"rows": rows, "curves": curve_rows, "statuses": statuses}


def _bootstrap_recipe(method, grid, settings, profiles, t_spec, fitted_model):
    """Closure refitting one method on a resample and re-evaluating the
    estimands at the original profiles/time (and original bin grid)."""
    settings = dict(settings)
    if method == "mars" and settings.pop("reuse_tuning", False):
        tuned = getattr(fitted_model, "tuning", None)
        if tuned is not None:
            settings["fixed_pd"] = (tuned["P"], tuned["D"])
    settings.pop("reuse_tuning", None)

    def recipe(resample: Dataset) -> dict:
        model = _fit_method(method, resample, grid, settings, seed=0)
        return _estimand_values(model, profiles, t_spec)

    return recipe


def _write_csv(frame: pd.DataFrame, path: Path, config_hash: str) -> None:
    with open(path, "w") as handle:
        handle.write(f"# config_hash={config_hash}\n")
        frame.to_csv(handle, index=False)


def _summarize(estimates: pd.DataFrame, curves: pd.DataFrame) -> pd.DataFrame:
    """Aggregate per-replicate rows into one metrics row per cell."""
    out = []
    oracle = curves[curves.method == "oracle"]
    for (scenario, method, kind), cell in estimates.groupby(
        ["scenario", "method", "kind"], sort=True
    ):
        est_name, scale = ESTIMAND_SCALE[kind]
        s = summarize_cell(
            cell["estimate"].to_numpy(),
            cell["lower"].to_numpy(),
            cell["upper"].to_numpy(),
            cell["truth"].to_numpy(),
        )
        # Curve rows live per (replicate, metal); exclude the replicates whose
        # scalar estimate was degenerate so all columns describe the same set.
        bad = set(cell.loc[~np.isfinite(cell["estimate"]), "replicate"])
        mc = curves[
            (curves.scenario == scenario)
            & (curves.method == method)
            & ~curves.replicate.isin(bad)
        ]
        curve_metric = np.nan
        if len(mc):
            piv = mc.pivot_table(
                index=["replicate", "metal"], columns="percentile", values="survival"
            ).sort_index()
            opiv = (
                oracle[oracle.scenario == scenario]
                .pivot_table(
                    index=["replicate", "metal"],
                    columns="percentile",
                    values="survival",
                )
                .loc[piv.index]
            )
            curve_metric = mise(piv.to_numpy(), opiv.to_numpy())
        out.append(
            {
                "scenario": scenario,
                "method": method,
                "estimand": est_name,
                "scale": scale,
                "F": s.F,
                "relative_bias": s.relative_bias,
                "sd": s.sd,
                "rmse": s.rmse,
                "coverage": s.coverage,
                "mise": curve_metric,
                "degenerate_count": s.degenerate_count,
                "median": s.median,
                "iqr": s.iqr,
            }
        )
    return pd.DataFrame(out)


def run_bench(config: BenchConfig) -> RunManifest:
    """Run the full benchmark and write estimates/summary/curves/manifest."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config_hash = config.config_hash()
    tasks = [(s, f) for s in config.scenarios for f in range(config.F)]
    config_dict = config.to_dict()

    results = {}
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = {
                key: pool.submit(_replicate_task, config_dict, *key) for key in tasks
            }
            for key, fut in futures.items():
                results[key] = fut.result()
    else:
        for key in tasks:
            results[key] = _replicate_task(config_dict, *key)

    rows, curve_rows, statuses = [], [], []
    for key in tasks:  # fixed task order, not completion order
        rows.extend(results[key]["rows"])
        curve_rows.extend(results[key]["curves"])
        statuses.extend(results[key]["statuses"])

    estimates = pd.DataFrame(rows)
    curves = pd.DataFrame(curve_rows)
    manifest = RunManifest(
        config=config_dict,
        config_hash=config_hash,
        version=__version__,
        cells=statuses,
    )
    if len(estimates):
        summary = _summarize(estimates, curves)
    else:
        summary = pd.DataFrame(
            columns=[
                "scenario", "method", "estimand", "scale", "F", "relative_bias",
                "sd", "rmse", "coverage", "mise", "degenerate_count", "median", "iqr",
            ]
        )
    _write_csv(estimates, out_dir / "estimates.csv", config_hash)
    _write_csv(summary, out_dir / "summary.csv", config_hash)
    _write_csv(curves, out_dir / "curves.csv", config_hash)
    manifest.to_json(out_dir / "manifest.json")
    return manifest


def emit_curve_table(out_dir) -> pd.DataFrame:
    """Load the long-format curve table written by run_bench."""
    path = Path(out_dir) / "curves.csv"
    if not path.exists():
        raise FileNotFoundError(f"no curve table at {path}")
    return pd.read_csv(path, comment="#")


def run_real(
    csv_path,
    config: BenchConfig,
    metal_names=("m1", "m2", "m3", "m4", "m5"),
    confounder_names=("sex", "bmi", "age"),
) -> pd.DataFrame:
    """Fit all configured methods on a user-supplied cohort CSV and return the
    per-method estimand table (point + interval, both scales)."""
    dataset = read_dataset_csv(csv_path, metal_names, confounder_names)
    if not np.any(dataset.event):
        raise ValueError("dataset has zero events")
    grid = make_bin_grid(dataset, config.R)
    t_spec = compute_t_spec(dataset)
    profiles = build_profiles(dataset.metals, dataset.confounders)
    rows = []
    for method in config.methods:
        settings = config.method_settings.get(method, {})
        seed = _method_seed(config.seed, 0, 0, method)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = _fit_method(method, dataset, grid, settings, seed)
            points = _estimand_values(model, profiles, t_spec)
            if method == "bart":
                intervals = _bart_intervals(model, profiles, t_spec)
            else:
                recipe = _bootstrap_recipe(method, grid, settings, profiles, t_spec, model)
                intervals = bootstrap_estimands(
                    dataset, recipe, points, B=config.B, seed=seed
                )
        for kind in ESTIMAND_KINDS:
            est_name, scale = ESTIMAND_SCALE[kind]
            iv = intervals[kind]
            rows.append(
                {
                    "method": method,
                    "estimand": est_name,
                    "scale": scale,
                    "kind": kind,
                    "estimate": points[kind],
                    "lower": iv.lower,
                    "upper": iv.upper,
                    "sd": iv.sd,
                    "t_spec": t_spec,
                }
            )
    return pd.DataFrame(rows)
