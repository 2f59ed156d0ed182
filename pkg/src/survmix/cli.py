"""Command-line entry points.

Exit codes: 0 on success, 1 for configuration problems, 2 when a benchmark
completed with partially failed cells.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .bench import BenchConfig, desk_preset, paper_preset, run_bench, run_real
from .data import write_dataset_csv
from .estimands import build_profiles, compute_t_spec
from .report import render_report
from .simulate import default_config, replicate_rng, simulate_cohort, truth_oracle

EXIT_CONFIG_ERROR = 1
EXIT_PARTIAL_FAILURE = 2


def _load_json(path):
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"cannot read config {path}: {exc}") from exc


def _fail_config(message: str):
    click.echo(f"config error: {message}", err=True)
    sys.exit(EXIT_CONFIG_ERROR)


@click.group()
@click.version_option(__version__)
def main():
    """Benchmark toolkit for survival-outcome environmental mixture methods."""


@main.command()
@click.option("--config", type=click.Path(exists=True), help="JSON: scenario, n, censoring.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default="cohort.csv", show_default=True)
def simulate(config, seed, out):
    """Simulate one cohort and write it as CSV."""
    opts = _load_json(config)
    try:
        sim = default_config(
            opts.get("scenario", 1),
            n=opts.get("n", 1000),
            censoring=opts.get("censoring", True),
        )
    except (ValueError, KeyError) as exc:
        _fail_config(str(exc))
    cohort = simulate_cohort(sim, replicate_rng(seed, 0))
    write_dataset_csv(cohort, out)
    click.echo(f"wrote {len(cohort.ids)} subjects to {out}")


@main.command()
@click.option("--config", type=click.Path(exists=True), help="JSON: scenario, n, censoring.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default="truth.json", show_default=True)
def truth(config, seed, out):
    """Exact estimand values under a scenario's generating model.

    Profiles and the evaluation time come from a simulated cohort at the
    configured n, so they match what a benchmark replicate would use.
    """
    opts = _load_json(config)
    try:
        sim = default_config(
            opts.get("scenario", 1),
            n=opts.get("n", 1000),
            censoring=opts.get("censoring", True),
        )
    except (ValueError, KeyError) as exc:
        _fail_config(str(exc))
    cohort = simulate_cohort(sim, replicate_rng(seed, 0))
    profiles = build_profiles(cohort.metals, cohort.confounders)
    t_spec = compute_t_spec(cohort)
    values = truth_oracle(sim, profiles, t_spec).as_dict()
    Path(out).write_text(json.dumps(values, indent=2, sort_keys=True))
    click.echo(f"wrote truth values to {out}")


def _build_bench_config(overrides, preset, seed, workers, out) -> BenchConfig:
    overrides = dict(overrides)
    if seed is not None:
        overrides["seed"] = seed
    if workers is not None:
        overrides["workers"] = workers
    if out is not None:
        overrides["out_dir"] = out
    try:
        if preset == "desk":
            return desk_preset(**overrides)
        if preset == "paper":
            return paper_preset(**overrides)
        return BenchConfig.from_dict(overrides)
    except (TypeError, ValueError) as exc:
        _fail_config(str(exc))


@main.command()
@click.option("--config", type=click.Path(exists=True), help="JSON of BenchConfig overrides.")
@click.option("--preset", type=click.Choice(["desk", "paper"]), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
def bench(config, preset, seed, workers, out):
    """Run the replicate x method benchmark and write result tables."""
    bench_config = _build_bench_config(_load_json(config), preset, seed, workers, out)
    manifest = run_bench(bench_config)
    ok = len(manifest.cells) - manifest.n_failed
    click.echo(
        f"completed {ok}/{len(manifest.cells)} cells "
        f"(config {manifest.config_hash}) -> {bench_config.out_dir}"
    )
    if manifest.n_failed:
        click.echo(f"{manifest.n_failed} cells failed; see manifest.json", err=True)
        sys.exit(EXIT_PARTIAL_FAILURE)


@main.command("fit-real")
@click.argument("data_csv", type=click.Path(exists=True))
@click.option("--config", type=click.Path(exists=True), help="JSON of BenchConfig overrides.")
@click.option("--preset", type=click.Choice(["desk", "paper"]), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--out", type=click.Path(), default="real_estimates.csv", show_default=True)
def fit_real(data_csv, config, preset, seed, workers, out):
    """Fit every configured method on a user-supplied cohort CSV."""
    opts = _load_json(config)
    metal_names = tuple(opts.pop("metal_columns", ("m1", "m2", "m3", "m4", "m5")))
    confounder_names = tuple(opts.pop("confounder_columns", ("sex", "bmi", "age")))
    bench_config = _build_bench_config(opts, preset, seed, workers, None)
    try:
        table = run_real(
            data_csv,
            bench_config,
            metal_names=metal_names,
            confounder_names=confounder_names,
        )
    except ValueError as exc:
        _fail_config(str(exc))
    with open(out, "w") as handle:
        handle.write(f"# config_hash={bench_config.config_hash()}\n")
        table.to_csv(handle, index=False)
    click.echo(f"wrote {len(table)} estimand rows to {out}")


@main.command()
@click.argument("results_dir", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None, help="Destination directory.")
def report(results_dir, out):
    """Render figures and wide tables from a benchmark output directory."""
    try:
        written = render_report(results_dir, out)
    except FileNotFoundError as exc:
        _fail_config(str(exc))
    for path in written:
        click.echo(str(path))


if __name__ == "__main__":
    main()
