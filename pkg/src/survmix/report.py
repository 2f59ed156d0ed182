"""Rendering of benchmark outputs: figures (PNG) plus derived tables (CSV).

Reads the delimited files a benchmark run leaves behind and produces
publication-style artifacts: exposure-response curve panels against the
oracle, coverage/bias bar charts, and a wide per-scenario metrics table.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

__all__ = ["render_report"]


def _load(results_dir: Path, name: str) -> pd.DataFrame:
    path = results_dir / name
    if not path.exists():
        raise FileNotFoundError(f"missing benchmark output: {path}")
    return pd.read_csv(path, comment="#")


def _curve_figure(curves: pd.DataFrame, scenario: int, out: Path) -> Path:
    sub = curves[curves.scenario == scenario]
    metals = sorted(sub.metal.unique())
    methods = [m for m in sub.method.unique() if m != "oracle"]
    fig, axes = plt.subplots(
        1, len(metals), figsize=(3.2 * len(metals), 3.2), sharey=True, squeeze=False
    )
    for ax, metal in zip(axes[0], metals):
        ms = sub[sub.metal == metal]
        # replicate-averaged curve per method
        for method in methods:
            mm = (
                ms[ms.method == method]
                .groupby("percentile")[["exposure_value", "survival"]]
                .mean()
            )
            ax.plot(mm.exposure_value, mm.survival, label=method, lw=1.2)
        oo = (
            ms[ms.method == "oracle"]
            .groupby("percentile")[["exposure_value", "survival"]]
            .mean()
        )
        ax.plot(oo.exposure_value, oo.survival, "k--", label="oracle", lw=1.8)
        ax.set_title(metal)
        ax.set_xlabel("exposure")
    axes[0][0].set_ylabel("survival at t_spec")
    axes[0][-1].legend(fontsize=7)
    fig.suptitle(f"Scenario {scenario}: exposure-response survival curves")
    fig.tight_layout()
    path = out / f"curves_scenario{scenario}.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _metric_figure(summary: pd.DataFrame, scenario: int, metric: str, out: Path) -> Path:
    sub = summary[(summary.scenario == scenario) & summary[metric].notna()]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    piv = sub.pivot_table(index="method", columns=["estimand", "scale"], values=metric)
    piv.plot.bar(ax=ax, width=0.8)
    ax.set_ylabel(metric)
    ax.set_title(f"Scenario {scenario}: {metric} by method")
    ax.legend(fontsize=6, ncol=2)
    if metric == "coverage":
        ax.axhline(0.95, color="k", ls=":", lw=1)
    fig.tight_layout()
    path = out / f"{metric}_scenario{scenario}.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_report(results_dir, out_dir=None) -> list[Path]:
    """Render figures and wide tables for one benchmark output directory."""
    results_dir = Path(results_dir)
    out = Path(out_dir) if out_dir is not None else results_dir / "report"
    out.mkdir(parents=True, exist_ok=True)
    summary = _load(results_dir, "summary.csv")
    curves = _load(results_dir, "curves.csv")

    written = []
    for scenario in sorted(summary.scenario.unique()):
        written.append(_curve_figure(curves, scenario, out))
        for metric in ("coverage", "relative_bias", "rmse"):
            written.append(_metric_figure(summary, scenario, metric, out))

    # Wide per-scenario metrics table alongside the figures.
    wide = summary.pivot_table(
        index=["scenario", "method"],
        columns=["estimand", "scale"],
        values=["relative_bias", "coverage", "rmse"],
    )
    wide.columns = ["_".join(map(str, c)) for c in wide.columns]
    table_path = out / "metrics_wide.csv"
    wide.reset_index().to_csv(table_path, index=False)
    written.append(table_path)
    return written
