"""Survival data model, time discretization and person-period augmentation.

The continuous-time representation (one row per subject) feeds the Cox-family
estimators; the augmented person-period representation (one row per subject
per at-risk time bin, with a binary event indicator) feeds the discrete-time
learners.  Survival and hazard curves are reconstructed from per-bin event
probabilities via the product rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

__all__ = [
    "Dataset",
    "BinGrid",
    "AugmentedDataset",
    "ExposureProfile",
    "make_bin_grid",
    "augment",
    "survival_from_bin_probs",
    "hazard_from_bin_prob",
    "read_dataset_csv",
    "write_dataset_csv",
]

# Relative inflation of the final bin edge so the maximum observed time is
# binned under the [left, right) convention.
_EDGE_EPS = 1e-9


@dataclass(frozen=True)
class ExposureProfile:
    """A full covariate assignment at which hazards/survival are evaluated."""

    metals: np.ndarray
    confounders: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "metals", np.asarray(self.metals, dtype=float))
        object.__setattr__(self, "confounders", np.asarray(self.confounders, dtype=float))
        if not (np.all(np.isfinite(self.metals)) and np.all(np.isfinite(self.confounders))):
            raise ValueError("profile values must be finite")

    def with_metal(self, j: int, value: float) -> "ExposureProfile":
        metals = self.metals.copy()
        metals[j] = value
        return ExposureProfile(metals, self.confounders)


@dataclass(frozen=True)
class Dataset:
    """Subject-level survival data: follow-up time, event flag, exposures.

    metals has shape (n, J) and holds log-scale exposures; confounders has
    shape (n, L) with categorical confounders pre-encoded as indicators.
    """

    ids: np.ndarray
    time: np.ndarray
    event: np.ndarray
    metals: np.ndarray
    confounders: np.ndarray
    metal_names: tuple[str, ...]
    confounder_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "time", np.asarray(self.time, dtype=float))
        object.__setattr__(self, "event", np.asarray(self.event, dtype=bool))
        object.__setattr__(self, "metals", np.atleast_2d(np.asarray(self.metals, dtype=float)))
        object.__setattr__(
            self, "confounders", np.atleast_2d(np.asarray(self.confounders, dtype=float))
        )
        object.__setattr__(self, "ids", np.asarray(self.ids))
        object.__setattr__(self, "metal_names", tuple(self.metal_names))
        object.__setattr__(self, "confounder_names", tuple(self.confounder_names))
        n = self.n
        if n == 0:
            raise ValueError("dataset is empty")
        if len(np.unique(self.ids)) != n:
            raise ValueError("subject ids are not unique")
        if self.time.shape != (n,) or self.event.shape != (n,):
            raise ValueError("time/event shape mismatch")
        if np.any(self.time <= 0) or not np.all(np.isfinite(self.time)):
            raise ValueError("follow-up times must be finite and > 0")
        if self.metals.shape != (n, len(self.metal_names)):
            raise ValueError("metals shape does not match metal_names")
        if self.confounders.shape != (n, len(self.confounder_names)):
            raise ValueError("confounders shape does not match confounder_names")
        if not (np.all(np.isfinite(self.metals)) and np.all(np.isfinite(self.confounders))):
            raise ValueError("covariates must be finite")

    @property
    def n(self) -> int:
        return len(self.time)

    @property
    def n_metals(self) -> int:
        return len(self.metal_names)

    @property
    def n_confounders(self) -> int:
        return len(self.confounder_names)

    def subset(self, idx: np.ndarray, ids=None) -> "Dataset":
        """Row subset; `ids` overrides subject ids (needed for bootstrap
        resamples where the same subject may appear more than once)."""
        if ids is None:
            ids = self.ids[idx]
        return Dataset(
            ids=ids,
            time=self.time[idx],
            event=self.event[idx],
            metals=self.metals[idx],
            confounders=self.confounders[idx],
            metal_names=self.metal_names,
            confounder_names=self.confounder_names,
        )


@dataclass(frozen=True)
class BinGrid:
    """Quantile time bins: R bins delineated by R+1 strictly increasing edges,
    edges[0] == 0.  Interval convention [left, right); the final edge is
    inflated so the maximum observed time lands in the last bin."""

    edges: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "edges", np.asarray(self.edges, dtype=float))
        if self.edges.ndim != 1 or len(self.edges) < 3:
            raise ValueError("need at least 2 bins (3 edges)")
        if self.edges[0] != 0.0:
            raise ValueError("first edge must be 0")
        if np.any(np.diff(self.edges) <= 0):
            raise ValueError("edges must be strictly increasing")

    @property
    def n_bins(self) -> int:
        return len(self.edges) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def bin_times(self) -> np.ndarray:
        """Representative time of each bin: its right edge."""
        return self.edges[1:]

    def bin_index(self, times) -> np.ndarray:
        """1-based bin index of each time under the [left, right) convention."""
        t = np.asarray(times, dtype=float)
        if np.any(t < self.edges[0]) or np.any(t >= self.edges[-1]):
            bad = t[(t < self.edges[0]) | (t >= self.edges[-1])]
            raise ValueError(f"times outside the bin grid: {bad[:5]}")
        return np.searchsorted(self.edges, t, side="right").astype(np.int64)

    def bin_containing(self, t: float) -> int:
        """Bin index for an evaluation time; times at/past the last edge are
        assigned to the last bin (the grid inflation is machine-negligible)."""
        if t < 0:
            raise ValueError("negative evaluation time")
        r = int(np.searchsorted(self.edges, min(t, self.edges[-1] * (1 - 1e-12)), side="right"))
        return min(max(r, 1), self.n_bins)


def make_bin_grid(dataset: Dataset, n_bins: int) -> BinGrid:
    """Quantile bin grid over pooled observed times (events and censorings).

    edges[r] is the empirical (r/R)-quantile; the final edge is inflated by a
    relative epsilon so the maximum time is retained.
    """
    if n_bins < 2:
        raise ValueError("need at least 2 bins")
    probs = np.arange(1, n_bins + 1) / n_bins
    qs = np.quantile(dataset.time, probs)
    edges = np.concatenate([[0.0], qs])
    if np.any(np.diff(edges) <= 0):
        dup = probs[np.flatnonzero(np.diff(edges) <= 0)]
        raise ValueError(
            f"degenerate bin grid: duplicate edges at quantiles {np.round(dup, 3).tolist()}"
        )
    edges[-1] *= 1 + _EDGE_EPS
    return BinGrid(edges)


@dataclass(frozen=True)
class AugmentedDataset:
    """Person-period expansion: one row per subject per at-risk bin.

    For a subject whose observed time falls in bin r*, rows exist for bins
    1..r* with y = (0, ..., 0, event_flag).
    """

    subject_row: np.ndarray  # index into the source dataset, per row
    bin_idx: np.ndarray  # 1-based bin index per row
    y: np.ndarray  # binary outcome per row
    grid: BinGrid
    dataset: Dataset = field(repr=False)

    @property
    def n_rows(self) -> int:
        return len(self.y)

    @property
    def metals(self) -> np.ndarray:
        return self.dataset.metals[self.subject_row]

    @property
    def confounders(self) -> np.ndarray:
        return self.dataset.confounders[self.subject_row]

    @property
    def bin_time(self) -> np.ndarray:
        return self.grid.bin_times[self.bin_idx - 1]

    def feature_matrix(self) -> np.ndarray:
        """Learner design: metals, confounders, then bin_time."""
        return np.column_stack([self.metals, self.confounders, self.bin_time])

    def feature_names(self) -> tuple[str, ...]:
        return self.dataset.metal_names + self.dataset.confounder_names + ("bin_time",)

    def collapse(self) -> tuple[np.ndarray, np.ndarray]:
        """Recover (last bin index, event flag) per subject, in dataset order."""
        n = self.dataset.n
        last = np.zeros(n, dtype=np.int64)
        np.maximum.at(last, self.subject_row, self.bin_idx)
        ev = np.zeros(n, dtype=bool)
        ev[self.subject_row[self.y == 1]] = True
        return last, ev


def augment(dataset: Dataset, grid: BinGrid) -> AugmentedDataset:
    """Person-period expansion of `dataset` over `grid`."""
    last_bin = grid.bin_index(dataset.time)
    subject_row = np.repeat(np.arange(dataset.n), last_bin)
    # within-subject bin counter 1..r*
    offsets = np.concatenate([[0], np.cumsum(last_bin)[:-1]])
    bin_idx = np.arange(len(subject_row)) - np.repeat(offsets, last_bin) + 1
    y = np.zeros(len(subject_row), dtype=np.int8)
    final_row = offsets + last_bin - 1
    y[final_row[dataset.event]] = 1
    return AugmentedDataset(
        subject_row=subject_row, bin_idx=bin_idx.astype(np.int64), y=y, grid=grid, dataset=dataset
    )


def survival_from_bin_probs(probs) -> np.ndarray:
    """S(t_(r)) = prod_{l<=r} (1 - p_l); non-increasing, in [0, 1]."""
    p = np.asarray(probs, dtype=float)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("bin probabilities must lie in [0, 1]")
    return np.cumprod(1.0 - p, axis=-1)


def hazard_from_bin_prob(prob: float, grid: BinGrid, r: int) -> float:
    """Per-bin hazard: conditional event probability over the bin width."""
    if not 1 <= r <= grid.n_bins:
        raise ValueError(f"bin index {r} outside 1..{grid.n_bins}")
    width = grid.widths[r - 1]
    if width <= 0:
        raise ValueError("zero-width bin")
    if not 0 <= prob <= 1:
        raise ValueError("bin probability must lie in [0, 1]")
    return prob / width


def read_dataset_csv(path, metal_names, confounder_names) -> Dataset:
    """Ingest the CSV schema `id,time,event,<metal...>,<confounder...>`."""
    df = pd.read_csv(path)
    required = ["id", "time", "event", *metal_names, *confounder_names]
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise ValueError(f"CSV is missing required columns: {missing}")
    if not df["event"].isin([0, 1]).all():
        raise ValueError("event column must contain only 0/1")
    return Dataset(
        ids=df["id"].to_numpy(),
        time=df["time"].to_numpy(dtype=float),
        event=df["event"].to_numpy().astype(bool),
        metals=df[list(metal_names)].to_numpy(dtype=float),
        confounders=df[list(confounder_names)].to_numpy(dtype=float),
        metal_names=tuple(metal_names),
        confounder_names=tuple(confounder_names),
    )


def write_dataset_csv(dataset: Dataset, path) -> None:
    df = pd.DataFrame({"id": dataset.ids, "time": dataset.time, "event": dataset.event.astype(int)})
    for k, name in enumerate(dataset.metal_names):
        df[name] = dataset.metals[:, k]
    for k, name in enumerate(dataset.confounder_names):
        df[name] = dataset.confounders[:, k]
    df.to_csv(path, index=False)
