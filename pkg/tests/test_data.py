import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from survmix.data import (
    BinGrid,
    Dataset,
    augment,
    hazard_from_bin_prob,
    make_bin_grid,
    read_dataset_csv,
    survival_from_bin_probs,
    write_dataset_csv,
)
from survmix.simulate import default_config, simulate_cohort


def toy_dataset(times, events, n_metals=1):
    n = len(times)
    return Dataset(
        ids=np.arange(n),
        time=np.asarray(times, dtype=float),
        event=np.asarray(events, dtype=bool),
        metals=np.zeros((n, n_metals)),
        confounders=np.zeros((n, 1)),
        metal_names=tuple(f"m{j}" for j in range(n_metals)),
        confounder_names=("c0",),
    )


class TestBinGrid:
    def test_three_point_quantiles(self):
        ds = toy_dataset([1, 2, 3], [1, 1, 1])
        grid = make_bin_grid(ds, 3)
        # linear-interpolation quantiles at 1/3, 2/3, 1
        np.testing.assert_allclose(grid.edges[:3], [0.0, 5 / 3, 7 / 3], atol=1e-12)
        assert grid.edges[3] > 3.0  # inflated so the max is binned
        assert np.array_equal(grid.bin_index(ds.time), [1, 2, 3])

    def test_degenerate_grid_errors(self):
        ds = toy_dataset([2.0, 2.0, 2.0, 2.0], [1, 1, 1, 1])
        with pytest.raises(ValueError, match="quantile"):
            make_bin_grid(ds, 2)

    def test_scenario1_counts_balanced(self):
        ds = simulate_cohort(default_config(1, n=1000, seed=3))
        grid = make_bin_grid(ds, 5)
        idx = grid.bin_index(ds.time)
        counts = np.bincount(idx, minlength=6)[1:]
        assert counts.sum() == 1000
        np.testing.assert_array_equal(counts, [200, 200, 200, 200, 200])

    def test_requires_two_bins(self):
        ds = toy_dataset([1, 2, 3], [1, 1, 1])
        with pytest.raises(ValueError):
            make_bin_grid(ds, 1)

    def test_time_outside_grid_errors(self):
        grid = BinGrid([0.0, 1.0, 2.0, 3.0])
        with pytest.raises(ValueError, match="outside"):
            grid.bin_index([3.5])


class TestAugment:
    def setup_method(self):
        self.grid = BinGrid([0.0, 1.0, 2.0, 3.0])

    def test_event_mid_bin(self):
        aug = augment(toy_dataset([1.5], [True]), self.grid)
        assert aug.n_rows == 2
        np.testing.assert_array_equal(aug.y, [0, 1])
        np.testing.assert_array_equal(aug.bin_idx, [1, 2])

    def test_censored_mid_bin(self):
        aug = augment(toy_dataset([1.5], [False]), self.grid)
        assert aug.n_rows == 2
        np.testing.assert_array_equal(aug.y, [0, 0])

    def test_event_first_bin(self):
        aug = augment(toy_dataset([0.5], [True]), self.grid)
        assert aug.n_rows == 1
        np.testing.assert_array_equal(aug.y, [1])

    def test_bin_time_is_right_edge(self):
        aug = augment(toy_dataset([1.5], [True]), self.grid)
        np.testing.assert_array_equal(aug.bin_time, [1.0, 2.0])

    def test_row_count_matches_brute_force(self):
        rng = np.random.default_rng(0)
        times = rng.uniform(0.01, 2.99, size=200)
        events = rng.random(200) < 0.5
        ds = toy_dataset(times, events)
        aug = augment(ds, self.grid)
        expected = sum(int(self.grid.bin_index([t])[0]) for t in times)
        assert aug.n_rows == expected

    def test_collapse_round_trip(self):
        rng = np.random.default_rng(1)
        times = rng.uniform(0.01, 2.99, size=100)
        events = rng.random(100) < 0.4
        ds = toy_dataset(times, events)
        aug = augment(ds, self.grid)
        last, ev = aug.collapse()
        np.testing.assert_array_equal(last, self.grid.bin_index(times))
        np.testing.assert_array_equal(ev, events)

    def test_covariates_repeat_within_subject(self):
        ds = Dataset(
            ids=[0],
            time=[2.5],
            event=[True],
            metals=[[1.0, -2.0]],
            confounders=[[3.0]],
            metal_names=("a", "b"),
            confounder_names=("c",),
        )
        aug = augment(ds, self.grid)
        assert aug.n_rows == 3
        assert np.all(aug.metals == [1.0, -2.0])


class TestReconstruction:
    def test_zero_probs(self):
        np.testing.assert_array_equal(survival_from_bin_probs([0, 0, 0]), [1, 1, 1])

    def test_half_probs(self):
        np.testing.assert_allclose(survival_from_bin_probs([0.5, 0.5]), [0.5, 0.25])

    def test_product_rule(self):
        np.testing.assert_allclose(
            survival_from_bin_probs([0.1, 0.2, 0.3]), [0.9, 0.72, 0.504]
        )

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=10))
    @settings(max_examples=50, deadline=None)
    def test_monotone_non_increasing(self, probs):
        s = survival_from_bin_probs(probs)
        assert np.all(np.diff(s) <= 1e-15)
        assert np.all((s >= 0) & (s <= 1))

    def test_hazard_examples(self):
        grid = BinGrid([0.0, 2.0, 4.0])
        assert hazard_from_bin_prob(0.2, grid, 1) == pytest.approx(0.1)
        assert hazard_from_bin_prob(0.0, grid, 2) == 0.0

    def test_hazard_bad_bin(self):
        grid = BinGrid([0.0, 2.0, 4.0])
        with pytest.raises(ValueError):
            hazard_from_bin_prob(0.2, grid, 3)


class TestCsv:
    def test_round_trip(self, tmp_path, scenario1_cohort):
        path = tmp_path / "cohort.csv"
        write_dataset_csv(scenario1_cohort, path)
        back = read_dataset_csv(
            path, scenario1_cohort.metal_names, scenario1_cohort.confounder_names
        )
        np.testing.assert_allclose(back.time, scenario1_cohort.time)
        np.testing.assert_array_equal(back.event, scenario1_cohort.event)
        np.testing.assert_allclose(back.metals, scenario1_cohort.metals)

    def test_missing_column_errors(self, tmp_path, scenario1_cohort):
        path = tmp_path / "cohort.csv"
        write_dataset_csv(scenario1_cohort, path)
        with pytest.raises(ValueError, match="missing"):
            read_dataset_csv(path, scenario1_cohort.metal_names + ("nope",), ())


class TestDatasetValidation:
    def test_rejects_nonpositive_time(self):
        with pytest.raises(ValueError):
            toy_dataset([0.0, 1.0], [1, 0])

    def test_rejects_duplicate_ids(self):
        with pytest.raises(ValueError, match="unique"):
            Dataset(
                ids=[1, 1],
                time=[1.0, 2.0],
                event=[True, False],
                metals=np.zeros((2, 1)),
                confounders=np.zeros((2, 1)),
                metal_names=("m",),
                confounder_names=("c",),
            )
