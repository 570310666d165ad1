import numpy as np
import pytest

from redcal.ensembles import (
    BinaryEnsemble,
    BinaryObservation,
    Design,
    GridSpec,
    ParameterPoint,
    SeriesEnsemble,
    SeriesObservation,
    exclude_unrealistic_runs,
    load_matrix,
    save_matrix,
)
from redcal.synthetic import factorial_design


def make_series(values, times=None, labels=True):
    values = np.asarray(values, dtype=float)
    q = values.shape[0]
    times = np.arange(values.shape[1], dtype=float) if times is None else times
    rng = np.random.default_rng(7)
    design = Design(rng.uniform(size=(q, 4)),
                    tuple(f"r{i}" for i in range(q)) if labels else None)
    return SeriesEnsemble(values, times, design)


class TestValidation:
    def test_parameter_point_bounds(self):
        ParameterPoint((0.0, 0.5, 1.0, 0.25))
        with pytest.raises(ValueError, match="outside"):
            ParameterPoint((0.0, 0.5, 1.2, 0.25))
        with pytest.raises(ValueError, match="4 coordinates"):
            ParameterPoint((0.1, 0.2))

    def test_duplicate_design_points_rejected(self):
        arr = np.array([[0.1, 0.2, 0.3, 0.4], [0.1, 0.2, 0.3, 0.4]])
        with pytest.raises(ValueError, match="duplicate"):
            Design(arr)

    def test_series_shape_mismatch(self):
        design = Design(np.array([[0.1, 0.2, 0.3, 0.4]]))
        with pytest.raises(ValueError, match="design"):
            SeriesEnsemble(np.zeros((2, 5)), np.arange(5.0), design)

    def test_time_axis_must_increase(self):
        design = Design(np.array([[0.1, 0.2, 0.3, 0.4]]))
        with pytest.raises(ValueError, match="column 3"):
            SeriesEnsemble(np.zeros((1, 4)), np.array([0.0, 1.0, 1.0, 2.0]), design)

    def test_binary_entries_checked(self):
        design = Design(np.array([[0.1, 0.2, 0.3, 0.4]]))
        grid = GridSpec(1, 3)
        with pytest.raises(ValueError, match="run 1, cell 2"):
            BinaryEnsemble(np.array([[0.0, 0.3, 1.0]]), grid, design)

    def test_grid_mask_reduces_m(self):
        grid = GridSpec(2, 3, mask=(0, 4))
        assert grid.m == 4
        assert grid.cell_labels() == ["r0_c1", "r0_c2", "r1_c0", "r1_c2"]
        full = grid.to_full(np.array([1.0, 2.0, 3.0, 4.0]))
        assert np.isnan(full[0, 0]) and full[0, 1] == 1.0 and full[1, 2] == 4.0

    def test_immutability(self):
        e = make_series(np.ones((2, 3)))
        with pytest.raises(ValueError):
            e.values[0, 0] = 2.0


class TestPersistence:
    def test_design_round_trip(self, tmp_path):
        design = factorial_design(5)
        save_matrix(design, tmp_path / "design.csv")
        loaded = load_matrix(tmp_path / "design.csv", "design")
        assert len(loaded) == 625
        assert np.array_equal(loaded.array, design.array)
        assert loaded.labels == design.labels

    def test_series_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        e = make_series(rng.standard_normal((4, 9)) * 1e3,
                        times=np.sort(rng.uniform(-100, 0, 9)))
        save_matrix(e, tmp_path / "series.csv")
        loaded = load_matrix(tmp_path / "series.csv", "series", design=e.design)
        assert np.array_equal(loaded.values, e.values)
        assert np.array_equal(loaded.time_coords, e.time_coords)

    def test_binary_round_trip_with_manifest(self, tmp_path):
        rng = np.random.default_rng(4)
        grid = GridSpec(3, 4, mask=(5,), units="km")
        design = Design(rng.uniform(size=(3, 4)))
        e = BinaryEnsemble(rng.integers(0, 2, size=(3, 11)), grid, design)
        save_matrix(e, tmp_path / "binary.csv")
        loaded = load_matrix(tmp_path / "binary.csv", "binary", design=design)
        assert np.array_equal(loaded.values, e.values)
        assert loaded.grid == grid

    def test_observation_round_trips(self, tmp_path):
        rng = np.random.default_rng(5)
        z1 = SeriesObservation(rng.standard_normal(7), np.arange(7.0))
        save_matrix(z1, tmp_path / "obs.csv")
        back = load_matrix(tmp_path / "obs.csv", "observation")
        assert np.array_equal(back.values, z1.values)

        grid = GridSpec(2, 3)
        z2 = BinaryObservation(rng.integers(0, 2, size=6), grid)
        save_matrix(z2, tmp_path / "bobs.csv")
        back2 = load_matrix(tmp_path / "bobs.csv", "observation_binary")
        assert np.array_equal(back2.values, z2.values)

    def test_empty_file_errors(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(ValueError, match="no rows"):
            load_matrix(path, "design")

    def test_header_only_design_errors(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("p1,p2,p3,p4\n")
        with pytest.raises(ValueError, match="no rows"):
            load_matrix(path, "design")

    def test_non_monotone_time_header_names_column(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("0,1,1,2\n1,2,3,4\n")
        design = Design(np.array([[0.1, 0.2, 0.3, 0.4]]))
        with pytest.raises(ValueError, match="column 3"):
            load_matrix(path, "series", design=design)

    def test_unparseable_cell_named(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("0,1,2\n1,x,3\n")
        with pytest.raises(ValueError, match="row 2, column 2"):
            load_matrix(path, "observation", )

    def test_binary_non_binary_entry_named(self, tmp_path):
        grid = GridSpec(1, 2)
        design = Design(np.array([[0.1, 0.2, 0.3, 0.4]]))
        e = BinaryEnsemble(np.array([[0, 1]]), grid, design)
        save_matrix(e, tmp_path / "b.csv")
        text = (tmp_path / "b.csv").read_text().replace("0,1", "0.3,1")
        (tmp_path / "b.csv").write_text(text)
        with pytest.raises(ValueError, match="not 0/1"):
            load_matrix(tmp_path / "b.csv", "binary", design=design)


class TestExclusion:
    def test_never_crossing_run_retained(self):
        times = np.linspace(-15000.0, 0.0, 31)
        vals = np.vstack([np.full(31, 500.0), np.full(31, 300.0)])
        e = make_series(vals, times)
        retained, excluded = exclude_unrealistic_runs(e, 440.0, -10000.0)
        assert excluded == [1]
        assert retained.n_runs == 1
        assert np.array_equal(retained.values[0], vals[0])

    def test_crossing_exactly_at_cutoff_retained(self):
        # strict "before": a touch at the cutoff itself does not exclude
        times = np.array([-12000.0, -10000.0, -5000.0, 0.0])
        vals = np.array([[500.0, 440.0, 500.0, 500.0]])
        e = make_series(vals, times)
        retained, excluded = exclude_unrealistic_runs(e, 440.0, -10000.0)
        assert excluded == []
        assert retained.n_runs == 1

    def test_crossing_just_before_cutoff_excluded(self):
        times = np.array([-12000.0, -10000.0, -5000.0, 0.0])
        vals = np.array([[440.0, 500.0, 500.0, 500.0]])
        e = make_series(vals, times)
        _, excluded = exclude_unrealistic_runs(e, 440.0, -10000.0)
        assert excluded == [0]

    def test_idempotent(self, tiny_bundle, tiny_config):
        once, excluded = exclude_unrealistic_runs(
            tiny_bundle.series, tiny_config.exclude_threshold,
            tiny_config.exclude_cutoff)
        twice, again = exclude_unrealistic_runs(
            once, tiny_config.exclude_threshold, tiny_config.exclude_cutoff)
        assert again == []
        assert np.array_equal(once.values, twice.values)

    def test_partition_reconstructs_rows(self, tiny_bundle, tiny_config):
        retained, excluded = exclude_unrealistic_runs(
            tiny_bundle.series, tiny_config.exclude_threshold,
            tiny_config.exclude_cutoff)
        kept = sorted(set(range(tiny_bundle.series.n_runs)) - set(excluded))
        assert np.array_equal(retained.values, tiny_bundle.series.values[kept])
        assert np.array_equal(retained.design.array,
                              tiny_bundle.design.array[kept])

    def test_cutoff_outside_range_errors(self):
        e = make_series(np.ones((1, 3)), np.array([0.0, 1.0, 2.0]))
        with pytest.raises(ValueError, match="outside time range"):
            exclude_unrealistic_runs(e, 0.5, 5.0)

    def test_all_excluded_warns(self):
        times = np.array([-12000.0, -11000.0, -10000.0, 0.0])
        e = make_series(np.zeros((2, 4)), times)
        with pytest.warns(UserWarning, match="all runs excluded"):
            retained, excluded = exclude_unrealistic_runs(e, 10.0, -10000.0)
        assert excluded == [0, 1]
        assert retained.n_runs == 0
