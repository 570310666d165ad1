import numpy as np
import pytest

from redcal import synthetic as syn
from redcal.ensembles import exclude_unrealistic_runs


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class TestForwardSeries:
    def test_origin_corner_value(self):
        # direct formula evaluation: 600 - 300 * sigmoid(4000/500)
        g = syn.forward_series((0.0, 0.0, 0.0, 0.0), np.array([0.0]))[0]
        assert g == pytest.approx(600.0 - 300.0 * sigmoid(8.0), abs=1e-9)
        assert g == pytest.approx(300.1, abs=0.05)

    def test_initial_plateau(self, rng):
        for _ in range(20):
            th = rng.uniform(size=4)
            t_mid = 4000 + 8000 * th[3] * (1 - 0.5 * th[0])
            if t_mid > 12000:
                continue
            amp = 300 + 300 * th[0] + 150 * th[1]
            s = 500 + 2500 * th[2]
            expect = 600 - amp * sigmoid((t_mid - 15000) / s)
            g = syn.forward_series(th, np.array([-15000.0]))[0]
            assert abs(g - expect) < 1.0

    def test_no_bump_when_second_input_maxed(self):
        t = np.linspace(-15000, 0, 301)
        th = (0.3, 1.0, 0.9, 0.5)
        g = syn.forward_series(th, t)
        amp = 300 + 300 * 0.3 + 150 * 1.0
        t_mid = 4000 + 8000 * 0.5 * (1 - 0.15)
        s = 500 + 2500 * 0.9
        expect = 600 - amp * sigmoid((t_mid - np.abs(t)) / s)
        assert np.allclose(g, expect, atol=1e-9)

    def test_final_position_insensitive_to_timing_input(self):
        # sharp transition (third input 0) keeps t=0 saturated for any timing
        vals = []
        for th4 in np.linspace(0.0, 0.75, 7):
            t_mid = 4000 + 8000 * th4 * (1 - 0.25)
            if t_mid > 10000:
                continue
            vals.append(syn.forward_series((0.5, 0.3, 0.0, th4), np.array([0.0]))[0])
        assert max(vals) - min(vals) < 1.0

    def test_lipschitz_on_random_pairs(self, rng):
        t = np.linspace(-15000, 0, 201)
        for _ in range(25):
            a, b = rng.uniform(size=4), rng.uniform(size=4)
            ga, gb = syn.forward_series(a, t), syn.forward_series(b, t)
            dist = np.abs(a - b).sum()
            assert np.max(np.abs(ga - gb)) <= 2000.0 * dist + 1e-9


class TestForwardBinary:
    def test_footprint_count_matches_pixel_oracle(self):
        grid = syn.SyntheticConfig().grid
        mask, _ = syn.forward_binary((0.0, 0.0, 0.0, 0.0), grid)
        r = np.arange(grid.rows) / (grid.rows - 1)
        c = np.arange(grid.cols) / (grid.cols - 1)
        rr, cc = np.meshgrid(r, c, indexing="ij")
        d = np.sqrt((rr - 0.45) ** 2 + (cc - 0.5) ** 2).ravel()
        assert mask.sum() == int((d < 0.75).sum())

    def test_footprint_shrinks_with_first_input(self, rng):
        grid = syn.SyntheticConfig(grid_rows=20, grid_cols=11).grid
        prev = None
        for th1 in np.linspace(0, 1, 6):
            mask, _ = syn.forward_binary((th1, 0.4, 0.6, 0.2), grid)
            if prev is not None:
                assert np.all(mask <= prev)  # pointwise non-increasing
            prev = mask

    def test_center_always_covered(self, rng):
        grid = syn.SyntheticConfig(grid_rows=21, grid_cols=21).grid
        centers = []
        for _ in range(10):
            th = rng.uniform(size=4)
            mask, h = syn.forward_binary(th, grid)
            centers.append(h.max() > 0)
        assert all(centers)

    def test_mask_is_thresholded_thickness(self, rng):
        grid = syn.SyntheticConfig(grid_rows=9, grid_cols=8).grid
        th = rng.uniform(size=4)
        mask, h = syn.forward_binary(th, grid)
        assert np.array_equal(mask, (h > 0).astype(np.int8))


class TestForwardVolume:
    def test_change_zero_at_present_everywhere(self, rng):
        for _ in range(20):
            th = rng.uniform(size=4)
            v = syn.forward_volume(th, np.array([1e-9]))[0]
            assert abs(v) < 1e-6

    def test_growth_corner_value(self):
        # 1.2 * 1 * 2 * (1 - exp(-1/3)) with the regrowth gate closed
        v = syn.volume_change_at((1.0, 1.0, 0.0, 1.0), 500.0)
        assert v == pytest.approx(1.2 * 2.0 * (1.0 - np.exp(-1.0 / 3.0)), abs=1e-12)
        assert v == pytest.approx(0.680, abs=2e-3)

    def test_gate_closed_forecast_non_negative(self, rng):
        t = np.linspace(1.0, 5000.0, 60)
        for _ in range(20):
            th = rng.uniform(size=4)
            th[2] = min(th[2], 0.7)
            assert np.all(syn.forward_volume(th, t) >= -1e-12)

    def test_pathological_corner_goes_negative(self):
        v = syn.volume_change_at((0.25, 1.0, 1.0, 0.0), 500.0)
        assert v < 0.0

    def test_hindcast_continuous_at_present(self, rng):
        th = rng.uniform(size=4)
        v = syn.forward_volume(th, np.array([-1e-6, 1e-6]))
        assert abs(v[0] - v[1]) < 1e-4


class TestDesignAndObservations:
    def test_factorial_design_size(self):
        assert len(syn.factorial_design(5)) == 625
        assert len(syn.factorial_design(4)) == 256

    def test_factorial_levels_on_unit_cube(self):
        d = syn.factorial_design(5)
        assert set(np.unique(d.array)) == {0.0, 0.25, 0.5, 0.75, 1.0}

    def test_exclusion_count_at_full_scale(self):
        cfg = syn.SyntheticConfig()
        bundle = syn.generate_ensemble(cfg)
        retained, excluded = exclude_unrealistic_runs(
            bundle.series, cfg.exclude_threshold, cfg.exclude_cutoff
        )
        assert 350 < retained.n_runs < 550
        assert retained.n_runs + len(excluded) == 625

    def test_observations_deterministic(self, tiny_config, tiny_bundle):
        a = syn.make_simulated_observations(
            (0.5, 0.5, 0.5, 0.4), tiny_config, seed=3, ensemble=tiny_bundle)
        b = syn.make_simulated_observations(
            (0.5, 0.5, 0.5, 0.4), tiny_config, seed=3, ensemble=tiny_bundle)
        assert np.array_equal(a[0].values, b[0].values)
        assert np.array_equal(a[1].values, b[1].values)

    def test_zero_noise_observations_equal_forward(self, tiny_config, tiny_bundle):
        th = (0.5, 0.5, 0.5, 0.4)
        z1, z2, _ = syn.make_simulated_observations(
            th, tiny_config, seed=0, ensemble=tiny_bundle,
            series_sill=0.0, binary_discrepancy=False)
        assert np.array_equal(z1.values, syn.forward_series(th, tiny_config.times))
        mask, _ = syn.forward_binary(th, tiny_config.grid)
        assert np.array_equal(z2.values, mask)

    def test_truth_record_contents(self, tiny_config, tiny_bundle):
        _, _, rec = syn.make_simulated_observations(
            syn.DEFAULT_TRUTH, tiny_config, seed=5, ensemble=tiny_bundle)
        assert rec["theta_true"] == [0.5, 0.5, 0.5, 0.4]
        assert rec["true_volume_change_500"] == pytest.approx(
            syn.volume_change_at(syn.DEFAULT_TRUTH))
        assert rec["seed"] == 5
