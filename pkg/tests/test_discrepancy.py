import numpy as np
import pytest

from redcal.discrepancy import (
    build_binary_basis,
    build_kernel_basis,
    common_binary_discrepancy,
    simulate_series_discrepancy,
    squared_exponential_cov,
)
from redcal.ensembles import BinaryEnsemble, BinaryObservation, Design, GridSpec


def binary_pair(values, obs):
    values = np.asarray(values)
    rng = np.random.default_rng(21)
    design = Design(rng.uniform(size=(values.shape[0], 4)))
    grid = GridSpec(1, values.shape[1])
    return (BinaryEnsemble(values, grid, design),
            BinaryObservation(np.asarray(obs), grid))


class TestKernelBasis:
    def test_default_shapes(self):
        t = np.linspace(-15000.0, 0.0, 1501)
        basis = build_kernel_basis(t, 1500, 750.0, 300)
        assert basis.basis.shape == (1501, 300)
        assert basis.raw_knots.shape == (1500,)
        assert basis.raw_knots[0] == t[0] and basis.raw_knots[-1] == t[-1]

    def test_columns_orthonormal(self):
        t = np.linspace(-100.0, 0.0, 80)
        basis = build_kernel_basis(t, 40, 20.0, 10)
        gram = basis.basis.T @ basis.basis
        assert np.allclose(gram, np.eye(10), atol=1e-10)

    def test_raw_kernel_values(self):
        # direct kernel evaluation oracle
        t = np.linspace(0.0, 1500.0, 3)  # knots land on 0, 750, 1500
        knots = np.linspace(t[0], t[-1], 3)
        raw = np.exp(-np.abs(t[:, None] - knots[None, :]) / 750.0)
        assert raw[0, 0] == 1.0
        assert raw[0, 1] == pytest.approx(np.exp(-1.0), abs=1e-12)

    def test_span_contained_in_raw_span(self):
        t = np.linspace(-50.0, 0.0, 60)
        basis = build_kernel_basis(t, 30, 10.0, 8)
        raw = np.exp(-np.abs(t[:, None] - basis.raw_knots[None, :]) / 10.0)
        q, _ = np.linalg.qr(raw)
        proj = q @ (q.T @ basis.basis)
        assert np.max(np.abs(proj - basis.basis)) < 1e-8

    def test_affine_time_rescaling_invariance(self):
        t = np.linspace(-200.0, 0.0, 90)
        a, b = 3.5, 17.0
        basis1 = build_kernel_basis(t, 45, 25.0, 12)
        basis2 = build_kernel_basis(a * t + b, 45, a * 25.0, 12)
        assert np.allclose(basis1.basis, basis2.basis, atol=1e-9)

    def test_rank_guard(self):
        t = np.linspace(0.0, 1.0, 12)
        with pytest.raises(ValueError, match="exceeds"):
            build_kernel_basis(t, 5, 0.3, 8)


class TestBinaryBasis:
    def test_agreeing_pixel_is_zero(self):
        e, z = binary_pair([[1, 0], [1, 1], [1, 0]], [1, 0])
        basis = build_binary_basis(e, z, 0.5)
        assert basis.column[0] == 0.0
        assert basis.mismatch[0] == 0.0

    def test_hand_computed_mismatch(self):
        # p=4: three runs disagree upward, one matches -> r = 0.75 -> log 7
        e, z = binary_pair([[1], [1], [1], [0]], [0])
        basis = build_binary_basis(e, z, 0.5)
        assert basis.mismatch[0] == pytest.approx(0.75)
        assert basis.column[0] == pytest.approx(np.log(7.0), abs=1e-12)

    def test_below_threshold_zeroed(self):
        e, z = binary_pair([[1], [1], [0], [0]], [0])  # r = 0.5 at c just above
        basis = build_binary_basis(e, z, 0.6)
        assert basis.column[0] == 0.0

    def test_all_mismatch_clipped_with_warning(self):
        e, z = binary_pair([[1], [1], [1]], [0])
        with pytest.warns(UserWarning, match="clipping"):
            basis = build_binary_basis(e, z, 0.5)
        assert np.isfinite(basis.column[0])
        assert basis.column[0] == pytest.approx(np.log((2 - 1e-6) / 1e-6), rel=1e-6)

    def test_sign_and_monotonicity(self):
        rows = np.zeros((10, 9), dtype=int)
        for j in range(9):
            rows[: j + 1, j] = 1  # mismatch fraction (j+1)/10 toward +
        e, z = binary_pair(rows, np.zeros(9, dtype=int))
        basis = build_binary_basis(e, z, 0.3)
        nz = basis.column != 0
        assert np.all(np.sign(basis.column[nz]) == np.sign(basis.mismatch[nz]))
        mags = np.abs(basis.column[nz])
        assert np.all(np.diff(mags) > 0)  # increases with |mismatch|

    def test_near_one_threshold_gives_zero_vector(self):
        e, z = binary_pair([[1, 0], [0, 0], [1, 1]], [0, 1])
        basis = build_binary_basis(e, z, 1 - 1e-9)
        assert np.all(basis.column == 0.0)


class TestSeriesDiscrepancySimulation:
    def test_zero_sill_gives_zero_vector(self):
        t = np.linspace(-100.0, 0.0, 30)
        assert np.array_equal(simulate_series_discrepancy(t, 0.0, 10.0, 1),
                              np.zeros(30))

    def test_covariance_formula_oracle(self, rng):
        for _ in range(10):
            dt = rng.uniform(-3e4, 3e4)
            direct = 90.0 * np.exp(-((dt / 10500.0) ** 2))
            assert squared_exponential_cov(dt, 90.0, 10500.0) == pytest.approx(
                direct, abs=1e-12)

    def test_empirical_marginal_variance(self):
        t = np.linspace(-15000.0, 0.0, 40)
        draws = np.array([
            simulate_series_discrepancy(t, 90.0, 10500.0, seed)
            for seed in range(600)
        ])
        var = draws.var(axis=0, ddof=1).mean()
        assert var == pytest.approx(90.0, rel=0.15)

    def test_deterministic_per_seed(self):
        t = np.linspace(-10.0, 0.0, 20)
        a = simulate_series_discrepancy(t, 4.0, 3.0, 42)
        b = simulate_series_discrepancy(t, 4.0, 3.0, 42)
        assert np.array_equal(a, b)


class TestCommonDiscrepancy:
    def test_obs_equal_to_all_runs_gives_zero(self):
        h = np.tile(np.arange(5.0), (4, 1))
        out = common_binary_discrepancy(h, np.arange(5.0), 0.9)
        assert np.allclose(out, 0.0)

    def test_selection_matches_sort_oracle(self, rng):
        h = rng.standard_normal((12, 6))
        obs = rng.standard_normal(6)
        keep = 0.5
        out = common_binary_discrepancy(h, obs, keep)
        mse = np.mean((h - obs) ** 2, axis=1)
        chosen = np.argsort(mse, kind="stable")[: round(keep * 12)]
        assert np.allclose(out, obs - h[chosen].mean(axis=0))

    def test_three_run_toy_ranking(self):
        obs = np.zeros(3)
        h = np.array([[1.0, 1.0, 1.0],
                      [0.1, 0.1, 0.1],
                      [3.0, 3.0, 3.0]])
        out = common_binary_discrepancy(h, obs, 2 / 3)
        assert np.allclose(out, -(h[1] + h[0]) / 2)

    def test_keep_fraction_bounds(self):
        h = np.zeros((4, 2))
        with pytest.raises(ValueError, match="keep_fraction"):
            common_binary_discrepancy(h, np.zeros(2), 1.5)
        with pytest.raises(ValueError, match="at least 2"):
            common_binary_discrepancy(h, np.zeros(2), 0.25)
