import numpy as np
import pytest

from redcal.ensembles import BinaryEnsemble, Design, GridSpec, SeriesEnsemble, SeriesObservation
from redcal.reduction import (
    LogisticPcaModel,
    fit_logistic_pca,
    fit_pca,
    load_reduction,
    project_series,
    reconstruct,
    save_reduction,
)


def series_from(values, rng=None):
    values = np.asarray(values, dtype=float)
    rng = rng or np.random.default_rng(11)
    design = Design(rng.uniform(size=(values.shape[0], 4)))
    return SeriesEnsemble(values, np.arange(values.shape[1], dtype=float), design)


def binary_from(values, rng=None):
    values = np.asarray(values)
    rng = rng or np.random.default_rng(12)
    design = Design(rng.uniform(size=(values.shape[0], 4)))
    grid = GridSpec(1, values.shape[1])
    return BinaryEnsemble(values, grid, design)


def bernoulli_deviance(x, gamma):
    return 2.0 * np.sum(np.logaddexp(0.0, -(2.0 * x - 1.0) * gamma))


class TestPca:
    def test_matches_dense_eigendecomposition_oracle(self):
        # 3-run, 4-time toy against a from-scratch covariance eigensolve
        y = np.array([[1.0, 2.0, 0.5, -1.0],
                      [0.0, 1.5, 1.0, 0.5],
                      [2.0, -0.5, 0.0, 1.0]])
        e = series_from(y)
        model, score_set = fit_pca(e, 2)

        yc = y - y.mean(axis=0)
        cov = yc.T @ yc / (y.shape[0] - 1)
        w, v = np.linalg.eigh(cov)
        order = np.argsort(w)[::-1][:2]
        w, v = w[order], v[:, order]
        idx = np.argmax(np.abs(v), axis=0)
        v = v * np.sign(v[idx, np.arange(2)])
        basis = v * np.sqrt(w)
        scores = (yc @ v) / np.sqrt(w)

        assert np.allclose(model.eigenvalues, w, atol=1e-10)
        assert np.allclose(model.basis, basis, atol=1e-10)
        assert np.allclose(score_set.scores, scores, atol=1e-10)

    def test_score_variance_is_one(self, tiny_retained):
        _, score_set = fit_pca(tiny_retained, 5)
        assert np.allclose(np.var(score_set.scores, axis=0, ddof=1), 1.0, atol=1e-8)

    def test_eigenvector_columns_orthonormal(self, tiny_retained):
        model, _ = fit_pca(tiny_retained, 5)
        vec = model.eigenvectors()
        assert np.allclose(vec.T @ vec, np.eye(5), atol=1e-10)

    def test_eigenvalues_descending_positive(self, tiny_retained):
        model, _ = fit_pca(tiny_retained, 6)
        assert np.all(model.eigenvalues > 0)
        assert np.all(np.diff(model.eigenvalues) < 0)

    def test_constant_ensemble_errors(self):
        e = series_from(np.ones((4, 6)))
        with pytest.raises(ValueError, match="rank 0"):
            fit_pca(e, 1)

    def test_rank_limit_reported(self):
        rng = np.random.default_rng(0)
        base = rng.standard_normal(6)
        y = np.vstack([base * s for s in (1.0, 2.0, 3.0)])  # centered rank 1
        with pytest.raises(ValueError, match="rank"):
            fit_pca(series_from(y), 3)

    def test_row_permutation_invariance_up_to_sign(self, tiny_retained):
        model, _ = fit_pca(tiny_retained, 4)
        perm = np.random.default_rng(2).permutation(tiny_retained.n_runs)
        shuffled = SeriesEnsemble(
            tiny_retained.values[perm], tiny_retained.time_coords,
            tiny_retained.design.subset(perm))
        model2, _ = fit_pca(shuffled, 4)
        assert np.allclose(model.basis, model2.basis, atol=1e-8)

    def test_frobenius_error_equals_discarded_energy(self, tiny_retained):
        q = tiny_retained.n_runs
        full_rank = min(q, tiny_retained.n_times) - 1
        model_full, _ = fit_pca(tiny_retained, 8)
        all_eigs = np.linalg.svd(
            tiny_retained.values - tiny_retained.values.mean(axis=0),
            compute_uv=False) ** 2 / (q - 1)
        model, scores = fit_pca(tiny_retained, 3)
        recon = reconstruct(model, scores.scores)
        err = np.sum((tiny_retained.values - recon) ** 2)
        expect = (q - 1) * all_eigs[3:].sum()
        assert err == pytest.approx(expect, rel=1e-6)


class TestProjectReconstruct:
    def test_training_run_round_trip(self, tiny_retained):
        model, score_set = fit_pca(tiny_retained, 6)
        recon = reconstruct(model, score_set.scores[3])
        z = SeriesObservation(recon, tiny_retained.time_coords)
        coeffs, residual = project_series(model, z)
        assert np.allclose(coeffs, score_set.scores[3], atol=1e-8)
        assert np.allclose(residual, 0.0, atol=1e-8)

    def test_mean_projects_to_zero(self, tiny_retained):
        model, _ = fit_pca(tiny_retained, 4)
        z = SeriesObservation(model.mean, tiny_retained.time_coords)
        coeffs, _ = project_series(model, z)
        assert np.allclose(coeffs, 0.0, atol=1e-12)

    def test_matches_normal_equations_oracle(self):
        rng = np.random.default_rng(9)
        y = rng.standard_normal((6, 5))
        e = series_from(y, rng)
        model, _ = fit_pca(e, 3)
        z = SeriesObservation(rng.standard_normal(5), e.time_coords)
        coeffs, residual = project_series(model, z)
        k = model.basis
        expect = np.linalg.solve(k.T @ k, k.T @ (z.values - model.mean))
        assert np.allclose(coeffs, expect, atol=1e-10)
        assert np.allclose(residual, z.values - model.mean - k @ expect, atol=1e-10)

    def test_zero_scores_reconstruct_mean(self, tiny_retained):
        model, _ = fit_pca(tiny_retained, 4)
        assert np.allclose(reconstruct(model, np.zeros(4)), model.mean)

    def test_reconstruction_error_bounded_by_discarded_energy(self, tiny_retained):
        q = tiny_retained.n_runs
        yc = tiny_retained.values - tiny_retained.values.mean(axis=0)
        all_eigs = np.linalg.svd(yc, compute_uv=False) ** 2 / (q - 1)
        model, score_set = fit_pca(tiny_retained, 3)
        recon = reconstruct(model, score_set.scores)
        rel_sq = np.sum((tiny_retained.values - recon) ** 2) / np.sum(yc**2)
        fraction = all_eigs[3:].sum() / all_eigs.sum()
        assert rel_sq <= fraction + 1e-12

    def test_binary_reconstruction_in_open_interval(self, tiny_bundle):
        model = fit_logistic_pca(tiny_bundle.binary, 3, max_iter=50)
        probs = reconstruct(model, model.scores)
        assert np.all(probs > 0.0) and np.all(probs < 1.0)

    def test_offset_only_probabilities_at_zero_scores(self, tiny_bundle):
        model = fit_logistic_pca(tiny_bundle.binary, 3, max_iter=50)
        probs = reconstruct(model, np.zeros(3))
        expect = 1.0 / (1.0 + np.exp(-model.offset))
        assert np.allclose(probs, expect)


class TestLogisticPca:
    def test_deviance_trace_non_increasing(self, tiny_bundle):
        model = fit_logistic_pca(tiny_bundle.binary, 4, max_iter=120)
        assert np.all(np.diff(model.deviance_trace) <= 1e-9)

    def test_all_ones_goes_to_clip_bound(self):
        with np.errstate(all="ignore"):
            model = fit_logistic_pca(binary_from(np.ones((4, 6))), 1,
                                     max_iter=2000, tol=1e-12)
        assert np.all(model.offset > 8.0)
        # dead component: no structure left beyond the offset
        assert np.allclose(model.basis, 0.0, atol=1e-9)
        assert model.deviance_trace[-1] < 0.01

    def test_rank_one_toy_beats_grid_search_oracle(self):
        x = np.array([
            [1, 1, 0, 0, 1, 0],
            [1, 0, 0, 1, 1, 0],
            [0, 1, 1, 0, 0, 1],
            [0, 0, 1, 1, 0, 1],
        ], dtype=float)
        model = fit_logistic_pca(binary_from(x), 1, max_iter=400, tol=1e-10)

        # oracle: exhaustive rank-1 logit models u v^T on a coarse lattice,
        # a strict subset of the offset + rank-1 family being fitted
        lattice = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
        grids_u = np.stack(np.meshgrid(*([lattice] * 4), indexing="ij"),
                           axis=-1).reshape(-1, 4)
        grids_v = np.stack(np.meshgrid(*([lattice] * 6), indexing="ij"),
                           axis=-1).reshape(-1, 6)
        best = np.inf
        for u in grids_u:
            gammas = np.clip(u[:, None] * grids_v[:, None, :], -10, 10)
            dev = 2.0 * np.sum(
                np.logaddexp(0.0, -(2.0 * x - 1.0) * gammas), axis=(1, 2))
            best = min(best, float(dev.min()))
        assert model.deviance_trace[-1] <= best

    def test_non_convergence_warns_with_flag(self, tiny_bundle):
        with pytest.warns(UserWarning, match="did not converge"):
            model = fit_logistic_pca(tiny_bundle.binary, 3, max_iter=3, tol=1e-15)
        assert not model.converged

    def test_basis_columns_orthogonal(self, tiny_bundle):
        model = fit_logistic_pca(tiny_bundle.binary, 4, max_iter=120)
        gram = model.basis.T @ model.basis
        off = gram - np.diag(np.diag(gram))
        assert np.max(np.abs(off)) < 1e-8

    def test_score_variance_mirrors_pca_channel(self, tiny_bundle):
        model = fit_logistic_pca(tiny_bundle.binary, 3, max_iter=120)
        live = np.abs(model.basis).sum(axis=0) > 0
        assert np.allclose(
            np.var(model.scores[:, live], axis=0, ddof=1), 1.0, atol=1e-8)

    def test_rank_precondition(self, tiny_bundle):
        with pytest.raises(ValueError, match="rank"):
            fit_logistic_pca(tiny_bundle.binary, 200)

    def test_probabilities_clipped_away_from_limits(self, tiny_bundle):
        model = fit_logistic_pca(tiny_bundle.binary, 3, max_iter=120)
        probs = reconstruct(model, model.scores)
        eps = 1.0 / (1.0 + np.exp(model.clip + 1.0))
        assert np.all(probs > eps) and np.all(probs < 1 - eps)


class TestPersistence:
    def test_pca_round_trip(self, tiny_retained, tmp_path):
        model, score_set = fit_pca(tiny_retained, 4)
        save_reduction(model, score_set.scores, tmp_path / "red")
        loaded, scores = load_reduction(tmp_path / "red")
        assert np.array_equal(loaded.mean, model.mean)
        assert np.array_equal(loaded.basis, model.basis)
        assert np.array_equal(loaded.eigenvalues, model.eigenvalues)
        assert np.array_equal(scores, score_set.scores)

    def test_logistic_round_trip(self, tiny_bundle, tmp_path):
        model = fit_logistic_pca(tiny_bundle.binary, 3, max_iter=60)
        save_reduction(model, model.scores, tmp_path / "red")
        loaded, scores = load_reduction(tmp_path / "red")
        assert isinstance(loaded, LogisticPcaModel)
        assert np.array_equal(loaded.offset, model.offset)
        assert np.array_equal(loaded.basis, model.basis)
        assert np.array_equal(scores, model.scores)
        assert loaded.converged == model.converged
