"""Turning posterior samples into predictive distributions of responses.

Scalar responses (projected volume change at a fixed horizon) get a single
GP fitted to mean-centered values, with the mean re-added at prediction so
the zero-mean prior does not pull far-field predictions to zero. Trajectory
responses reuse the series reduction plus a component bank. Chains are
pushed through the emulator predictive distribution draw by draw.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import gaussian_kde

from .calibration import PosteriorChain
from .emulator import EmulatorBank, GpComponentModel, bank_predict, fit_bank, fit_component, predict
from .ensembles import Design, SeriesEnsemble
from .reduction import PcaModel, ScoreSet, fit_pca, reconstruct

__all__ = [
    "ScalarResponseSet",
    "TrajectoryResponseSet",
    "ProjectionEmulator",
    "TrajectoryEmulator",
    "PredictiveSample",
    "Envelope",
    "fit_projection_emulator",
    "fit_trajectory_emulator",
    "predict_scalar",
    "chain_to_predictive",
    "prior_predictive",
    "trajectory_envelope",
]


@dataclass(frozen=True)
class ScalarResponseSet:
    """One scalar response per design row."""

    design: Design
    values: np.ndarray  # (p,)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size != len(self.design):
            raise ValueError("need one value per design row")
        if not np.all(np.isfinite(v)):
            raise ValueError("responses must be finite")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class TrajectoryResponseSet:
    """One response trajectory per design row, on a shared time grid."""

    design: Design
    times: np.ndarray  # (T,)
    values: np.ndarray  # (p, T)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        t = np.asarray(self.times, dtype=float)
        if v.shape != (len(self.design), t.size):
            raise ValueError("trajectory matrix must be (design rows, time points)")
        if not np.all(np.isfinite(v)):
            raise ValueError("responses must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "times", t)


@dataclass(frozen=True)
class ProjectionEmulator:
    """A GP on mean-centered scalar responses plus the removed mean."""

    model: GpComponentModel
    offset: float

    @property
    def degenerate(self) -> bool:
        return self.model.degenerate


@dataclass(frozen=True)
class TrajectoryEmulator:
    pca: PcaModel
    bank: EmulatorBank
    times: np.ndarray


def fit_projection_emulator(
    resp: ScalarResponseSet, restarts: int = 8, seed: int = 0
) -> ProjectionEmulator:
    """Fit the scalar-response GP (same kernel and fitting as the component
    emulators). Constant responses come back flagged degenerate."""
    offset = float(resp.values.mean())
    model = fit_component(resp.design, resp.values - offset, restarts=restarts, seed=seed)
    return ProjectionEmulator(model, offset)


def fit_trajectory_emulator(
    resp: TrajectoryResponseSet,
    n_components: int,
    restarts: int = 4,
    seed: int = 0,
    threads: int = 1,
) -> TrajectoryEmulator:
    series = SeriesEnsemble(resp.values, resp.times, resp.design)
    pca, score_set = fit_pca(series, n_components)
    bank = fit_bank(resp.design, score_set.scores, "trajectory",
                    restarts=restarts, seed=seed, threads=threads)
    return TrajectoryEmulator(pca, bank, resp.times)


def predict_scalar(
    emu: ProjectionEmulator, theta, kappa_override=None
) -> tuple[float, float]:
    mean, var = predict(emu.model, theta, kappa_override)
    return mean + emu.offset, var


@dataclass(frozen=True)
class PredictiveSample:
    """Monte Carlo sample of a scalar response with its summary."""

    values: np.ndarray

    def summary(self) -> dict:
        v = self.values
        lo, med, hi = np.percentile(v, [2.5, 50.0, 97.5])
        return {
            "n": int(v.size),
            "mean": float(v.mean()),
            "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
            "q2.5": float(lo),
            "median": float(med),
            "q97.5": float(hi),
        }

    def density_grid(self, n_points: int = 201) -> tuple[np.ndarray, np.ndarray]:
        v = self.values
        if np.ptp(v) == 0.0:
            return np.array([v[0]]), np.array([1.0])
        kde = gaussian_kde(v, bw_method="silverman")
        pad = 0.1 * np.ptp(v)
        grid = np.linspace(v.min() - pad, v.max() + pad, n_points)
        return grid, kde(grid)

    def prob_below(self, level: float) -> float:
        return float(np.mean(self.values < level))


def _theta_matrix(chain) -> np.ndarray:
    if isinstance(chain, PosteriorChain):
        return chain.theta_samples()
    arr = np.asarray(chain, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError("expected a posterior chain or an (n, 4) array")
    return arr


def chain_to_predictive(
    chain,
    emu: ProjectionEmulator,
    seed: int = 0,
    mean_only: bool = False,
) -> PredictiveSample:
    """Push each stored input setting through the emulator predictive.

    By default each setting contributes one draw from the predictive normal;
    ``mean_only`` uses the predictive mean instead of a draw.
    """
    thetas = _theta_matrix(chain)
    if thetas.shape[0] == 0:
        raise ValueError("empty chain")
    rng = np.random.default_rng(seed)
    out = np.empty(thetas.shape[0])
    for i, th in enumerate(thetas):
        mean, var = predict_scalar(emu, th)
        out[i] = mean if mean_only else rng.normal(mean, np.sqrt(var))
    return PredictiveSample(out)


def prior_predictive(
    emu: ProjectionEmulator, n_draws: int, seed: int = 0, mean_only: bool = False
) -> PredictiveSample:
    """The no-calibration comparison: inputs uniform on the unit cube."""
    rng = np.random.default_rng(seed)
    thetas = rng.uniform(size=(n_draws, 4))
    out = np.empty(n_draws)
    for i, th in enumerate(thetas):
        mean, var = predict_scalar(emu, th)
        out[i] = mean if mean_only else rng.normal(mean, np.sqrt(var))
    return PredictiveSample(out)


@dataclass(frozen=True)
class Envelope:
    """Pointwise predictive band over a trajectory time grid."""

    times: np.ndarray
    mean: np.ndarray
    lo95: np.ndarray
    median: np.ndarray
    hi95: np.ndarray

    def width(self) -> np.ndarray:
        return self.hi95 - self.lo95


def trajectory_envelope(
    chain,
    emu: TrajectoryEmulator,
    seed: int = 0,
    max_draws: int = 4000,
    mean_only: bool = False,
) -> Envelope:
    """Per-time mean and pointwise 2.5/50/97.5 percentiles of the
    chain-induced trajectory sample."""
    thetas = _theta_matrix(chain)
    if thetas.shape[0] == 0:
        raise ValueError("empty chain")
    if thetas.shape[0] > max_draws:
        idx = np.linspace(0, thetas.shape[0] - 1, max_draws).round().astype(int)
        thetas = thetas[idx]
    rng = np.random.default_rng(seed)
    trajs = np.empty((thetas.shape[0], emu.times.size))
    for i, th in enumerate(thetas):
        mu, var = bank_predict(emu.bank, th)
        scores = mu if mean_only else rng.normal(mu, np.sqrt(var))
        trajs[i] = reconstruct(emu.pca, scores)
    lo, med, hi = np.percentile(trajs, [2.5, 50.0, 97.5], axis=0)
    return Envelope(emu.times.copy(), trajs.mean(axis=0), lo, med, hi)
