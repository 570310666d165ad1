"""Independent zero-mean Gaussian-process emulators, one per component.

Each retained component gets its own GP over the 4-dimensional input cube
with an exponential (L1) covariance

    C_kl = kappa * exp(-sum_i |x_ik - x_il| / phi_i) + zeta * 1(k = l),

fitted by maximum likelihood with a derivative-free simplex search over the
log-parameters. Fitted models cache both the Cholesky factor of the training
covariance and the eigendecomposition of the unit-sill correlation matrix,
so the sill can be swapped during calibration at O(q^2) cost.
"""
from __future__ import annotations

import hashlib
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve, cholesky, eigh
from scipy.optimize import Bounds, minimize

from .ensembles import Design, as_theta

__all__ = [
    "GpHyperParams",
    "GpComponentModel",
    "EmulatorBank",
    "CholeskyError",
    "neg_log_likelihood",
    "component_from_hyper",
    "fit_component",
    "fit_bank",
    "predict",
    "bank_predict",
    "leave_out_experiment",
    "central_holdout",
    "save_bank",
    "load_bank",
]

LOG_BOUNDS_SILL = (-12.0, 6.0)
LOG_BOUNDS_RANGE = (-5.0, 3.0)
JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
_LOG_2PI = float(np.log(2.0 * np.pi))


class CholeskyError(RuntimeError):
    """Covariance stayed numerically indefinite through the jitter ladder."""

    def __init__(self, jitter: float):
        super().__init__(
            f"covariance not positive definite (largest jitter tried: {jitter:g})"
        )
        self.jitter = jitter


@dataclass(frozen=True)
class GpHyperParams:
    kappa: float  # sill
    phi: tuple[float, float, float, float]  # per-dimension ranges
    zeta: float  # nugget

    def __post_init__(self):
        if self.kappa <= 0 or self.zeta <= 0 or any(p <= 0 for p in self.phi):
            raise ValueError("all hyperparameters must be strictly positive")

    @classmethod
    def from_log(cls, x) -> "GpHyperParams":
        x = np.asarray(x, dtype=float)
        return cls(
            float(np.exp(x[0])),
            tuple(float(v) for v in np.exp(x[1:5])),
            float(np.exp(x[5])),
        )

    def to_log(self) -> np.ndarray:
        return np.log(np.array([self.kappa, *self.phi, self.zeta]))


def correlation_matrix(xa: np.ndarray, xb: np.ndarray, phi) -> np.ndarray:
    """Unit-sill exponential correlation between two point sets."""
    d = np.abs(xa[:, None, :] - xb[None, :, :]) / np.asarray(phi, dtype=float)
    return np.exp(-d.sum(axis=2))


def _chol_with_ladder(cov: np.ndarray) -> tuple[np.ndarray, float]:
    for jit in JITTER_LADDER:
        try:
            c = cov if jit == 0.0 else cov + jit * np.eye(cov.shape[0])
            return cholesky(c, lower=True), jit
        except np.linalg.LinAlgError:
            continue
    raise CholeskyError(JITTER_LADDER[-1])


def neg_log_likelihood(hyper: GpHyperParams, design, scores) -> float:
    """Exact zero-mean Gaussian negative log likelihood of the scores."""
    x = design.array if isinstance(design, Design) else np.asarray(design, float)
    y = np.asarray(scores, dtype=float)
    if y.size != x.shape[0]:
        raise ValueError("score length differs from design size")
    cov = hyper.kappa * correlation_matrix(x, x, hyper.phi)
    cov[np.diag_indices_from(cov)] += hyper.zeta
    lower, _ = _chol_with_ladder(cov)
    alpha = cho_solve((lower, True), y)
    return float(
        0.5 * (y @ alpha) + np.log(np.diag(lower)).sum() + 0.5 * y.size * _LOG_2PI
    )


@dataclass(frozen=True)
class GpComponentModel:
    """One fitted component emulator with its cached factorizations."""

    hyper: GpHyperParams
    design: Design
    train_scores: np.ndarray
    chol_lower: np.ndarray
    alpha: np.ndarray  # C^{-1} y
    corr_eigvals: np.ndarray  # eigendecomposition of the unit-sill correlation
    corr_eigvecs: np.ndarray
    corr_proj_scores: np.ndarray  # eigvecs^T y, cached for sill overrides
    jitter: float = 0.0
    degenerate: bool = False

    @property
    def effective_nugget(self) -> float:
        return self.hyper.zeta + self.jitter

    def log_likelihood(self) -> float:
        y = self.train_scores
        return float(
            -0.5 * (y @ self.alpha)
            - np.log(np.diag(self.chol_lower)).sum()
            - 0.5 * y.size * _LOG_2PI
        )


def component_from_hyper(
    hyper: GpHyperParams, design: Design, scores, degenerate: bool = False
) -> GpComponentModel:
    """Assemble a component model (with its caches) at given hyperparameters."""
    x = design.array
    y = np.asarray(scores, dtype=float)
    corr = correlation_matrix(x, x, hyper.phi)
    cov = hyper.kappa * corr
    cov[np.diag_indices_from(cov)] += hyper.zeta
    lower, jit = _chol_with_ladder(cov)
    alpha = cho_solve((lower, True), y)
    eigval, eigvec = eigh(corr)
    return GpComponentModel(
        hyper=hyper,
        design=design,
        train_scores=y,
        chol_lower=lower,
        alpha=alpha,
        corr_eigvals=eigval,
        corr_eigvecs=eigvec,
        corr_proj_scores=eigvec.T @ y,
        jitter=jit,
        degenerate=degenerate,
    )


def _heuristic_start(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    var = max(float(np.var(y)), 1e-8)
    spread = np.maximum(x.max(axis=0) - x.min(axis=0), 0.05)
    start = np.concatenate([[np.log(var)], np.log(spread), [np.log(0.05 * var)]])
    lo, hi = _log_bounds()
    return np.clip(start, lo + 1e-6, hi - 1e-6)


def _log_bounds() -> tuple[np.ndarray, np.ndarray]:
    lo = np.array([LOG_BOUNDS_SILL[0]] + [LOG_BOUNDS_RANGE[0]] * 4 + [LOG_BOUNDS_SILL[0]])
    hi = np.array([LOG_BOUNDS_SILL[1]] + [LOG_BOUNDS_RANGE[1]] * 4 + [LOG_BOUNDS_SILL[1]])
    return lo, hi


def fit_component(
    design: Design,
    scores,
    restarts: int = 8,
    seed: int = 0,
    maxiter: int = 400,
) -> GpComponentModel:
    """Maximum-likelihood fit via Nelder-Mead on the log-parameters.

    One heuristic start plus ``restarts - 1`` random starts inside the
    bounds; the best finite optimum wins. Raises if every start fails.
    """
    x = design.array
    y = np.asarray(scores, dtype=float)
    if x.shape[0] < 2:
        raise ValueError("need at least 2 design points")
    if y.size != x.shape[0]:
        raise ValueError("score length differs from design size")

    # distances can be precomputed once; the objective only rescales them
    dists = np.abs(x[:, None, :] - x[None, :, :])
    eye = np.eye(x.shape[0])

    def objective(logp: np.ndarray) -> float:
        kappa = np.exp(logp[0])
        inv_phi = np.exp(-logp[1:5])
        zeta = np.exp(logp[5])
        cov = kappa * np.exp(-(dists @ inv_phi)) + zeta * eye
        try:
            lower, _ = _chol_with_ladder(cov)
        except CholeskyError:
            return np.inf
        alpha = cho_solve((lower, True), y)
        return float(
            0.5 * (y @ alpha) + np.log(np.diag(lower)).sum() + 0.5 * y.size * _LOG_2PI
        )

    lo, hi = _log_bounds()
    rng = np.random.default_rng(seed)
    starts = [_heuristic_start(x, y)]
    starts += [rng.uniform(lo, hi) for _ in range(max(restarts - 1, 0))]

    best, best_val, failures = None, np.inf, []
    for i, s0 in enumerate(starts):
        res = minimize(
            objective,
            s0,
            method="Nelder-Mead",
            bounds=Bounds(lo, hi),
            options={"maxiter": maxiter, "fatol": 1e-7, "xatol": 1e-4},
        )
        if np.isfinite(res.fun):
            if res.fun < best_val:
                best, best_val = res.x, res.fun
        else:
            failures.append(f"start {i}: {res.message}")
    if best is None:
        raise RuntimeError("all optimizer starts failed: " + "; ".join(failures))

    hyper = GpHyperParams.from_log(best)
    degenerate = (
        float(np.var(y)) < 1e-12
        or best[0] <= LOG_BOUNDS_SILL[0] + 1e-6
    )
    return component_from_hyper(hyper, design, y, degenerate)


def predict(
    model: GpComponentModel, theta, kappa_override: float | None = None
) -> tuple[float, float]:
    """Conditional mean and variance at one input point.

    With ``kappa_override`` the training covariance is rebuilt as
    kappa' R + zeta I through the cached eigendecomposition (O(q^2)), and
    the cross-covariance is rescaled accordingly; ranges and nugget stay at
    their fitted values.
    """
    x = as_theta(theta)
    r = correlation_matrix(x[None, :], model.design.array, model.hyper.phi)[0]
    kappa = model.hyper.kappa
    zeta = model.effective_nugget
    if kappa_override is None:
        c = kappa * r
        mean = float(c @ model.alpha)
        solved = cho_solve((model.chol_lower, True), c)
        var = (kappa + model.hyper.zeta) - float(c @ solved)
        k_used = kappa
    else:
        if kappa_override <= 0:
            raise ValueError("sill override must be positive")
        kp = float(kappa_override)
        denom = kp * model.corr_eigvals + zeta
        qtr = model.corr_eigvecs.T @ r
        mean = kp * float(qtr @ (model.corr_proj_scores / denom))
        var = (kp + model.hyper.zeta) - kp**2 * float(qtr @ (qtr / denom))
        k_used = kp
    return mean, max(var, 1e-12 * (k_used + zeta))


@dataclass(frozen=True)
class EmulatorBank:
    """The per-component models for one output channel."""

    components: tuple[GpComponentModel, ...]
    channel: str  # "series" or "binary"

    def __post_init__(self):
        if not self.components:
            raise ValueError("bank needs at least one component")
        base = self.components[0].design.array
        for c in self.components[1:]:
            if not np.array_equal(c.design.array, base):
                raise ValueError("all components must share the same design")

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def design(self) -> Design:
        return self.components[0].design

    def mle_sills(self) -> np.ndarray:
        return np.array([c.hyper.kappa for c in self.components])


def fit_bank(
    design: Design,
    scores: np.ndarray,
    channel: str,
    restarts: int = 8,
    seed: int = 0,
    threads: int = 1,
) -> EmulatorBank:
    """Fit one GP per score column; component fits are independent."""
    scores = np.asarray(scores, dtype=float)
    cols = range(scores.shape[1])

    def fit_one(j: int) -> GpComponentModel:
        return fit_component(design, scores[:, j], restarts=restarts, seed=seed + j)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            comps = list(pool.map(fit_one, cols))
    else:
        comps = [fit_one(j) for j in cols]
    return EmulatorBank(tuple(comps), channel)


def bank_predict(
    bank: EmulatorBank, theta, kappa_overrides=None
) -> tuple[np.ndarray, np.ndarray]:
    """Per-component predictive means and variances (diagonal covariance)."""
    if kappa_overrides is not None:
        kappa_overrides = np.asarray(kappa_overrides, dtype=float)
        if kappa_overrides.size != bank.n_components:
            raise ValueError(
                f"{kappa_overrides.size} overrides for {bank.n_components} components"
            )
    means = np.empty(bank.n_components)
    variances = np.empty(bank.n_components)
    for j, comp in enumerate(bank.components):
        ko = None if kappa_overrides is None else float(kappa_overrides[j])
        means[j], variances[j] = predict(comp, theta, ko)
    return means, variances


def central_holdout(design: Design, k: int) -> np.ndarray:
    """Indices of the k design points closest to the design centroid."""
    centroid = design.array.mean(axis=0)
    dist = np.linalg.norm(design.array - centroid, axis=1)
    return np.sort(np.argsort(dist, kind="stable")[:k])


@dataclass(frozen=True)
class LeaveOutReport:
    holdout: np.ndarray
    rmse: float
    standardized_rmse: float
    coverage90: float
    per_run_rmse: np.ndarray


def leave_out_experiment(
    ensemble,
    holdout,
    n_components: int,
    restarts: int = 4,
    seed: int = 0,
    threads: int = 1,
) -> LeaveOutReport:
    """Refit reduction and emulators without the held-out runs, then score
    predictions of those runs in the original data space.

    For a series ensemble the 90% intervals combine the emulator variance
    propagated through the basis with the per-time truncation variance of
    the reduction; coverage is counted over all held-out (run, time) cells.
    For a binary ensemble the predictions are probabilities and coverage is
    not defined (returned as nan).
    """
    from .ensembles import BinaryEnsemble, SeriesEnsemble
    from .reduction import fit_logistic_pca, fit_pca, reconstruct

    holdout = np.asarray(sorted(set(int(i) for i in holdout)), dtype=int)
    n_runs = ensemble.values.shape[0]
    if holdout.size == 0 or holdout.size >= n_runs:
        raise ValueError("holdout must be a non-empty proper subset")
    keep = np.setdiff1d(np.arange(n_runs), holdout)
    if keep.size < 8:
        raise ValueError(f"only {keep.size} training runs left; need at least 8")

    sub_design = ensemble.design.subset(keep)
    held_design = ensemble.design.subset(holdout)
    truth = ensemble.values[holdout].astype(float)

    if isinstance(ensemble, SeriesEnsemble):
        sub = SeriesEnsemble(ensemble.values[keep], ensemble.time_coords, sub_design)
        model, score_set = fit_pca(sub, n_components)
        bank = fit_bank(sub_design, score_set.scores, "series",
                        restarts=restarts, seed=seed, threads=threads)
        fitted = reconstruct(model, score_set.scores)
        trunc_var = np.mean((sub.values - fitted) ** 2, axis=0)
        preds = np.empty_like(truth)
        pred_var = np.empty_like(truth)
        for i, th in enumerate(held_design.array):
            mu, var = bank_predict(bank, th)
            preds[i] = reconstruct(model, mu)
            pred_var[i] = (model.basis**2) @ var + trunc_var
        err = preds - truth
        half = 1.6448536269514722 * np.sqrt(pred_var)  # two-sided 90%
        coverage = float(np.mean(np.abs(err) <= half))
        baseline = truth - model.mean
    elif isinstance(ensemble, BinaryEnsemble):
        sub = BinaryEnsemble(ensemble.values[keep], ensemble.grid, sub_design)
        model = fit_logistic_pca(sub, n_components)
        bank = fit_bank(sub_design, model.scores, "binary",
                        restarts=restarts, seed=seed, threads=threads)
        preds = np.empty_like(truth)
        for i, th in enumerate(held_design.array):
            mu, _ = bank_predict(bank, th)
            preds[i] = reconstruct(model, mu)
        err = preds - truth
        coverage = float("nan")
        baseline = truth - sub.values.mean(axis=0)
    else:
        raise TypeError(f"unsupported ensemble type {type(ensemble).__name__}")

    rmse = float(np.sqrt(np.mean(err**2)))
    scale = float(np.sqrt(np.mean(baseline**2)))
    per_run = np.sqrt(np.mean(err**2, axis=1))
    return LeaveOutReport(
        holdout=holdout,
        rmse=rmse,
        standardized_rmse=rmse / scale if scale > 0 else float("inf"),
        coverage90=coverage,
        per_run_rmse=per_run,
    )


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def design_hash(design: Design) -> str:
    payload = b"\n".join(
        b",".join(b"%.17g" % v for v in row) for row in design.array
    )
    return hashlib.sha256(payload).hexdigest()[:16]


def save_bank(bank: EmulatorBank, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    dh = design_hash(bank.design)
    for j, comp in enumerate(bank.components):
        payload = {
            "channel": bank.channel,
            "index": j,
            "kappa": float(comp.hyper.kappa),
            "phi": [float(v) for v in comp.hyper.phi],
            "zeta": float(comp.hyper.zeta),
            "jitter": float(comp.jitter),
            "degenerate": bool(comp.degenerate),
            "design_hash": dh,
            "train_scores": [float(v) for v in comp.train_scores],
        }
        (directory / f"gp_{bank.channel}_{j}.json").write_text(
            json.dumps(payload) + "\n"
        )


def load_bank(directory, channel: str, design: Design) -> EmulatorBank:
    directory = Path(directory)
    paths = sorted(
        directory.glob(f"gp_{channel}_*.json"),
        key=lambda p: int(p.stem.rsplit("_", 1)[1]),
    )
    if not paths:
        raise FileNotFoundError(f"no gp_{channel}_*.json files under {directory}")
    dh = design_hash(design)
    comps = []
    for p in paths:
        raw = json.loads(p.read_text())
        if raw["design_hash"] != dh:
            raise ValueError(f"{p.name}: design hash mismatch; wrong design supplied")
        hyper = GpHyperParams(raw["kappa"], tuple(raw["phi"]), raw["zeta"])
        comp = component_from_hyper(
            hyper, design, np.asarray(raw["train_scores"]), raw["degenerate"]
        )
        comps.append(comp)
    return EmulatorBank(tuple(comps), channel)


def warn_if_degenerate(bank: EmulatorBank) -> None:
    bad = [j for j, c in enumerate(bank.components) if c.degenerate]
    if bad:
        warnings.warn(f"degenerate component fits: {bad}")
