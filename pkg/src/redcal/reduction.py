"""Dimension reduction for both output channels.

The continuous series channel uses classical principal components with the
scores rescaled to unit sample variance and the basis carrying the square
roots of the eigenvalues. The binary channel uses a logistic (Bernoulli
deviance) low-rank factorization of the logits, fitted by majorization-
minimization: each iteration replaces the deviance with its quadratic
majorizer (curvature bound 1/4) and solves it with one truncated SVD, which
makes the deviance trace non-increasing by construction.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import lstsq, svd

from .ensembles import BinaryEnsemble, SeriesEnsemble, SeriesObservation

__all__ = [
    "PcaModel",
    "LogisticPcaModel",
    "ScoreSet",
    "fit_pca",
    "fit_logistic_pca",
    "project_series",
    "reconstruct",
    "save_reduction",
    "load_reduction",
]

LOGIT_CLIP = 10.0


def _fix_signs(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flip paired singular-vector columns so each right column's
    largest-magnitude entry is positive.

    Magnitudes are rounded before the argmax so near-ties resolve to the
    same index regardless of last-ulp noise.
    """
    mags = np.abs(v)
    scale = mags.max(axis=0, keepdims=True)
    scale[scale == 0] = 1.0
    idx = np.argmax(np.round(mags / scale, 6), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, v * signs


@dataclass(frozen=True)
class PcaModel:
    """Centered rank-J decomposition of a series ensemble.

    ``basis`` columns are eigenvectors scaled by square-rooted eigenvalues,
    so reconstruction is ``mean + basis @ scores`` with unit-variance scores.
    """

    mean: np.ndarray  # (n,)
    basis: np.ndarray  # (n, J)
    eigenvalues: np.ndarray  # (J,) descending, positive

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        if np.any(ev <= 0):
            raise ValueError("eigenvalues must be positive")
        if np.any(np.diff(ev) >= 0):
            raise ValueError("eigenvalues must be strictly descending")

    @property
    def n_components(self) -> int:
        return self.basis.shape[1]

    def eigenvectors(self) -> np.ndarray:
        """Unscaled (orthonormal) eigenvector columns."""
        return self.basis / np.sqrt(self.eigenvalues)


@dataclass(frozen=True)
class LogisticPcaModel:
    """Low-rank logit decomposition of a binary ensemble.

    Logits are ``offset + basis @ scores`` with the working logits clipped
    at +-``clip`` during fitting so separable pixels stay finite.
    """

    offset: np.ndarray  # (m,)
    basis: np.ndarray  # (m, J)
    scores: np.ndarray  # (p, J), unit sample variance where identifiable
    deviance_trace: np.ndarray
    converged: bool
    clip: float = LOGIT_CLIP

    def __post_init__(self):
        tr = np.asarray(self.deviance_trace, dtype=float)
        if np.any(np.diff(tr) > 1e-9 * max(tr[0], 1.0)):
            raise ValueError("deviance trace must be non-increasing")

    @property
    def n_components(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class ScoreSet:
    """Per-run reduced coordinates paired with the model that defines them."""

    scores: np.ndarray  # (runs, J)
    model: "PcaModel | LogisticPcaModel"

    def __post_init__(self):
        if self.scores.shape[1] != self.model.n_components:
            raise ValueError("score column count differs from the model rank")


def fit_pca(e: SeriesEnsemble, n_components: int) -> tuple[PcaModel, ScoreSet]:
    """Principal components of the run-by-time matrix.

    Columns (time points) are the variables, rows (runs) the observations.
    Scores are rescaled to unit sample variance; the basis absorbs the
    square-rooted eigenvalues.
    """
    y = e.values
    q, n = y.shape
    if q < 2:
        raise ValueError("need at least 2 runs")
    if n_components > min(q, n):
        raise ValueError(f"rank {n_components} exceeds min(q, n) = {min(q, n)}")
    mean = y.mean(axis=0)
    yc = y - mean
    u, s, vt = svd(yc, full_matrices=False)
    rank = int(np.sum(s > s[0] * max(q, n) * np.finfo(float).eps)) if s.size else 0
    if n_components > rank:
        raise ValueError(
            f"requested {n_components} components but the centered ensemble "
            f"has rank {rank}"
        )
    u, v = _fix_signs(u[:, :n_components], vt[:n_components].T)
    s = s[:n_components]
    eigvals = s**2 / (q - 1)
    basis = v * np.sqrt(eigvals)
    scores = u * np.sqrt(q - 1)
    model = PcaModel(mean, basis, eigvals)
    return model, ScoreSet(scores, model)


def _bernoulli_deviance(x: np.ndarray, gamma: np.ndarray) -> float:
    # 2 * sum log(1 + exp(-(2x-1) * gamma)), overflow-safe
    return float(2.0 * np.sum(np.logaddexp(0.0, -(2.0 * x - 1.0) * gamma)))


def fit_logistic_pca(
    e: BinaryEnsemble,
    n_components: int,
    max_iter: int = 500,
    tol: float = 1e-6,
    clip: float = LOGIT_CLIP,
) -> LogisticPcaModel:
    """Majorization-minimization fit of the rank-J logit decomposition.

    Each step forms the working logits ``gamma + 4 (x - sigmoid(gamma))``,
    clips them to +-clip, and refits offset plus truncated SVD. Stops when
    the relative deviance change drops below ``tol``; if ``max_iter`` is
    reached first the model is returned with ``converged=False`` and a
    warning. A step that would increase the deviance (possible only at the
    clip boundary) is rejected and treated as convergence.
    """
    x = e.values.astype(float)
    p, m = x.shape
    if n_components > min(p, m):
        raise ValueError(f"rank {n_components} exceeds min(p, m) = {min(p, m)}")

    col_mean = np.clip(x.mean(axis=0), 1e-4, 1.0 - 1e-4)
    offset = np.clip(np.log(col_mean / (1.0 - col_mean)), -clip, clip)
    gamma = np.broadcast_to(offset, x.shape).copy()
    low_rank = np.zeros_like(x)
    scores = np.zeros((p, n_components))
    basis = np.zeros((m, n_components))

    trace = [_bernoulli_deviance(x, gamma)]
    converged = False
    for _ in range(max_iter):
        working = np.clip(gamma + 4.0 * (x - _sigmoid(gamma)), -clip, clip)
        new_offset = working.mean(axis=0)
        u, s, vt = svd(working - new_offset, full_matrices=False)
        u, v = _fix_signs(u[:, :n_components], vt[:n_components].T)
        s = s[:n_components]
        new_low_rank = (u * s) @ v.T
        new_gamma = new_offset + new_low_rank
        dev = _bernoulli_deviance(x, new_gamma)
        if dev > trace[-1] + 1e-12 * max(trace[-1], 1.0):
            converged = True  # clip-boundary stall; keep the previous iterate
            break
        offset, gamma, low_rank = new_offset, new_gamma, new_low_rank
        # rescale so score columns have unit sample variance; zero out
        # numerically dead components instead of dividing by ~0
        sd = s / np.sqrt(max(p - 1, 1))
        alive = sd > max(s[0] if s.size else 0.0, 1.0) * 1e-12
        scores = np.where(alive, u * np.sqrt(p - 1), 0.0)
        basis = np.where(alive, v * sd, 0.0)
        trace.append(dev)
        if abs(trace[-2] - dev) <= tol * max(abs(trace[-2]), 1.0):
            converged = True
            break
    if not converged:
        warnings.warn(
            f"logistic PCA did not converge within {max_iter} iterations "
            f"(last relative change {abs(trace[-2] - trace[-1]) / max(trace[-2], 1.0):.2e})"
        )
    return LogisticPcaModel(
        offset=offset.copy(),
        basis=basis,
        scores=scores,
        deviance_trace=np.asarray(trace),
        converged=converged,
        clip=clip,
    )


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500.0, 500.0)))


def project_series(
    model: PcaModel, z: SeriesObservation
) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares coefficients of the centered observation on the basis,
    plus the residual left outside the basis span."""
    centered = z.values - model.mean
    coeffs, *_ = lstsq(model.basis, centered)
    residual = centered - model.basis @ coeffs
    return coeffs, residual


def reconstruct(model, scores) -> np.ndarray:
    """Back to the original data space.

    For the series model this is ``mean + basis @ scores``; for the
    logistic model it is the per-pixel probability, always inside (0, 1).
    """
    scores = np.asarray(scores, dtype=float)
    if scores.shape[-1] != model.n_components:
        raise ValueError("score length differs from the model rank")
    if isinstance(model, PcaModel):
        return model.mean + scores @ model.basis.T
    if isinstance(model, LogisticPcaModel):
        return _sigmoid(model.offset + scores @ model.basis.T)
    raise TypeError(f"cannot reconstruct from {type(model).__name__}")


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

_FMT = "%.17g"


def save_reduction(model, scores: np.ndarray, directory) -> None:
    """Persist a fitted reduction as pca.csv / scores.csv / meta.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows: list[list[str]] = []
    if isinstance(model, PcaModel):
        meta = {"kind": "pca", "n_components": model.n_components}
        rows.append(["mean"] + [_FMT % v for v in model.mean])
        rows.append(["eigenvalues"] + [_FMT % v for v in model.eigenvalues])
        for brow in model.basis:
            rows.append(["basis"] + [_FMT % v for v in brow])
    elif isinstance(model, LogisticPcaModel):
        meta = {
            "kind": "logistic_pca",
            "n_components": model.n_components,
            "iterations": int(model.deviance_trace.size - 1),
            "converged": bool(model.converged),
            "clip": model.clip,
            "deviance_trace": [float(v) for v in model.deviance_trace],
        }
        rows.append(["offset"] + [_FMT % v for v in model.offset])
        for brow in model.basis:
            rows.append(["basis"] + [_FMT % v for v in brow])
    else:
        raise TypeError(f"cannot save {type(model).__name__}")
    with open(directory / "pca.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    with open(directory / "scores.csv", "w", newline="") as fh:
        csv.writer(fh).writerows([[_FMT % v for v in r] for r in scores])
    (directory / "meta.json").write_text(json.dumps(meta, indent=1) + "\n")


def load_reduction(directory) -> tuple[object, np.ndarray]:
    """Inverse of save_reduction; returns (model, scores)."""
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    with open(directory / "pca.csv", newline="") as fh:
        tagged = [(r[0], np.array([float(v) for v in r[1:]])) for r in csv.reader(fh)]
    parts: dict[str, list[np.ndarray]] = {}
    for tag, vals in tagged:
        parts.setdefault(tag, []).append(vals)
    with open(directory / "scores.csv", newline="") as fh:
        scores = np.array([[float(v) for v in r] for r in csv.reader(fh)])
    if meta["kind"] == "pca":
        model = PcaModel(
            mean=parts["mean"][0],
            eigenvalues=parts["eigenvalues"][0],
            basis=np.vstack(parts["basis"]),
        )
    else:
        model = LogisticPcaModel(
            offset=parts["offset"][0],
            basis=np.vstack(parts["basis"]),
            scores=scores,
            deviance_trace=np.asarray(meta["deviance_trace"]),
            converged=meta["converged"],
            clip=meta["clip"],
        )
    return model, scores
