"""Reduced-dimension joint posterior and its Metropolis-Hastings sampler.

The observed series is projected onto the combined emulator + discrepancy
basis once, after which every likelihood evaluation works in the reduced
space: a Gaussian density whose mean stacks the emulator prediction over
the smooth-discrepancy conditional mean, and whose covariance is block
diagonal plus the projected white-noise term. The binary channel keeps its
exact Bernoulli likelihood on latent logit scores. Sampling is blocked
random-walk Metropolis on unconstrained transforms with Jacobian
corrections, with proposal scales adapted during burn-in only.
"""
from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, cholesky
from scipy.special import gammaln
from scipy.stats import gaussian_kde

from .discrepancy import BinaryDiscrepancyBasis, SeriesDiscrepancyBasis
from .emulator import EmulatorBank, bank_predict
from .ensembles import SeriesObservation
from .reduction import LogisticPcaModel, PcaModel

__all__ = [
    "ReducedObservation",
    "ChainState",
    "PriorConfig",
    "CalibrationData",
    "PosteriorChain",
    "ProposalConfig",
    "reduce_observation",
    "conditional_nu1_moments",
    "series_log_likelihood",
    "binary_log_likelihood",
    "log_posterior",
    "initial_state",
    "run_mcmc",
    "batch_means_mcse",
    "half_chain_stability",
    "MODES",
    "JOINT_ONLY_PARTS",
]

MODES = ("binary_only", "joint")

_JITTER = (0.0, 1e-10, 1e-8, 1e-6)


# ---------------------------------------------------------------------------
# reduced observation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReducedObservation:
    """Least-squares projection of the observed series onto the joint basis."""

    z1r: np.ndarray  # (J1 + M_eff,)
    projector_gram: np.ndarray  # (K1^T K1)^{-1}, cached
    n_emulator: int  # J1 (leading block size)
    basis_hash: str

    def __post_init__(self):
        g = np.asarray(self.projector_gram, dtype=float)
        if not np.allclose(g, g.T, atol=1e-10):
            raise ValueError("projector gram must be symmetric")
        try:
            cholesky(g, lower=True)
        except np.linalg.LinAlgError:
            raise ValueError("projector gram must be positive definite") from None


def reduce_observation(
    z: SeriesObservation, pca: PcaModel, disc: SeriesDiscrepancyBasis
) -> ReducedObservation:
    """Project the centered observation onto [emulator basis | discrepancy basis]."""
    joint = np.hstack([pca.basis, disc.basis])
    if z.values.size != joint.shape[0]:
        raise ValueError("observation length differs from basis rows")
    sv = np.linalg.svd(joint, compute_uv=False)
    if sv[-1] <= sv[0] * max(joint.shape) * np.finfo(float).eps:
        raise ValueError(
            f"joint basis is rank deficient (smallest singular value {sv[-1]:.3e}); "
            "emulator and discrepancy columns are nearly collinear"
        )
    gram = joint.T @ joint
    centered = z.values - pca.mean
    lower = cholesky(gram, lower=True)
    z1r = cho_solve((lower, True), joint.T @ centered)
    gram_inv = cho_solve((lower, True), np.eye(gram.shape[0]))
    gram_inv = 0.5 * (gram_inv + gram_inv.T)
    digest = hashlib.sha256(np.ascontiguousarray(joint).tobytes()).hexdigest()[:16]
    return ReducedObservation(z1r, gram_inv, pca.n_components, digest)


# ---------------------------------------------------------------------------
# state, priors, data bundle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainState:
    """One point of the posterior over all sampled quantities."""

    theta: np.ndarray  # (4,)
    psi: np.ndarray  # (J2,) latent logit scores
    kappa1: np.ndarray  # (J1,) re-estimated series sills
    nu2: np.ndarray  # (L,) binary discrepancy coefficients
    alpha1_sq: float
    alpha2_sq: float
    sigma_eps_sq: float
    r_nu: np.ndarray  # (M_eff, L) cross-correlations

    def validate(self) -> None:
        if min(self.alpha1_sq, self.alpha2_sq, self.sigma_eps_sq) <= 0:
            raise ValueError("variance parameters must be positive")
        if np.any(self.kappa1 <= 0):
            raise ValueError("sills must be positive")
        if not _r_nu_valid(self.r_nu):
            raise ValueError(
                "cross-correlations must lie in (-1, 1) with I - R R^T positive definite"
            )


def _r_nu_valid(r_nu: np.ndarray) -> bool:
    if r_nu.size == 0:
        return True
    if np.any(np.abs(r_nu) >= 1.0):
        return False
    # I - R R^T is positive definite iff the spectral norm of R is below 1
    return float(np.linalg.norm(r_nu, 2)) < 1.0


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters of all prior factors.

    The sill priors are inverse gamma with a fixed shape and per-component
    scales placing the prior mode at the stage-one maximum-likelihood sill.
    """

    theta_lo: np.ndarray
    theta_hi: np.ndarray
    kappa1_shape: float = 50.0
    kappa1_scale: np.ndarray | None = None  # (J1,)
    variance_shape: float = 2.0
    variance_scale: float = 3.0

    def __post_init__(self):
        if self.kappa1_scale is not None and np.any(self.kappa1_scale <= 0):
            raise ValueError("scale parameters must be positive")
        if np.any(self.theta_hi <= self.theta_lo):
            raise ValueError("empty input-parameter support")

    @classmethod
    def from_banks(
        cls, design, series_bank: EmulatorBank | None, **kwargs
    ) -> "PriorConfig":
        lo, hi = design.bounds()
        scale = None
        if series_bank is not None:
            shape = kwargs.get("kappa1_shape", 50.0)
            scale = (shape + 1.0) * series_bank.mle_sills()  # mode = scale/(shape+1)
        return cls(theta_lo=lo, theta_hi=hi, kappa1_scale=scale, **kwargs)

    def variance_mode(self) -> float:
        return self.variance_scale / (self.variance_shape + 1.0)


@dataclass(frozen=True)
class CalibrationData:
    """Everything the posterior needs besides the state."""

    z2: np.ndarray  # (m,) binary observation values
    lpca: LogisticPcaModel
    bdisc: BinaryDiscrepancyBasis
    binary_bank: EmulatorBank
    priors: PriorConfig
    robs: ReducedObservation | None = None
    series_bank: EmulatorBank | None = None

    def require_mode(self, mode: str) -> None:
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if mode == "joint" and (self.robs is None or self.series_bank is None):
            raise ValueError("joint mode needs the reduced observation and series bank")

    @property
    def disc_columns(self) -> np.ndarray:
        return self.bdisc.column[:, None]  # (m, L) with L = 1


# ---------------------------------------------------------------------------
# likelihood factors
# ---------------------------------------------------------------------------


def conditional_nu1_moments(state: ChainState) -> tuple[np.ndarray, np.ndarray]:
    """Moments of the smooth-discrepancy coefficients given the binary ones.

    Cross-moments are parameterized by correlations: Cov(nu1_i, nu2_j) =
    alpha1 * alpha2 * rho_ij, which gives mean (alpha1/alpha2) R nu2 and
    covariance alpha1^2 (I - R R^T).
    """
    state.validate()
    a1 = math.sqrt(state.alpha1_sq)
    a2 = math.sqrt(state.alpha2_sq)
    r = state.r_nu
    mean = (a1 / a2) * (r @ state.nu2)
    cov = state.alpha1_sq * (np.eye(r.shape[0]) - r @ r.T)
    return mean, cov


def _gaussian_logpdf(resid: np.ndarray, cov: np.ndarray) -> float:
    last = None
    for jit in _JITTER:
        try:
            c = cov if jit == 0.0 else cov + jit * np.eye(cov.shape[0])
            lower = cholesky(c, lower=True)
            break
        except np.linalg.LinAlgError as exc:
            last = exc
    else:
        raise np.linalg.LinAlgError(
            f"covariance indefinite after jitter ladder up to {_JITTER[-1]:g}"
        ) from last
    alpha = cho_solve((lower, True), resid)
    return float(
        -0.5 * (resid @ alpha)
        - np.log(np.diag(lower)).sum()
        - 0.5 * resid.size * math.log(2.0 * math.pi)
    )


def series_log_likelihood(
    state: ChainState,
    robs: ReducedObservation,
    bank: EmulatorBank,
    eta_moments: tuple[np.ndarray, np.ndarray] | None = None,
) -> float:
    """Gaussian log density of the reduced observation.

    Mean stacks the emulator prediction (with the state's sill overrides)
    over the conditional discrepancy mean; covariance is block diagonal in
    those two pieces plus the projected observation-noise term.
    """
    if bank.channel != "series":
        raise ValueError("series likelihood needs the series bank")
    mu_eta, var_eta = (
        eta_moments
        if eta_moments is not None
        else bank_predict(bank, state.theta, state.kappa1)
    )
    nu_mean, nu_cov = conditional_nu1_moments(state)
    j1 = mu_eta.size
    k = j1 + nu_mean.size
    if robs.z1r.size != k:
        raise ValueError(
            f"reduced observation has {robs.z1r.size} entries, model expects {k}"
        )
    mean = np.concatenate([mu_eta, nu_mean])
    cov = state.sigma_eps_sq * robs.projector_gram.copy()
    cov[:j1, :j1] += np.diag(var_eta)
    cov[j1:, j1:] += nu_cov
    return _gaussian_logpdf(robs.z1r - mean, cov)


def binary_log_likelihood(
    state: ChainState,
    z2: np.ndarray,
    lpca: LogisticPcaModel,
    bdisc: BinaryDiscrepancyBasis,
) -> float:
    """Exact Bernoulli log likelihood of the observed field given the logits."""
    lam = lpca.offset + lpca.basis @ state.psi + bdisc.column * state.nu2[0]
    z = np.asarray(z2, dtype=float)
    if z.size != lam.size:
        raise ValueError("observation length differs from logit length")
    # z*lam - log(1 + exp(lam)), overflow-safe
    return float(np.sum(z * lam - np.logaddexp(0.0, lam)))


def _inverse_gamma_logpdf(x: float, shape: float, scale: float) -> float:
    if x <= 0:
        return -math.inf
    return (
        shape * math.log(scale)
        - gammaln(shape)
        - (shape + 1.0) * math.log(x)
        - scale / x
    )


# ---------------------------------------------------------------------------
# posterior assembly
# ---------------------------------------------------------------------------

_SERIES_PARTS = ("series_ll", "kappa1_prior", "alpha1_prior", "sigma_prior", "rnu_prior")
_BINARY_PARTS = ("binary_ll", "psi_prior", "nu2_prior", "alpha2_prior", "theta_prior")
JOINT_ONLY_PARTS = _SERIES_PARTS

_BLOCK_PARTS = {
    "theta": ("series_ll", "psi_prior", "theta_prior"),
    "psi": ("binary_ll", "psi_prior"),
    "kappa1": ("series_ll", "kappa1_prior"),
    "nu2_alpha2": ("series_ll", "binary_ll", "nu2_prior", "alpha2_prior"),
    "alpha1_sigma": ("series_ll", "alpha1_prior", "sigma_prior"),
    "r_nu": ("series_ll", "rnu_prior"),
}

_JOINT_BLOCKS = ("theta", "psi", "kappa1", "nu2_alpha2", "alpha1_sigma", "r_nu")
_BINARY_BLOCKS = ("theta", "psi", "nu2_alpha2")


def _part_names(mode: str) -> tuple[str, ...]:
    return _BINARY_PARTS if mode == "binary_only" else _BINARY_PARTS + _SERIES_PARTS


class _PosteriorEval:
    """Recomputes only the factors a block move can change."""

    def __init__(self, data: CalibrationData, mode: str):
        data.require_mode(mode)
        self.data = data
        self.mode = mode
        self.part_names = _part_names(mode)

    def moments(self, state: ChainState, prev=None, changed=()) -> dict:
        out = dict(prev) if prev else {}
        theta_moved = prev is None or "theta" in changed
        if theta_moved:
            out["psi_mom"] = bank_predict(self.data.binary_bank, state.theta)
        if self.mode == "joint" and (theta_moved or "kappa1" in changed):
            out["eta_mom"] = bank_predict(
                self.data.series_bank, state.theta, state.kappa1
            )
        return out

    def parts(self, state: ChainState, prev=None, moments=None, dirty=None) -> dict:
        """Factor values; ``dirty`` lists the part names to recompute."""
        d, pr = self.data, self.data.priors
        out = dict(prev) if prev else {}
        todo = self.part_names if dirty is None else dirty

        if "theta_prior" in todo:
            inside = np.all(state.theta >= pr.theta_lo) and np.all(
                state.theta <= pr.theta_hi
            )
            out["theta_prior"] = (
                -float(np.log(pr.theta_hi - pr.theta_lo).sum()) if inside else -math.inf
            )
        if out.get("theta_prior") == -math.inf:
            # outside the support nothing else is defined; short-circuit
            for name in self.part_names:
                out.setdefault(name, 0.0)
            return out

        if "psi_prior" in todo:
            mu, var = moments["psi_mom"]
            resid = state.psi - mu
            out["psi_prior"] = float(
                -0.5 * np.sum(resid**2 / var + np.log(var))
                - 0.5 * resid.size * math.log(2.0 * math.pi)
            )
        if "binary_ll" in todo:
            out["binary_ll"] = binary_log_likelihood(state, d.z2, d.lpca, d.bdisc)
        if "nu2_prior" in todo:
            out["nu2_prior"] = float(
                -0.5 * np.sum(state.nu2**2) / state.alpha2_sq
                - 0.5 * state.nu2.size * math.log(2.0 * math.pi * state.alpha2_sq)
            )
        if "alpha2_prior" in todo:
            out["alpha2_prior"] = _inverse_gamma_logpdf(
                state.alpha2_sq, pr.variance_shape, pr.variance_scale
            )

        if self.mode == "joint":
            if "rnu_prior" in todo:
                out["rnu_prior"] = 0.0 if _r_nu_valid(state.r_nu) else -math.inf
            if "series_ll" in todo:
                if out.get("rnu_prior", prev.get("rnu_prior", 0.0) if prev else 0.0) == -math.inf:
                    out["series_ll"] = -math.inf
                else:
                    out["series_ll"] = series_log_likelihood(
                        state, d.robs, d.series_bank, moments["eta_mom"]
                    )
            if "kappa1_prior" in todo:
                out["kappa1_prior"] = float(
                    sum(
                        _inverse_gamma_logpdf(k, pr.kappa1_shape, s)
                        for k, s in zip(state.kappa1, pr.kappa1_scale)
                    )
                )
            if "alpha1_prior" in todo:
                out["alpha1_prior"] = _inverse_gamma_logpdf(
                    state.alpha1_sq, pr.variance_shape, pr.variance_scale
                )
            if "sigma_prior" in todo:
                out["sigma_prior"] = _inverse_gamma_logpdf(
                    state.sigma_eps_sq, pr.variance_shape, pr.variance_scale
                )
        return out

    def total(self, parts: dict) -> float:
        vals = [parts[name] for name in self.part_names]
        if any(v == -math.inf for v in vals):
            return -math.inf
        return float(sum(vals))

    def evaluate(self, state: ChainState) -> tuple[float, dict, dict]:
        mom = self.moments(state)
        parts = self.parts(state, moments=mom)
        return self.total(parts), parts, mom


def log_posterior(state: ChainState, data: CalibrationData, mode: str) -> float:
    """Log posterior density up to a constant; -inf outside the support."""
    if np.any(state.theta < data.priors.theta_lo) or np.any(
        state.theta > data.priors.theta_hi
    ):
        return -math.inf
    state.validate()
    ev = _PosteriorEval(data, mode)
    total, _, _ = ev.evaluate(state)
    return total


def initial_state(data: CalibrationData, mode: str) -> ChainState:
    """Deterministic starting point with guaranteed finite posterior."""
    data.require_mode(mode)
    pr = data.priors
    theta = data.binary_bank.design.array.mean(axis=0)
    theta = np.clip(theta, pr.theta_lo + 1e-9, pr.theta_hi - 1e-9)
    psi, _ = bank_predict(data.binary_bank, theta)
    j1 = data.series_bank.n_components if data.series_bank is not None else 0
    m_eff = (
        data.robs.z1r.size - j1 if data.robs is not None else 0
    )
    kappa1 = (
        data.series_bank.mle_sills() if data.series_bank is not None else np.ones(j1)
    )
    vmode = pr.variance_mode()
    return ChainState(
        theta=theta,
        psi=psi,
        kappa1=kappa1,
        nu2=np.zeros(1),
        alpha1_sq=vmode,
        alpha2_sq=vmode,
        sigma_eps_sq=vmode,
        r_nu=np.zeros((m_eff, 1)),
    )


# ---------------------------------------------------------------------------
# block transforms
# ---------------------------------------------------------------------------


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500.0, 500.0)))


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


class _Block:
    """Maps a named parameter block to/from unconstrained coordinates."""

    def __init__(self, name: str, priors: PriorConfig):
        self.name = name
        self.lo = priors.theta_lo
        self.hi = priors.theta_hi

    def get(self, s: ChainState) -> np.ndarray:
        if self.name == "theta":
            frac = (s.theta - self.lo) / (self.hi - self.lo)
            frac = np.clip(frac, 1e-12, 1.0 - 1e-12)
            return np.log(frac / (1.0 - frac))
        if self.name == "psi":
            return s.psi.copy()
        if self.name == "kappa1":
            return np.log(s.kappa1)
        if self.name == "nu2_alpha2":
            return np.concatenate([s.nu2, [math.log(s.alpha2_sq)]])
        if self.name == "alpha1_sigma":
            return np.array([math.log(s.alpha1_sq), math.log(s.sigma_eps_sq)])
        if self.name == "r_nu":
            rho = np.clip(s.r_nu.ravel(), -1 + 1e-12, 1 - 1e-12)
            return np.log((1.0 + rho) / (1.0 - rho))
        raise KeyError(self.name)

    def set(self, s: ChainState, u: np.ndarray) -> ChainState:
        if self.name == "theta":
            theta = self.lo + (self.hi - self.lo) * _sigmoid(u)
            return replace(s, theta=theta)
        if self.name == "psi":
            return replace(s, psi=u.copy())
        if self.name == "kappa1":
            return replace(s, kappa1=np.exp(u))
        if self.name == "nu2_alpha2":
            return replace(s, nu2=u[:-1].copy(), alpha2_sq=float(np.exp(u[-1])))
        if self.name == "alpha1_sigma":
            return replace(
                s, alpha1_sq=float(np.exp(u[0])), sigma_eps_sq=float(np.exp(u[1]))
            )
        if self.name == "r_nu":
            rho = 2.0 * _sigmoid(u) - 1.0
            return replace(s, r_nu=rho.reshape(s.r_nu.shape))
        raise KeyError(self.name)

    def log_jacobian(self, u: np.ndarray) -> float:
        if self.name == "theta":
            return float(
                np.sum(np.log(self.hi - self.lo) + _log_sigmoid(u) + _log_sigmoid(-u))
            )
        if self.name == "psi":
            return 0.0
        if self.name == "kappa1":
            return float(np.sum(u))
        if self.name == "nu2_alpha2":
            return float(u[-1])
        if self.name == "alpha1_sigma":
            return float(u[0] + u[1])
        if self.name == "r_nu":
            return float(
                np.sum(math.log(2.0) + _log_sigmoid(u) + _log_sigmoid(-u))
            )
        raise KeyError(self.name)


@dataclass
class ProposalConfig:
    """Initial random-walk scales per block plus adaptation settings."""

    scales: dict = field(
        default_factory=lambda: {
            "theta": 0.3,
            "psi": 0.15,
            "kappa1": 0.2,
            "nu2_alpha2": 0.25,
            "alpha1_sigma": 0.25,
            "r_nu": 0.05,
        }
    )
    adapt_window: int = 50
    target_low: float = 0.2
    target_high: float = 0.4


# ---------------------------------------------------------------------------
# chain container and diagnostics
# ---------------------------------------------------------------------------


def state_names(j1: int, j2: int, m_eff: int, n_l: int = 1) -> list[str]:
    names = [f"theta_{i + 1}" for i in range(4)]
    names += [f"psi_{j + 1}" for j in range(j2)]
    names += [f"kappa1_{j + 1}" for j in range(j1)]
    names += [f"nu2_{j + 1}" for j in range(n_l)]
    names += ["alpha1_sq", "alpha2_sq", "sigma_eps_sq"]
    names += [f"rho_{i + 1}_{j + 1}" for i in range(m_eff) for j in range(n_l)]
    return names


def _flatten_state(s: ChainState) -> np.ndarray:
    return np.concatenate(
        [
            s.theta,
            s.psi,
            s.kappa1,
            s.nu2,
            [s.alpha1_sq, s.alpha2_sq, s.sigma_eps_sq],
            s.r_nu.ravel(),
        ]
    )


@dataclass
class PosteriorChain:
    """Stored (possibly thinned) post-burn-in states with diagnostics."""

    names: list[str]
    samples: np.ndarray  # (n_stored, n_scalars)
    log_posts: np.ndarray
    acceptance: dict
    mcse: dict
    mode: str
    iterations: int
    burn_in: int
    thin: int
    proposal_log: list | None = None

    def __post_init__(self):
        for name, rate in self.acceptance.items():
            if not (0.0 <= rate <= 1.0):
                raise ValueError(f"acceptance rate for {name} outside [0, 1]")

    def column(self, name: str) -> np.ndarray:
        return self.samples[:, self.names.index(name)]

    def theta_samples(self) -> np.ndarray:
        return self.samples[:, :4]

    def summary(self) -> list[dict]:
        rows = []
        for j, name in enumerate(self.names):
            col = self.samples[:, j]
            lo, med, hi = np.percentile(col, [2.5, 50.0, 97.5])
            rows.append(
                {
                    "parameter": name,
                    "mean": float(col.mean()),
                    "sd": float(col.std(ddof=1)) if col.size > 1 else 0.0,
                    "q2.5": float(lo),
                    "median": float(med),
                    "q97.5": float(hi),
                    "mcse": self.mcse.get(name, float("nan")),
                }
            )
        return rows

    def density_grid(self, name: str, n_points: int = 201) -> tuple[np.ndarray, np.ndarray]:
        """Gaussian kernel density (Silverman bandwidth) for one scalar."""
        col = self.column(name)
        if np.ptp(col) == 0.0:
            grid = np.array([col[0]])
            return grid, np.array([1.0])
        kde = gaussian_kde(col, bw_method="silverman")
        pad = 0.1 * np.ptp(col)
        grid = np.linspace(col.min() - pad, col.max() + pad, n_points)
        return grid, kde(grid)


def batch_means_mcse(series, n_batches: int) -> float:
    """Nonoverlapping batch-means standard error of the series mean."""
    x = np.asarray(series, dtype=float)
    if n_batches < 2:
        raise ValueError("need at least 2 batches")
    if x.size < 2 * n_batches:
        raise ValueError(f"need at least {2 * n_batches} samples for {n_batches} batches")
    size = x.size // n_batches
    means = x[: n_batches * size].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def _ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    values = np.concatenate([a, b])
    values.sort(kind="mergesort")
    cdf_a = np.searchsorted(np.sort(a), values, side="right") / a.size
    cdf_b = np.searchsorted(np.sort(b), values, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def half_chain_stability(chain: PosteriorChain, threshold: float = 0.1) -> dict:
    """Distribution distance between the two chain halves, per scalar.

    Returns {name: {"ks": value, "flag": "pass" | "warn"}}. A stationary,
    well-mixed chain gives small distances; drift shows up directly.
    """
    n = chain.samples.shape[0]
    if n < 100:
        raise ValueError("need at least 100 stored samples")
    half = n // 2
    out = {}
    for j, name in enumerate(chain.names):
        col = chain.samples[:, j]
        ks = _ks_statistic(col[:half], col[half:])
        out[name] = {"ks": ks, "flag": "pass" if ks < threshold else "warn"}
    return out


# ---------------------------------------------------------------------------
# sampler
# ---------------------------------------------------------------------------


def run_mcmc(
    init: ChainState,
    data: CalibrationData,
    mode: str,
    iters: int,
    proposal: ProposalConfig | None = None,
    seed: int = 0,
    burn_in_frac: float = 0.2,
    thin: int = 1,
    blocks=None,
    log_proposals: bool = False,
) -> PosteriorChain:
    """Blocked random-walk Metropolis over the posterior.

    Moves are Gaussian steps on unconstrained transforms (logit for the
    input parameters and cross-correlations, log for variances) with the
    Jacobian folded into the acceptance ratio. Scales adapt toward the
    0.2-0.4 acceptance band during burn-in and are frozen afterwards; the
    whole run is reproducible for a fixed seed.
    """
    data.require_mode(mode)
    init.validate()
    prop = proposal or ProposalConfig()
    evaluator = _PosteriorEval(data, mode)
    total, parts, moments = evaluator.evaluate(init)
    if not np.isfinite(total):
        raise ValueError("initial state has non-finite posterior")

    block_names = tuple(blocks) if blocks else (
        _JOINT_BLOCKS if mode == "joint" else _BINARY_BLOCKS
    )
    for b in block_names:
        if b not in _BLOCK_PARTS:
            raise ValueError(f"unknown block {b!r}")
        if mode == "binary_only" and b in ("kappa1", "alpha1_sigma", "r_nu"):
            raise ValueError(f"block {b!r} is not sampled in binary-only mode")
    blocks_ = {name: _Block(name, data.priors) for name in block_names}
    scales = {name: float(prop.scales[name]) for name in block_names}

    rng = np.random.default_rng(seed)
    burn_in = int(round(burn_in_frac * iters))
    n_stored = max((iters - burn_in) // thin, 0)

    state = init
    width = _flatten_state(init).size
    samples = np.empty((n_stored, width))
    log_posts = np.empty(n_stored)
    accept_counts = {name: 0 for name in block_names}
    post_burn_counts = {name: 0 for name in block_names}
    window_counts = {name: 0 for name in block_names}
    proposal_log: list | None = [] if log_proposals else None
    stored = 0

    for it in range(iters):
        for name in block_names:
            block = blocks_[name]
            u = block.get(state)
            u_new = u + scales[name] * rng.standard_normal(u.size)
            cand = block.set(state, u_new)
            dirty = _BLOCK_PARTS[name]
            cand_moments = evaluator.moments(state=cand, prev=moments, changed=(name,))
            cand_parts = evaluator.parts(
                cand, prev=parts, moments=cand_moments, dirty=dirty
            )
            cand_total = evaluator.total(cand_parts)
            delta = (
                cand_total
                + block.log_jacobian(u_new)
                - total
                - block.log_jacobian(u)
            )
            log_u = math.log(rng.uniform())
            accepted = bool(log_u < delta)
            if proposal_log is not None:
                proposal_log.append(
                    {
                        "iteration": it,
                        "block": name,
                        "delta": float(delta),
                        "log_uniform": float(log_u),
                        "accepted": accepted,
                        "state": state,
                        "candidate": cand,
                        "jac_current": block.log_jacobian(u),
                        "jac_candidate": block.log_jacobian(u_new),
                    }
                )
            if accepted:
                state, parts, moments, total = cand, cand_parts, cand_moments, cand_total
                accept_counts[name] += 1
                window_counts[name] += 1
                if it >= burn_in:
                    post_burn_counts[name] += 1

        if it < burn_in and (it + 1) % prop.adapt_window == 0:
            for name in block_names:
                rate = window_counts[name] / prop.adapt_window
                if not (prop.target_low <= rate <= prop.target_high):
                    scales[name] *= math.exp(rate - 0.3)
                window_counts[name] = 0

        if it >= burn_in and (it - burn_in) % thin == 0 and stored < n_stored:
            samples[stored] = _flatten_state(state)
            log_posts[stored] = total
            stored += 1

    post_iters = max(iters - burn_in, 1)
    acceptance = {
        name: post_burn_counts[name] / post_iters for name in block_names
    }
    for name, rate in acceptance.items():
        if rate == 0.0:
            warnings.warn(f"block {name!r} accepted nothing after adaptation")

    j1 = init.kappa1.size
    j2 = init.psi.size
    m_eff = init.r_nu.shape[0]
    names = state_names(j1, j2, m_eff, init.nu2.size)
    mcse = {}
    if stored >= 40:
        n_batches = max(int(math.sqrt(stored)), 2)
        for j, nm in enumerate(names):
            mcse[nm] = batch_means_mcse(samples[:stored, j], n_batches)
    return PosteriorChain(
        names=names,
        samples=samples[:stored],
        log_posts=log_posts[:stored],
        acceptance=acceptance,
        mcse=mcse,
        mode=mode,
        iterations=iters,
        burn_in=burn_in,
        thin=thin,
        proposal_log=proposal_log,
    )
