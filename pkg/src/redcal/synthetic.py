"""Fast four-parameter toy simulator used for end-to-end verification.

The forward maps are deterministic, smooth in the inputs, and emit the same
data shapes as the real application: a retreat/re-advance position series on
a signed time axis (years before present negative), a binary coverage mask
on a raster grid, and a volume-change trajectory spanning hindcast and
forecast. Coefficients are fixed constants chosen so that, at desk scale,
the run-exclusion rule bites, the leading variability modes look like
retreat timing and re-advance, the first two inputs trade off against each
other in the modern mask, and a corner of input space produces projected
regrowth while still matching the modern mask.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .discrepancy import common_binary_discrepancy, simulate_series_discrepancy
from .ensembles import (
    BinaryEnsemble,
    BinaryObservation,
    Design,
    GridSpec,
    SeriesEnsemble,
    SeriesObservation,
    as_theta,
)

__all__ = [
    "SyntheticConfig",
    "factorial_design",
    "forward_series",
    "forward_binary",
    "forward_volume",
    "volume_change_at",
    "generate_ensemble",
    "make_simulated_observations",
    "DEFAULT_TRUTH",
    "DEFAULT_THETA_OBS",
]

DEFAULT_TRUTH = (0.5, 0.5, 0.5, 0.4)
DEFAULT_THETA_OBS = (0.45, 0.55, 0.5, 0.45)

# forecast regrowth: gated basin deep enough that the low-TAU/high-CRH
# corner of the modern-mask ridge projects negative change; the quadratic
# hinge in th4 keeps the onset in the deep tail, which the time-series
# channel rules out far more strongly than the modern mask does
REGROWTH_COEF = 1800.0
REGROWTH_GATE_3 = 0.75
REGROWTH_GATE_4 = 0.3

GROWTH_COEF = 1.2
HINDCAST_SERIES_COEF = 0.004
HINDCAST_SHAPE_COEF = 0.5
MASK_CENTER = (0.45, 0.5)  # fractional (row, col) position of the footprint center
# kept weak so the modern mask stays nearly blind to the third input; the
# time-series channel is what pins it down
MASK_ANISO_COEF = 0.1


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500.0, 500.0)))


@dataclass(frozen=True)
class SyntheticConfig:
    """Shapes and defaults for one synthetic experiment."""

    grid_rows: int = 86
    grid_cols: int = 37
    n_times: int = 1501
    t_start: float = -15000.0
    t_end: float = 0.0
    forecast_end: float = 5000.0
    volume_step: float = 100.0
    design_levels: int = 5
    seed: int = 0
    exclude_threshold: float = 440.0
    exclude_cutoff: float = -10000.0
    series_disc_sill: float = 90.0
    series_disc_range: float = 10500.0
    binary_keep_fraction: float = 0.9
    theta_obs: tuple[float, float, float, float] = DEFAULT_THETA_OBS

    def __post_init__(self):
        if min(self.grid_rows, self.grid_cols, self.n_times, self.design_levels) <= 0:
            raise ValueError("dimensions must be positive")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.n_times)

    @property
    def volume_times(self) -> np.ndarray:
        past = np.arange(self.t_start, 0.0, self.volume_step)
        future = np.arange(0.0, self.forecast_end + 0.5 * self.volume_step,
                           self.volume_step)
        return np.concatenate([past, future])

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.grid_rows, self.grid_cols, (), "km")

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=1) + "\n")

    @classmethod
    def from_json(cls, path) -> "SyntheticConfig":
        raw = json.loads(Path(path).read_text())
        raw["theta_obs"] = tuple(raw["theta_obs"])
        return cls(**raw)


def factorial_design(levels: int, dims: int = 4) -> Design:
    """Full factorial design with evenly spaced levels on [0, 1]."""
    vals = np.linspace(0.0, 1.0, levels)
    grids = np.meshgrid(*([vals] * dims), indexing="ij")
    arr = np.stack([g.ravel() for g in grids], axis=1)
    labels = tuple(f"run{i:04d}" for i in range(arr.shape[0]))
    return Design(arr, labels)


def forward_series(theta, times) -> np.ndarray:
    """Position series: retreat with input-controlled timing plus a gated
    re-advance bump. Positions in km, times in signed years (past negative)."""
    th = as_theta(theta)
    t = np.asarray(times, dtype=float)
    amplitude = 300.0 + 300.0 * th[0] + 150.0 * th[1]
    t_mid = 4000.0 + 8000.0 * th[3] * (1.0 - 0.5 * th[0])
    steep = 500.0 + 2500.0 * th[2]
    bump = 120.0 * max(0.0, th[2] - 0.5) * (1.0 - th[1])
    a = np.abs(t)
    return (600.0 - amplitude * _sigmoid((t_mid - a) / steep)
            + bump * np.exp(-((a - 3000.0) ** 2) / (2.0 * 1500.0 ** 2)))


def _elliptic_distance(grid: GridSpec, theta) -> np.ndarray:
    th = as_theta(theta)
    r = np.arange(grid.rows) / max(grid.rows - 1, 1)
    c = np.arange(grid.cols) / max(grid.cols - 1, 1)
    rr, cc = np.meshgrid(r, c, indexing="ij")
    aniso = 1.0 + MASK_ANISO_COEF * th[2]
    d = np.sqrt((rr - MASK_CENTER[0]) ** 2 + ((cc - MASK_CENTER[1]) * aniso) ** 2)
    return d.ravel()[grid.kept_indices()]


def forward_binary(theta, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Binary coverage mask and the underlying thickness field.

    Thickness is ``rho0(theta) - d(s)`` with d the normalized elliptic
    distance from a fixed interior center; a cell is covered when thickness
    is positive. Both the {0,1} mask and the real thickness are returned.
    """
    th = as_theta(theta)
    rho0 = 0.35 + 0.4 * (1.0 - th[0]) * (1.0 - 0.5 * th[1])
    thickness = rho0 - _elliptic_distance(grid, theta)
    return (thickness > 0.0).astype(np.int8), thickness


def forward_volume(theta, times) -> np.ndarray:
    """Volume change in sea-level-equivalent meters over a signed time grid.

    The hindcast (t <= 0) is tied to the position series; the forecast adds
    a growth term and a gated regrowth term, both vanishing at t = 0. The
    regrowth gate opens only for th3 above and th4 below their thresholds,
    producing negative projected change in that corner.
    """
    th = as_theta(theta)
    t = np.asarray(times, dtype=float)
    out = np.empty_like(t)
    past = t <= 0.0
    g_now = forward_series(th, np.array([0.0]))[0]
    shape = _sigmoid((-t[past] - 9000.0) / 800.0)
    out[past] = (HINDCAST_SERIES_COEF * (forward_series(th, t[past]) - g_now)
                 + HINDCAST_SHAPE_COEF * (1.0 - th[2]) * shape)
    tf = t[~past]
    growth = GROWTH_COEF * th[0] * (1.0 + th[1]) * (1.0 - np.exp(-tf / 1500.0))
    regrowth = (REGROWTH_COEF
                * max(0.0, th[2] - REGROWTH_GATE_3)
                * max(0.0, REGROWTH_GATE_4 - th[3]) ** 2
                * (1.0 - np.exp(-tf / 2000.0)))
    out[~past] = growth - regrowth
    return out


def volume_change_at(theta, horizon: float = 500.0) -> float:
    """Scalar projected change at a forecast horizon (years after present)."""
    return float(forward_volume(theta, np.array([horizon]))[0])


@dataclass(frozen=True)
class SyntheticEnsemble:
    """Everything one `simulate` run produces, before observation noise."""

    config: SyntheticConfig
    design: Design
    series: SeriesEnsemble
    binary: BinaryEnsemble
    thickness: np.ndarray  # (p, m) real field behind the binary mask
    volume_trajectories: np.ndarray  # (p, T) on config.volume_times
    volume_scalar: np.ndarray  # (p,) change at +500 years


def generate_ensemble(config: SyntheticConfig | None = None) -> SyntheticEnsemble:
    """Run the toy simulator over the full factorial design."""
    cfg = config or SyntheticConfig()
    design = factorial_design(cfg.design_levels)
    times = cfg.times
    grid = cfg.grid
    vt = cfg.volume_times

    series = np.empty((len(design), times.size))
    masks = np.empty((len(design), grid.m), dtype=np.int8)
    thickness = np.empty((len(design), grid.m))
    vol = np.empty((len(design), vt.size))
    for i, th in enumerate(design.array):
        series[i] = forward_series(th, times)
        masks[i], thickness[i] = forward_binary(th, grid)
        vol[i] = forward_volume(th, vt)
    scalar = np.array([volume_change_at(th) for th in design.array])

    return SyntheticEnsemble(
        config=cfg,
        design=design,
        series=SeriesEnsemble(series, times, design),
        binary=BinaryEnsemble(masks, grid, design),
        thickness=thickness,
        volume_trajectories=vol,
        volume_scalar=scalar,
    )


def make_simulated_observations(
    truth,
    config: SyntheticConfig | None = None,
    seed: int | None = None,
    *,
    ensemble: SyntheticEnsemble | None = None,
    series_sill: float | None = None,
    series_range: float | None = None,
    binary_discrepancy: bool = True,
) -> tuple[SeriesObservation, BinaryObservation, dict]:
    """Contaminated observations at an assumed-true input setting.

    The series observation adds one smooth correlated error draw to the
    forward series. The binary observation subtracts a common thickness
    mismatch pattern (observed reference minus the mean of the best runs)
    from the truth's thickness before dichotomizing. The returned record
    stores the truth and its true projected change for later scoring.
    """
    cfg = config or SyntheticConfig()
    th = as_theta(truth)
    rng_seed = cfg.seed if seed is None else seed
    sill = cfg.series_disc_sill if series_sill is None else series_sill
    rng_range = cfg.series_disc_range if series_range is None else series_range

    times = cfg.times
    err = simulate_series_discrepancy(times, sill, rng_range, rng_seed)
    z1 = SeriesObservation(forward_series(th, times) + err, times)

    grid = cfg.grid
    _, h_true = forward_binary(th, grid)
    if binary_discrepancy:
        ens = ensemble or generate_ensemble(cfg)
        _, h_obs = forward_binary(cfg.theta_obs, grid)
        common = common_binary_discrepancy(
            ens.thickness, h_obs, cfg.binary_keep_fraction
        )
        z2_vals = (h_true - common > 0.0).astype(np.int8)
    else:
        z2_vals = (h_true > 0.0).astype(np.int8)
    z2 = BinaryObservation(z2_vals, grid)

    record = {
        "theta_true": [float(v) for v in th],
        "true_volume_change_500": volume_change_at(th),
        "seed": int(rng_seed),
        "series_sill": float(sill),
        "series_range": float(rng_range),
        "binary_discrepancy": bool(binary_discrepancy),
    }
    return z1, z2, record
