"""Report figures rendered to files alongside the delimited outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "plot_theta_densities",
    "plot_predictive_densities",
    "plot_envelopes",
    "plot_series_observation",
    "plot_binary_observation",
    "plot_loo_errors",
]

THETA_LABELS = ("theta_1", "theta_2", "theta_3", "theta_4")
_MODE_STYLE = {"joint": ("black", "-"), "binary_only": ("gray", "--")}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_theta_densities(densities: dict, path, truth=None) -> Path:
    """2x2 marginal posterior densities for the four input parameters.

    ``densities`` maps mode -> {param: (grid, density)}.
    """
    fig, axes = plt.subplots(2, 2, figsize=(8, 6))
    for ax, name in zip(axes.ravel(), THETA_LABELS):
        for mode, per_param in densities.items():
            if name not in per_param:
                continue
            grid, dens = per_param[name]
            color, style = _MODE_STYLE.get(mode, ("tab:blue", "-"))
            ax.plot(grid, dens, style, color=color, label=mode)
        if truth is not None:
            ax.axvline(truth[THETA_LABELS.index(name)], color="tab:red",
                       linestyle=":", linewidth=1, label="truth")
        ax.set_xlabel(name)
        ax.set_ylabel("density")
    handles, labels = axes[0, 0].get_legend_handles_labels()
    if handles:
        fig.legend(handles, labels, loc="upper center", ncol=3, frameon=False)
    fig.tight_layout(rect=(0, 0, 1, 0.94))
    return _save(fig, path)


def plot_predictive_densities(samples: dict, path, truth_value=None) -> Path:
    """Projected-change densities, one curve per mode (plus prior if given)."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for mode, (grid, dens) in samples.items():
        color, style = _MODE_STYLE.get(mode, ("tab:blue", "-."))
        ax.plot(grid, dens, style, color=color, label=mode)
    if truth_value is not None:
        ax.axvline(truth_value, color="tab:red", linestyle=":", label="truth")
    ax.axvline(0.0, color="black", linewidth=0.5)
    ax.set_xlabel("projected change (m sle)")
    ax.set_ylabel("density")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def plot_envelopes(envelopes: dict, path) -> Path:
    """Pointwise 95% bands over the trajectory grid, one band per mode."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for mode, env in envelopes.items():
        color, style = _MODE_STYLE.get(mode, ("tab:blue", "-"))
        ax.plot(env["time"], env["mean"], style, color=color, label=f"{mode} mean")
        ax.plot(env["time"], env["lo95"], "--", color=color, linewidth=0.8)
        ax.plot(env["time"], env["hi95"], "--", color=color, linewidth=0.8)
    ax.axvline(0.0, color="black", linewidth=0.5)
    ax.set_xlabel("time (years, present = 0)")
    ax.set_ylabel("volume change (m sle)")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def plot_series_observation(time_coords, ensemble_values, obs_values, path) -> Path:
    """Observed series over the run ensemble spaghetti."""
    fig, ax = plt.subplots(figsize=(7, 4))
    step = max(len(ensemble_values) // 120, 1)  # cap the spaghetti density
    for row in ensemble_values[::step]:
        ax.plot(time_coords, row, color="0.8", linewidth=0.4)
    ax.plot(time_coords, obs_values, color="black", linewidth=1.2, label="observed")
    ax.set_xlabel("time (years, present = 0)")
    ax.set_ylabel("position (km)")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def plot_binary_observation(grid_field: np.ndarray, path) -> Path:
    """Observed coverage mask on its raster."""
    fig, ax = plt.subplots(figsize=(4, 7))
    ax.imshow(grid_field, cmap="gray_r", interpolation="nearest")
    ax.set_xlabel("column")
    ax.set_ylabel("row")
    fig.tight_layout()
    return _save(fig, path)


def plot_loo_errors(per_run_rmse: np.ndarray, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(np.arange(per_run_rmse.size), per_run_rmse, color="0.4")
    ax.set_xlabel("held-out run")
    ax.set_ylabel("rmse")
    fig.tight_layout()
    return _save(fig, path)
