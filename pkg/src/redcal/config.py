"""Run configuration: one flat key-value file with sections.

Every pipeline parameter has a default here and is validated against the
module preconditions before any compute starts. The file format is plain
``key = value`` lines under ``[section]`` headers (configparser syntax,
``#`` comments allowed), so simple TOML-style files parse too.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, fields
from io import StringIO
from pathlib import Path

__all__ = ["RunConfig", "ConfigError"]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # [simulate]
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
    series_sill: float = 90.0
    series_range: float = 10500.0
    keep_fraction: float = 0.9
    truth: tuple = (0.5, 0.5, 0.5, 0.4)
    theta_obs: tuple = (0.45, 0.55, 0.5, 0.45)

    # [reduce]
    j1: int = 20
    j2: int = 10
    n_knots: int = 1500
    disc_range: float = 750.0
    m_eff: int = 300
    mismatch_threshold: float = 0.5
    lpca_max_iter: int = 500
    lpca_tol: float = 1e-6

    # [emulator]
    restarts: int = 8
    threads: int = 1
    loo_runs: int = 60

    # [calibrate]
    iterations: int = 20000
    burn_in_frac: float = 0.2
    thin: int = 1
    mode: str = "joint"
    chains: int = 1
    scale_theta: float = 0.3
    scale_psi: float = 0.15
    scale_kappa1: float = 0.2
    scale_nu2_alpha2: float = 0.25
    scale_alpha1_sigma: float = 0.25
    scale_r_nu: float = 0.05
    kappa1_prior_shape: float = 50.0
    variance_prior_shape: float = 2.0
    variance_prior_scale: float = 3.0

    # [project]
    horizon: float = 500.0
    n_prior_draws: int = 4000
    trajectory_components: int = 8
    mean_only: bool = False

    _SECTIONS = {
        "simulate": (
            "grid_rows", "grid_cols", "n_times", "t_start", "t_end",
            "forecast_end", "volume_step", "design_levels", "seed",
            "exclude_threshold", "exclude_cutoff", "series_sill",
            "series_range", "keep_fraction", "truth", "theta_obs",
        ),
        "reduce": (
            "j1", "j2", "n_knots", "disc_range", "m_eff",
            "mismatch_threshold", "lpca_max_iter", "lpca_tol",
        ),
        "emulator": ("restarts", "threads", "loo_runs"),
        "calibrate": (
            "iterations", "burn_in_frac", "thin", "mode", "chains",
            "scale_theta", "scale_psi", "scale_kappa1", "scale_nu2_alpha2",
            "scale_alpha1_sigma", "scale_r_nu", "kappa1_prior_shape",
            "variance_prior_shape", "variance_prior_scale",
        ),
        "project": (
            "horizon", "n_prior_draws", "trajectory_components", "mean_only",
        ),
    }

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        text = Path(path).read_text()
        return cls.from_text(text, source=str(path))

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from None
        cfg = cls()
        types = {f.name: f.type for f in fields(cls)}
        for section in parser.sections():
            if section not in cls._SECTIONS:
                raise ConfigError(f"{source}: unknown section [{section}]")
            for key, raw in parser.items(section):
                if key not in cls._SECTIONS[section]:
                    raise ConfigError(
                        f"{source}: unknown key {key!r} in section [{section}]"
                    )
                setattr(cfg, key, _convert(key, raw, getattr(cfg, key)))
        cfg.validate()
        return cfg

    def to_text(self) -> str:
        out = StringIO()
        for section, keys in self._SECTIONS.items():
            out.write(f"[{section}]\n")
            for key in keys:
                val = getattr(self, key)
                if isinstance(val, tuple):
                    val = ",".join(repr(v) for v in val)
                elif isinstance(val, bool):
                    val = "true" if val else "false"
                out.write(f"{key} = {val}\n")
            out.write("\n")
        return out.getvalue()

    def validate(self) -> None:
        checks = [
            (self.grid_rows > 0, "grid_rows must be positive"),
            (self.grid_cols > 0, "grid_cols must be positive"),
            (self.n_times >= 2, "n_times must be at least 2"),
            (self.t_start < self.t_end, "t_start must precede t_end"),
            (self.design_levels >= 2, "design_levels must be at least 2"),
            (self.t_start <= self.exclude_cutoff <= self.t_end,
             "exclude_cutoff outside the time range"),
            (self.series_sill >= 0, "series_sill must be non-negative"),
            (self.series_range > 0, "series_range must be positive"),
            (0 < self.keep_fraction <= 1, "keep_fraction must lie in (0, 1]"),
            (len(self.truth) == 4 and all(0 <= v <= 1 for v in self.truth),
             "truth must be 4 values in [0, 1]"),
            (len(self.theta_obs) == 4 and all(0 <= v <= 1 for v in self.theta_obs),
             "theta_obs must be 4 values in [0, 1]"),
            (self.j1 >= 1, "j1 must be at least 1"),
            (self.j2 >= 1, "j2 must be at least 1"),
            (self.n_knots >= 2, "n_knots must be at least 2"),
            (self.disc_range > 0, "disc_range must be positive"),
            (1 <= self.m_eff <= min(self.n_knots, self.n_times),
             "m_eff must lie in [1, min(n_knots, n_times)]"),
            (0 < self.mismatch_threshold < 1,
             "mismatch_threshold must lie strictly between 0 and 1"),
            (self.lpca_max_iter >= 1, "lpca_max_iter must be positive"),
            (self.lpca_tol > 0, "lpca_tol must be positive"),
            (self.restarts >= 1, "restarts must be at least 1"),
            (self.threads >= 1, "threads must be at least 1"),
            (self.loo_runs >= 1, "loo_runs must be at least 1"),
            (self.iterations >= 1, "iterations must be positive"),
            (0 <= self.burn_in_frac < 1, "burn_in_frac must lie in [0, 1)"),
            (self.thin >= 1, "thin must be at least 1"),
            (self.mode in ("binary_only", "joint"),
             "mode must be binary_only or joint"),
            (self.chains >= 1, "chains must be at least 1"),
            (self.kappa1_prior_shape > 0, "kappa1_prior_shape must be positive"),
            (self.variance_prior_shape > 0, "variance_prior_shape must be positive"),
            (self.variance_prior_scale > 0, "variance_prior_scale must be positive"),
            (self.horizon > 0, "horizon must be positive"),
            (self.n_prior_draws >= 1, "n_prior_draws must be positive"),
            (self.trajectory_components >= 1,
             "trajectory_components must be positive"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        for name in ("scale_theta", "scale_psi", "scale_kappa1",
                     "scale_nu2_alpha2", "scale_alpha1_sigma", "scale_r_nu"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")

    def proposal_scales(self) -> dict:
        return {
            "theta": self.scale_theta,
            "psi": self.scale_psi,
            "kappa1": self.scale_kappa1,
            "nu2_alpha2": self.scale_nu2_alpha2,
            "alpha1_sigma": self.scale_alpha1_sigma,
            "r_nu": self.scale_r_nu,
        }


def _convert(key: str, raw: str, default):
    raw = raw.strip().strip('"').strip("'")
    try:
        if isinstance(default, bool):
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(v) for v in raw.split(","))
        return raw
    except ValueError:
        raise ConfigError(f"cannot parse {key} = {raw!r}") from None
