"""Command-line pipeline: simulate -> reduce -> fit-emulator -> calibrate
-> project -> summarize, all reading and writing one run directory."""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import calibration as cal
from . import discrepancy as disc
from . import emulator as emu
from . import ensembles as ens
from . import projection as proj
from . import reduction as red
from . import synthetic as syn
from .config import ConfigError, RunConfig

_FMT = "%.17g"

_PRODUCERS = {
    "design.csv": "simulate",
    "retained_design.csv": "simulate",
    "retained_series.csv": "simulate",
    "series_ensemble.csv": "simulate",
    "binary_ensemble.csv": "simulate",
    "thickness.csv": "simulate",
    "volume_scalar.csv": "simulate",
    "volume_trajectory.csv": "simulate",
    "series_observation.csv": "simulate",
    "binary_observation.csv": "simulate",
    "reduction_series": "reduce",
    "reduction_binary": "reduce",
    "discrepancy_series_basis.csv": "reduce",
    "discrepancy_binary_basis.csv": "reduce",
    "emulators": "fit-emulator",
}


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _require(run_dir: Path, name: str) -> Path:
    path = run_dir / name
    if not path.exists():
        producer = _PRODUCERS.get(name, "an earlier command")
        raise FileNotFoundError(f"{name} missing; run {producer} first")
    return path


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt_row(values) -> list[str]:
    return [_FMT % v for v in values]


def _synthetic_config(cfg: RunConfig) -> syn.SyntheticConfig:
    return syn.SyntheticConfig(
        grid_rows=cfg.grid_rows,
        grid_cols=cfg.grid_cols,
        n_times=cfg.n_times,
        t_start=cfg.t_start,
        t_end=cfg.t_end,
        forecast_end=cfg.forecast_end,
        volume_step=cfg.volume_step,
        design_levels=cfg.design_levels,
        seed=cfg.seed,
        exclude_threshold=cfg.exclude_threshold,
        exclude_cutoff=cfg.exclude_cutoff,
        series_disc_sill=cfg.series_sill,
        series_disc_range=cfg.series_range,
        binary_keep_fraction=cfg.keep_fraction,
        theta_obs=tuple(cfg.theta_obs),
    )


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, run_dir: Path) -> None:
    scfg = _synthetic_config(cfg)
    run_dir.mkdir(parents=True, exist_ok=True)
    _log(f"simulate: {scfg.design_levels}^4 design, grid "
         f"{scfg.grid_rows}x{scfg.grid_cols}, {scfg.n_times} time points")
    bundle = syn.generate_ensemble(scfg)
    retained, excluded = ens.exclude_unrealistic_runs(
        bundle.series, scfg.exclude_threshold, scfg.exclude_cutoff
    )
    _log(f"simulate: retained {retained.n_runs} of {bundle.series.n_runs} runs")

    z1, z2, record = syn.make_simulated_observations(
        cfg.truth, scfg, seed=cfg.seed, ensemble=bundle
    )

    scfg.to_json(run_dir / "synthetic_config.json")
    ens.save_matrix(bundle.design, run_dir / "design.csv")
    ens.save_matrix(bundle.series, run_dir / "series_ensemble.csv")
    ens.save_matrix(retained.design, run_dir / "retained_design.csv")
    ens.save_matrix(retained, run_dir / "retained_series.csv")
    (run_dir / "excluded_runs.json").write_text(json.dumps({
        "excluded": excluded,
        "threshold": scfg.exclude_threshold,
        "cutoff": scfg.exclude_cutoff,
        "retained": retained.n_runs,
        "total": bundle.series.n_runs,
    }, indent=1) + "\n")
    ens.save_matrix(bundle.binary, run_dir / "binary_ensemble.csv")
    _write_csv(
        run_dir / "thickness.csv",
        bundle.binary.grid.cell_labels(),
        (_fmt_row(row) for row in bundle.thickness),
    )
    _write_csv(
        run_dir / "volume_scalar.csv",
        ["value"],
        ([_FMT % v] for v in bundle.volume_scalar),
    )
    _write_csv(
        run_dir / "volume_trajectory.csv",
        _fmt_row(scfg.volume_times),
        (_fmt_row(row) for row in bundle.volume_trajectories),
    )
    ens.save_matrix(z1, run_dir / "series_observation.csv")
    ens.save_matrix(z2, run_dir / "binary_observation.csv")
    (run_dir / "truth.json").write_text(json.dumps(record, indent=1) + "\n")
    _log("simulate: done")


def _load_design(run_dir: Path, name: str) -> ens.Design:
    return ens.load_matrix(_require(run_dir, name), "design")


def cmd_reduce(cfg: RunConfig, run_dir: Path) -> None:
    retained_design = _load_design(run_dir, "retained_design.csv")
    series = ens.load_matrix(
        _require(run_dir, "retained_series.csv"), "series", design=retained_design
    )
    _log(f"reduce: series channel, {cfg.j1} components on {series.n_runs} runs")
    pca, scores = red.fit_pca(series, cfg.j1)
    red.save_reduction(pca, scores.scores, run_dir / "reduction_series")

    full_design = _load_design(run_dir, "design.csv")
    binary = ens.load_matrix(
        _require(run_dir, "binary_ensemble.csv"), "binary", design=full_design
    )
    _log(f"reduce: binary channel, {cfg.j2} components on {binary.n_runs} runs")
    lpca = red.fit_logistic_pca(
        binary, cfg.j2, max_iter=cfg.lpca_max_iter, tol=cfg.lpca_tol
    )
    red.save_reduction(lpca, lpca.scores, run_dir / "reduction_binary")

    sdisc = disc.build_kernel_basis(
        series.time_coords, cfg.n_knots, cfg.disc_range, cfg.m_eff,
        orthogonalize_against=pca.eigenvectors(),
    )
    _write_csv(
        run_dir / "discrepancy_series_basis.csv",
        [f"col{j + 1}" for j in range(sdisc.m_eff)],
        (_fmt_row(row) for row in sdisc.basis),
    )
    z2 = ens.load_matrix(
        _require(run_dir, "binary_observation.csv"), "observation_binary"
    )
    bdisc = disc.build_binary_basis(binary, z2, cfg.mismatch_threshold)
    _write_csv(
        run_dir / "discrepancy_binary_basis.csv",
        ["column", "mismatch"],
        ([_FMT % c, _FMT % r] for c, r in zip(bdisc.column, bdisc.mismatch)),
    )
    (run_dir / "discrepancy_meta.json").write_text(json.dumps({
        "n_knots": cfg.n_knots,
        "range": cfg.disc_range,
        "m_eff": cfg.m_eff,
        "t_first": float(series.time_coords[0]),
        "t_last": float(series.time_coords[-1]),
        "mismatch_threshold": cfg.mismatch_threshold,
        "lpca_converged": bool(lpca.converged),
        "lpca_iterations": int(lpca.deviance_trace.size - 1),
    }, indent=1) + "\n")
    _log("reduce: done")


def cmd_fit_emulator(cfg: RunConfig, run_dir: Path, threads: int) -> None:
    retained_design = _load_design(run_dir, "retained_design.csv")
    _, series_scores = red.load_reduction(_require(run_dir, "reduction_series"))
    _log(f"fit-emulator: series bank, {series_scores.shape[1]} components")
    series_bank = emu.fit_bank(
        retained_design, series_scores, "series",
        restarts=cfg.restarts, seed=cfg.seed, threads=threads,
    )
    emu.warn_if_degenerate(series_bank)

    full_design = _load_design(run_dir, "design.csv")
    lpca, binary_scores = red.load_reduction(_require(run_dir, "reduction_binary"))
    _log(f"fit-emulator: binary bank, {binary_scores.shape[1]} components")
    binary_bank = emu.fit_bank(
        full_design, binary_scores, "binary",
        restarts=cfg.restarts, seed=cfg.seed + 7919, threads=threads,
    )
    emu.warn_if_degenerate(binary_bank)

    out = run_dir / "emulators"
    emu.save_bank(series_bank, out)
    emu.save_bank(binary_bank, out)
    _log("fit-emulator: done")


def cmd_loo_check(cfg: RunConfig, run_dir: Path, threads: int) -> None:
    retained_design = _load_design(run_dir, "retained_design.csv")
    series = ens.load_matrix(
        _require(run_dir, "retained_series.csv"), "series", design=retained_design
    )
    holdout = emu.central_holdout(retained_design, cfg.loo_runs)
    _log(f"loo-check: holding out {holdout.size} central runs")
    report = emu.leave_out_experiment(
        series, holdout, cfg.j1, restarts=max(cfg.restarts // 2, 1),
        seed=cfg.seed, threads=threads,
    )
    rows = [[str(int(i)), _FMT % r] for i, r in zip(report.holdout, report.per_run_rmse)]
    _write_csv(run_dir / "loo_report.csv", ["held_out_run", "rmse"], rows)
    summary = {
        "rmse": report.rmse,
        "standardized_rmse": report.standardized_rmse,
        "coverage90": report.coverage90,
        "holdout_size": int(holdout.size),
    }
    (run_dir / "loo_summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    _log(f"loo-check: standardized rmse {report.standardized_rmse:.3f}, "
         f"90% coverage {report.coverage90:.3f}")


def load_calibration_data(cfg: RunConfig, run_dir: Path, mode: str) -> cal.CalibrationData:
    full_design = _load_design(run_dir, "design.csv")
    lpca, _ = red.load_reduction(_require(run_dir, "reduction_binary"))
    z2 = ens.load_matrix(
        _require(run_dir, "binary_observation.csv"), "observation_binary"
    )
    with open(_require(run_dir, "discrepancy_binary_basis.csv"), newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    bdisc = disc.BinaryDiscrepancyBasis(
        column=np.array([float(r[0]) for r in rows]),
        threshold=cfg.mismatch_threshold,
        mismatch=np.array([float(r[1]) for r in rows]),
    )
    emu_dir = _require(run_dir, "emulators")
    binary_bank = emu.load_bank(emu_dir, "binary", full_design)

    robs = None
    series_bank = None
    if mode == "joint":
        retained_design = _load_design(run_dir, "retained_design.csv")
        pca, _ = red.load_reduction(_require(run_dir, "reduction_series"))
        with open(_require(run_dir, "discrepancy_series_basis.csv"), newline="") as fh:
            srows = list(csv.reader(fh))[1:]
        basis = np.array([[float(v) for v in r] for r in srows])
        meta = json.loads((run_dir / "discrepancy_meta.json").read_text())
        sdisc = disc.SeriesDiscrepancyBasis(
            basis=basis,
            raw_knots=np.linspace(meta["t_first"], meta["t_last"], meta["n_knots"]),
            range_=meta["range"],
            m_eff=meta["m_eff"],
        )
        z1 = ens.load_matrix(
            _require(run_dir, "series_observation.csv"), "observation_series"
        )
        robs = cal.reduce_observation(z1, pca, sdisc)
        series_bank = emu.load_bank(emu_dir, "series", retained_design)

    priors = cal.PriorConfig.from_banks(
        full_design,
        series_bank,
        kappa1_shape=cfg.kappa1_prior_shape,
        variance_shape=cfg.variance_prior_shape,
        variance_scale=cfg.variance_prior_scale,
    )
    return cal.CalibrationData(
        z2=z2.values,
        lpca=lpca,
        bdisc=bdisc,
        binary_bank=binary_bank,
        priors=priors,
        robs=robs,
        series_bank=series_bank,
    )


def _write_chain_outputs(out_dir: Path, chain: cal.PosteriorChain, seed: int) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    header = ["iteration", "log_post"] + chain.names
    rows = (
        [str(i), _FMT % lp] + _fmt_row(row)
        for i, (lp, row) in enumerate(zip(chain.log_posts, chain.samples))
    )
    _write_csv(out_dir / "chain.csv", header, rows)

    stability = cal.half_chain_stability(chain) if chain.samples.shape[0] >= 100 else {}
    diagnostics = {
        "mode": chain.mode,
        "iterations": chain.iterations,
        "burn_in": chain.burn_in,
        "thin": chain.thin,
        "seed": seed,
        "acceptance": chain.acceptance,
        "mcse": chain.mcse,
        "ks_stability": stability,
    }
    (out_dir / "diagnostics.json").write_text(json.dumps(diagnostics, indent=1) + "\n")

    summary = chain.summary()
    _write_csv(
        out_dir / "posterior_summary.csv",
        ["parameter", "mean", "sd", "q2.5", "median", "q97.5", "mcse"],
        (
            [r["parameter"]] + _fmt_row(
                [r["mean"], r["sd"], r["q2.5"], r["median"], r["q97.5"], r["mcse"]]
            )
            for r in summary
        ),
    )
    density_params = [n for n in chain.names if n.startswith("theta_")]
    density_params += [n for n in ("nu2_1", "alpha1_sq", "alpha2_sq", "sigma_eps_sq")
                       if n in chain.names]
    for name in density_params:
        grid, dens = chain.density_grid(name)
        _write_csv(
            out_dir / f"density_{name}.csv",
            ["value", "density"],
            ([_FMT % g, _FMT % d] for g, d in zip(grid, dens)),
        )


def cmd_calibrate(cfg: RunConfig, run_dir: Path, threads: int) -> None:
    mode = cfg.mode
    data = load_calibration_data(cfg, run_dir, mode)
    init = cal.initial_state(data, mode)
    prop = cal.ProposalConfig(scales=cfg.proposal_scales())
    seeds = [cfg.seed + 1000 * i for i in range(cfg.chains)]
    _log(f"calibrate: mode={mode}, {cfg.iterations} iterations, "
         f"{cfg.chains} chain(s)")

    def run_one(chain_seed: int) -> cal.PosteriorChain:
        return cal.run_mcmc(
            init, data, mode, cfg.iterations, proposal=prop, seed=chain_seed,
            burn_in_frac=cfg.burn_in_frac, thin=cfg.thin,
        )

    if cfg.chains > 1 and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chains = list(pool.map(run_one, seeds))
    else:
        chains = [run_one(s) for s in seeds]

    out_dir = run_dir / f"calibration_{mode}"
    _write_chain_outputs(out_dir, chains[0], seeds[0])
    for i, extra in enumerate(chains[1:], start=1):
        sub = out_dir / f"chain_{i}"
        _write_chain_outputs(sub, extra, seeds[i])
    acc = ", ".join(f"{k}={v:.2f}" for k, v in chains[0].acceptance.items())
    _log(f"calibrate: acceptance {acc}")


def cmd_project(cfg: RunConfig, run_dir: Path) -> None:
    mode = cfg.mode
    chain_csv = run_dir / f"calibration_{mode}" / "chain.csv"
    if not chain_csv.exists():
        raise FileNotFoundError(
            f"calibration_{mode}/chain.csv missing; run calibrate first"
        )
    with open(chain_csv, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = [header.index(f"theta_{i + 1}") for i in range(4)]
        thetas = np.array([[float(row[c]) for c in cols] for row in reader])

    design = _load_design(run_dir, "design.csv")
    with open(_require(run_dir, "volume_scalar.csv"), newline="") as fh:
        vrows = list(csv.reader(fh))[1:]
    scalar = proj.ScalarResponseSet(design, np.array([float(r[0]) for r in vrows]))
    _log("project: fitting scalar response emulator")
    scalar_emu = proj.fit_projection_emulator(scalar, restarts=cfg.restarts, seed=cfg.seed)

    predictive = proj.chain_to_predictive(
        thetas, scalar_emu, seed=cfg.seed, mean_only=cfg.mean_only
    )
    prior = proj.prior_predictive(
        scalar_emu, cfg.n_prior_draws, seed=cfg.seed + 1, mean_only=cfg.mean_only
    )

    out_dir = run_dir / f"projection_{mode}"
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / "projection_sample.csv", ["value"],
               ([_FMT % v] for v in predictive.values))
    _write_csv(out_dir / "prior_sample.csv", ["value"],
               ([_FMT % v] for v in prior.values))
    summary = predictive.summary()
    summary["prob_negative"] = predictive.prob_below(0.0)
    prior_summary = prior.summary()
    prior_summary["prob_negative"] = prior.prob_below(0.0)
    _write_csv(
        out_dir / "projection_summary.csv",
        ["statistic", "posterior", "prior"],
        ([k, _FMT % summary[k], _FMT % prior_summary[k]] for k in summary),
    )

    with open(_require(run_dir, "volume_trajectory.csv"), newline="") as fh:
        rows = list(csv.reader(fh))
    times = np.array([float(v) for v in rows[0]])
    trajs = np.array([[float(v) for v in r] for r in rows[1:]])
    traj_set = proj.TrajectoryResponseSet(design, times, trajs)
    _log("project: fitting trajectory emulator")
    traj_emu = proj.fit_trajectory_emulator(
        traj_set, cfg.trajectory_components,
        restarts=max(cfg.restarts // 2, 1), seed=cfg.seed,
    )
    envelope = proj.trajectory_envelope(
        thetas, traj_emu, seed=cfg.seed, mean_only=cfg.mean_only
    )
    _write_csv(
        out_dir / "envelope.csv",
        ["time", "mean", "lo95", "median", "hi95"],
        (
            _fmt_row(vals)
            for vals in zip(envelope.times, envelope.mean, envelope.lo95,
                            envelope.median, envelope.hi95)
        ),
    )
    _log(f"project: P(change < 0) = {summary['prob_negative']:.4f}")


def _read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _md_table(header: list[str], rows) -> str:
    lines = ["| " + " | ".join(header) + " |",
             "| " + " | ".join("---" for _ in header) + " |"]
    for row in rows:
        lines.append("| " + " | ".join(str(c) for c in row) + " |")
    return "\n".join(lines) + "\n"


def _round_cells(rows, digits=4):
    out = []
    for row in rows:
        cells = []
        for c in row:
            try:
                cells.append(f"{float(c):.{digits}g}")
            except ValueError:
                cells.append(c)
        out.append(cells)
    return out


def cmd_summarize(cfg: RunConfig, run_dir: Path) -> None:
    from . import figures as figs

    sections: list[str] = ["# Run report\n"]
    fig_dir = run_dir / "figures"
    truth = None
    truth_path = run_dir / "truth.json"
    if truth_path.exists():
        record = json.loads(truth_path.read_text())
        truth = record.get("theta_true")
        sections.append(
            "## Simulated truth\n\n"
            + _md_table(
                ["theta_1", "theta_2", "theta_3", "theta_4", "true change (m)"],
                [[*(f"{v:.3g}" for v in truth),
                  f"{record['true_volume_change_500']:.4g}"]],
            )
        )

    excl = run_dir / "excluded_runs.json"
    if excl.exists():
        e = json.loads(excl.read_text())
        sections.append(
            f"## Run screening\n\nRetained {e['retained']} of {e['total']} runs "
            f"(threshold {e['threshold']}, cutoff {e['cutoff']}).\n"
        )

    loo = run_dir / "loo_summary.json"
    if loo.exists():
        s = json.loads(loo.read_text())
        sections.append(
            "## Leave-out check\n\n"
            + _md_table(
                ["held out", "rmse", "standardized rmse", "90% coverage"],
                [[s["holdout_size"], f"{s['rmse']:.4g}",
                  f"{s['standardized_rmse']:.4g}", f"{s['coverage90']:.3f}"]],
            )
        )
        header, rows = _read_table(run_dir / "loo_report.csv")
        figs.plot_loo_errors(
            np.array([float(r[1]) for r in rows]), fig_dir / "loo_errors.png"
        )

    densities: dict = {}
    widths: dict = {}
    for mode in ("joint", "binary_only"):
        cal_dir = run_dir / f"calibration_{mode}"
        if not (cal_dir / "posterior_summary.csv").exists():
            continue
        header, rows = _read_table(cal_dir / "posterior_summary.csv")
        keep = [r for r in rows if r[0].startswith("theta_")
                or r[0] in ("nu2_1", "alpha1_sq", "alpha2_sq", "sigma_eps_sq")]
        sections.append(f"## Posterior summary ({mode})\n\n"
                        + _md_table(header, _round_cells(keep)))
        diag = json.loads((cal_dir / "diagnostics.json").read_text())
        acc_rows = [[k, f"{v:.3f}"] for k, v in diag["acceptance"].items()]
        sections.append(f"### Acceptance rates ({mode})\n\n"
                        + _md_table(["block", "rate"], acc_rows))
        ks = diag.get("ks_stability", {})
        if ks:
            ks_rows = [[n, f"{v['ks']:.4f}", v["flag"]]
                       for n, v in ks.items() if n.startswith("theta_")]
            sections.append(f"### Half-chain stability ({mode})\n\n"
                            + _md_table(["parameter", "ks", "flag"], ks_rows))
        per_param = {}
        for name in ("theta_1", "theta_2", "theta_3", "theta_4"):
            dpath = cal_dir / f"density_{name}.csv"
            if dpath.exists():
                _, drows = _read_table(dpath)
                arr = np.array([[float(a), float(b)] for a, b in drows])
                per_param[name] = (arr[:, 0], arr[:, 1])
        if per_param:
            densities[mode] = per_param
        widths[mode] = {r[0]: float(r[2]) for r in rows}

    if densities:
        figs.plot_theta_densities(densities, fig_dir / "theta_densities.png", truth)

    if "joint" in widths and "binary_only" in widths:
        rows = []
        for name in ("theta_1", "theta_2", "theta_3", "theta_4"):
            j = widths["joint"].get(name)
            b = widths["binary_only"].get(name)
            if j is None or b is None:
                continue
            rows.append([name, f"{j:.4g}", f"{b:.4g}",
                         "narrower" if j <= b else "wider"])
        sections.append("## Joint vs binary-only posterior sd\n\n"
                        + _md_table(["parameter", "joint sd", "binary-only sd",
                                     "joint is"], rows))

    pred_curves: dict = {}
    envelopes: dict = {}
    proj_rows = []
    for mode in ("joint", "binary_only"):
        proj_dir = run_dir / f"projection_{mode}"
        if not (proj_dir / "projection_summary.csv").exists():
            continue
        header, rows = _read_table(proj_dir / "projection_summary.csv")
        stats = {r[0]: float(r[1]) for r in rows}
        proj_rows.append([mode, f"{stats['mean']:.4g}", f"{stats['sd']:.4g}",
                          f"{stats['q2.5']:.4g}", f"{stats['q97.5']:.4g}",
                          f"{stats['prob_negative']:.4g}"])
        _, srows = _read_table(proj_dir / "projection_sample.csv")
        sample = proj.PredictiveSample(np.array([float(r[0]) for r in srows]))
        pred_curves[mode] = sample.density_grid()
        epath = proj_dir / "envelope.csv"
        if epath.exists():
            _, erows = _read_table(epath)
            arr = np.array([[float(v) for v in r] for r in erows])
            envelopes[mode] = {"time": arr[:, 0], "mean": arr[:, 1],
                               "lo95": arr[:, 2], "hi95": arr[:, 4]}
    if proj_rows:
        sections.append("## Projected change at the forecast horizon\n\n"
                        + _md_table(
                            ["mode", "mean", "sd", "q2.5", "q97.5", "P(<0)"],
                            proj_rows))
    if pred_curves:
        tv = None
        if truth_path.exists():
            tv = json.loads(truth_path.read_text())["true_volume_change_500"]
        figs.plot_predictive_densities(
            pred_curves, fig_dir / "predictive_densities.png", tv
        )
    if envelopes:
        figs.plot_envelopes(envelopes, fig_dir / "envelopes.png")
        if "joint" in envelopes and "binary_only" in envelopes:
            wj = envelopes["joint"]["hi95"][-1] - envelopes["joint"]["lo95"][-1]
            wb = (envelopes["binary_only"]["hi95"][-1]
                  - envelopes["binary_only"]["lo95"][-1])
            sections.append(
                "## Forecast envelope width at the horizon\n\n"
                + _md_table(["mode", "width"],
                            [["joint", f"{wj:.4g}"],
                             ["binary_only", f"{wb:.4g}"]])
            )

    obs_path = run_dir / "series_observation.csv"
    if obs_path.exists() and (run_dir / "retained_series.csv").exists():
        z1 = ens.load_matrix(obs_path, "observation_series")
        rd = _load_design(run_dir, "retained_design.csv")
        series = ens.load_matrix(run_dir / "retained_series.csv", "series", design=rd)
        figs.plot_series_observation(
            series.time_coords, series.values, z1.values,
            fig_dir / "series_observation.png",
        )
    bobs_path = run_dir / "binary_observation.csv"
    if bobs_path.exists():
        z2 = ens.load_matrix(bobs_path, "observation_binary")
        figs.plot_binary_observation(
            z2.grid.to_full(z2.values.astype(float)),
            fig_dir / "binary_observation.png",
        )

    if fig_dir.exists():
        names = sorted(p.name for p in fig_dir.glob("*.png"))
        sections.append("## Figures\n\n"
                        + "\n".join(f"- figures/{n}" for n in names) + "\n")

    (run_dir / "report.md").write_text("\n".join(sections))
    n_figs = len(list(fig_dir.glob("*.png"))) if fig_dir.exists() else 0
    _log(f"summarize: wrote report.md and {n_figs} figures")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="redcal",
        description="Reduced-dimension emulation and calibration pipeline",
    )
    parser.add_argument("--print-defaults", action="store_true",
                        help="print the default config file and exit")
    sub = parser.add_subparsers(dest="command")
    for name in ("simulate", "reduce", "fit-emulator", "loo-check",
                 "calibrate", "project", "summarize"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="key-value config file")
        p.add_argument("--out", required=True, help="run directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--mode", choices=("binary_only", "joint"),
                       help="calibration mode")
        p.add_argument("--iters", type=int, help="override iteration count")
        p.add_argument("--chains", type=int, help="number of independent chains")
        p.add_argument("--threads", type=int, help="worker threads "
                       "(falls back to REDCAL_THREADS)")
    return parser


def _resolve_threads(args) -> int:
    if args.threads is not None:
        return max(args.threads, 1)
    env = os.environ.get("REDCAL_THREADS")
    if env:
        try:
            return max(int(env), 1)
        except ValueError:
            raise ConfigError(f"REDCAL_THREADS={env!r} is not an integer") from None
    return 1


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults:
        print(RunConfig().to_text(), end="")
        return 0
    if not args.command:
        parser.print_help(sys.stderr)
        return 2
    try:
        cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.mode is not None:
            cfg.mode = args.mode
        if args.iters is not None:
            cfg.iterations = args.iters
        if args.chains is not None:
            cfg.chains = args.chains
        cfg.validate()
        threads = _resolve_threads(args)
        cfg.threads = threads
        run_dir = Path(args.out)
        if args.command == "simulate":
            cmd_simulate(cfg, run_dir)
        elif args.command == "reduce":
            cmd_reduce(cfg, run_dir)
        elif args.command == "fit-emulator":
            cmd_fit_emulator(cfg, run_dir, threads)
        elif args.command == "loo-check":
            cmd_loo_check(cfg, run_dir, threads)
        elif args.command == "calibrate":
            cmd_calibrate(cfg, run_dir, threads)
        elif args.command == "project":
            cmd_project(cfg, run_dir)
        elif args.command == "summarize":
            cmd_summarize(cfg, run_dir)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        _log(f"error: {exc}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
