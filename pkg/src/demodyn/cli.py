"""Command-line entry points: simulate, fit, validate, predict."""

from __future__ import annotations

import argparse
import sys
import warnings
from dataclasses import replace

import numpy as np

from . import dataio, report
from .config import RunConfig, load_config
from .inference import ModelData, effective_sample_size, run_chain
from .rates import build_design_matrices
from .state import InitialStateMeans, estimate_initial_means, simulate_trajectory
from .observation import apply_sightability, sample_ground_observation
from .validation import (SurveyUnits, balanced_bootstrap, bootstrap_estimates,
                         coverage_report, generate_synthetic_series,
                         irmcmc_refit, jolly_method2)

CLASS_COLUMNS = ["newborn", "quarter", "halfyear", "adult_f", "adult_m", "total"]


def _load_covariates(cfg: RunConfig, ground=None):
    covs = dataio.load_covariates(cfg.path("covariates"))
    if ground is not None:
        covs = dataio.attach_population_covariates(covs, ground.totals_by_month())
    return covs


def _sim_init_means(cfg: RunConfig) -> InitialStateMeans:
    props = cfg.simulate.class_proportions
    t0 = cfg.simulate.aerial_total_t0
    return InitialStateMeans.uniform_within_class(
        props["new"] * t0, props["quarter"] * t0, props["halfyear"] * t0,
        props["adult_f"] * t0, props["adult_m"] * t0)


def build_model_data(covs, ground, aerial, cfg: RunConfig) -> ModelData:
    """Assemble sampler inputs; the covariate window defines the clock."""
    start = (covs[0].year, covs[0].month)
    n = len(covs)
    obs = ground.observation_array(start, n)
    if not (obs >= 0).any():
        raise ValueError("no ground records fall inside the covariate window")
    if aerial is not None:
        svy_months, svy_totals = aerial.survey_arrays(start, n)
    else:
        svy_months = np.zeros(0, dtype=np.int64)
        svy_totals = np.zeros(0, dtype=np.int64)
    t0 = cfg.fit.aerial_total_t0
    if t0 is None:
        if len(svy_totals):
            t0 = float(svy_totals[0])
        else:
            seen = obs[:, obs[0] >= 0]
            t0 = float(seen.sum(axis=0).mean())
            warnings.warn("no aerial data and no fit.aerial_total_t0; scaling "
                          f"initial means to the mean observed total ({t0:.0f})")
    means = estimate_initial_means(ground, t0)
    return ModelData(design=build_design_matrices(covs), obs=obs,
                     svy_months=svy_months, svy_totals=svy_totals,
                     init_means=means, hyper=cfg.hyper)


def _months_column(covs, n_rows):
    start = (covs[0].year, covs[0].month)
    t0y, t0m = dataio.add_months(start, -1)
    out = [(t0y, t0m)]
    out.extend((c.year, c.month) for c in covs[:n_rows - 1])
    return out


def _write_summary(cfg: RunConfig, result, covs) -> None:
    out = cfg.output_dir
    rows = []
    for i, name in enumerate(result.names):
        ess = effective_sample_size(result.params[:, i])
        rows.append((name, result.summary.mean[i], result.summary.sd[i],
                     result.summary.lower[i], result.summary.upper[i], ess))
    dataio.write_csv(out / "summary.csv",
                     ["parameter", "mean", "sd", "lower", "upper", "ess"], rows)

    sample_rows = []
    for s in range(result.params.shape[0]):
        it = int(result.iterations[s])
        for i, name in enumerate(result.names):
            sample_rows.append((it, name, result.params[s, i]))
    dataio.write_csv(out / "samples.csv", ["iteration", "parameter", "value"],
                     sample_rows)

    months = _months_column(covs, result.summary.class_mean.shape[1])
    traj_rows = []
    for cls, label in enumerate(CLASS_COLUMNS):
        for t, (y, m) in enumerate(months):
            traj_rows.append((y, m, label, result.summary.class_mean[cls, t],
                              result.summary.class_lower[cls, t],
                              result.summary.class_upper[cls, t]))
    dataio.write_csv(out / "trajectory.csv",
                     ["year", "month", "class", "mean", "lower", "upper"],
                     traj_rows)


def _print_fit_table(result) -> None:
    print(f"{'parameter':<14}{'mean':>12}{'sd':>12}{'2.5%':>12}{'97.5%':>12}")
    for i, name in enumerate(result.names):
        print(f"{name:<14}{result.summary.mean[i]:>12.4g}"
              f"{result.summary.sd[i]:>12.4g}{result.summary.lower[i]:>12.4g}"
              f"{result.summary.upper[i]:>12.4g}")
    print("acceptance rates: "
          + ", ".join(f"{k}={v:.2f}" for k, v in result.acceptance.items()
                      if np.isfinite(v)))


def cmd_simulate(cfg: RunConfig) -> int:
    ground = dataio.load_ground(cfg.path("ground")) if cfg.paths.get("ground") else None
    covs = _load_covariates(cfg, ground)
    n = cfg.simulate.n_months
    if len(covs) < n:
        raise ValueError(f"covariates supply {len(covs)} usable months, "
                         f"but simulate.n_months = {n}")
    covs = covs[:n]
    rng = np.random.default_rng(cfg.seed)
    coefs = cfg.simulate_coefficients()
    traj = simulate_trajectory(n, covs, coefs, cfg.hyper, _sim_init_means(cfg), rng)

    records = []
    for t in range(1, n + 1):
        g = sample_ground_observation(traj.state(t), cfg.hyper.obs_var, t, rng)
        cov = covs[t - 1]
        records.append((cov.year, cov.month, g.new, g.quarter, g.halfyear,
                        g.adult_f, g.adult_m))
    out = cfg.output_dir
    dataio.write_ground(out / "ground_synthetic.csv", records)

    totals = traj.class_totals()
    months = _months_column(covs, n + 1)
    rows = [(y, m, *(int(totals[c][t]) for c in range(6)))
            for t, (y, m) in enumerate(months)]
    dataio.write_csv(out / "trajectory_true.csv",
                     ["year", "month", *CLASS_COLUMNS], rows)
    report.save_simulated_trajectory(out / "simulated_trajectory.png", totals)
    print(f"simulated {n} months; ground counts in {out / 'ground_synthetic.csv'}")
    return 0


def _fit(cfg: RunConfig, keep_states: bool = False):
    ground = dataio.load_ground(cfg.path("ground"))
    covs = _load_covariates(cfg, ground)
    aerial = dataio.load_aerial(cfg.path("aerial")) if cfg.paths.get("aerial") else None
    data = build_model_data(covs, ground, aerial, cfg)
    chain = replace(cfg.chain, keep_states=keep_states) if keep_states else cfg.chain
    result = run_chain(chain, data, cfg.priors)
    if not np.isfinite(result.summary.mean).all():
        raise RuntimeError("posterior summary contains non-finite values")
    return result, data, covs, aerial


def cmd_fit(cfg: RunConfig) -> int:
    result, data, covs, _ = _fit(cfg)
    _write_summary(cfg, result, covs)
    out = cfg.output_dir
    report.save_traces(out / "traces.png", result)
    report.save_class_trajectories(out / "trajectories_young.png", result.summary,
                                   classes=(0, 1, 2), obs=data.obs)
    report.save_class_trajectories(out / "trajectories_adult.png", result.summary,
                                   classes=(3, 4, 5), obs=data.obs)
    _print_fit_table(result)
    return 0


def cmd_predict(cfg: RunConfig) -> int:
    result, data, covs, aerial = _fit(cfg)
    _write_summary(cfg, result, covs)
    out = cfg.output_dir

    n_samples, _, t1 = result.class_totals.shape
    rng = np.random.default_rng(cfg.seed + 977)
    k_draws = rng.beta(cfg.hyper.k_prior_a, cfg.hyper.k_prior_b,
                       size=(n_samples, t1))
    for j, t in enumerate(data.svy_months):
        col = result.names.index(f"k[{int(t)}]")
        k_draws[:, t] = result.params[:, col]
    eco = k_draws * result.class_totals[:, 5, :]
    mean = eco.mean(axis=0)
    lower = np.quantile(eco, 0.025, axis=0)
    upper = np.quantile(eco, 0.975, axis=0)

    months = _months_column(covs, t1)
    rows = [(y, m, mean[t], lower[t], upper[t])
            for t, (y, m) in enumerate(months)]
    dataio.write_csv(out / "prediction.csv",
                     ["year", "month", "mean", "lower", "upper"], rows)

    aerial_overlay = None
    comp_rows = []
    if aerial is not None and data.n_surveys:
        start = (covs[0].year, covs[0].month)
        corr_t, corr_est, corr_se = [], [], []
        for rec in aerial:
            t = dataio.month_offset(start, (rec.year, rec.month)) + 1
            if not 1 <= t <= t1 - 1:
                continue
            est, se = apply_sightability(rec.estimate, rec.se,
                                         cfg.hyper.aerial_sightability)
            corr_t.append(t)
            corr_est.append(est)
            corr_se.append(se)
            inside = int(lower[t] <= est <= upper[t])
            comp_rows.append((rec.year, rec.month, rec.estimate, rec.se, est, se,
                              mean[t], lower[t], upper[t], inside))
        dataio.write_csv(out / "aerial_comparison.csv",
                         ["year", "month", "estimate", "se",
                          "corrected_estimate", "corrected_se",
                          "predicted_mean", "lower", "upper", "inside_band"],
                         comp_rows)
        aerial_overlay = (np.array(corr_t), np.array(corr_est), np.array(corr_se))

    report.save_prediction(out / "prediction.png", np.arange(t1), mean, lower,
                           upper, aerial_overlay)
    print(f"predicted ecosystem totals written to {out / 'prediction.csv'}")
    return 0


def cmd_validate(cfg: RunConfig) -> int:
    ids, areas, counts = dataio.load_units(cfg.path("units"))
    aerial = dataio.load_aerial(cfg.path("aerial"))
    covs = _load_covariates(cfg)
    n = min(cfg.simulate.n_months, len(covs))
    covs = covs[:n]
    start = (covs[0].year, covs[0].month)
    svy_months, svy_totals = aerial.survey_arrays(start, n)
    if len(svy_months) < 2:
        raise ValueError("validation needs at least two aerial surveys inside "
                         "the covariate window")
    vc = cfg.validate
    template = SurveyUnits(areas, counts, vc.frame_area, vc.frame_units)

    # scale the template's unit counts so each survey's ratio estimate matches
    # its reported total, then bootstrap each survey
    y_hat, _ = jolly_method2(template)
    out = cfg.output_dir
    boot_rows = []
    estimates = np.empty((vc.n_bootstrap, len(svy_months)))
    for s, (t_s, total_s) in enumerate(zip(svy_months, svy_totals)):
        scale = float(total_s) / y_hat if y_hat > 0 else 0.0
        units_s = SurveyUnits(areas, counts * scale, vc.frame_area, vc.frame_units)
        rng_s = np.random.default_rng(cfg.seed + 101 * (s + 1))
        plan = balanced_bootstrap(units_s, vc.n_bootstrap, rng_s)
        est = bootstrap_estimates(units_s, plan)
        estimates[:, s] = est[:, 0]
        for r in range(vc.n_bootstrap):
            boot_rows.append((int(t_s), r + 1, est[r, 0], est[r, 1]))
    dataio.write_csv(out / "bootstrap_estimates.csv",
                     ["survey_month", "replicate", "estimate", "se"], boot_rows)
    report.save_bootstrap_series(out / "bootstrap_series.png", svy_months,
                                 estimates)

    n_series = min(vc.n_series, vc.n_bootstrap)
    coefs = cfg.simulate_coefficients()
    series_data = []
    for r in range(n_series):
        rng_r = np.random.default_rng(cfg.seed + 7919 * (r + 1))
        records, targets = generate_synthetic_series(
            svy_months, estimates[r], n, covs, coefs, cfg.hyper,
            _sim_init_means(cfg), rng_r)
        dataio.write_ground(out / f"synthetic_{r + 1:02d}.csv", records)
        ground_r = dataio.GroundSeries([dataio.GroundRecord(*rec) for rec in records])
        means_r = estimate_initial_means(ground_r, targets[0])
        data_r = ModelData(design=build_design_matrices(covs),
                           obs=ground_r.observation_array(start, n),
                           svy_months=np.zeros(0, dtype=np.int64),
                           svy_totals=np.zeros(0, dtype=np.int64),
                           init_means=means_r, hyper=cfg.hyper)
        series_data.append((data_r, targets))

    ref_cfg = replace(cfg.chain, n_iter=vc.reference_iters,
                      burn_in=vc.reference_burn_in, keep_states=True,
                      update_k=False, seed=cfg.seed)
    reference = run_chain(ref_cfg, series_data[0][0], cfg.priors)
    short_cfg = replace(cfg.chain, n_iter=vc.short_iters,
                        burn_in=vc.short_burn_in, thin=max(1, cfg.chain.thin // 10),
                        keep_states=False, update_k=False, adapt=False)

    coverages = []
    rng = np.random.default_rng(cfg.seed + 33)
    for r, (data_r, targets) in enumerate(series_data):
        if r == 0:
            summary_r = reference.summary
        else:
            refit, _ess = irmcmc_refit(reference, series_data[0][0], data_r,
                                       cfg.priors, short_cfg, rng,
                                       n_seeds=vc.n_seeds)
            summary_r = refit.summary
        coverages.append(coverage_report(targets, summary_r))
    pooled = float(np.mean(coverages))
    rows = [(r + 1, c) for r, c in enumerate(coverages)]
    rows.append(("pooled", pooled))
    dataio.write_csv(out / "coverage.csv", ["series", "coverage_pct"], rows)
    report.save_coverage(out / "coverage.png", coverages)
    print(f"per-series coverage: {', '.join(f'{c:.1f}%' for c in coverages)} "
          f"(pooled {pooled:.1f}%)")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "validate": cmd_validate,
    "predict": cmd_predict,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demodyn",
        description="Age- and sex-structured population dynamics: simulation, "
                    "Bayesian fitting, validation and prediction.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--iters", type=int, default=None,
                       help="override chain.n_iter")
        p.add_argument("--burn-in", type=int, default=None,
                       help="override chain.burn_in")
        p.add_argument("--aerial-rate", choices=("paper", "consistent"),
                       default=None)
        p.add_argument("--out", default=None, help="override output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, overrides={
            "seed": args.seed, "n_iter": args.iters, "burn_in": args.burn_in,
            "aerial_rate": args.aerial_rate, "output_dir": args.out,
        })
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"demodyn {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
