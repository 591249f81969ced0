"""Model validation: survey resampling, ratio estimation, synthetic refits.

The validation loop resamples aerial survey units with a balanced
bootstrap, turns each replicate into a population estimate with the
unequal-transect ratio estimator, generates hypothetical ground series
tracking those estimates, refits the model to each series by importance
resampling from a reference posterior, and reports how often the
generating totals fall inside the refitted credible bands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .inference import (ChainConfig, ChainResult, ChainState, ModelData,
                        PriorSpec, joint_log_density_parts, posterior_summary,
                        run_chain)
from .rates import HyperParams, RateCoefficients
from .state import InitialStateMeans, simulate_trajectory


@dataclass(frozen=True)
class SurveyUnits:
    """Sampling units of one aerial survey plus the frame they came from."""

    areas: np.ndarray    # km^2 per unit
    counts: np.ndarray   # animals counted per unit
    frame_area: float    # total frame area Z
    frame_units: int     # total number of units in the frame N

    def __post_init__(self):
        a = np.asarray(self.areas, dtype=float)
        c = np.asarray(self.counts, dtype=float)
        if a.ndim != 1 or a.shape != c.shape:
            raise ValueError("areas and counts must be 1-d and aligned")
        if (a <= 0).any():
            raise ValueError("unit areas must be positive")
        if (c < 0).any():
            raise ValueError("unit counts must be non-negative")
        if self.frame_units < len(a):
            raise ValueError("frame cannot hold fewer units than the sample")
        if a.sum() > self.frame_area * (1 + 1e-9):
            raise ValueError("sampled area exceeds the frame area")
        object.__setattr__(self, "areas", a)
        object.__setattr__(self, "counts", c)

    @property
    def n_units(self) -> int:
        return len(self.areas)

    def take(self, idx) -> "SurveyUnits":
        return SurveyUnits(self.areas[idx], self.counts[idx],
                           self.frame_area, self.frame_units)


@dataclass(frozen=True)
class BootstrapPlan:
    """Replicate-by-unit selection indices from a balanced bootstrap."""

    selections: np.ndarray  # (B, n) unit indices

    @property
    def n_replicates(self) -> int:
        return self.selections.shape[0]

    def unit_totals(self, n_units: int) -> np.ndarray:
        return np.bincount(self.selections.ravel(), minlength=n_units)


def balanced_bootstrap(units: SurveyUnits, n_replicates: int,
                       rng: np.random.Generator) -> BootstrapPlan:
    """Resampling plan in which every unit is drawn the same total number of times.

    Concatenates ``n_replicates`` copies of the unit indices, permutes
    once, and cuts the result into consecutive replicate blocks.
    """
    if n_replicates <= 0:
        raise ValueError("need at least one bootstrap replicate")
    n = units.n_units
    pooled = rng.permutation(np.tile(np.arange(n), n_replicates))
    return BootstrapPlan(pooled.reshape(n_replicates, n))


def jolly_method2(sample: SurveyUnits) -> tuple:
    """Ratio estimate of the frame total from transects of unequal area.

    Returns (estimate, standard error).  The variance uses the sample
    variance of the ratio residuals, which equals the textbook
    s_y^2 - 2*R*s_zy + R^2*s_z^2 form but does not cancel catastrophically.
    """
    z, y = sample.areas, sample.counts
    n = sample.n_units
    tz = z.sum()
    if tz == 0:
        raise ValueError("total sampled area is zero")
    ratio = y.sum() / tz
    estimate = sample.frame_area * ratio
    if n < 2:
        raise ValueError("need at least two units to estimate a variance")
    resid = y - ratio * z
    s_d2 = resid.var(ddof=1)
    big_n = sample.frame_units
    var = big_n * (big_n - n) / n * s_d2
    return float(estimate), float(math.sqrt(max(var, 0.0)))


def bootstrap_estimates(units: SurveyUnits, plan: BootstrapPlan) -> np.ndarray:
    """(B, 2) array of (estimate, se) from the ratio estimator per replicate."""
    out = np.empty((plan.n_replicates, 2))
    for i in range(plan.n_replicates):
        out[i] = jolly_method2(units.take(plan.selections[i]))
    return out


# ---------------------------------------------------------------------------
# synthetic ground series
# ---------------------------------------------------------------------------

def generate_synthetic_series(anchor_months, anchor_totals, n_months: int,
                              covs, coefs: RateCoefficients, hyper: HyperParams,
                              init_means: InitialStateMeans,
                              rng: np.random.Generator) -> tuple:
    """Hypothetical ground counts whose totals track survey estimates.

    Survey-level totals are interpolated linearly to months, a model
    trajectory is simulated and rescaled month by month so its ground
    total follows the interpolated series (preserving age and sex
    structure), and observed counts are drawn through the intensity
    layer.  Returns (records, monthly_targets) where records are
    (year, month, new, quarter, halfyear, adult_f, adult_m) tuples.
    """
    anchor_months = np.asarray(anchor_months, dtype=float)
    anchor_totals = np.asarray(anchor_totals, dtype=float)
    if anchor_months.shape != anchor_totals.shape or len(anchor_months) < 2:
        raise ValueError("need at least two survey anchors")
    if (np.diff(anchor_months) <= 0).any():
        raise ValueError("anchor months must be strictly increasing")
    months = np.arange(1, n_months + 1, dtype=float)
    targets = np.interp(months, anchor_months, anchor_totals)

    traj = simulate_trajectory(n_months, covs, coefs, hyper, init_means, rng)
    totals = traj.class_totals()
    records = []
    for t in range(1, n_months + 1):
        b_sim = totals[5][t]
        scale = targets[t - 1] / b_sim if b_sim > 0 else 0.0
        counts = []
        for cls in range(5):
            x = totals[cls][t] * scale
            if x > 0:
                lam = rng.gamma(x * x / hyper.obs_var, hyper.obs_var / x)
                counts.append(int(rng.poisson(lam)))
            else:
                counts.append(0)
        cov = covs[t - 1]
        records.append((cov.year, cov.month, *counts))
    return records, targets


# ---------------------------------------------------------------------------
# importance-resampling refits
# ---------------------------------------------------------------------------

def importance_weights(log_w: np.ndarray) -> np.ndarray:
    """Normalized weights from log-ratios; raises if none is usable."""
    log_w = np.asarray(log_w, dtype=float)
    finite = np.isfinite(log_w)
    if not finite.any():
        raise ValueError("all importance weights vanished; datasets are too "
                         "dissimilar for a resampling refit, run a full chain")
    w = np.zeros_like(log_w)
    w[finite] = np.exp(log_w[finite] - log_w[finite].max())
    total = w.sum()
    if total <= 0:
        raise ValueError("all importance weights vanished; datasets are too "
                         "dissimilar for a resampling refit, run a full chain")
    return w / total


def weight_ess(weights: np.ndarray) -> float:
    w = np.asarray(weights, dtype=float)
    return float(w.sum() ** 2 / np.sum(w ** 2))


def irmcmc_refit(reference: ChainResult, ref_data: ModelData,
                 new_data: ModelData, priors: PriorSpec,
                 short_cfg: ChainConfig, rng: np.random.Generator,
                 n_seeds: int = 20, min_ess_fraction: float = 0.01) -> tuple:
    """Refit to a related dataset by reweighting a reference posterior.

    Reference draws are importance-weighted by the density ratio of the
    two posteriors, resampled with replacement, and each resampled state
    seeds a short refinement chain on the new data; the pooled output
    approximates the new posterior.  Returns (pooled ChainResult, ess).
    """
    if not reference.states:
        raise ValueError("reference run must keep thinned chain states "
                         "(ChainConfig.keep_states=True)")
    if new_data.n_months != ref_data.n_months:
        raise ValueError("reference and new datasets must span the same months")
    for name in ("birth", "quarter", "half", "adult", "sexratio"):
        if not np.array_equal(ref_data.design.block(name),
                              new_data.design.block(name)):
            raise ValueError("reference and new datasets must share covariates; "
                             "otherwise the transition terms do not cancel in "
                             "the importance weights")

    def _data_terms(st: ChainState, data: ModelData) -> float:
        parts = joint_log_density_parts(st, data, priors)
        return parts["initial"] + parts["ground"] + parts["aerial"]

    log_w = np.empty(len(reference.states))
    for j, st in enumerate(reference.states):
        lp_new = _data_terms(st, new_data)
        lp_ref = _data_terms(st, ref_data)
        log_w[j] = lp_new - lp_ref if np.isfinite(lp_new) and np.isfinite(lp_ref) \
            else -np.inf
    w = importance_weights(log_w)
    ess = weight_ess(w)
    if ess < min_ess_fraction * len(w):
        raise ValueError(f"importance weights too degenerate (ESS {ess:.1f} of "
                         f"{len(w)}); run a full chain instead")

    seed_idx = rng.choice(len(w), size=n_seeds, replace=True, p=w)
    pooled_params = []
    pooled_totals = []
    pooled_iters = []
    names = None
    for i, j in enumerate(seed_idx):
        cfg_i = replace(short_cfg, seed=int(rng.integers(0, 2 ** 31 - 1)))
        res = run_chain(cfg_i, new_data, priors, init_state=reference.states[j])
        names = res.names
        pooled_params.append(res.params)
        pooled_totals.append(res.class_totals)
        pooled_iters.append(res.iterations + i * short_cfg.n_iter)
    params = np.concatenate(pooled_params)
    totals = np.concatenate(pooled_totals)
    iters = np.concatenate(pooled_iters)
    summary = posterior_summary({"params": params, "names": names,
                                 "class_totals": totals})
    pooled = ChainResult(params, names, totals, iters, summary, {})
    return pooled, ess


def coverage_report(estimates: np.ndarray, summary) -> float:
    """Percentage of months whose estimate falls inside the fitted total band."""
    est = np.asarray(estimates, dtype=float)
    lower = summary.class_lower[5][1:]
    upper = summary.class_upper[5][1:]
    if est.shape != lower.shape:
        raise ValueError(f"expected {lower.shape[0]} monthly estimates, got {est.shape[0]}")
    inside = (est >= lower) & (est <= upper)
    return float(100.0 * inside.mean())
