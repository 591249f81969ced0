"""Posterior sampling for the integrated population model.

The joint target couples the initial-state priors, the monthly transition
kernel, the ground and aerial observation layers, normal priors on the
five coefficient blocks, a gamma prior on the observation variance and a
beta prior on each survey's region-to-ecosystem proportion.  Sampling is
Metropolis-within-Gibbs: single-site integer random walks over the latent
counts, exact conjugate draws for the intensities, all-or-nothing
additive-transformation moves for each coefficient block, and random-walk
Metropolis on the transformed scalar parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from . import _kernels as K
from .rates import (BLOCK_NAMES, BLOCK_SIZES, DesignMatrices, HyperParams,
                    RateCoefficients, rate_arrays)
from .state import (InitialStateMeans, NEG_INF, Trajectory,
                    sample_initial_state, sample_transition)
from .rates import VitalRates

_RATE_KEYS = ("birth_rate", "quarter_survival", "half_survival",
              "adult_survival_f", "adult_survival_m", "female_share")
_BLOCK_CODE = {"birth": 0, "quarter": 1, "half": 2, "adult": 3, "sexratio": 4}
# which realized-rate array each block writes (male survival rides with adult)
_BLOCK_RATE = {"birth": "birth_rate", "quarter": "quarter_survival",
               "half": "half_survival", "adult": "adult_survival_f",
               "sexratio": "female_share"}


@dataclass(frozen=True)
class PriorSpec:
    """Normal prior means and standard deviations for each coefficient block."""

    means: dict
    sds: dict

    def __post_init__(self):
        for name in BLOCK_NAMES:
            m = np.asarray(self.means[name], dtype=float)
            s = np.asarray(self.sds[name], dtype=float)
            n = BLOCK_SIZES[name]
            if m.shape != (n,) or s.shape != (n,):
                raise ValueError(f"prior block '{name}' must have length {n}")
            if (s <= 0).any():
                raise ValueError(f"prior sds for '{name}' must be positive")
            self.means[name] = m
            self.sds[name] = s

    @staticmethod
    def default(sd: float = 1.0) -> "PriorSpec":
        return PriorSpec(
            means={n: np.zeros(BLOCK_SIZES[n]) for n in BLOCK_NAMES},
            sds={n: np.full(BLOCK_SIZES[n], sd) for n in BLOCK_NAMES},
        )

    def mean_coefficients(self) -> RateCoefficients:
        return RateCoefficients(**{n: self.means[n].copy() for n in BLOCK_NAMES})


@dataclass
class ModelData:
    """Everything the sampler conditions on."""

    design: DesignMatrices
    obs: np.ndarray                  # (5, T+1) int64, -1 where unobserved
    svy_months: np.ndarray           # aerial survey month indices, int64
    svy_totals: np.ndarray           # aerial counts, int64
    init_means: InitialStateMeans
    hyper: HyperParams

    def __post_init__(self):
        self.obs = np.asarray(self.obs, dtype=np.int64)
        self.svy_months = np.asarray(self.svy_months, dtype=np.int64)
        self.svy_totals = np.asarray(self.svy_totals, dtype=np.int64)
        t1 = self.design.n_rows
        if self.obs.shape != (5, t1):
            raise ValueError(f"obs must have shape (5, {t1})")
        if self.svy_months.shape != self.svy_totals.shape:
            raise ValueError("aerial month and total arrays must align")
        if ((self.svy_months < 1) | (self.svy_months > t1 - 1)).any():
            raise ValueError("aerial survey months must fall inside the modeled span")
        if len(np.unique(self.svy_months)) != len(self.svy_months):
            raise ValueError("at most one aerial survey per month")

    @property
    def n_months(self) -> int:
        return self.design.n_rows - 1

    @property
    def n_surveys(self) -> int:
        return len(self.svy_months)

    def survey_index(self) -> np.ndarray:
        idx = np.full(self.design.n_rows, -1, dtype=np.int64)
        idx[self.svy_months] = np.arange(self.n_surveys)
        return idx


@dataclass
class ChainState:
    """One point of the Markov chain over the full joint."""

    trajectory: Trajectory
    lambdas: np.ndarray        # (5, T+1) ground intensities
    lambda_totals: np.ndarray  # per-survey aerial intensities
    coefs: RateCoefficients
    obs_var: float
    k: np.ndarray              # per-survey proportions

    def copy(self) -> "ChainState":
        return ChainState(self.trajectory.copy(), self.lambdas.copy(),
                          self.lambda_totals.copy(), self.coefs,
                          self.obs_var, self.k.copy())


@dataclass(frozen=True)
class ChainConfig:
    """Chain length, proposal scales and which blocks move."""

    n_iter: int = 1_500_000
    burn_in: int = 500_000
    thin: int = 100
    seed: int = 0
    latent_step: int = 3
    tmcmc_mult: float = 1.0
    sigma2_step: float = 0.05
    k_step: float = 0.05
    adapt: bool = True
    update_latents: bool = True
    update_lambdas: bool = True
    blocks: tuple = BLOCK_NAMES
    block_reps: int = 5
    update_sigma2: bool = True
    update_k: bool = True
    keep_states: bool = False

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("need 0 <= burn_in < n_iter")
        if self.thin < 1 or self.latent_step < 1 or self.block_reps < 1:
            raise ValueError("thin, latent_step and block_reps must be >= 1")
        if min(self.tmcmc_mult, self.sigma2_step, self.k_step) <= 0:
            raise ValueError("proposal scales must be positive")
        unknown = set(self.blocks) - set(BLOCK_NAMES)
        if unknown:
            raise ValueError(f"unknown coefficient blocks: {sorted(unknown)}")


@dataclass(frozen=True)
class PosteriorSummary:
    """Means, sds and central 95% intervals for parameters and class sizes."""

    names: list
    mean: np.ndarray
    sd: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    class_mean: np.ndarray   # (6, T+1)
    class_lower: np.ndarray
    class_upper: np.ndarray

    def param(self, name: str) -> tuple:
        i = self.names.index(name)
        return self.mean[i], self.sd[i], self.lower[i], self.upper[i]


@dataclass
class ChainResult:
    params: np.ndarray         # (n_samples, n_params)
    names: list
    class_totals: np.ndarray   # (n_samples, 6, T+1)
    iterations: np.ndarray
    summary: PosteriorSummary
    acceptance: dict
    states: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# joint density
# ---------------------------------------------------------------------------

def _np_binom_lpmf(k, n, p):
    k = np.asarray(k, dtype=float)
    n = np.asarray(n, dtype=float)
    ok = (n >= 0) & (k >= 0) & (k <= n)
    kk = np.where(ok, k, 0.0)
    nn = np.where(ok, n, 0.0)
    val = (gammaln(nn + 1) - gammaln(kk + 1) - gammaln(nn - kk + 1)
           + kk * np.log(p) + (nn - kk) * np.log1p(-p))
    return np.where(ok, val, NEG_INF)


def _np_gamma_lpdf(x, shape, rate):
    x = np.asarray(x, dtype=float)
    ok = (x > 0) & (shape > 0) & (rate > 0)
    xx = np.where(ok, x, 1.0)
    sh = np.where(ok, shape, 1.0)
    ra = np.where(ok, rate, 1.0)
    val = sh * np.log(ra) - gammaln(sh) + (sh - 1.0) * np.log(xx) - ra * xx
    return np.where(ok, val, NEG_INF)


def _np_pois_lpmf(k, lam):
    k = np.asarray(k, dtype=float)
    lam = np.asarray(lam, dtype=float)
    atom = lam == 0.0
    ok = (k >= 0) & (lam >= 0)
    ll = np.where(atom, 1.0, lam)
    val = k * np.log(ll) - ll - gammaln(k + 1)
    val = np.where(atom, np.where(k == 0, 0.0, NEG_INF), val)
    return np.where(ok, val, NEG_INF)


def _rates_for(data: ModelData, coefs: RateCoefficients) -> dict:
    return rate_arrays(data.design, coefs, data.hyper)


def _transition_loglik(traj: Trajectory, rates: dict) -> float:
    """Vectorized sum of every transition factor for t = 1..T."""
    nw, am = traj.newborns, traj.adult_males
    q, h, af = traj.quarters, traj.half_yearlings, traj.adult_females
    naf, nam = traj.new_adult_females, traj.new_adult_males
    rr = rates["birth_rate"][1:]
    sq = rates["quarter_survival"][1:]
    sh = rates["half_survival"][1:]
    sa = rates["adult_survival_f"][1:]
    sm = rates["adult_survival_m"][1:]
    rc = rates["female_share"][1:]

    terms = []
    terms.append(_np_binom_lpmf(q[1:, 0], nw[:-1], sq))
    terms.append(_np_binom_lpmf(q[1:, 1:], q[:-1, :-1], sq[:, None]).sum(axis=1))
    terms.append(_np_binom_lpmf(h[1:, 0], q[:-1, -1], sh))
    terms.append(_np_binom_lpmf(h[1:, 1:], h[:-1, :-1], sh[:, None]).sum(axis=1))
    terms.append(_np_binom_lpmf(am[1:], am[:-1] + nam[:-1], sm))
    terms.append(_np_binom_lpmf(af[1:, 0], nw[:-1], sa))
    terms.append(_np_binom_lpmf(af[1:, 1], af[:-1, 0], sa))
    terms.append(_np_binom_lpmf(af[1:, 2], af[:-1, 1], sa))
    terms.append(_np_binom_lpmf(af[1:, 3], af[:-1, 2] + naf[:-1], sa))
    terms.append(_np_binom_lpmf(af[1:, 4:11], af[:-1, 3:10], sa[:, None]).sum(axis=1))
    terms.append(_np_binom_lpmf(af[1:, 11], af[:-1, 10] + af[:-1, 11] - nw[:-1], sa))
    terms.append(_np_binom_lpmf(nw[1:], af[1:, 10] + af[1:, 11], rr))

    # recruit three-way split out of the last half-yearling slot
    pool = h[:-1, -1].astype(float)
    nf = naf[1:].astype(float)
    nm = nam[1:].astype(float)
    dead = pool - nf - nm
    ok = (nf >= 0) & (nm >= 0) & (dead >= 0)
    nf_, nm_, dead_ = (np.where(ok, v, 0.0) for v in (nf, nm, dead))
    split = (gammaln(pool + 1) - gammaln(nf_ + 1) - gammaln(nm_ + 1) - gammaln(dead_ + 1)
             + nf_ * np.log(rc * sa) + nm_ * np.log((1 - rc) * sa) + dead_ * np.log1p(-sa))
    terms.append(np.where(ok, split, NEG_INF))

    total = 0.0
    for tm in terms:
        s = tm.sum()
        if not np.isfinite(s):
            return NEG_INF
        total += s
    return float(total)


def _initial_loglik(traj: Trajectory, means: InitialStateMeans, init_var: float) -> float:
    s0 = np.concatenate([[traj.newborns[0]], traj.quarters[0], traj.half_yearlings[0],
                         traj.adult_females[0], [traj.adult_males[0]]]).astype(float)
    mu = np.concatenate([[means.newborns], means.quarters, means.half_yearlings,
                         means.adult_females, [means.adult_males]])
    if traj.new_adult_females[0] != 0 or traj.new_adult_males[0] != 0:
        return NEG_INF
    if init_var == 0.0:
        return 0.0 if np.array_equal(s0, np.rint(mu)) else NEG_INF
    return float(np.sum(-0.5 * (s0 - mu) ** 2 / init_var
                        - 0.5 * np.log(2 * np.pi * init_var)))


def _ground_loglik_arrays(traj: Trajectory, lambdas: np.ndarray,
                          obs: np.ndarray, obs_var: float) -> float:
    totals = traj.class_totals()[:5].astype(float)  # (5, T+1)
    mask = obs >= 0
    if not mask.any():
        return 0.0
    x = totals[mask]
    lam = lambdas[mask]
    y = obs[mask].astype(float)
    pos = x > 0
    out = 0.0
    if pos.any():
        g = _np_gamma_lpdf(lam[pos], x[pos] ** 2 / obs_var, x[pos] / obs_var)
        p = _np_pois_lpmf(y[pos], lam[pos])
        s = g.sum() + p.sum()
        if not np.isfinite(s):
            return NEG_INF
        out += float(s)
    zero = ~pos
    if zero.any():
        if (lam[zero] != 0).any() or (y[zero] > 0).any():
            return NEG_INF
    return out


def _aerial_loglik_arrays(traj: Trajectory, state_k: np.ndarray,
                          lambda_totals: np.ndarray, data: ModelData) -> float:
    if data.n_surveys == 0:
        return 0.0
    b = traj.class_totals()[5][data.svy_months].astype(float)
    kb = state_k * b
    sd = data.hyper.aerial_sd
    power = 1 if data.hyper.aerial_rate == "paper" else 2
    out = 0.0
    pos = kb > 0
    if pos.any():
        shape = kb[pos] ** 2 / sd ** 2
        rate = kb[pos] / sd ** power
        s = (_np_gamma_lpdf(lambda_totals[pos], shape, rate).sum()
             + _np_pois_lpmf(data.svy_totals[pos], lambda_totals[pos]).sum())
        if not np.isfinite(s):
            return NEG_INF
        out += float(s)
    zero = ~pos
    if zero.any():
        if (lambda_totals[zero] != 0).any() or (data.svy_totals[zero] > 0).any():
            return NEG_INF
    return out


def _prior_loglik(state: ChainState, data: ModelData, priors: PriorSpec) -> dict:
    parts = {}
    total = 0.0
    for name in BLOCK_NAMES:
        g = getattr(state.coefs, name)
        mu, sd = priors.means[name], priors.sds[name]
        total += float(np.sum(-0.5 * ((g - mu) / sd) ** 2
                              - np.log(sd) - 0.5 * math.log(2 * math.pi)))
    parts["coef_prior"] = total
    h = data.hyper
    parts["obs_var_prior"] = float(_np_gamma_lpdf(
        state.obs_var, h.obs_var_prior_shape, h.obs_var_prior_rate))
    if data.n_surveys:
        k = state.k
        if ((k <= 0) | (k >= 1)).any():
            parts["k_prior"] = NEG_INF
        else:
            parts["k_prior"] = float(np.sum(
                (h.k_prior_a - 1) * np.log(k) + (h.k_prior_b - 1) * np.log1p(-k)
                + gammaln(h.k_prior_a + h.k_prior_b)
                - gammaln(h.k_prior_a) - gammaln(h.k_prior_b)))
    else:
        parts["k_prior"] = 0.0
    return parts


def joint_log_density_parts(state: ChainState, data: ModelData,
                            priors: PriorSpec) -> dict:
    """Additive decomposition of the joint log-density."""
    rates = _rates_for(data, state.coefs)
    parts = {
        "initial": _initial_loglik(state.trajectory, data.init_means,
                                   data.hyper.init_var),
        "transition": _transition_loglik(state.trajectory, rates),
        "ground": _ground_loglik_arrays(state.trajectory, state.lambdas,
                                        data.obs, state.obs_var),
        "aerial": _aerial_loglik_arrays(state.trajectory, state.k,
                                        state.lambda_totals, data),
    }
    parts.update(_prior_loglik(state, data, priors))
    return parts


def joint_log_density(state: ChainState, data: ModelData,
                      priors: PriorSpec) -> float:
    parts = joint_log_density_parts(state, data, priors)
    total = 0.0
    for v in parts.values():
        if v == NEG_INF:
            return NEG_INF
        total += v
    return total


# ---------------------------------------------------------------------------
# sufficient statistics for the coefficient blocks
# ---------------------------------------------------------------------------

def _suff_stats(traj: Trajectory) -> dict:
    """Per-month success/failure totals for each rate family (row 0 zero)."""
    nw, am = traj.newborns, traj.adult_males
    q, h, af = traj.quarters, traj.half_yearlings, traj.adult_females
    naf, nam = traj.new_adult_females, traj.new_adult_males
    t1 = len(nw)
    z = np.zeros(t1)

    def pad(x):
        out = z.copy()
        out[1:] = x
        return out

    succ_r = pad(nw[1:])
    fail_r = pad(af[1:, 10] + af[1:, 11] - nw[1:])
    succ_q = pad(q[1:].sum(axis=1))
    fail_q = pad(nw[:-1] + q[:-1, :4].sum(axis=1)) - succ_q
    succ_y = pad(h[1:].sum(axis=1))
    fail_y = pad(q[:-1, 4] + h[:-1, :12].sum(axis=1)) - succ_y
    succ_a = pad(af[1:].sum(axis=1) + naf[1:] + nam[1:])
    fail_a = pad(af[:-1].sum(axis=1) + naf[:-1] + h[:-1, 12]) - succ_a
    succ_m = pad(am[1:])
    fail_m = pad(am[:-1] + nam[:-1] - am[1:])
    succ_s = pad(naf[1:])
    fail_s = pad(nam[1:])
    return {
        "birth": (succ_r, fail_r), "quarter": (succ_q, fail_q),
        "half": (succ_y, fail_y), "adult": (succ_a, fail_a),
        "adult_m": (succ_m, fail_m), "sexratio": (succ_s, fail_s),
    }


# ---------------------------------------------------------------------------
# single-move public operations
# ---------------------------------------------------------------------------

def _traj_arrays(traj: Trajectory) -> tuple:
    return (traj.newborns, traj.quarters, traj.half_yearlings,
            traj.adult_females, traj.adult_males, traj.new_adult_females,
            traj.new_adult_males)


def _means_arrays(means: InitialStateMeans) -> tuple:
    return (float(means.newborns), means.quarters.astype(float),
            means.half_yearlings.astype(float), means.adult_females.astype(float),
            float(means.adult_males))


def _kernel_seed(rng: np.random.Generator) -> None:
    K.seed_rng(int(rng.integers(0, 2 ** 31 - 1)))


def update_latent_counts(state: ChainState, data: ModelData,
                         rng: np.random.Generator, step: int = 3) -> ChainState:
    """One full single-site Metropolis sweep over all latent counts."""
    out = state.copy()
    _kernel_seed(rng)
    rates = _rates_for(data, out.coefs)
    m = _means_arrays(data.init_means)
    power = 1 if data.hyper.aerial_rate == "paper" else 2
    K.latent_sweep(*_traj_arrays(out.trajectory),
                   rates["birth_rate"], rates["quarter_survival"],
                   rates["half_survival"], rates["adult_survival_f"],
                   rates["adult_survival_m"], rates["female_share"],
                   data.obs, out.lambdas, out.obs_var,
                   data.survey_index(), data.svy_totals, out.k,
                   out.lambda_totals, data.hyper.aerial_sd, power,
                   *m, data.hyper.init_var, step)
    return out


def update_lambdas(state: ChainState, data: ModelData,
                   rng: np.random.Generator) -> ChainState:
    """Exact conjugate refresh of the ground and aerial intensities."""
    out = state.copy()
    _kernel_seed(rng)
    nw, q, h, af, am, _, _ = _traj_arrays(out.trajectory)
    K.lam_gibbs(nw, q, h, af, am, data.obs, out.lambdas, out.obs_var)
    if data.n_surveys:
        b = out.trajectory.class_totals()[5][data.svy_months].astype(float)
        power = 1 if data.hyper.aerial_rate == "paper" else 2
        K.lamT_gibbs(b, data.svy_totals, out.k, out.lambda_totals,
                     data.hyper.aerial_sd, power)
    return out


def update_sigma2(state: ChainState, data: ModelData,
                  rng: np.random.Generator, stepsize: float = 0.05) -> ChainState:
    """Random-walk Metropolis on the log observation variance."""
    out = state.copy()
    _kernel_seed(rng)
    nw, q, h, af, am, _, _ = _traj_arrays(out.trajectory)
    h_ = data.hyper
    s2, _acc = K.sigma2_step(nw, q, h, af, am, data.obs, out.lambdas,
                             out.obs_var, h_.obs_var_prior_shape,
                             h_.obs_var_prior_rate, stepsize)
    out.obs_var = float(s2)
    return out


def update_k_t(state: ChainState, data: ModelData,
               rng: np.random.Generator, stepsize: float = 0.05) -> ChainState:
    """Random-walk Metropolis on each survey proportion's logit."""
    out = state.copy()
    if data.n_surveys == 0:
        return out
    _kernel_seed(rng)
    b = out.trajectory.class_totals()[5][data.svy_months].astype(float)
    power = 1 if data.hyper.aerial_rate == "paper" else 2
    K.k_steps(b, data.svy_totals, out.k, out.lambda_totals,
              data.hyper.aerial_sd, power, data.hyper.k_prior_a,
              data.hyper.k_prior_b, stepsize)
    return out


def tmcmc_update_block(block: np.ndarray, target, scales,
                       rng: np.random.Generator) -> tuple:
    """Additive-transformation Metropolis move for one parameter block.

    One half-normal innovation scaled per coordinate with independent
    random signs; unit Jacobian, so acceptance is the plain density ratio.
    Returns (new_block, accepted).
    """
    block = np.asarray(block, dtype=float)
    scales = np.asarray(scales, dtype=float)
    eps = abs(rng.standard_normal())
    signs = np.where(rng.random(block.shape[0]) < 0.5, 1.0, -1.0)
    prop = block + signs * scales * eps
    log_ratio = target(prop) - target(block)
    if log_ratio >= 0 or (np.isfinite(log_ratio)
                          and math.log(rng.random()) < log_ratio):
        return prop, True
    return block.copy(), False


# ---------------------------------------------------------------------------
# the full chain
# ---------------------------------------------------------------------------

def initialize_chain(data: ModelData, priors: PriorSpec, cfg: ChainConfig,
                     rng: np.random.Generator) -> ChainState:
    """Build an in-support starting point; retries a few fresh simulations."""
    coefs = priors.mean_coefficients()
    for attempt in range(32):
        covs_rates = rate_arrays(data.design, coefs, data.hyper)
        traj = _simulate_from_rates(data, covs_rates, rng)
        lambdas = np.zeros((5, data.design.n_rows))
        totals = traj.class_totals()[:5].astype(float)
        with np.errstate(all="ignore"):
            lambdas = np.where((data.obs >= 0) & (totals > 0),
                               np.maximum(data.obs, 1.0), 0.0)
        k = np.full(data.n_surveys,
                    data.hyper.k_prior_a / (data.hyper.k_prior_a + data.hyper.k_prior_b))
        if data.n_surveys:
            b = traj.class_totals()[5][data.svy_months]
            lamT = np.maximum(data.svy_totals.astype(float), 1.0)
            lamT[b == 0] = 0.0
        else:
            lamT = np.zeros(0)
        state = ChainState(traj, lambdas, lamT, coefs,
                           float(data.hyper.obs_var), k)
        if np.isfinite(joint_log_density(state, data, priors)):
            return state
    raise RuntimeError("could not find a starting point with finite joint density "
                       "(check that observed counts are compatible with the priors)")


def _simulate_from_rates(data: ModelData, rates: dict,
                         rng: np.random.Generator) -> Trajectory:
    states = [sample_initial_state(data.init_means, data.hyper, rng)]
    for t in range(1, data.n_months + 1):
        vr = VitalRates(*(float(rates[k][t]) for k in _RATE_KEYS))
        states.append(sample_transition(states[-1], vr, rng))
    return Trajectory(states)


def run_chain(cfg: ChainConfig, data: ModelData, priors: PriorSpec,
              init_state: ChainState | None = None) -> ChainResult:
    """Cyclic Metropolis-within-Gibbs sweep; emits thinned samples and a summary."""
    rng = np.random.default_rng(cfg.seed)
    K.seed_rng(int(rng.integers(0, 2 ** 31 - 1)))

    state = init_state.copy() if init_state is not None else \
        initialize_chain(data, priors, cfg, rng)
    if not np.isfinite(joint_log_density(state, data, priors)):
        raise RuntimeError("non-finite joint density at initialization")

    traj = state.trajectory
    arrays = _traj_arrays(traj)
    rates = _rates_for(data, state.coefs)
    gam = {name: getattr(state.coefs, name).copy() for name in BLOCK_NAMES}
    means = _means_arrays(data.init_means)
    svy_idx = data.survey_index()
    power = 1 if data.hyper.aerial_rate == "paper" else 2
    h = data.hyper
    obs_var = float(state.obs_var)
    kv, lamT = state.k, state.lambda_totals
    dummy = np.zeros(data.design.n_rows)

    names = _param_names(data)
    n_keep = (cfg.n_iter - cfg.burn_in + cfg.thin - 1) // cfg.thin
    params_out = np.empty((n_keep, len(names)))
    totals_out = np.empty((n_keep, 6, data.design.n_rows))
    iters_out = np.empty(n_keep, dtype=np.int64)
    kept_states = []

    # adaptation state (frozen once burn-in ends)
    step_f = float(cfg.latent_step)
    mult = {name: cfg.tmcmc_mult for name in BLOCK_NAMES}
    s2_step, k_step = cfg.sigma2_step, cfg.k_step
    acc = {"latent": [0, 0], "sigma2": [0, 0], "k": [0, 0]}
    acc.update({name: [0, 0] for name in BLOCK_NAMES})
    window = {key: [0, 0] for key in acc}
    adapt_every = 200

    n_out = 0
    for it in range(cfg.n_iter):
        adapting = cfg.adapt and it < cfg.burn_in
        if cfg.update_latents:
            step = max(1, int(round(step_f)))
            prop, accd = K.latent_sweep(
                *arrays,
                rates["birth_rate"], rates["quarter_survival"],
                rates["half_survival"], rates["adult_survival_f"],
                rates["adult_survival_m"], rates["female_share"],
                data.obs, state.lambdas, obs_var,
                svy_idx, data.svy_totals, kv, lamT, h.aerial_sd, power,
                *means, h.init_var, step)
            acc["latent"][0] += accd
            acc["latent"][1] += prop
            window["latent"][0] += accd
            window["latent"][1] += prop
        if cfg.update_lambdas:
            K.lam_gibbs(arrays[0], arrays[1], arrays[2], arrays[3], arrays[4],
                        data.obs, state.lambdas, obs_var)
            if data.n_surveys:
                b = _class_totals_fast(arrays)[5][data.svy_months].astype(float)
                K.lamT_gibbs(b, data.svy_totals, kv, lamT, h.aerial_sd, power)
        if cfg.blocks:
            stats = _suff_stats(traj)
            for name in cfg.blocks:
                code = _BLOCK_CODE[name]
                succ1, fail1 = stats[name]
                succ2, fail2 = stats["adult_m"] if name == "adult" else (dummy, dummy)
                rate2 = rates["adult_survival_m"] if name == "adult" else dummy
                accepted = K.gamma_block_step(
                    data.design.block(name), gam[name],
                    priors.means[name], priors.sds[name], priors.sds[name],
                    mult[name], code, data.design.dry,
                    h.dry_predation_factor, h.male_survival_factor,
                    succ1, fail1, succ2, fail2,
                    rates[_BLOCK_RATE[name]], rate2, cfg.block_reps)
                acc[name][0] += accepted
                acc[name][1] += cfg.block_reps
                window[name][0] += accepted
                window[name][1] += cfg.block_reps
        if cfg.update_sigma2:
            obs_var, accepted = K.sigma2_step(
                arrays[0], arrays[1], arrays[2], arrays[3], arrays[4],
                data.obs, state.lambdas, obs_var,
                h.obs_var_prior_shape, h.obs_var_prior_rate, s2_step)
            acc["sigma2"][0] += accepted
            acc["sigma2"][1] += 1
            window["sigma2"][0] += accepted
            window["sigma2"][1] += 1
        if cfg.update_k and data.n_surveys:
            b = _class_totals_fast(arrays)[5][data.svy_months].astype(float)
            accepted = K.k_steps(b, data.svy_totals, kv, lamT, h.aerial_sd,
                                 power, h.k_prior_a, h.k_prior_b, k_step)
            acc["k"][0] += accepted
            acc["k"][1] += data.n_surveys
            window["k"][0] += accepted
            window["k"][1] += data.n_surveys

        if adapting and (it + 1) % adapt_every == 0:
            step_f = _adapt(window["latent"], step_f, 0.45, lo=1.0, hi=10.0)
            for name in cfg.blocks:
                mult[name] = _adapt(window[name], mult[name], 0.25,
                                    lo=1e-3, hi=1e3)
            s2_step = _adapt(window["sigma2"], s2_step, 0.44, lo=1e-4, hi=10.0)
            k_step = _adapt(window["k"], k_step, 0.44, lo=1e-4, hi=10.0)
            for key in window:
                window[key] = [0, 0]

        if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
            params_out[n_out] = np.concatenate(
                [gam[name] for name in BLOCK_NAMES] + [[obs_var], kv])
            totals_out[n_out] = _class_totals_fast(arrays)
            iters_out[n_out] = it
            if cfg.keep_states:
                kept_states.append(ChainState(
                    traj.copy(), state.lambdas.copy(), lamT.copy(),
                    RateCoefficients(**{n: gam[n].copy() for n in BLOCK_NAMES}),
                    float(obs_var), kv.copy()))
            n_out += 1

    params_out = params_out[:n_out]
    totals_out = totals_out[:n_out]
    iters_out = iters_out[:n_out]
    summary = posterior_summary({"params": params_out, "names": names,
                                 "class_totals": totals_out})
    acceptance = {key: (v[0] / v[1] if v[1] else float("nan")) for key, v in acc.items()}
    return ChainResult(params_out, names, totals_out, iters_out, summary,
                       acceptance, kept_states)


def _adapt(counter, value, target, lo, hi):
    made = counter[1]
    if made == 0:
        return value
    rate = counter[0] / made
    return float(np.clip(value * math.exp(0.66 * (rate - target)), lo, hi))


def _class_totals_fast(arrays) -> np.ndarray:
    nw, q, h, af, am = arrays[0], arrays[1], arrays[2], arrays[3], arrays[4]
    qs = q.sum(axis=1)
    hs = h.sum(axis=1)
    fs = af.sum(axis=1)
    return np.stack([nw, qs, hs, fs, am, nw + qs + hs + fs + am])


def _param_names(data: ModelData) -> list:
    names = []
    for block in BLOCK_NAMES:
        names.extend(f"{block}[{i}]" for i in range(BLOCK_SIZES[block]))
    names.append("obs_var")
    names.extend(f"k[{int(t)}]" for t in data.svy_months)
    return names


# ---------------------------------------------------------------------------
# summaries and diagnostics
# ---------------------------------------------------------------------------

def posterior_summary(samples) -> PosteriorSummary:
    """Means, sds and type-7 2.5/97.5% quantiles for all monitored quantities."""
    params = np.asarray(samples["params"], dtype=float)
    names = list(samples["names"])
    totals = np.asarray(samples["class_totals"], dtype=float)
    mean = params.mean(axis=0)
    sd = params.std(axis=0, ddof=1) if params.shape[0] > 1 else np.zeros(params.shape[1])
    lower = np.quantile(params, 0.025, axis=0)
    upper = np.quantile(params, 0.975, axis=0)
    return PosteriorSummary(
        names=names, mean=mean, sd=sd, lower=lower, upper=upper,
        class_mean=totals.mean(axis=0),
        class_lower=np.quantile(totals, 0.025, axis=0),
        class_upper=np.quantile(totals, 0.975, axis=0),
    )


def effective_sample_size(x: np.ndarray) -> float:
    """ESS from the initial positive sequence of autocovariances."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4 or np.allclose(x, x[0]):
        return float(n)
    x = x - x.mean()
    acov = np.correlate(x, x, mode="full")[n - 1:] / n
    if acov[0] == 0:
        return float(n)
    rho = acov / acov[0]
    s = 0.0
    for k in range(1, n - 1, 2):
        pair = rho[k] + rho[k + 1] if k + 1 < n else rho[k]
        if pair < 0:
            break
        s += pair
    return float(np.clip(n / (1.0 + 2.0 * s), 1.0, n))
