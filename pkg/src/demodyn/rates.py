"""Vital-rate models: covariates in, monthly demographic probabilities out.

Five logit-linear models drive the monthly dynamics: birth recruitment,
quarter-size survival, half-yearling survival, adult survival and the
female share of new adult recruits.  All are deterministic functions of a
covariate record and a coefficient vector; stochasticity lives entirely in
the state process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Probabilities are kept this far away from {0, 1} so log-densities stay finite.
PROB_EPS = 1e-12

# Months in which migratory herds are present and predation pressure on
# residents drops (July-October).
DRY_SEASON_MONTHS = (7, 8, 9, 10)

N_BIRTH = 9
N_QUARTER = 14
N_HALF = 13
N_ADULT = 9  # 9th slot reserved; only 8 terms are active by default
N_SEXRATIO = 9


def inv_logit(x: float) -> float:
    """Logistic link, clamped to [PROB_EPS, 1 - PROB_EPS]."""
    if x >= 0.0:
        p = 1.0 / (1.0 + math.exp(-x))
    else:
        e = math.exp(x)
        p = e / (1.0 + e)
    return min(max(p, PROB_EPS), 1.0 - PROB_EPS)


def clamp_prob(p):
    """Clamp a probability (scalar or array) into the open unit interval."""
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


@dataclass(frozen=True)
class CovariateRecord:
    """All predictors for one calendar month.

    Lag containers follow the conventions used throughout:
    ``lagrain[l]`` is rainfall l months back (l = 0..11, 0 = current month),
    ``lagmin[l - 1]`` / ``lagmax[l - 1]`` are temperatures l months back
    (l = 1..11).  Seasonal totals (wet1, earlywet1, dry1) refer to the
    named season of the preceding calendar year.  Population sizes enter
    as fixed covariates: ``npop_lag7`` seven months back, ``apop_lag1``
    one month back.
    """

    year: int
    month: int
    rain_7_11: float = 0.0
    mintemp: float = 0.0
    maxtemp: float = 0.0
    lagrain: tuple = (0.0,) * 12   # lags 0..11
    lagmin: tuple = (0.0,) * 11    # lags 1..11
    lagmax: tuple = (0.0,) * 11    # lags 1..11
    wet1: float = 0.0
    earlywet1: float = 0.0
    dry1: float = 0.0
    mavrain_3_4: float = 0.0
    npop_lag7: float = 0.0
    apop_lag1: float = 0.0

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError(f"month must be in 1..12, got {self.month}")
        if len(self.lagrain) != 12 or len(self.lagmin) != 11 or len(self.lagmax) != 11:
            raise ValueError("lagrain needs 12 entries (lags 0..11); lagmin/lagmax need 11 (lags 1..11)")
        rain_fields = (self.rain_7_11, self.wet1, self.earlywet1, self.dry1,
                       self.mavrain_3_4, *self.lagrain)
        if any(r < 0 for r in rain_fields):
            raise ValueError("rainfall covariates must be non-negative")

    def month_dummies(self) -> np.ndarray:
        d = np.zeros(12)
        d[self.month - 1] = 1.0
        return d

    @property
    def is_dry_season(self) -> bool:
        return self.month in DRY_SEASON_MONTHS


@dataclass(frozen=True)
class RateCoefficients:
    """Coefficient vectors for the five logit models."""

    birth: np.ndarray
    quarter: np.ndarray
    half: np.ndarray
    adult: np.ndarray
    sexratio: np.ndarray

    def __post_init__(self):
        for name, vec, n in (
            ("birth", self.birth, N_BIRTH),
            ("quarter", self.quarter, N_QUARTER),
            ("half", self.half, N_HALF),
            ("adult", self.adult, N_ADULT),
            ("sexratio", self.sexratio, N_SEXRATIO),
        ):
            arr = np.asarray(vec, dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} coefficients must have length {n}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} coefficients must be finite")
            object.__setattr__(self, name, arr)

    @staticmethod
    def zeros() -> "RateCoefficients":
        return RateCoefficients(
            birth=np.zeros(N_BIRTH),
            quarter=np.zeros(N_QUARTER),
            half=np.zeros(N_HALF),
            adult=np.zeros(N_ADULT),
            sexratio=np.zeros(N_SEXRATIO),
        )

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.birth, self.quarter, self.half, self.adult, self.sexratio])

    @staticmethod
    def from_vector(v: np.ndarray) -> "RateCoefficients":
        v = np.asarray(v, dtype=float)
        sizes = (N_BIRTH, N_QUARTER, N_HALF, N_ADULT, N_SEXRATIO)
        if v.shape != (sum(sizes),):
            raise ValueError(f"expected vector of length {sum(sizes)}")
        parts = np.split(v, np.cumsum(sizes)[:-1])
        return RateCoefficients(*parts)


BLOCK_NAMES = ("birth", "quarter", "half", "adult", "sexratio")
BLOCK_SIZES = {"birth": N_BIRTH, "quarter": N_QUARTER, "half": N_HALF,
               "adult": N_ADULT, "sexratio": N_SEXRATIO}


@dataclass(frozen=True)
class VitalRates:
    """Realized monthly probabilities after seasonal adjustments."""

    birth_rate: float          # per available female, this month
    quarter_survival: float
    half_survival: float
    adult_survival_f: float
    adult_survival_m: float
    female_share: float        # probability a new adult recruit is female

    def __post_init__(self):
        for name in ("birth_rate", "quarter_survival", "half_survival",
                     "adult_survival_f", "adult_survival_m", "female_share"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie strictly in (0, 1), got {v}")


@dataclass(frozen=True)
class HyperParams:
    """Fixed hyperparameters of the observation layer and rate adjustments."""

    obs_var: float = 2500.0             # variance of the ground-count intensity layer
    aerial_sd: float = 1906.42          # sd of the ecosystem-total intensity layer
    k_prior_a: float = 5402.23          # Beta prior on the region-to-ecosystem proportion
    k_prior_b: float = 4182.9
    init_var: float = 20000.0           # variance of the initial-state priors
    newborn_correction: float = 1.7     # undercount correction for observed newborns
    dry_predation_factor: float = 0.7   # dry-season predation risk relative to wet season
    male_survival_factor: float = 0.997  # adult male survival relative to female
    aerial_sightability: float = 1.3    # correction applied to aerial estimates
    obs_var_prior_shape: float = 50000.0
    obs_var_prior_rate: float = 0.000001
    aerial_rate: str = "consistent"     # "consistent" or "paper" (see aerial_loglik)

    def __post_init__(self):
        if self.aerial_rate not in ("consistent", "paper"):
            raise ValueError("aerial_rate must be 'consistent' or 'paper'")
        for name in ("aerial_sd", "k_prior_a", "k_prior_b", "newborn_correction",
                     "dry_predation_factor", "male_survival_factor",
                     "aerial_sightability", "obs_var_prior_shape", "obs_var_prior_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.init_var < 0 or self.obs_var <= 0:
            raise ValueError("variances must be positive (init_var may be 0 to pin the start)")


def _check_len(g, n: int, what: str) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if g.shape != (n,):
        raise ValueError(f"{what} expects {n} coefficients, got shape {g.shape}")
    return g


def birth_design_row(cov: CovariateRecord) -> np.ndarray:
    m = float(cov.month)
    return np.array([1.0, m, m * m, m ** 3, cov.rain_7_11, cov.rain_7_11 ** 2,
                     cov.npop_lag7, cov.mintemp, cov.maxtemp])


def quarter_design_row(cov: CovariateRecord) -> np.ndarray:
    return np.concatenate([cov.month_dummies(), [cov.dry1, cov.mavrain_3_4]])


def half_design_row(cov: CovariateRecord) -> np.ndarray:
    return np.concatenate([cov.month_dummies(), [cov.earlywet1]])


def adult_design_row(cov: CovariateRecord) -> np.ndarray:
    d = cov.month_dummies()
    # 9th column reserved: kept at zero unless a config attaches an extra covariate
    return np.array([d[0], d[1], cov.apop_lag1, cov.lagrain[4], cov.lagrain[5],
                     cov.lagrain[6], cov.lagrain[7], cov.wet1, 0.0])


def sexratio_design_row(cov: CovariateRecord) -> np.ndarray:
    d = cov.month_dummies()
    return np.array([d[0], d[1], cov.wet1, cov.dry1, cov.lagrain[0],
                     cov.rain_7_11, cov.mintemp, cov.lagmin[1], cov.lagmax[0]])


def birth_rate(cov: CovariateRecord, g) -> float:
    g = _check_len(g, N_BIRTH, "birth_rate")
    return inv_logit(float(birth_design_row(cov) @ g))


def quarter_survival(cov: CovariateRecord, g) -> float:
    g = _check_len(g, N_QUARTER, "quarter_survival")
    return inv_logit(float(quarter_design_row(cov) @ g))


def halfyearling_survival(cov: CovariateRecord, g) -> float:
    g = _check_len(g, N_HALF, "halfyearling_survival")
    return inv_logit(float(half_design_row(cov) @ g))


def adult_survival(cov: CovariateRecord, g) -> float:
    g = _check_len(g, N_ADULT, "adult_survival")
    return inv_logit(float(adult_design_row(cov) @ g))


def adult_sex_ratio(cov: CovariateRecord, g) -> float:
    g = _check_len(g, N_SEXRATIO, "adult_sex_ratio")
    return inv_logit(float(sexratio_design_row(cov) @ g))


def reduce_predation_mortality(s: float, factor: float) -> float:
    """Scale mortality (1 - s) by ``factor``; survival can only increase for factor < 1."""
    return 1.0 - factor * (1.0 - s)


def adjusted_rates(cov: CovariateRecord, coefs: RateCoefficients,
                   hyper: HyperParams | None = None) -> VitalRates:
    """Evaluate the five models and apply seasonal and sex adjustments.

    In dry-season months the survival probabilities are adjusted by scaling
    predation mortality down; the male survival penalty is applied after
    that adjustment.
    """
    if hyper is None:
        hyper = HyperParams()
    r_birth = birth_rate(cov, coefs.birth)
    s_q = quarter_survival(cov, coefs.quarter)
    s_h = halfyearling_survival(cov, coefs.half)
    s_a = adult_survival(cov, coefs.adult)
    share = adult_sex_ratio(cov, coefs.sexratio)
    if cov.is_dry_season:
        s_q = reduce_predation_mortality(s_q, hyper.dry_predation_factor)
        s_h = reduce_predation_mortality(s_h, hyper.dry_predation_factor)
        s_a = reduce_predation_mortality(s_a, hyper.dry_predation_factor)
    s_q = float(clamp_prob(s_q))
    s_h = float(clamp_prob(s_h))
    s_a = float(clamp_prob(s_a))
    s_m = float(clamp_prob(hyper.male_survival_factor * s_a))
    return VitalRates(
        birth_rate=r_birth,
        quarter_survival=s_q,
        half_survival=s_h,
        adult_survival_f=s_a,
        adult_survival_m=s_m,
        female_share=share,
    )


@dataclass(frozen=True)
class DesignMatrices:
    """Per-month design matrices for all five models (row t = month t).

    Row 0 corresponds to the pre-survey start and is zero-filled; it is
    never used by a transition.
    """

    birth: np.ndarray
    quarter: np.ndarray
    half: np.ndarray
    adult: np.ndarray
    sexratio: np.ndarray
    dry: np.ndarray  # bool per row

    @property
    def n_rows(self) -> int:
        return self.birth.shape[0]

    def block(self, name: str) -> np.ndarray:
        return getattr(self, name)


def build_design_matrices(covs: Sequence[CovariateRecord]) -> DesignMatrices:
    """Stack design rows for months 1..T under a zero row for t = 0."""
    n = len(covs) + 1
    mats = {
        "birth": np.zeros((n, N_BIRTH)),
        "quarter": np.zeros((n, N_QUARTER)),
        "half": np.zeros((n, N_HALF)),
        "adult": np.zeros((n, N_ADULT)),
        "sexratio": np.zeros((n, N_SEXRATIO)),
    }
    dry = np.zeros(n, dtype=bool)
    for i, cov in enumerate(covs, start=1):
        mats["birth"][i] = birth_design_row(cov)
        mats["quarter"][i] = quarter_design_row(cov)
        mats["half"][i] = half_design_row(cov)
        mats["adult"][i] = adult_design_row(cov)
        mats["sexratio"][i] = sexratio_design_row(cov)
        dry[i] = cov.is_dry_season
    return DesignMatrices(dry=dry, **mats)


def rate_arrays(design: DesignMatrices, coefs: RateCoefficients,
                hyper: HyperParams) -> dict:
    """Vectorized monthly rates for every transition row of ``design``.

    Returns arrays keyed ``birth_rate``, ``quarter_survival``,
    ``half_survival``, ``adult_survival_f``, ``adult_survival_m``,
    ``female_share``; row 0 is a placeholder.
    """
    rr = clamp_prob(_expit(design.birth @ coefs.birth))
    sq = clamp_prob(_expit(design.quarter @ coefs.quarter))
    sh = clamp_prob(_expit(design.half @ coefs.half))
    sa = clamp_prob(_expit(design.adult @ coefs.adult))
    rc = clamp_prob(_expit(design.sexratio @ coefs.sexratio))
    f = hyper.dry_predation_factor
    sq = np.where(design.dry, 1.0 - f * (1.0 - sq), sq)
    sh = np.where(design.dry, 1.0 - f * (1.0 - sh), sh)
    sa = np.where(design.dry, 1.0 - f * (1.0 - sa), sa)
    sq, sh, sa = clamp_prob(sq), clamp_prob(sh), clamp_prob(sa)
    sm = clamp_prob(hyper.male_survival_factor * sa)
    return {
        "birth_rate": rr,
        "quarter_survival": sq,
        "half_survival": sh,
        "adult_survival_f": sa,
        "adult_survival_m": sm,
        "female_share": rc,
    }


def _expit(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out
