"""Observation layer: ground counts and ecosystem-wide aerial totals.

Each observed class count is Poisson with a Gamma-distributed intensity
whose mean equals the latent class total and whose variance is a shared
constant, so the marginal count is negative binomial.  The intensities
are kept as explicit latent variables; only tests use the marginal form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rates import HyperParams
from .state import NEG_INF, PopulationState

GROUND_CLASSES = ("new", "quarter", "halfyear", "adult_f", "adult_m")


@dataclass(frozen=True)
class GroundObservation:
    """Observed class counts for one month of the ground survey."""

    t: int
    new: int
    quarter: int
    halfyear: int
    adult_f: int
    adult_m: int

    def __post_init__(self):
        if min(self.new, self.quarter, self.halfyear, self.adult_f, self.adult_m) < 0:
            raise ValueError("observed counts must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([self.new, self.quarter, self.halfyear,
                         self.adult_f, self.adult_m], dtype=np.int64)


@dataclass(frozen=True)
class AerialObservation:
    """One aerial survey: estimated ecosystem total and its standard error."""

    t: int
    total: float
    se: float = 0.0

    def __post_init__(self):
        if self.total < 0:
            raise ValueError("aerial total must be non-negative")


def poisson_log_pmf(k: int, lam: float) -> float:
    if k < 0:
        return NEG_INF
    if lam == 0.0:
        return 0.0 if k == 0 else NEG_INF
    if lam < 0.0:
        return NEG_INF
    return k * math.log(lam) - lam - math.lgamma(k + 1)


def gamma_log_pdf(x: float, shape: float, rate: float) -> float:
    if x <= 0.0 or shape <= 0.0 or rate <= 0.0:
        return NEG_INF
    return shape * math.log(rate) - math.lgamma(shape) + (shape - 1.0) * math.log(x) - rate * x


def intensity_log_pdf(lam: float, latent_total: float, var: float) -> float:
    """Gamma layer tying an intensity to its latent total.

    Parameterized so E[lam] = latent_total and Var[lam] = var.  A zero
    latent total forces the intensity to the atom at zero.
    """
    if latent_total == 0.0:
        return 0.0 if lam == 0.0 else NEG_INF
    return gamma_log_pdf(lam, latent_total * latent_total / var, latent_total / var)


def ground_loglik(state: PopulationState, obs: GroundObservation,
                  lambdas, obs_var: float) -> float:
    """Joint log-density of the five intensities and observed counts."""
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.shape != (5,):
        raise ValueError("expected 5 intensities (new, quarter, halfyear, adult_f, adult_m)")
    totals = (state.newborns, state.total_quarters, state.total_half_yearlings,
              state.total_adult_females, state.adult_males)
    counts = obs.as_array()
    lp = 0.0
    for lam, x, y in zip(lambdas, totals, counts):
        lp += intensity_log_pdf(float(lam), float(x), obs_var)
        lp += poisson_log_pmf(int(y), float(lam))
        if lp == NEG_INF:
            return NEG_INF
    return lp


def corrected_newborns(obs_new: float, factor: float = 1.7) -> float:
    """Undercount-corrected newborn count used for rate elicitation and reports."""
    if obs_new < 0:
        raise ValueError("observed newborn count must be non-negative")
    return factor * obs_new


def aerial_shape_rate(region_total: float, k_t: float, hyper: HyperParams) -> tuple:
    """Gamma layer parameters for the ecosystem-total intensity.

    Under the default 'consistent' convention the rate uses the squared
    scale so E[intensity] equals ``k_t * region_total``; the 'paper'
    convention keeps the unsquared rate of the source formulation.
    """
    kb = k_t * region_total
    shape = kb * kb / (hyper.aerial_sd ** 2)
    if hyper.aerial_rate == "paper":
        rate = kb / hyper.aerial_sd
    else:
        rate = kb / (hyper.aerial_sd ** 2)
    return shape, rate


def aerial_loglik(region_total: float, k_t: float, ecosystem_count: int,
                  lambda_total: float, hyper: HyperParams) -> float:
    """Gamma layer plus Poisson term linking the region total to an aerial count."""
    if not 0.0 < k_t < 1.0:
        raise ValueError("k_t must lie strictly in (0, 1)")
    if region_total == 0.0:
        base = 0.0 if lambda_total == 0.0 else NEG_INF
    else:
        shape, rate = aerial_shape_rate(region_total, k_t, hyper)
        base = gamma_log_pdf(lambda_total, shape, rate)
    if base == NEG_INF:
        return NEG_INF
    return base + poisson_log_pmf(int(ecosystem_count), lambda_total)


def apply_sightability(aerial_estimate: float, se: float,
                       factor: float = 1.3) -> tuple:
    """Scale an aerial estimate and its standard error by the sightability factor."""
    return factor * aerial_estimate, factor * se


def sample_ground_observation(state: PopulationState, obs_var: float, t: int,
                              rng: np.random.Generator) -> GroundObservation:
    """Draw one month of ground counts through the intensity layer."""
    totals = np.array([state.newborns, state.total_quarters,
                       state.total_half_yearlings, state.total_adult_females,
                       state.adult_males], dtype=float)
    counts = np.zeros(5, dtype=np.int64)
    for i, x in enumerate(totals):
        if x > 0:
            lam = rng.gamma(x * x / obs_var, obs_var / x)
            counts[i] = rng.poisson(lam)
    return GroundObservation(t, *counts.tolist())
