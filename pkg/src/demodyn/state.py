"""Latent population bookkeeping and the stochastic monthly transition.

The population is tracked in 32 integer slots per month: newborns, five
quarter-size age slots (age months 2..6), thirteen half-yearling slots
(7..19), twelve adult-female slots indexed by months since last birth
(1..12) and adult males.  Recruits graduating out of the last
half-yearling slot are carried for one month as ``new_adult_females`` /
``new_adult_males`` before joining the adult pools.

Newborns at month t are drawn from the month-t pool of females able to
conceive (slots 11 and 12), so within one transition the adult-female
slots are realized before the newborn count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .rates import HyperParams, RateCoefficients, VitalRates, adjusted_rates

N_QUARTER_SLOTS = 5    # age months 2..6
N_HALF_SLOTS = 13      # age months 7..19
N_FEMALE_SLOTS = 12    # months since last birth 1..12
N_SLOTS = 1 + N_QUARTER_SLOTS + N_HALF_SLOTS + N_FEMALE_SLOTS + 1

NEG_INF = float("-inf")


def binomial_log_pmf(k: int, n: int, p: float) -> float:
    """log Binomial(k | n, p); -inf off support.  p must already be in (0, 1)."""
    if n < 0 or k < 0 or k > n:
        return NEG_INF
    if n == 0:
        return 0.0
    return (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
            + k * math.log(p) + (n - k) * math.log1p(-p))


def recruit_split_log_pmf(n_f: int, n_m: int, pool: int, p_female: float,
                          survival: float) -> float:
    """log probability of splitting ``pool`` graduates into females, males, deaths."""
    if pool < 0 or n_f < 0 or n_m < 0 or n_f + n_m > pool:
        return NEG_INF
    dead = pool - n_f - n_m
    p_f = p_female * survival
    p_m = (1.0 - p_female) * survival
    p_d = 1.0 - survival
    return (math.lgamma(pool + 1) - math.lgamma(n_f + 1) - math.lgamma(n_m + 1)
            - math.lgamma(dead + 1)
            + n_f * math.log(p_f) + n_m * math.log(p_m) + dead * math.log(p_d))


@dataclass(frozen=True)
class PopulationState:
    """Integer counts for every latent slot at one monthly step."""

    newborns: int
    quarters: np.ndarray        # 5 slots, age months 2..6
    half_yearlings: np.ndarray  # 13 slots, age months 7..19
    adult_females: np.ndarray   # 12 slots, months since birth 1..12
    adult_males: int
    new_adult_females: int = 0
    new_adult_males: int = 0

    def __post_init__(self):
        q = np.asarray(self.quarters, dtype=np.int64)
        h = np.asarray(self.half_yearlings, dtype=np.int64)
        af = np.asarray(self.adult_females, dtype=np.int64)
        if q.shape != (N_QUARTER_SLOTS,) or h.shape != (N_HALF_SLOTS,) or af.shape != (N_FEMALE_SLOTS,):
            raise ValueError("slot arrays must have shapes (5,), (13,), (12,)")
        object.__setattr__(self, "quarters", q)
        object.__setattr__(self, "half_yearlings", h)
        object.__setattr__(self, "adult_females", af)
        counts = [self.newborns, self.adult_males, self.new_adult_females,
                  self.new_adult_males, *q, *h, *af]
        if any(c < 0 for c in counts):
            raise ValueError("all counts must be non-negative")

    @property
    def total_quarters(self) -> int:
        return int(self.quarters.sum())

    @property
    def total_half_yearlings(self) -> int:
        return int(self.half_yearlings.sum())

    @property
    def total_adult_females(self) -> int:
        return int(self.adult_females.sum())

    @property
    def ground_total(self) -> int:
        """Survey-region total: recruits in transit are not counted."""
        return int(self.newborns + self.quarters.sum() + self.half_yearlings.sum()
                   + self.adult_females.sum() + self.adult_males)

    @property
    def conception_pool(self) -> int:
        """Females able to conceive this month (slots 11 and 12)."""
        return int(self.adult_females[10] + self.adult_females[11])

    @staticmethod
    def empty() -> "PopulationState":
        return PopulationState(0, np.zeros(N_QUARTER_SLOTS, dtype=np.int64),
                               np.zeros(N_HALF_SLOTS, dtype=np.int64),
                               np.zeros(N_FEMALE_SLOTS, dtype=np.int64), 0)


@dataclass(frozen=True)
class InitialStateMeans:
    """Normal-prior means for every slot at the pre-survey month (t = 0)."""

    newborns: float
    quarters: np.ndarray
    half_yearlings: np.ndarray
    adult_females: np.ndarray
    adult_males: float

    def __post_init__(self):
        q = np.asarray(self.quarters, dtype=float)
        h = np.asarray(self.half_yearlings, dtype=float)
        af = np.asarray(self.adult_females, dtype=float)
        if q.shape != (N_QUARTER_SLOTS,) or h.shape != (N_HALF_SLOTS,) or af.shape != (N_FEMALE_SLOTS,):
            raise ValueError("slot arrays must have shapes (5,), (13,), (12,)")
        object.__setattr__(self, "quarters", q)
        object.__setattr__(self, "half_yearlings", h)
        object.__setattr__(self, "adult_females", af)
        if self.newborns < 0 or self.adult_males < 0 or (q < 0).any() or (h < 0).any() or (af < 0).any():
            raise ValueError("initial means must be non-negative")

    @staticmethod
    def uniform_within_class(newborn_total: float, quarter_total: float,
                             half_total: float, female_total: float,
                             male_total: float) -> "InitialStateMeans":
        return InitialStateMeans(
            newborns=newborn_total,
            quarters=np.full(N_QUARTER_SLOTS, quarter_total / N_QUARTER_SLOTS),
            half_yearlings=np.full(N_HALF_SLOTS, half_total / N_HALF_SLOTS),
            adult_females=np.full(N_FEMALE_SLOTS, female_total / N_FEMALE_SLOTS),
            adult_males=male_total,
        )


class Trajectory:
    """Array-backed monthly history: index 0 is the pre-survey state.

    ``n_months`` transitions follow the initial state, so arrays have
    ``n_months + 1`` rows.
    """

    __slots__ = ("newborns", "quarters", "half_yearlings", "adult_females",
                 "adult_males", "new_adult_females", "new_adult_males")

    def __init__(self, states: Sequence[PopulationState]):
        n = len(states)
        if n == 0:
            raise ValueError("a trajectory needs at least the initial state")
        self.newborns = np.array([s.newborns for s in states], dtype=np.int64)
        self.quarters = np.stack([s.quarters for s in states]).astype(np.int64)
        self.half_yearlings = np.stack([s.half_yearlings for s in states]).astype(np.int64)
        self.adult_females = np.stack([s.adult_females for s in states]).astype(np.int64)
        self.adult_males = np.array([s.adult_males for s in states], dtype=np.int64)
        self.new_adult_females = np.array([s.new_adult_females for s in states], dtype=np.int64)
        self.new_adult_males = np.array([s.new_adult_males for s in states], dtype=np.int64)

    @property
    def n_months(self) -> int:
        return len(self.newborns) - 1

    @property
    def initial(self) -> PopulationState:
        return self.state(0)

    @property
    def states(self) -> list:
        return [self.state(t) for t in range(1, self.n_months + 1)]

    def state(self, t: int) -> PopulationState:
        return PopulationState(
            newborns=int(self.newborns[t]),
            quarters=self.quarters[t].copy(),
            half_yearlings=self.half_yearlings[t].copy(),
            adult_females=self.adult_females[t].copy(),
            adult_males=int(self.adult_males[t]),
            new_adult_females=int(self.new_adult_females[t]),
            new_adult_males=int(self.new_adult_males[t]),
        )

    def class_totals(self) -> np.ndarray:
        """(6, n_months+1) array: newborn, quarter, half, female, male, ground total."""
        q = self.quarters.sum(axis=1)
        h = self.half_yearlings.sum(axis=1)
        f = self.adult_females.sum(axis=1)
        b = self.newborns + q + h + f + self.adult_males
        return np.stack([self.newborns, q, h, f, self.adult_males, b])

    def copy(self) -> "Trajectory":
        out = object.__new__(Trajectory)
        for name in self.__slots__:
            setattr(out, name, getattr(self, name).copy())
        return out


def sample_transition(prev: PopulationState, rates: VitalRates,
                      rng: np.random.Generator) -> PopulationState:
    """Draw one month of population dynamics.

    The adult-female slots are realized first; the newborn count is then
    drawn from the realized month-t conception pool.
    """
    pool = prev.conception_pool
    if prev.newborns > pool:
        raise ValueError(
            f"breeding-pool underflow: {prev.newborns} newborns exceed the "
            f"{pool} females that could have given birth")
    s_q, s_h = rates.quarter_survival, rates.half_survival
    s_f, s_m = rates.adult_survival_f, rates.adult_survival_m

    q = np.empty(N_QUARTER_SLOTS, dtype=np.int64)
    q[0] = rng.binomial(prev.newborns, s_q)
    q[1:] = rng.binomial(prev.quarters[:-1], s_q)

    h = np.empty(N_HALF_SLOTS, dtype=np.int64)
    h[0] = rng.binomial(prev.quarters[-1], s_h)
    h[1:] = rng.binomial(prev.half_yearlings[:-1], s_h)

    p_f = rates.female_share * s_f
    p_m = (1.0 - rates.female_share) * s_f
    naf, nam, _ = rng.multinomial(prev.half_yearlings[-1],
                                  [p_f, p_m, max(1.0 - p_f - p_m, 0.0)])

    am = rng.binomial(prev.adult_males + prev.new_adult_males, s_m)

    af = np.empty(N_FEMALE_SLOTS, dtype=np.int64)
    af[0] = rng.binomial(prev.newborns, s_f)
    af[1] = rng.binomial(prev.adult_females[0], s_f)
    af[2] = rng.binomial(prev.adult_females[1], s_f)
    af[3] = rng.binomial(prev.adult_females[2] + prev.new_adult_females, s_f)
    af[4:11] = rng.binomial(prev.adult_females[3:10], s_f)
    af[11] = rng.binomial(pool - prev.newborns, s_f)

    new = rng.binomial(af[10] + af[11], rates.birth_rate)
    return PopulationState(int(new), q, h, af, int(am), int(naf), int(nam))


def transition_log_pmf(prev: PopulationState, nxt: PopulationState,
                       rates: VitalRates) -> float:
    """Log-probability of one monthly transition; -inf off support."""
    pool = prev.conception_pool
    if prev.newborns > pool:
        return NEG_INF
    s_q, s_h = rates.quarter_survival, rates.half_survival
    s_f, s_m = rates.adult_survival_f, rates.adult_survival_m

    lp = binomial_log_pmf(int(nxt.quarters[0]), prev.newborns, s_q)
    for j in range(1, N_QUARTER_SLOTS):
        lp += binomial_log_pmf(int(nxt.quarters[j]), int(prev.quarters[j - 1]), s_q)
    lp += binomial_log_pmf(int(nxt.half_yearlings[0]), int(prev.quarters[-1]), s_h)
    for j in range(1, N_HALF_SLOTS):
        lp += binomial_log_pmf(int(nxt.half_yearlings[j]), int(prev.half_yearlings[j - 1]), s_h)
    lp += recruit_split_log_pmf(nxt.new_adult_females, nxt.new_adult_males,
                                int(prev.half_yearlings[-1]), rates.female_share, s_f)
    lp += binomial_log_pmf(nxt.adult_males, prev.adult_males + prev.new_adult_males, s_m)

    af, paf = nxt.adult_females, prev.adult_females
    lp += binomial_log_pmf(int(af[0]), prev.newborns, s_f)
    lp += binomial_log_pmf(int(af[1]), int(paf[0]), s_f)
    lp += binomial_log_pmf(int(af[2]), int(paf[1]), s_f)
    lp += binomial_log_pmf(int(af[3]), int(paf[2]) + prev.new_adult_females, s_f)
    for j in range(4, 11):
        lp += binomial_log_pmf(int(af[j]), int(paf[j - 1]), s_f)
    lp += binomial_log_pmf(int(af[11]), pool - prev.newborns, s_f)

    lp += binomial_log_pmf(nxt.newborns, int(af[10] + af[11]), rates.birth_rate)
    return lp


def estimate_initial_means(ground, aerial_total_t0: float) -> InitialStateMeans:
    """Class means from average June composition scaled to an aerial total.

    For each June record the five class proportions are computed, averaged
    across years, multiplied by ``aerial_total_t0`` and spread uniformly
    over each class's age slots.
    """
    june = [r for r in ground if r.month == 6]
    if not june:
        raise ValueError("ground series contains no June record")
    props = []
    for r in june:
        total = r.new + r.quarter + r.halfyear + r.adult_f + r.adult_m
        if total <= 0:
            continue
        props.append(np.array([r.new, r.quarter, r.halfyear, r.adult_f, r.adult_m],
                              dtype=float) / total)
    if not props:
        raise ValueError("all June records are empty; cannot derive class proportions")
    mean_props = np.mean(props, axis=0)
    totals = mean_props * float(aerial_total_t0)
    return InitialStateMeans.uniform_within_class(*totals)


def sample_initial_state(means: InitialStateMeans, hyper: HyperParams,
                         rng: np.random.Generator) -> PopulationState:
    """Draw the pre-survey state: per-slot normals, rounded and floored at 0."""
    sd = math.sqrt(hyper.init_var)

    def draw(mu):
        mu = np.asarray(mu, dtype=float)
        if sd == 0.0:
            x = mu
        else:
            x = rng.normal(mu, sd)
        return np.maximum(np.rint(x), 0.0).astype(np.int64)

    return PopulationState(
        newborns=int(draw(means.newborns)),
        quarters=draw(means.quarters),
        half_yearlings=draw(means.half_yearlings),
        adult_females=draw(means.adult_females),
        adult_males=int(draw(means.adult_males)),
    )


def simulate_trajectory(n_months: int, covs, coefs: RateCoefficients,
                        hyper: HyperParams, means: InitialStateMeans,
                        rng: np.random.Generator) -> Trajectory:
    """Initial state followed by ``n_months`` covariate-driven transitions.

    ``covs[t - 1]`` supplies the covariates for the transition into month t.
    """
    if n_months < 0:
        raise ValueError("n_months must be >= 0")
    if len(covs) < n_months:
        raise ValueError(f"need {n_months} covariate records, got {len(covs)}")
    states = [sample_initial_state(means, hyper, rng)]
    for t in range(1, n_months + 1):
        rates = adjusted_rates(covs[t - 1], coefs, hyper)
        states.append(sample_transition(states[-1], rates, rng))
    return Trajectory(states)
