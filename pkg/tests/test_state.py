import math

import numpy as np
import pytest
from scipy.stats import norm

from demodyn.rates import HyperParams, VitalRates
from demodyn.state import (InitialStateMeans, PopulationState, Trajectory,
                           binomial_log_pmf, estimate_initial_means,
                           sample_initial_state, sample_transition,
                           simulate_trajectory, transition_log_pmf)

from conftest import (default_hyper, default_init_means, make_covariates,
                      stable_coefficients)

NEAR_ONE = 1.0 - 1e-12
TINY = 1e-12


def rates_with(**kw):
    base = dict(birth_rate=0.3, quarter_survival=0.9, half_survival=0.9,
                adult_survival_f=0.95, adult_survival_m=0.94, female_share=0.5)
    base.update(kw)
    return VitalRates(**base)


def unit_rates():
    return VitalRates(birth_rate=NEAR_ONE, quarter_survival=NEAR_ONE,
                      half_survival=NEAR_ONE, adult_survival_f=NEAR_ONE,
                      adult_survival_m=NEAR_ONE, female_share=NEAR_ONE)


def state_with(**kw):
    base = dict(newborns=0, quarters=np.zeros(5, dtype=np.int64),
                half_yearlings=np.zeros(13, dtype=np.int64),
                adult_females=np.zeros(12, dtype=np.int64), adult_males=0)
    base.update(kw)
    return PopulationState(**base)


def rich_state(rng):
    return PopulationState(
        newborns=int(rng.integers(10, 40)),
        quarters=rng.integers(20, 80, 5),
        half_yearlings=rng.integers(20, 80, 13),
        adult_females=rng.integers(40, 120, 12),
        adult_males=int(rng.integers(100, 400)),
        new_adult_females=int(rng.integers(0, 10)),
        new_adult_males=int(rng.integers(0, 10)),
    )


class TestSampleTransition:
    def test_empty_population_absorbing(self, rng):
        nxt = sample_transition(state_with(), rates_with(), rng)
        assert nxt.ground_total == 0
        assert nxt.new_adult_females == 0 and nxt.new_adult_males == 0

    def test_unit_rates_deterministic_shift(self, rng):
        prev = rich_state(rng)
        nxt = sample_transition(prev, unit_rates(), rng)
        assert nxt.quarters[0] == prev.newborns
        assert np.array_equal(nxt.quarters[1:], prev.quarters[:-1])
        assert nxt.half_yearlings[0] == prev.quarters[-1]
        assert np.array_equal(nxt.half_yearlings[1:], prev.half_yearlings[:-1])
        # all graduates become female at female_share ~ 1
        assert nxt.new_adult_females == prev.half_yearlings[-1]
        assert nxt.new_adult_males == 0
        assert nxt.adult_males == prev.adult_males + prev.new_adult_males
        assert nxt.adult_females[0] == prev.newborns
        assert nxt.adult_females[3] == prev.adult_females[2] + prev.new_adult_females
        assert nxt.adult_females[11] == (prev.adult_females[10]
                                         + prev.adult_females[11] - prev.newborns)
        # newborns drawn from the realized month-t pool
        assert nxt.newborns == nxt.adult_females[10] + nxt.adult_females[11]
        # conservation: nothing appears from nowhere
        total_prev = prev.ground_total + prev.new_adult_females + prev.new_adult_males
        total_next = nxt.ground_total + nxt.new_adult_females + nxt.new_adult_males
        assert total_next == total_prev + nxt.newborns

    def test_breeding_pool_underflow_raises(self, rng):
        af = np.zeros(12, dtype=np.int64)
        af[10], af[11] = 3, 2
        prev = state_with(newborns=6, adult_females=af)
        with pytest.raises(ValueError, match="breeding-pool underflow"):
            sample_transition(prev, rates_with(), rng)

    def test_newborn_binomial_moments(self):
        # survival ~ 1 pins the realized conception pool at 100
        rng = np.random.default_rng(99)
        af = np.zeros(12, dtype=np.int64)
        af[9], af[10], af[11] = 60, 40, 60
        prev = state_with(newborns=60, adult_females=af)
        rates = rates_with(birth_rate=0.3, adult_survival_f=NEAR_ONE)
        n = 100_000
        draws = np.empty(n)
        for i in range(n):
            draws[i] = sample_transition(prev, rates, rng).newborns
        mean, var = draws.mean(), draws.var(ddof=1)
        assert mean == pytest.approx(30.0, abs=3 * math.sqrt(21.0 / n))
        var_se = 21.0 * math.sqrt(2.0 / (n - 1))  # normal-approx se of the variance
        assert var == pytest.approx(21.0, abs=4 * var_se)

    def test_moments_all_slots(self):
        # every slot's empirical mean within 4 sigma of its binomial mean
        rng = np.random.default_rng(5)
        prev = rich_state(rng)
        rates = rates_with()
        n = 20_000
        qs = np.zeros((n, 5))
        hs = np.zeros((n, 13))
        ams = np.zeros(n)
        for i in range(n):
            nxt = sample_transition(prev, rates, rng)
            qs[i] = nxt.quarters
            hs[i] = nxt.half_yearlings
            ams[i] = nxt.adult_males
        pools_q = np.concatenate([[prev.newborns], prev.quarters[:-1]])
        for j in range(5):
            m = pools_q[j] * rates.quarter_survival
            sd = math.sqrt(max(pools_q[j] * 0.9 * 0.1, 1e-9) / n)
            assert qs[:, j].mean() == pytest.approx(m, abs=4 * sd + 1e-9)
        pool_am = prev.adult_males + prev.new_adult_males
        m = pool_am * rates.adult_survival_m
        sd = math.sqrt(pool_am * 0.94 * 0.06 / n)
        assert ams.mean() == pytest.approx(m, abs=4 * sd)


class TestTransitionLogPmf:
    def test_unit_survival_shift_is_certain(self, rng):
        prev = rich_state(rng)
        nxt = sample_transition(prev, unit_rates(), rng)
        lp = transition_log_pmf(prev, nxt, unit_rates())
        assert lp == pytest.approx(0.0, abs=1e-6)

    def test_single_slot_closed_form(self):
        prev = state_with(adult_males=100)
        nxt = state_with(adult_males=30)
        rates = rates_with(adult_survival_m=0.3)
        expected = (math.lgamma(101) - math.lgamma(31) - math.lgamma(71)
                    + 30 * math.log(0.3) + 70 * math.log(0.7))
        assert transition_log_pmf(prev, nxt, rates) == pytest.approx(expected, rel=1e-12)

    def test_off_support_is_neg_inf(self):
        prev = state_with(adult_males=10)
        nxt = state_with(adult_males=11)
        assert transition_log_pmf(prev, nxt, rates_with()) == -np.inf

    def test_sampled_transitions_always_supported(self, rng):
        for _ in range(50):
            prev = rich_state(rng)
            r = rates_with(birth_rate=float(rng.uniform(0.05, 0.6)),
                           quarter_survival=float(rng.uniform(0.5, 0.99)))
            nxt = sample_transition(prev, r, rng)
            assert np.isfinite(transition_log_pmf(prev, nxt, r))

    def test_conservation_bound(self, rng):
        for _ in range(50):
            prev = rich_state(rng)
            nxt = sample_transition(prev, rates_with(), rng)
            total_prev = prev.ground_total + prev.new_adult_females + prev.new_adult_males
            total_next = nxt.ground_total + nxt.new_adult_females + nxt.new_adult_males
            assert total_next <= total_prev + nxt.newborns

    def test_binomial_log_pmf_edges(self):
        assert binomial_log_pmf(0, 0, 0.5) == 0.0
        assert binomial_log_pmf(1, 0, 0.5) == -np.inf
        assert binomial_log_pmf(-1, 5, 0.5) == -np.inf


class DummyRecord:
    def __init__(self, year, month, new, quarter, halfyear, adult_f, adult_m):
        self.year, self.month = year, month
        self.new, self.quarter, self.halfyear = new, quarter, halfyear
        self.adult_f, self.adult_m = adult_f, adult_m


class TestInitialMeans:
    def test_single_june_single_class(self):
        ground = [DummyRecord(1989, 6, 0, 0, 0, 80, 0)]
        means = estimate_initial_means(ground, 5000.0)
        assert means.adult_females.sum() == pytest.approx(5000.0)
        assert means.newborns == 0.0 and means.adult_males == 0.0

    def test_two_junes_average(self):
        ground = [
            DummyRecord(1989, 6, 8, 0, 0, 2, 0),   # adult share 0.2
            DummyRecord(1990, 6, 6, 0, 0, 4, 0),   # adult share 0.4
        ]
        means = estimate_initial_means(ground, 1000.0)
        assert means.adult_females.sum() == pytest.approx(300.0)

    def test_uniform_within_class(self):
        ground = [DummyRecord(1989, 6, 0, 50, 0, 0, 50)]
        means = estimate_initial_means(ground, 1000.0)
        assert np.allclose(means.quarters, 500.0 / 5)

    def test_missing_june_raises(self):
        ground = [DummyRecord(1989, 7, 1, 1, 1, 1, 1)]
        with pytest.raises(ValueError, match="June"):
            estimate_initial_means(ground, 1000.0)

    def test_non_june_months_ignored(self):
        ground = [DummyRecord(1989, 5, 100, 0, 0, 0, 0),
                  DummyRecord(1989, 6, 0, 0, 0, 0, 70)]
        means = estimate_initial_means(ground, 1000.0)
        assert means.adult_males == pytest.approx(1000.0)


class TestSampleInitialState:
    def test_zero_mean_median_zero(self, rng):
        means = InitialStateMeans.uniform_within_class(0, 0, 0, 0, 0)
        hyper = HyperParams(init_var=20000.0)
        draws = [sample_initial_state(means, hyper, rng).adult_males
                 for _ in range(2001)]
        assert np.median(draws) == 0

    def test_truncation_bias_oracle(self, rng):
        mu, var = 500.0, 20000.0
        sd = math.sqrt(var)
        ks = np.arange(1, int(mu + 10 * sd))
        oracle = float(np.sum(ks * (norm.cdf((ks + 0.5 - mu) / sd)
                                    - norm.cdf((ks - 0.5 - mu) / sd))))
        means = InitialStateMeans.uniform_within_class(0, 0, 0, 0, mu)
        hyper = HyperParams(init_var=var)
        n = 100_000
        draws = np.array([sample_initial_state(means, hyper, rng).adult_males
                          for _ in range(n)])
        assert draws.mean() == pytest.approx(oracle, abs=3 * sd / math.sqrt(n))

    def test_zero_variance_deterministic(self, rng):
        means = InitialStateMeans.uniform_within_class(10, 25, 39, 60, 70)
        hyper = HyperParams(init_var=0.0)
        s = sample_initial_state(means, hyper, rng)
        assert s.newborns == 10 and s.adult_males == 70
        assert np.array_equal(s.quarters, np.rint(means.quarters).astype(np.int64))


class TestSimulateTrajectory:
    def test_zero_months_initial_only(self, rng):
        traj = simulate_trajectory(0, [], stable_coefficients(), default_hyper(),
                                   default_init_means(), rng)
        assert traj.n_months == 0
        assert traj.states == []
        assert traj.initial.ground_total > 0

    def test_zero_birth_rate_no_newborns(self, rng):
        covs = make_covariates(12, seed=1)
        coefs = stable_coefficients()
        birth = coefs.birth.copy()
        birth[0] = -60.0
        coefs = type(coefs)(birth, coefs.quarter, coefs.half, coefs.adult,
                            coefs.sexratio)
        traj = simulate_trajectory(12, covs, coefs, default_hyper(),
                                   default_init_means(), rng)
        assert (traj.newborns[1:] == 0).all()

    def test_covariate_shortage_raises(self, rng):
        with pytest.raises(ValueError, match="covariate"):
            simulate_trajectory(5, make_covariates(3), stable_coefficients(),
                                default_hyper(), default_init_means(), rng)

    def test_trajectory_accessors(self, rng):
        covs = make_covariates(6, seed=2)
        traj = simulate_trajectory(6, covs, stable_coefficients(),
                                   default_hyper(), default_init_means(), rng)
        assert traj.n_months == 6
        assert len(traj.states) == 6
        totals = traj.class_totals()
        assert totals.shape == (6, 7)
        st3 = traj.state(3)
        assert totals[5][3] == st3.ground_total

    def test_supported_under_its_own_rates(self, rng):
        from demodyn.rates import adjusted_rates
        covs = make_covariates(8, seed=3)
        coefs = stable_coefficients()
        hyper = default_hyper()
        traj = simulate_trajectory(8, covs, coefs, hyper,
                                   default_init_means(), rng)
        for t in range(1, 9):
            r = adjusted_rates(covs[t - 1], coefs, hyper)
            assert np.isfinite(transition_log_pmf(traj.state(t - 1),
                                                  traj.state(t), r))

    def test_roundtrip_through_states(self, rng):
        covs = make_covariates(4, seed=4)
        traj = simulate_trajectory(4, covs, stable_coefficients(),
                                   default_hyper(), default_init_means(), rng)
        rebuilt = Trajectory([traj.state(t) for t in range(5)])
        assert np.array_equal(rebuilt.adult_females, traj.adult_females)


class TestPopulationState:
    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            state_with(newborns=-1)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            PopulationState(0, np.zeros(4, dtype=np.int64),
                            np.zeros(13, dtype=np.int64),
                            np.zeros(12, dtype=np.int64), 0)

    def test_totals(self, rng):
        s = rich_state(rng)
        assert s.ground_total == (s.newborns + s.quarters.sum()
                                  + s.half_yearlings.sum()
                                  + s.adult_females.sum() + s.adult_males)
        assert s.conception_pool == s.adult_females[10] + s.adult_females[11]
