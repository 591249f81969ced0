import math

import numpy as np
import pytest
from scipy.stats import chisquare, nbinom, poisson

from demodyn.observation import (AerialObservation, GroundObservation,
                                 aerial_loglik, aerial_shape_rate,
                                 apply_sightability, corrected_newborns,
                                 gamma_log_pdf, ground_loglik,
                                 intensity_log_pdf, poisson_log_pmf,
                                 sample_ground_observation)
from demodyn.rates import HyperParams
from demodyn.state import PopulationState


def state_with_totals(new=0, q=0, h=0, f=0, m=0):
    qs = np.zeros(5, dtype=np.int64)
    qs[0] = q
    hs = np.zeros(13, dtype=np.int64)
    hs[0] = h
    fs = np.zeros(12, dtype=np.int64)
    fs[0] = f
    return PopulationState(new, qs, hs, fs, m)


class TestIntensityLayer:
    def test_parameterization_mean_variance(self):
        # shape/rate chosen so E[lam] = X and Var[lam] = obs_var
        x, var = 100.0, 100.0
        shape, rate = x * x / var, x / var
        assert shape / rate == pytest.approx(100.0)
        assert shape / rate ** 2 == pytest.approx(100.0)

    def test_simulated_moments(self, rng):
        x, var = 250.0, 900.0
        lam = rng.gamma(x * x / var, var / x, size=200_000)
        assert lam.mean() == pytest.approx(x, abs=4 * math.sqrt(var / 200_000))
        assert lam.var() == pytest.approx(var, rel=0.05)

    def test_zero_total_atom(self):
        assert intensity_log_pdf(0.0, 0.0, 100.0) == 0.0
        assert intensity_log_pdf(0.5, 0.0, 100.0) == -np.inf

    def test_matches_scipy(self):
        from scipy.stats import gamma as sp_gamma
        x, var, lam = 80.0, 400.0, 77.0
        expected = sp_gamma.logpdf(lam, a=x * x / var, scale=var / x)
        assert intensity_log_pdf(lam, x, var) == pytest.approx(expected, rel=1e-12)


class TestPoissonGammaMarginal:
    def test_negative_binomial_identity(self, rng):
        # marginal of Poisson(Gamma) equals NB(r = X^2/var, p = (X/var)/(1+X/var))
        x, var = 60.0, 240.0
        n = 100_000
        lam = rng.gamma(x * x / var, var / x, size=n)
        draws = rng.poisson(lam)
        r = x * x / var
        p = (x / var) / (1.0 + x / var)
        hi = int(np.quantile(draws, 0.999))
        edges = np.arange(0, hi + 1)
        obs_counts = np.bincount(np.clip(draws, 0, hi), minlength=hi + 1)
        probs = nbinom.pmf(edges, r, p)
        probs[-1] = 1.0 - nbinom.cdf(hi - 1, r, p)
        # merge sparse tail bins for a valid chi^2
        exp_counts = probs * n
        keep = exp_counts >= 5
        obs_m = np.append(obs_counts[keep], obs_counts[~keep].sum())
        exp_m = np.append(exp_counts[keep], exp_counts[~keep].sum())
        stat, pval = chisquare(obs_m, exp_m * obs_m.sum() / exp_m.sum())
        assert pval > 0.01

    def test_nb_mean_variance(self):
        x, var = 100.0, 900.0
        r = x * x / var
        p = (x / var) / (1.0 + x / var)
        assert nbinom.mean(r, p) == pytest.approx(x)
        assert nbinom.var(r, p) == pytest.approx(x + var)


class TestGroundLoglik:
    def test_intensity_at_latent_total(self):
        state = state_with_totals(new=20, q=50, h=80, f=150, m=90)
        obs = GroundObservation(3, 20, 50, 80, 150, 90)
        lambdas = [20.0, 50.0, 80.0, 150.0, 90.0]
        lp = ground_loglik(state, obs, lambdas, obs_var=400.0)
        assert np.isfinite(lp)
        manual = sum(intensity_log_pdf(l, x, 400.0) + poisson.logpmf(y, l)
                     for l, x, y in zip(lambdas,
                                        (20, 50, 80, 150, 90),
                                        (20, 50, 80, 150, 90)))
        assert lp == pytest.approx(manual, rel=1e-12)

    def test_zero_latent_positive_count_impossible(self):
        state = state_with_totals(new=0, q=50, h=80, f=150, m=90)
        obs = GroundObservation(3, 2, 50, 80, 150, 90)
        assert ground_loglik(state, obs, [0.0, 50, 80, 150, 90], 400.0) == -np.inf

    def test_sampling_consistent_with_density(self, rng):
        state = state_with_totals(new=30, q=60, h=100, f=200, m=120)
        g = sample_ground_observation(state, 400.0, 1, rng)
        assert g.t == 1 and min(g.as_array()) >= 0

    def test_counts_validated(self):
        with pytest.raises(ValueError):
            GroundObservation(1, -1, 0, 0, 0, 0)


class TestCorrectedNewborns:
    def test_values(self):
        assert corrected_newborns(0) == 0.0
        assert corrected_newborns(10) == pytest.approx(17.0)
        assert corrected_newborns(100) == pytest.approx(170.0)

    def test_custom_factor(self):
        assert corrected_newborns(10, factor=2.0) == 20.0

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            corrected_newborns(-1)


class TestAerialLoglik:
    def test_consistent_rate_mean(self):
        hyper = HyperParams(aerial_rate="consistent")
        shape, rate = aerial_shape_rate(5000.0, 0.6, hyper)
        assert shape / rate == pytest.approx(0.6 * 5000.0)
        assert shape / rate ** 2 == pytest.approx(hyper.aerial_sd ** 2)

    def test_paper_rate_preserved(self):
        hyper = HyperParams(aerial_rate="paper")
        shape, rate = aerial_shape_rate(5000.0, 0.6, hyper)
        assert rate == pytest.approx(0.6 * 5000.0 / hyper.aerial_sd)

    def test_k_prior_mean(self):
        hyper = HyperParams()
        assert hyper.k_prior_a / (hyper.k_prior_a + hyper.k_prior_b) == \
            pytest.approx(0.5636, abs=5e-4)

    def test_intensity_variance_value(self):
        hyper = HyperParams()
        assert hyper.aerial_sd == 1906.42
        assert hyper.aerial_sd ** 2 == pytest.approx(3.6344e6, rel=1e-4)

    def test_matches_manual_sum(self):
        hyper = HyperParams()
        lam_t = 2800.0
        lp = aerial_loglik(5000.0, 0.56, 2750, lam_t, hyper)
        shape, rate = aerial_shape_rate(5000.0, 0.56, hyper)
        manual = gamma_log_pdf(lam_t, shape, rate) + poisson.logpmf(2750, lam_t)
        assert lp == pytest.approx(manual, rel=1e-12)

    def test_unimodal_in_distance_from_mean(self):
        # with the intensity fixed at its mean, the density decays as the
        # count moves away from it on either side
        hyper = HyperParams()
        kb = 0.56 * 5000.0
        below = [aerial_loglik(5000.0, 0.56, t, kb, hyper)
                 for t in range(int(kb), int(kb) - 300, -60)]
        above = [aerial_loglik(5000.0, 0.56, t, kb, hyper)
                 for t in range(int(kb) + 1, int(kb) + 301, 60)]
        assert all(a > b for a, b in zip(below, below[1:]))
        assert all(a > b for a, b in zip(above, above[1:]))

    def test_k_out_of_range(self):
        with pytest.raises(ValueError):
            aerial_loglik(5000.0, 1.0, 2750, 2800.0, HyperParams())

    def test_empty_region_atom(self):
        hyper = HyperParams()
        assert aerial_loglik(0.0, 0.5, 0, 0.0, hyper) == 0.0
        assert aerial_loglik(0.0, 0.5, 5, 0.0, hyper) == -np.inf


class TestSightability:
    def test_values(self):
        assert apply_sightability(1000.0, 100.0) == (1300.0, 130.0)
        assert apply_sightability(0.0, 0.0) == (0.0, 0.0)
        est, se = apply_sightability(2500.0, 300.0)
        assert est == pytest.approx(3250.0)
        assert se == pytest.approx(390.0)

    def test_aerial_observation_validation(self):
        with pytest.raises(ValueError):
            AerialObservation(1, -5.0)
