import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import ks_2samp

from demodyn.inference import ChainConfig, ModelData, run_chain
from demodyn.rates import build_design_matrices
from demodyn.state import estimate_initial_means
from demodyn.validation import (BootstrapPlan, SurveyUnits, balanced_bootstrap,
                                bootstrap_estimates, coverage_report,
                                generate_synthetic_series, importance_weights,
                                irmcmc_refit, jolly_method2, weight_ess)
from demodyn.dataio import GroundRecord, GroundSeries

from conftest import (default_hyper, default_init_means, make_covariates,
                      stable_coefficients, stable_priors)


def units_with(z, y, frame_area=100.0, frame_units=50):
    return SurveyUnits(np.asarray(z, float), np.asarray(y, float),
                       frame_area, frame_units)


class TestBalancedBootstrap:
    def test_single_replicate_is_permutation(self, rng):
        units = units_with(np.ones(9), np.arange(9.0))
        plan = balanced_bootstrap(units, 1, rng)
        assert sorted(plan.selections[0]) == list(range(9))

    def test_exact_totals_small(self, rng):
        units = units_with(np.ones(4), np.arange(4.0))
        plan = balanced_bootstrap(units, 3, rng)
        assert np.array_equal(plan.unit_totals(4), np.full(4, 3))

    def test_within_replicate_counts_vary_but_totals_constant(self, rng):
        units = units_with(np.ones(30), np.arange(30.0))
        plan = balanced_bootstrap(units, 8, rng)
        per_rep = np.stack([np.bincount(row, minlength=30)
                            for row in plan.selections])
        assert per_rep.std(axis=0).max() > 0       # replicates genuinely resample
        assert np.array_equal(per_rep.sum(axis=0), np.full(30, 8))

    def test_invalid_replicates(self, rng):
        with pytest.raises(ValueError):
            balanced_bootstrap(units_with([1.0], [1.0]), 0, rng)

    @given(st.integers(2, 40), st.integers(1, 7))
    @settings(max_examples=25, deadline=None)
    def test_totals_invariant_property(self, n, b):
        rng = np.random.default_rng(n * 1000 + b)
        units = units_with(np.ones(n), np.zeros(n), frame_area=float(n + 1),
                           frame_units=n + 5)
        plan = balanced_bootstrap(units, b, rng)
        assert np.array_equal(plan.unit_totals(n), np.full(n, b))


class TestJollyMethod2:
    def test_hand_ratio(self):
        units = units_with([5.0, 5.0], [10.0, 20.0], frame_area=100.0,
                           frame_units=20)
        est, se = jolly_method2(units)
        assert est == pytest.approx(300.0)

    def test_proportional_counts_zero_se(self):
        z = np.array([1.0, 2.0, 4.0, 8.0])
        units = units_with(z, 2.0 * z, frame_area=40.0, frame_units=10)
        est, se = jolly_method2(units)
        assert est == 80.0
        assert se == 0.0

    def test_dual_implementation_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            n = int(rng.integers(5, 30))
            z = rng.uniform(1.0, 10.0, n)
            y = rng.uniform(0.0, 50.0, n)
            big_n = n + int(rng.integers(1, 50))
            frame = z.sum() * big_n / n
            units = units_with(z, y, frame_area=frame, frame_units=big_n)
            est, se = jolly_method2(units)
            # independent expanded-form implementation
            ratio = y.sum() / z.sum()
            s_y2 = y.var(ddof=1)
            s_z2 = z.var(ddof=1)
            s_zy = np.cov(z, y, ddof=1)[0, 1]
            var2 = big_n * (big_n - n) / n * (s_y2 - 2 * ratio * s_zy
                                              + ratio ** 2 * s_z2)
            assert est == pytest.approx(frame * ratio, rel=1e-12)
            assert se == pytest.approx(math.sqrt(max(var2, 0.0)), rel=1e-9)

    @given(st.floats(0.1, 100.0))
    @settings(max_examples=30, deadline=None)
    def test_area_scaling_invariance(self, c):
        z = np.array([2.0, 3.0, 7.0])
        y = np.array([5.0, 1.0, 9.0])
        base = units_with(z, y, frame_area=30.0, frame_units=9)
        scaled = units_with(c * z, y, frame_area=c * 30.0, frame_units=9)
        e1, _ = jolly_method2(base)
        e2, _ = jolly_method2(scaled)
        assert e2 == pytest.approx(e1, rel=1e-9)

    def test_zero_area_rejected(self):
        with pytest.raises(ValueError):
            units_with([0.0, 1.0], [1.0, 1.0])

    def test_variance_needs_two_units(self):
        with pytest.raises(ValueError):
            jolly_method2(units_with([3.0], [5.0]))

    def test_bootstrap_estimates_shape(self, rng):
        units = units_with(np.ones(12), np.arange(12.0), frame_area=24.0,
                           frame_units=24)
        plan = balanced_bootstrap(units, 5, rng)
        est = bootstrap_estimates(units, plan)
        assert est.shape == (5, 2)
        assert np.isfinite(est).all()


class TestSyntheticSeries:
    def test_constant_anchors_track_constant(self, rng):
        n = 24
        covs = make_covariates(n, seed=11)
        records, targets = generate_synthetic_series(
            [1, n], [3000.0, 3000.0], n, covs, stable_coefficients(),
            default_hyper(), default_init_means(), rng)
        assert np.allclose(targets, 3000.0)
        totals = np.array([sum(r[2:]) for r in records], dtype=float)
        assert abs(totals.mean() - 3000.0) < 200.0

    def test_length_matches_request(self, rng):
        n = 174
        covs = make_covariates(n, seed=12)
        records, targets = generate_synthetic_series(
            [1, 80, n], [2500.0, 2200.0, 2000.0], n, covs,
            stable_coefficients(), default_hyper(), default_init_means(), rng)
        assert len(records) == n
        assert len(targets) == n

    def test_class_structure_preserved(self, rng):
        # emitted class proportions track the simulating trajectory's structure
        n = 36
        covs = make_covariates(n, seed=13)
        records, _ = generate_synthetic_series(
            [1, n], [4000.0, 4000.0], n, covs, stable_coefficients(),
            default_hyper(), default_init_means(), rng)
        arr = np.array([r[2:] for r in records], dtype=float)
        props = arr.sum(axis=0) / arr.sum()
        # adult females dominate under the stable coefficient set
        assert props[3] == props.max()
        assert 0.0 < props[0] < 0.15

    def test_interpolation_is_linear(self, rng):
        n = 11
        covs = make_covariates(n, seed=14)
        _, targets = generate_synthetic_series(
            [1, 11], [1000.0, 2000.0], n, covs, stable_coefficients(),
            default_hyper(), default_init_means(), rng)
        assert np.allclose(targets, np.linspace(1000.0, 2000.0, 11))

    def test_needs_two_anchors(self, rng):
        covs = make_covariates(6, seed=15)
        with pytest.raises(ValueError, match="two survey anchors"):
            generate_synthetic_series([3], [100.0], 6, covs,
                                      stable_coefficients(), default_hyper(),
                                      default_init_means(), rng)

    def test_anchor_order_enforced(self, rng):
        covs = make_covariates(6, seed=15)
        with pytest.raises(ValueError, match="increasing"):
            generate_synthetic_series([4, 2], [100.0, 100.0], 6, covs,
                                      stable_coefficients(), default_hyper(),
                                      default_init_means(), rng)


class TestImportanceWeights:
    def test_uniform_for_identical_logs(self):
        w = importance_weights(np.zeros(10))
        assert np.allclose(w, 0.1)
        assert weight_ess(w) == pytest.approx(10.0)

    def test_degenerate_raises(self):
        with pytest.raises(ValueError, match="dissimilar"):
            importance_weights(np.full(5, -np.inf))

    def test_gaussian_shifted_mean_resampling(self, rng):
        # weighted reference draws from N(0,1) approximate N(0.5,1)
        draws = rng.standard_normal(60_000)
        log_w = -0.5 * (draws - 0.5) ** 2 + 0.5 * draws ** 2
        w = importance_weights(log_w)
        resampled = rng.choice(draws, size=30_000, replace=True, p=w)
        assert resampled.mean() == pytest.approx(0.5, abs=0.05)
        assert weight_ess(w) > 1000

    def test_ess_definition(self):
        w = np.array([0.5, 0.5, 0.0, 0.0])
        assert weight_ess(w) == pytest.approx(2.0)


def _series_problem(seed, n=16, targets=(2600.0, 2400.0)):
    rng = np.random.default_rng(seed)
    covs = make_covariates(n, seed=31)
    records, tgt = generate_synthetic_series(
        [1, n], list(targets), n, covs, stable_coefficients(), default_hyper(),
        default_init_means(), rng)
    series = GroundSeries([GroundRecord(*r) for r in records])
    start = (covs[0].year, covs[0].month)
    means = estimate_initial_means(series, tgt[0])
    data = ModelData(design=build_design_matrices(covs),
                     obs=series.observation_array(start, n),
                     svy_months=np.zeros(0, np.int64),
                     svy_totals=np.zeros(0, np.int64),
                     init_means=means, hyper=default_hyper())
    return data, tgt


class TestIrmcmc:
    def test_identical_data_matches_reference(self, rng):
        data, _ = _series_problem(1)
        priors = stable_priors()
        ref_cfg = ChainConfig(n_iter=6000, burn_in=1000, thin=5, seed=10,
                              update_sigma2=False, keep_states=True)
        reference = run_chain(ref_cfg, data, priors)
        short = ChainConfig(n_iter=600, burn_in=100, thin=5, seed=0,
                            update_sigma2=False, adapt=False)
        pooled, ess = irmcmc_refit(reference, data, data, priors, short, rng,
                                   n_seeds=10)
        assert ess == pytest.approx(len(reference.states))
        col = reference.names.index("quarter[0]")
        ref_col = reference.params[:, col]
        stat = ks_2samp(ref_col, pooled.params[:, col]).statistic
        assert stat < 0.2  # coarse bound at unit-test scale; acceptance ties it down
        assert abs(pooled.params[:, col].mean() - ref_col.mean()) < \
            0.5 * ref_col.std()

    def test_requires_kept_states(self, rng):
        data, _ = _series_problem(2)
        priors = stable_priors()
        ref = run_chain(ChainConfig(n_iter=300, burn_in=100, thin=5, seed=1,
                                    update_sigma2=False), data, priors)
        short = ChainConfig(n_iter=100, burn_in=10, thin=2, seed=0)
        with pytest.raises(ValueError, match="keep"):
            irmcmc_refit(ref, data, data, priors, short, rng)

    def test_mismatched_covariates_rejected(self, rng):
        data, _ = _series_problem(3)
        priors = stable_priors()
        ref = run_chain(ChainConfig(n_iter=300, burn_in=100, thin=5, seed=1,
                                    update_sigma2=False, keep_states=True),
                        data, priors)
        covs2 = make_covariates(16, seed=99)
        other = ModelData(design=build_design_matrices(covs2), obs=data.obs,
                          svy_months=data.svy_months, svy_totals=data.svy_totals,
                          init_means=data.init_means, hyper=data.hyper)
        short = ChainConfig(n_iter=100, burn_in=10, thin=2, seed=0)
        with pytest.raises(ValueError, match="share covariates"):
            irmcmc_refit(ref, data, other, priors, short, rng)


class FakeSummary:
    def __init__(self, lower, upper):
        t1 = len(lower) + 1
        self.class_lower = np.zeros((6, t1))
        self.class_upper = np.zeros((6, t1))
        self.class_lower[5, 1:] = lower
        self.class_upper[5, 1:] = upper


class TestCoverageReport:
    def test_inside_everywhere(self):
        s = FakeSummary(np.zeros(10), np.full(10, 100.0))
        assert coverage_report(np.full(10, 50.0), s) == 100.0

    def test_outside_everywhere(self):
        s = FakeSummary(np.zeros(10), np.full(10, 10.0))
        assert coverage_report(np.full(10, 50.0), s) == 0.0

    def test_monotone_in_band_width(self, rng):
        est = rng.uniform(0, 100, 20)
        narrow = FakeSummary(np.full(20, 40.0), np.full(20, 60.0))
        wide = FakeSummary(np.full(20, 20.0), np.full(20, 80.0))
        assert coverage_report(est, wide) >= coverage_report(est, narrow)

    def test_length_mismatch(self):
        s = FakeSummary(np.zeros(10), np.ones(10))
        with pytest.raises(ValueError):
            coverage_report(np.zeros(7), s)


class TestSurveyUnitsValidation:
    def test_negative_count_rejected(self):
        with pytest.raises(ValueError):
            units_with([1.0], [-1.0])

    def test_sample_larger_than_frame_rejected(self):
        with pytest.raises(ValueError):
            SurveyUnits(np.ones(10), np.ones(10), 100.0, 5)

    def test_area_accounting(self):
        with pytest.raises(ValueError, match="exceeds the frame"):
            SurveyUnits(np.full(4, 30.0), np.ones(4), 100.0, 10)

    def test_take_subset(self):
        u = units_with([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
        sub = u.take(np.array([2, 0]))
        assert np.array_equal(sub.areas, [3.0, 1.0])
        assert sub.frame_units == u.frame_units
