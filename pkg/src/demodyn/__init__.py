"""Age- and sex-structured wildlife population dynamics.

Stochastic monthly simulation, covariate-driven vital rates, integrated
ground/aerial observation layers, Metropolis-within-Gibbs posterior
sampling with transformation moves, and a bootstrap validation harness.
"""

from .rates import (CovariateRecord, HyperParams, RateCoefficients, VitalRates,
                    adjusted_rates, adult_sex_ratio, adult_survival, birth_rate,
                    build_design_matrices, halfyearling_survival, inv_logit,
                    quarter_survival)
from .state import (InitialStateMeans, PopulationState, Trajectory,
                    estimate_initial_means, sample_initial_state,
                    sample_transition, simulate_trajectory, transition_log_pmf)
from .observation import (AerialObservation, GroundObservation, aerial_loglik,
                          apply_sightability, corrected_newborns, ground_loglik,
                          sample_ground_observation)
from .inference import (ChainConfig, ChainResult, ChainState, ModelData,
                        PosteriorSummary, PriorSpec, effective_sample_size,
                        joint_log_density, joint_log_density_parts,
                        posterior_summary, run_chain, tmcmc_update_block,
                        update_k_t, update_lambdas, update_latent_counts,
                        update_sigma2)
from .validation import (BootstrapPlan, SurveyUnits, balanced_bootstrap,
                         bootstrap_estimates, coverage_report,
                         generate_synthetic_series, importance_weights,
                         irmcmc_refit, jolly_method2, weight_ess)

__version__ = "0.1.0"
