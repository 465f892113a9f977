"""Feature attributions with statistically guaranteed rankings.

Shapley- and LIME-style attribution estimates are noisy; this package pairs
the estimators with sequential tests so that the reported top-K ordering is
correct with probability at least 1 - alpha, and with adaptive samplers that
spend just enough computation to certify it.
"""

from .bridge import BridgeModel, connect_bridge
from .errors import (BridgeHandshakeError, ConfigError, DegenerateDesign,
                     DegenerateVariance, EvaluationFailure, InvalidBudget,
                     NonPositiveGap, ParseError, SingularDesign,
                     StableRankError, TooManyFeatures)
from .experiments import ExperimentConfig, ExperimentReport, run_experiment
from .globalrank import (GlobalScores, GlobalTopKResult, LocalAttributionMatrix,
                         global_scores, global_topk, load_attributions,
                         save_attributions, unbiased_abs_contribution,
                         verify_global_ranks)
from .kernelshap import (CoalitionSample, bootstrap_covariance,
                         default_coalition_budget, evaluate_coalitions,
                         kernel_weight, kernelshap_fit, sample_coalitions)
from .lime import (LimeSample, SelectionTrace, lars_next_feature,
                   lasso_entry_order, lime_perturb, slime_select)
from .models import (LinearModel, MLPModel, ModelHandle, TabularDataset,
                     eval_model, load_dataset, load_model, split_dataset,
                     value_function_exhaustive, value_function_marginal)
from .rankshap import (SamplingBudget, StableAttribution, plan_sample_sizes,
                       rankshap)
from .sampling import (MeanVarEstimate, exact_shapley, marginal_contribution,
                       shapley_sampling, shapley_sampling_all)
from .sprt import (SprtBoundaries, SprtState, noncentral_t_logpdf,
                   sprt_likelihood_ratio, sprt_shap, sprt_step)
from .verify import (AttributionSet, TestOutcome, VerifiedRanking,
                     verify_ranks, welch_statistic)

__version__ = "0.1.0"
