"""opekit: counterfactual evaluation of bandit policies from logged feedback.

Estimate what a new decision policy would have earned, using only data a
different policy logged: model-based (DM), importance-weighted (IPS),
weight-normalized (SNIPS), and model-assisted (DR) estimators plus their
blend, with streaming mergeable folds, epsilon-greedy propensity recovery,
and a synthetic benchmark with a ground-truth oracle.
"""

from .accumulators import CompensatedSum, StreamAccumulator, merge_accumulators
from .benchmark import (
    BenchmarkResult,
    BenchmarkScenario,
    SweepResult,
    pearson_correlation,
    rmse,
    run_benchmark,
    variance_sweep,
)
from .core import (
    ESTIMATOR_BLEND,
    ESTIMATOR_DM,
    ESTIMATOR_DR,
    ESTIMATOR_IPS,
    ESTIMATOR_NAMES,
    ESTIMATOR_SNIPS,
    EstimateReport,
    LinearScorer,
    LoggedInteraction,
    PolicySpec,
    RecordBatch,
    action_probabilities,
    greedy_action,
    greedy_actions,
    policy_action_probability,
)
from .errors import (
    ConfigError,
    EstimationError,
    InputError,
    LogFormatError,
    OpekitError,
    RecordRejected,
    SupportViolationError,
    UnsupportedModeError,
)
from .estimators import (
    bootstrap_interval,
    estimate_all,
    estimate_blend,
    estimate_dm,
    estimate_dr,
    estimate_ips,
    estimate_snips,
    fold_records,
    per_record_ips_term,
    report_from_accumulator,
)
from .logio import LogHeader, LogReader, read_log, write_log
from .propensity import (
    MODE_EPSILON_GREEDY_RECOVERY,
    MODE_EXPLORATION_ONLY,
    MODE_LOGGED,
    PropensityConfig,
    epsilon_greedy_propensities,
    importance_weight,
    recover_logging_propensity,
)
from .reward_model import (
    BiasedRewardModel,
    CrossFitRewardModel,
    RewardModel,
    expected_model_reward,
    fit_cross_fitted,
    fit_reward_model,
    predict_reward,
)
from .simulate import (
    BanditEnvironment,
    DiscreteContexts,
    GaussianContexts,
    LogisticMeanReward,
    PolicyValue,
    TabularMeanReward,
    generate_log,
    oracle_reward_model,
    split_seed,
    true_policy_value,
)

__version__ = "0.1.0"

__all__ = [
    "BanditEnvironment",
    "BenchmarkResult",
    "BenchmarkScenario",
    "BiasedRewardModel",
    "CompensatedSum",
    "ConfigError",
    "CrossFitRewardModel",
    "DiscreteContexts",
    "ESTIMATOR_BLEND",
    "ESTIMATOR_DM",
    "ESTIMATOR_DR",
    "ESTIMATOR_IPS",
    "ESTIMATOR_NAMES",
    "ESTIMATOR_SNIPS",
    "EstimateReport",
    "EstimationError",
    "GaussianContexts",
    "InputError",
    "LinearScorer",
    "LogFormatError",
    "LogHeader",
    "LogReader",
    "LoggedInteraction",
    "LogisticMeanReward",
    "MODE_EPSILON_GREEDY_RECOVERY",
    "MODE_EXPLORATION_ONLY",
    "MODE_LOGGED",
    "OpekitError",
    "PolicySpec",
    "PolicyValue",
    "PropensityConfig",
    "RecordBatch",
    "RecordRejected",
    "RewardModel",
    "StreamAccumulator",
    "SupportViolationError",
    "SweepResult",
    "TabularMeanReward",
    "UnsupportedModeError",
    "action_probabilities",
    "bootstrap_interval",
    "estimate_all",
    "estimate_blend",
    "estimate_dm",
    "estimate_dr",
    "estimate_ips",
    "estimate_snips",
    "expected_model_reward",
    "fit_cross_fitted",
    "fit_reward_model",
    "fold_records",
    "generate_log",
    "greedy_action",
    "greedy_actions",
    "importance_weight",
    "merge_accumulators",
    "oracle_reward_model",
    "pearson_correlation",
    "per_record_ips_term",
    "policy_action_probability",
    "predict_reward",
    "read_log",
    "recover_logging_propensity",
    "report_from_accumulator",
    "rmse",
    "run_benchmark",
    "split_seed",
    "true_policy_value",
    "variance_sweep",
    "write_log",
    "epsilon_greedy_propensities",
]
