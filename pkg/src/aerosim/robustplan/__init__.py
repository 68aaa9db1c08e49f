"""KL-robust policy evaluation and tabular learning for slot-and-beam planning."""

from .env import PerturbedTrackEnv, StepTable, TrackScenario, build_table, partitions, perturbed_env
from .learning import (
    ALGORITHMS,
    LearningResult,
    child_seed,
    decaying_eps,
    evaluate_policy,
    greedy,
    q_learning,
    robust_td_learning,
    run_variance_study,
    soft_td_learning,
    td_control,
    variance_report,
)
from .operator import (
    RobustEvaluation,
    TabularMDP,
    UncertaintySet,
    WorstCase,
    adversarial_bellman,
    kl,
    random_mdp,
    robust_policy_evaluation,
    standard_backup,
    standard_evaluation,
    tilt,
    value_iteration,
    worst_case,
)

__all__ = [
    "ALGORITHMS",
    "LearningResult",
    "PerturbedTrackEnv",
    "RobustEvaluation",
    "StepTable",
    "TabularMDP",
    "TrackScenario",
    "UncertaintySet",
    "WorstCase",
    "adversarial_bellman",
    "build_table",
    "child_seed",
    "decaying_eps",
    "evaluate_policy",
    "greedy",
    "kl",
    "partitions",
    "perturbed_env",
    "q_learning",
    "random_mdp",
    "robust_policy_evaluation",
    "robust_td_learning",
    "run_variance_study",
    "soft_td_learning",
    "standard_backup",
    "standard_evaluation",
    "td_control",
    "tilt",
    "value_iteration",
    "variance_report",
    "worst_case",
]
