"""Weighted random search for hyperparameter optimization."""

__version__ = "0.1.0"

from wrsearch.campaign import CampaignResult, TrialLogEntry, load_trial_log, run_campaign
from wrsearch.config import ExperimentConfig, load_config
from wrsearch.engine import (
    BestSoFar,
    ChangeSchedule,
    MinSamplesPolicy,
    Phase,
    RunHistory,
    TrialRecord,
    default_phase_split,
    derive_schedule,
    random_search,
    rs_step,
    run,
    wrs_step,
)
from wrsearch.exceptions import (
    ConfigError,
    ConstantObjectiveError,
    EngineError,
    InputDataError,
    ObjectiveError,
    ObjectiveTimeoutError,
    OutputError,
    ScheduleError,
    SpaceConfigurationError,
    TheoryDomainError,
    WRSearchError,
)
from wrsearch.importance import EnsembleSettings, TreeEnsemble, WeightReport, estimate_weights
from wrsearch.objectives import (
    BuiltinObjective,
    ExternalObjective,
    Objective,
    builtin,
    griewank,
    griewank_modified_6,
)
from wrsearch.space import (
    Candidate,
    Dimension,
    DomainKind,
    SearchSpace,
    cardinality,
    sample_dimension,
    substream,
)
from wrsearch.stats import CampaignSummary, TTestResult, pooled_t_test, summarize, t_cdf
from wrsearch.theory import DiscreteProfile, p_after_n, p_rs, p_wrs

__all__ = [
    "BestSoFar",
    "BuiltinObjective",
    "CampaignResult",
    "CampaignSummary",
    "Candidate",
    "ChangeSchedule",
    "ConfigError",
    "ConstantObjectiveError",
    "Dimension",
    "DiscreteProfile",
    "DomainKind",
    "EngineError",
    "EnsembleSettings",
    "ExperimentConfig",
    "ExternalObjective",
    "InputDataError",
    "MinSamplesPolicy",
    "Objective",
    "ObjectiveError",
    "ObjectiveTimeoutError",
    "OutputError",
    "Phase",
    "RunHistory",
    "ScheduleError",
    "SearchSpace",
    "SpaceConfigurationError",
    "TTestResult",
    "TheoryDomainError",
    "TreeEnsemble",
    "TrialLogEntry",
    "TrialRecord",
    "WRSearchError",
    "WeightReport",
    "builtin",
    "cardinality",
    "default_phase_split",
    "derive_schedule",
    "estimate_weights",
    "griewank",
    "griewank_modified_6",
    "load_config",
    "load_trial_log",
    "p_after_n",
    "p_rs",
    "p_wrs",
    "pooled_t_test",
    "random_search",
    "rs_step",
    "run",
    "run_campaign",
    "sample_dimension",
    "substream",
    "summarize",
    "t_cdf",
    "wrs_step",
]
