"""Tolerance-aware labeling, training, and retention analysis for
implicit-feedback recommenders."""

from .events import (
    ACTION_VOCABULARY,
    EventParseError,
    EventValidationError,
    IngestResult,
    InteractionEvent,
    LogFormatError,
    Platform,
    TimeWindow,
    event_to_json,
    ingest_log,
    parse_event,
)
from .labeling import (
    CausalLabeler,
    Label,
    LabeledSample,
    LabelingConfig,
    LabelingMode,
    LabelingResult,
    RuleMode,
    UserProfile,
    label_event,
    label_log,
    tolerance_weight,
    update_profile,
    watch_ratio,
)
from .trainer import (
    DivergenceError,
    Objective,
    RankingModel,
    TrainConfig,
    TrainResult,
    gradient,
    loss,
    train,
)
from .cohort import CohortConfig, CohortReport, analyze, engagement, tolerance_stat
from .simulation import (
    ReturnCurve,
    SimConfig,
    SimItem,
    SimReport,
    SimUser,
    generate_population,
    simulate_experiment,
    user_response,
)

__version__ = "0.1.0"

__all__ = [
    "ACTION_VOCABULARY",
    "CausalLabeler",
    "CohortConfig",
    "CohortReport",
    "DivergenceError",
    "EventParseError",
    "EventValidationError",
    "IngestResult",
    "InteractionEvent",
    "Label",
    "LabeledSample",
    "LabelingConfig",
    "LabelingMode",
    "LabelingResult",
    "LogFormatError",
    "Objective",
    "Platform",
    "RankingModel",
    "ReturnCurve",
    "RuleMode",
    "SimConfig",
    "SimItem",
    "SimReport",
    "SimUser",
    "TimeWindow",
    "TrainConfig",
    "TrainResult",
    "UserProfile",
    "analyze",
    "engagement",
    "event_to_json",
    "generate_population",
    "gradient",
    "ingest_log",
    "label_event",
    "label_log",
    "loss",
    "parse_event",
    "simulate_experiment",
    "tolerance_stat",
    "tolerance_weight",
    "train",
    "update_profile",
    "user_response",
    "watch_ratio",
    "__version__",
]
