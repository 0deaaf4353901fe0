"""Closed-loop desk-scale study machinery: synthetic fNIRS, pilot agents, the
three study conditions, record/replay sessions, and descriptive statistics."""

from .agent import AgentProfile, LagChannel, PilotAgent, scripted_need
from .generator import FnirsGenerator, LoadScript, ScriptSegment, STATE_CONCENTRATIONS, facet_channels
from .metrics import compute_metrics, metrics_from_bag, parse_session_id
from .session import SessionConfig, SessionResult, rerun_from_bag, run_session
from .stats import (
    LogOddsResult,
    ZeroDenominatorRate,
    error_rate_ratio,
    latin_square,
    optimal_log_odds,
    validate_latin_square,
)
from .study import StudyConfig, aggregate_report, report_from_bags, run_study
from .training import DEFAULT_MODEL_SEED, default_models, train_fixture_models

__all__ = [
    "AgentProfile",
    "PilotAgent",
    "LagChannel",
    "scripted_need",
    "FnirsGenerator",
    "LoadScript",
    "ScriptSegment",
    "STATE_CONCENTRATIONS",
    "facet_channels",
    "SessionConfig",
    "SessionResult",
    "run_session",
    "rerun_from_bag",
    "compute_metrics",
    "metrics_from_bag",
    "parse_session_id",
    "latin_square",
    "validate_latin_square",
    "optimal_log_odds",
    "error_rate_ratio",
    "LogOddsResult",
    "ZeroDenominatorRate",
    "StudyConfig",
    "run_study",
    "report_from_bags",
    "aggregate_report",
    "train_fixture_models",
    "default_models",
    "DEFAULT_MODEL_SEED",
]
