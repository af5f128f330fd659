"""Reliability-aware, hysteresis-moderated edge server selection (MO-HAN)."""

__version__ = "0.1.0"

from .core import (
    ConfigError,
    FeatureVector,
    LogEntry,
    PathDescriptor,
    SelectorConfig,
    ServerId,
    TraceRecord,
    validate_config,
)
from .predictor import ModelCoefficients, fit, fit_paths, predict_end_to_end, predict_hop
from .reliability import ReliabilityState, match_indicator, update
from .selector import Decision, Policy, SelectorState, composite_score, mohan_select, step

__all__ = [
    "ConfigError",
    "Decision",
    "FeatureVector",
    "LogEntry",
    "ModelCoefficients",
    "PathDescriptor",
    "Policy",
    "ReliabilityState",
    "SelectorConfig",
    "SelectorState",
    "ServerId",
    "TraceRecord",
    "composite_score",
    "fit",
    "fit_paths",
    "match_indicator",
    "mohan_select",
    "predict_end_to_end",
    "predict_hop",
    "step",
    "update",
    "validate_config",
]
