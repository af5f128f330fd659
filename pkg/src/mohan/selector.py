"""Composite scoring, the MO-HAN hysteresis decision, and baseline policies."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence

from .core import SelectorConfig, ensure_same_length
from .reliability import ReliabilityState, update


class Policy(str, Enum):
    MOHAN = "mohan"
    NEAREST = "nearest"
    ROUND_ROBIN = "roundrobin"
    LOWEST_LATENCY = "lowestlatency"

    @classmethod
    def parse(cls, name: str) -> "Policy":
        try:
            return cls(name)
        except ValueError:
            valid = ", ".join(p.value for p in cls)
            raise ValueError(f"unknown policy {name!r}; valid names: {valid}") from None


class Reason(str, Enum):
    FIRST_DECISION = "FirstDecision"
    KEPT_SAME = "KeptSame"
    HYSTERESIS_HOLD = "HysteresisHold"
    HANDOVER = "Handover"
    BASELINE_POLICY = "BaselinePolicy"


@dataclass(frozen=True)
class SelectorState:
    previous: Optional[int] = None
    rr_cursor: int = 0


@dataclass(frozen=True)
class Decision:
    selected: int
    scores: tuple[float, ...]
    predicted: tuple[float, ...]
    handover: bool
    reason: Reason


@dataclass(frozen=True)
class Feedback:
    """Outcome of the previously served request, fed into the next step."""

    server: int
    observed: float
    predicted: float


def composite_score(
    predicted: Sequence[float], reliability: Sequence[float], alpha: float
) -> tuple[float, ...]:
    """Weighted blend of normalised predicted latency and unreliability.

    When every prediction is zero the latency term carries no ranking
    information and is taken as 0.
    """
    ensure_same_length(predicted, reliability)
    if any(t < 0 for t in predicted):
        raise ValueError("predicted latencies must be >= 0")
    if any(not 0.0 <= r <= 1.0 for r in reliability):
        raise ValueError("reliability scores must lie in [0,1]")
    t_max = max(predicted)
    if t_max > 0:
        return tuple(
            alpha * (t / t_max) + (1.0 - alpha) * (1.0 - r) for t, r in zip(predicted, reliability)
        )
    return tuple((1.0 - alpha) * (1.0 - r) for r in reliability)


def _argmin(values: Sequence[float], prefer: Optional[int] = None) -> int:
    best = min(values)
    if prefer is not None and values[prefer] == best:
        return prefer
    return values.index(best)


def _check_previous(state: SelectorState, n: int) -> None:
    if state.previous is not None and not 0 <= state.previous < n:
        raise IndexError(f"previous server {state.previous} out of range for {n} servers")


# Scores live in [0,1]; a gap within this of theta counts as reaching it, so
# decimal thresholds like 0.50 - 0.45 vs 0.05 behave as written.
SCORE_TOL = 1e-12


def mohan_select(
    state: SelectorState,
    scores: Sequence[float],
    theta: float,
    predicted: Optional[Sequence[float]] = None,
) -> Decision:
    scores = tuple(scores)
    if not scores:
        raise ValueError("scores must be non-empty")
    _check_previous(state, len(scores))
    predicted = tuple(predicted) if predicted is not None else (float("nan"),) * len(scores)
    prev = state.previous
    best = _argmin(scores, prefer=prev)
    if prev is None:
        return Decision(best, scores, predicted, False, Reason.FIRST_DECISION)
    if best == prev:
        return Decision(prev, scores, predicted, False, Reason.KEPT_SAME)
    if scores[prev] - scores[best] < theta - SCORE_TOL:
        return Decision(prev, scores, predicted, False, Reason.HYSTERESIS_HOLD)
    return Decision(best, scores, predicted, True, Reason.HANDOVER)


def baseline_select(
    policy: Policy,
    state: SelectorState,
    predicted: Sequence[float],
    nearest: int,
    scores: Optional[Sequence[float]] = None,
) -> tuple[Decision, SelectorState]:
    predicted = tuple(predicted)
    n = len(predicted)
    if n == 0:
        raise ValueError("predicted must be non-empty")
    if not 0 <= nearest < n:
        raise IndexError(f"nearest server {nearest} out of range for {n} servers")
    _check_previous(state, n)
    cursor = state.rr_cursor
    if policy is Policy.NEAREST:
        selected = nearest
    elif policy is Policy.ROUND_ROBIN:
        selected = cursor % n
        cursor = (cursor + 1) % n
    elif policy is Policy.LOWEST_LATENCY:
        selected = _argmin(predicted)
    else:
        raise ValueError(f"{policy} is not a baseline policy")
    handover = state.previous is not None and selected != state.previous
    scores = tuple(scores) if scores is not None else (float("nan"),) * n
    decision = Decision(selected, scores, predicted, handover, Reason.BASELINE_POLICY)
    return decision, SelectorState(previous=selected, rr_cursor=cursor)


def step(
    policy: Policy,
    config: SelectorConfig,
    state: SelectorState,
    reliability: ReliabilityState,
    predicted: Sequence[float],
    feedback: Optional[Feedback] = None,
    nearest: int = 0,
) -> tuple[Decision, SelectorState, ReliabilityState]:
    """One selection round: absorb feedback, score, decide.

    Baselines ignore reliability when deciding, but the state is still
    updated so their logs show the trust each server would have earned.
    """
    if len(predicted) != len(reliability.scores):
        raise ValueError("one prediction per server is required")
    if feedback is not None:
        reliability = update(reliability, feedback.server, feedback.observed, feedback.predicted)
    if policy is Policy.MOHAN:
        scores = composite_score(predicted, reliability.scores, config.alpha)
        decision = mohan_select(state, scores, config.theta_handover, predicted)
        new_state = replace(state, previous=decision.selected)
        return decision, new_state, reliability
    if all(t == t for t in predicted):
        scores = composite_score(predicted, reliability.scores, config.alpha)
    else:
        scores = None
    decision, new_state = baseline_select(policy, state, predicted, nearest, scores)
    return decision, new_state, reliability
