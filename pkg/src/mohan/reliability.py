"""Per-server reliability scores driven by a tolerance-based match indicator."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Sequence


def match_indicator(observed: float, predicted: float, delta: float) -> int:
    """1 when the observation stays within ``(1 + delta)`` of the prediction."""
    if observed < 0 or predicted < 0 or delta < 0:
        raise ValueError(
            f"match_indicator needs non-negative inputs "
            f"(observed={observed!r}, predicted={predicted!r}, delta={delta!r})"
        )
    if math.isinf(delta):
        return 1
    return 1 if observed <= (1.0 + delta) * predicted else 0


@dataclass(frozen=True)
class ReliabilityState:
    scores: tuple[float, ...]
    beta: float
    delta: float
    update_count: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))
        if not self.update_count:
            object.__setattr__(self, "update_count", (0,) * len(self.scores))
        else:
            object.__setattr__(self, "update_count", tuple(self.update_count))
        if len(self.update_count) != len(self.scores):
            raise ValueError("update_count must have one entry per server")
        if not self.scores:
            raise ValueError("reliability state needs at least one server")
        for s in self.scores:
            if not 0.0 <= s <= 1.0:
                raise ValueError(f"reliability score {s!r} outside [0,1]")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta out of [0,1] (got {self.beta!r})")
        if not self.delta >= 0:
            raise ValueError(f"delta out of [0,inf] (got {self.delta!r})")

    @classmethod
    def initial(cls, initial: Sequence[float], beta: float, delta: float) -> "ReliabilityState":
        return cls(tuple(initial), beta, delta)

    def to_dict(self) -> dict[str, Any]:
        return {"scores": list(self.scores), "beta": self.beta, "delta": self.delta}

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ReliabilityState":
        return cls(tuple(doc["scores"]), doc["beta"], doc["delta"])


def update(state: ReliabilityState, server: int, observed: float, predicted: float) -> ReliabilityState:
    """Exponential-moving-average update of ``server``'s score.

    Only the served server moves; every other score is carried over untouched.
    """
    if not 0 <= server < len(state.scores):
        raise IndexError(f"server {server} out of range for {len(state.scores)} servers")
    hit = match_indicator(observed, predicted, state.delta)
    old = state.scores[server]
    new = state.beta * old + (1.0 - state.beta) * hit
    # guard the [0,1] invariant against rounding at the endpoints
    new = min(1.0, max(0.0, new))
    scores = state.scores[:server] + (new,) + state.scores[server + 1 :]
    counts = list(state.update_count)
    counts[server] += 1
    return replace(state, scores=scores, update_count=tuple(counts))
