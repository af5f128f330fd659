"""Shared domain types and validated selector configuration.

All types are frozen dataclasses; construction validates invariants and raises
``ValueError`` (or a subclass) on violation, so an invalid instance cannot exist.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping, NewType, Optional, Sequence, Union

ServerId = NewType("ServerId", int)

# Latencies are milliseconds (float64) everywhere in the package.


class ConfigError(ValueError):
    """Raised when a configuration field is outside its admissible range."""

    def __init__(self, field: str, value: Any, interval: str):
        self.field = field
        self.value = value
        self.interval = interval
        super().__init__(f"{field} out of {interval} (got {value!r})")


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and not math.isnan(v)


@dataclass(frozen=True)
class FeatureVector:
    """Monitored parameters of one hop: payload size, utilization, arrival rate."""

    payload_bytes: float
    utilization: float
    arrival_rate: float

    def __post_init__(self) -> None:
        if not _is_number(self.payload_bytes) or not 0 <= self.payload_bytes < math.inf:
            raise ValueError(f"payload_bytes must be finite and >= 0 (got {self.payload_bytes!r})")
        if not _is_number(self.utilization) or not 0.0 <= self.utilization <= 1.0:
            raise ValueError(
                f"utilization must be a fraction in [0,1] (got {self.utilization!r})"
            )
        if not _is_number(self.arrival_rate) or not 0 <= self.arrival_rate < math.inf:
            raise ValueError(f"arrival_rate must be finite and >= 0 (got {self.arrival_rate!r})")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.payload_bytes, self.utilization, self.arrival_rate)


@dataclass(frozen=True)
class PathDescriptor:
    server: ServerId
    hops: tuple[FeatureVector, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.server, int) or self.server < 0:
            raise ValueError(f"server must be a non-negative integer (got {self.server!r})")
        object.__setattr__(self, "hops", tuple(self.hops))
        if not self.hops:
            raise ValueError("path must have at least one hop")

    def __add__(self, other: "PathDescriptor") -> "PathDescriptor":
        return PathDescriptor(self.server, self.hops + other.hops)


@dataclass(frozen=True)
class SelectorConfig:
    """MO-HAN knobs plus the reliability parameters.

    ``initial_reliability`` is either a single shared value or one value per
    server.
    """

    alpha: float = 0.5
    theta_handover: float = 0.05
    beta: float = 0.9
    delta: float = 0.2
    initial_reliability: Union[float, tuple[float, ...]] = 1.0

    def __post_init__(self) -> None:
        _check_unit("alpha", self.alpha)
        if not _is_number(self.theta_handover) or self.theta_handover < 0:
            raise ConfigError("theta_handover", self.theta_handover, "[0,inf)")
        _check_unit("beta", self.beta)
        if not _is_number(self.delta) or self.delta < 0:
            raise ConfigError("delta", self.delta, "[0,inf]")
        r = self.initial_reliability
        if isinstance(r, (list, tuple)):
            r = tuple(r)
            if not r:
                raise ConfigError("initial_reliability", r, "non-empty")
            for v in r:
                _check_unit("initial_reliability", v)
            object.__setattr__(self, "initial_reliability", r)
        else:
            _check_unit("initial_reliability", r)

    def initial_scores(self, n_servers: int) -> tuple[float, ...]:
        r = self.initial_reliability
        if isinstance(r, tuple):
            if len(r) != n_servers:
                raise ValueError(
                    f"initial_reliability has {len(r)} entries for {n_servers} servers"
                )
            return tuple(float(v) for v in r)
        return (float(r),) * n_servers

    def to_dict(self) -> dict[str, Any]:
        r = self.initial_reliability
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "delta": self.delta,
            "theta": self.theta_handover,
            "initial_reliability": list(r) if isinstance(r, tuple) else r,
        }


def _check_unit(name: str, v: Any) -> None:
    if not _is_number(v) or not 0.0 <= v <= 1.0:
        raise ConfigError(name, v, "[0,1]")


_ALIASES = {
    "alpha": "alpha",
    "beta": "beta",
    "delta": "delta",
    "theta": "theta_handover",
    "theta_handover": "theta_handover",
    "initial_reliability": "initial_reliability",
    "r_init": "initial_reliability",
}


def validate_config(raw: Mapping[str, Any]) -> SelectorConfig:
    """Build a :class:`SelectorConfig` from a loose mapping.

    Accepts ``theta`` / ``theta_handover`` and ``r_init`` /
    ``initial_reliability`` spellings; missing fields take their defaults.
    Unknown keys are rejected.
    """
    kwargs: dict[str, Any] = {}
    for key, value in raw.items():
        if key not in _ALIASES:
            raise ConfigError(key, value, "known fields " + ", ".join(sorted(_ALIASES)))
        if isinstance(value, str):
            try:
                value = float(value)
            except ValueError:
                raise ConfigError(key, value, "numbers") from None
        kwargs[_ALIASES[key]] = value
    return SelectorConfig(**kwargs)


@dataclass(frozen=True)
class TraceRecord:
    """One client request with the per-server path metrics seen at that time."""

    timestamp: float
    frame_size: int
    paths: tuple[PathDescriptor, ...]
    served_by: Optional[ServerId] = None
    observed_latency: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "paths", tuple(sorted(self.paths, key=lambda p: p.server)))
        if not _is_number(self.timestamp) or not 0 <= self.timestamp < math.inf:
            raise ValueError(f"timestamp must be finite and >= 0 (got {self.timestamp!r})")
        if not _is_number(self.frame_size) or self.frame_size < 0:
            raise ValueError(f"frame_size must be >= 0 (got {self.frame_size!r})")
        servers = [p.server for p in self.paths]
        if sorted(servers) != list(range(len(servers))) or not servers:
            raise ValueError(f"paths must cover servers 0..J-1 exactly once (got {servers})")
        if (self.served_by is None) != (self.observed_latency is None):
            raise ValueError("observed_latency must be present iff served_by is present")
        if self.served_by is not None:
            if not 0 <= self.served_by < len(self.paths):
                raise ValueError(f"served_by {self.served_by} out of range")
            if not _is_number(self.observed_latency) or not 0 < self.observed_latency < math.inf:
                raise ValueError(
                    f"observed_latency must be finite and > 0 (got {self.observed_latency!r})"
                )

    @property
    def n_servers(self) -> int:
        return len(self.paths)

    def path(self, server: int) -> PathDescriptor:
        return self.paths[server]


def hops_layout(record: TraceRecord) -> tuple[int, ...]:
    return tuple(len(record.path(j).hops) for j in range(record.n_servers))


def ensure_same_length(*vectors: Sequence[Any]) -> int:
    n = len(vectors[0])
    if n == 0:
        raise ValueError("vectors must be non-empty")
    for v in vectors[1:]:
        if len(v) != n:
            raise ValueError(f"length mismatch: {n} vs {len(v)}")
    return n


@dataclass(frozen=True)
class LogEntry:
    """One decision of a policy run, as written to the JSON-lines log."""

    t: float
    policy: str
    selected: int
    handover: bool
    scores: tuple[float, ...]
    predicted: tuple[float, ...]
    reliability: tuple[float, ...]
    observed: float
    reason: str
