"""Seeded discrete-time model of a client, routed paths to edge servers, and
stochastic background load.

Every random stream is derived from ``(seed, run_index, stream)`` through
:class:`numpy.random.SeedSequence`, so traces, per-server latency tables and
policy runs are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

from .core import FeatureVector, LogEntry, PathDescriptor, SelectorConfig, TraceRecord
from .predictor import (
    FitOptions,
    FitReport,
    ModelCoefficients,
    Scaler,
    fit_paths,
    predict_end_to_end,
    predict_hop,
)
from .reliability import ReliabilityState
from .selector import Feedback, Policy, SelectorState, step

FRAME_MIN_BYTES = 400_000
FRAME_MAX_BYTES = 600_000

# stream ids for SeedSequence derivation
_GAPS, _FRAMES, _STATES, _FEATURES, _NOISE, _COLLECT = range(6)


class LoadState(IntEnum):
    CALM = 0
    BUSY = 1
    BURST = 2


@dataclass(frozen=True)
class Topology:
    servers: int = 2
    hops_per_server: tuple[int, ...] = (2, 2)
    nearest: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "hops_per_server", tuple(int(n) for n in self.hops_per_server))
        if self.servers < 2:
            raise ValueError(f"topology needs at least 2 servers (got {self.servers})")
        if len(self.hops_per_server) != self.servers:
            raise ValueError("hops_per_server must list one hop count per server")
        if any(n < 1 for n in self.hops_per_server):
            raise ValueError("every server path needs at least one hop")
        if not 0 <= self.nearest < self.servers:
            raise ValueError(f"nearest server {self.nearest} out of range")

    @property
    def total_hops(self) -> int:
        return sum(self.hops_per_server)

    def hop_slices(self) -> list[slice]:
        out, start = [], 0
        for n in self.hops_per_server:
            out.append(slice(start, start + n))
            start += n
        return out


# Calm-biased with episodes that persist for several requests.
DEFAULT_TRANSITIONS = (
    (0.95, 0.04, 0.01),
    (0.08, 0.88, 0.04),
    (0.05, 0.10, 0.85),
)


@dataclass(frozen=True)
class LoadProcess:
    """Three-state Markov-modulated background load, one chain per hop.

    The chain advances once per client request.
    """

    transitions: tuple[tuple[float, float, float], ...] = DEFAULT_TRANSITIONS
    # Burst metrics sit only slightly above Busy: most of a burst's cost is
    # invisible to passive monitoring and shows up only in observed latency.
    utilization: tuple[tuple[float, float], ...] = ((0.05, 0.35), (0.35, 0.65), (0.40, 0.70))
    arrival_rate: tuple[tuple[float, float], ...] = ((100.0, 600.0), (500.0, 1500.0), (650.0, 1650.0))

    def __post_init__(self) -> None:
        p = np.asarray(self.transitions, dtype=float)
        if p.shape != (3, 3) or np.any(p < 0):
            raise ValueError("transition matrix must be 3x3 and non-negative")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError(f"transition rows must sum to 1 (got {p.sum(axis=1)})")
        for name, ranges, upper in (
            ("utilization", self.utilization, 1.0),
            ("arrival_rate", self.arrival_rate, math.inf),
        ):
            if len(ranges) != 3:
                raise ValueError(f"{name} needs one range per state")
            for lo, hi in ranges:
                if not 0 <= lo <= hi <= upper:
                    raise ValueError(f"{name} range [{lo}, {hi}] invalid")

    def matrix(self) -> np.ndarray:
        return np.asarray(self.transitions, dtype=float)

    def stationary(self) -> np.ndarray:
        p = self.matrix()
        a = np.vstack([p.T - np.eye(3), np.ones(3)])
        rhs = np.array([0.0, 0.0, 0.0, 1.0])
        pi, *_ = np.linalg.lstsq(a, rhs, rcond=None)
        pi = np.clip(pi, 0.0, None)
        return pi / pi.sum()


TRUTH_COEFFICIENTS = ModelCoefficients(
    a=(3.0, 2.0, 1.5),
    b=(0.0, -0.6, 0.0),
    c=0.0,
    d=0.8,
    exp_feature_index=1,
    scaler=Scaler(mean=(0.0, 0.0, 0.0), std=(1e5, 1.0, 1000.0)),
)


@dataclass(frozen=True)
class GroundTruth:
    true_coefficients: ModelCoefficients = TRUTH_COEFFICIENTS
    sigma_noise: float = 0.05
    burst_penalty: float = 3.0

    def __post_init__(self) -> None:
        if not self.sigma_noise >= 0:
            raise ValueError("sigma_noise must be >= 0")
        if not self.burst_penalty >= 1:
            raise ValueError("burst_penalty must be >= 1")


@dataclass(frozen=True)
class Scenario:
    topology: Topology = field(default_factory=Topology)
    load: LoadProcess = field(default_factory=LoadProcess)
    truth: GroundTruth = field(default_factory=GroundTruth)
    requests: int = 5000
    mean_gap_s: float = 0.1
    training_requests: int = 2000


@dataclass(frozen=True)
class Dataset:
    """Generated requests plus everything needed to replay any policy on them.

    ``latencies[t, j]`` is the latency the client would observe at request
    ``t`` if served by server ``j``; every policy reads the same table.
    """

    records: tuple[TraceRecord, ...]
    states: np.ndarray  # (T, total_hops) LoadState codes
    latencies: np.ndarray  # (T, J) milliseconds


def _rng(seed: int, run_index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, run_index, stream]))


def _state_sequence(load: LoadProcess, hops: int, steps: int, rng: np.random.Generator) -> np.ndarray:
    cum = np.cumsum(load.matrix(), axis=1)
    cum[:, -1] = 1.0
    pi_cum = np.cumsum(load.stationary())
    pi_cum[-1] = 1.0
    u = rng.random((steps, hops))
    states = np.empty((steps, hops), dtype=np.int8)
    states[0] = np.searchsorted(pi_cum, u[0], side="right")
    for t in range(1, steps):
        states[t] = (u[t][:, None] >= cum[states[t - 1]]).sum(axis=1)
    return states


def observe(
    truth: GroundTruth,
    path: PathDescriptor,
    load_states: Sequence[int],
    draw: float,
) -> float:
    """Ground-truth latency of ``path`` given per-hop states and a N(0,1) draw."""
    if len(load_states) != len(path.hops):
        raise ValueError("one load state per hop is required")
    total = 0.0
    for hop, state in zip(path.hops, load_states):
        y = predict_hop(truth.true_coefficients, hop)
        if state == LoadState.BURST:
            y *= truth.burst_penalty
        total += y
    value = total * math.exp(truth.sigma_noise * draw)
    if not value > 0:
        raise ValueError(f"non-positive ground-truth latency {value!r} on path to {path.server}")
    return value


def simulate(scenario: Scenario, seed: int, run_index: int = 0, requests: Optional[int] = None) -> Dataset:
    """Generate requests, hop metrics and the full per-server latency table."""
    n = scenario.requests if requests is None else requests
    if n < 1:
        raise ValueError(f"requests must be >= 1 (got {n})")
    topo, load = scenario.topology, scenario.load
    gaps = _rng(seed, run_index, _GAPS).exponential(scenario.mean_gap_s, size=n)
    times = np.cumsum(gaps)
    frames = _rng(seed, run_index, _FRAMES).integers(FRAME_MIN_BYTES, FRAME_MAX_BYTES + 1, size=n)
    states = _state_sequence(load, topo.total_hops, n, _rng(seed, run_index, _STATES))
    u = _rng(seed, run_index, _FEATURES).random((2, n, topo.total_hops))
    util_lo = np.array([r[0] for r in load.utilization])[states]
    util_hi = np.array([r[1] for r in load.utilization])[states]
    pps_lo = np.array([r[0] for r in load.arrival_rate])[states]
    pps_hi = np.array([r[1] for r in load.arrival_rate])[states]
    util = util_lo + (util_hi - util_lo) * u[0]
    pps = pps_lo + (pps_hi - pps_lo) * u[1]
    noise = _rng(seed, run_index, _NOISE).standard_normal((n, topo.servers))

    slices = topo.hop_slices()
    records = []
    latencies = np.empty((n, topo.servers))
    for t in range(n):
        frame = int(frames[t])
        paths = []
        for j, sl in enumerate(slices):
            hops = tuple(
                FeatureVector(frame, float(util[t, k]), float(pps[t, k]))
                for k in range(sl.start, sl.stop)
            )
            path = PathDescriptor(j, hops)
            paths.append(path)
            latencies[t, j] = observe(scenario.truth, path, states[t, sl], float(noise[t, j]))
        records.append(TraceRecord(float(times[t]), frame, tuple(paths)))
    return Dataset(tuple(records), states, latencies)


def generate_trace(
    topology: Topology,
    load: LoadProcess,
    truth: GroundTruth,
    requests: int,
    seed: int,
) -> list[TraceRecord]:
    scenario = Scenario(topology=topology, load=load, truth=truth, requests=requests)
    return list(simulate(scenario, seed).records)


def collect(dataset: Dataset, seed: int, run_index: int = 0) -> list[TraceRecord]:
    """Serve each request on a uniformly random server and record what it saw.

    Mirrors a measurement campaign: the resulting rows carry ``served_by`` and
    ``observed_latency`` and are suitable as fitting data.
    """
    n_servers = dataset.latencies.shape[1]
    picks = _rng(seed, run_index, _COLLECT).integers(0, n_servers, size=len(dataset.records))
    out = []
    for t, (rec, j) in enumerate(zip(dataset.records, picks)):
        j = int(j)
        observed = float(dataset.latencies[t, j])
        out.append(TraceRecord(rec.timestamp, rec.frame_size, rec.paths, j, observed))
    return out


def training_samples(records: Sequence[TraceRecord]) -> list[tuple[tuple[FeatureVector, ...], float]]:
    """(hops of the served path, observed ms) for every served record."""
    return [
        (r.path(r.served_by).hops, r.observed_latency)
        for r in records
        if r.served_by is not None
    ]


def predict_table(model: Optional[ModelCoefficients], records: Sequence[TraceRecord]) -> list[tuple[float, ...]]:
    if model is None:
        return [(math.nan,) * r.n_servers for r in records]
    return [tuple(predict_end_to_end(model, p) for p in r.paths) for r in records]


def run_experiment(
    policy: Policy,
    config: SelectorConfig,
    records: Sequence[TraceRecord],
    latencies: np.ndarray,
    model: Optional[ModelCoefficients],
    nearest: int = 0,
    predictions: Optional[Sequence[Sequence[float]]] = None,
) -> list[LogEntry]:
    """Replay ``policy`` over ``records``, reading outcomes from ``latencies``."""
    if model is None and predictions is None and policy in (Policy.MOHAN, Policy.LOWEST_LATENCY):
        raise ValueError(f"policy {policy.value} needs a latency model")
    if len(records) != len(latencies):
        raise ValueError("latency table must have one row per record")
    if predictions is None:
        predictions = predict_table(model, records)
    n_servers = records[0].n_servers if records else 0
    sel = SelectorState()
    rel = ReliabilityState.initial(config.initial_scores(n_servers), config.beta, config.delta)
    feedback: Optional[Feedback] = None
    log: list[LogEntry] = []
    for rec, predicted, row in zip(records, predictions, latencies):
        predicted = tuple(predicted)
        decision, sel, rel = step(policy, config, sel, rel, predicted, feedback, nearest)
        j = decision.selected
        observed = float(row[j])
        p_j = predicted[j]
        feedback = Feedback(j, observed, p_j) if p_j == p_j else None
        log.append(
            LogEntry(
                t=rec.timestamp,
                policy=policy.value,
                selected=j,
                handover=decision.handover,
                scores=decision.scores,
                predicted=predicted,
                reliability=rel.scores,
                observed=observed,
                reason=decision.reason.value,
            )
        )
    return log


def standard_scenario(requests: int = 5000) -> Scenario:
    """The built-in congested scenario used for benchmarking and acceptance."""
    return Scenario(requests=requests)


@dataclass(frozen=True)
class Experiment:
    """A materialised scenario: evaluation data, the model and its predictions.

    Every policy and every sweep point run against the same instance, which
    is what makes their results comparable.
    """

    scenario: Scenario
    seed: int
    dataset: Dataset
    model: Optional[ModelCoefficients]
    predictions: tuple[tuple[float, ...], ...]
    fit_report: Optional[FitReport] = None

    def run(self, policy: Policy, config: SelectorConfig) -> list[LogEntry]:
        return run_experiment(
            policy,
            config,
            self.dataset.records,
            self.dataset.latencies,
            self.model,
            self.scenario.topology.nearest,
            self.predictions,
        )


def prepare_experiment(
    scenario: Scenario,
    seed: int,
    model: Optional[ModelCoefficients] = None,
    fit: bool = True,
) -> Experiment:
    """Simulate the evaluation run and, unless given a model, fit one.

    Fitting data come from a separate measurement campaign (run index 1) so
    the model never sees the requests it is evaluated on.
    """
    report = None
    if model is None and fit:
        campaign = simulate(scenario, seed, run_index=1, requests=scenario.training_requests)
        report = fit_paths(training_samples(collect(campaign, seed, run_index=1)), FitOptions(seed=seed))
        model = report.coefficients
    dataset = simulate(scenario, seed, run_index=0)
    predictions = tuple(predict_table(model, dataset.records))
    return Experiment(scenario, seed, dataset, model, predictions, report)
