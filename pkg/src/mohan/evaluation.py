"""Run statistics, latency CDFs and the parameter sensitivity sweep."""

from __future__ import annotations

import itertools
import statistics
from dataclasses import dataclass
from typing import Optional, Sequence

from .core import LogEntry, SelectorConfig
from .selector import Policy
from .simulator import Experiment, Scenario, prepare_experiment


@dataclass(frozen=True)
class RunStats:
    mean: float
    median: float
    p95: float
    handover_rate: float
    count: int


def percentile_exclusive(values: Sequence[float], q: float) -> float:
    """Percentile by linear interpolation at rank ``q * (n + 1)`` (1-based).

    Ranks outside ``[1, n]`` clamp to the extreme samples.
    """
    if not values:
        raise ValueError("percentile of an empty sample")
    xs = sorted(values)
    n = len(xs)
    rank = q * (n + 1)
    if rank <= 1:
        return xs[0]
    if rank >= n:
        return xs[-1]
    lo = int(rank)
    frac = rank - lo
    return xs[lo - 1] + frac * (xs[lo] - xs[lo - 1])


def compute_stats(log: Sequence[LogEntry]) -> RunStats:
    if not log:
        raise ValueError("cannot compute statistics of an empty log")
    observed = [e.observed for e in log]
    handovers = sum(1 for e in log if e.handover)
    decisions_after_first = len(log) - 1
    return RunStats(
        mean=statistics.fmean(observed),
        median=statistics.median(observed),
        p95=percentile_exclusive(observed, 0.95),
        handover_rate=handovers / decisions_after_first if decisions_after_first else 0.0,
        count=len(log),
    )


def cdf(log: Sequence[LogEntry]) -> list[tuple[float, float]]:
    """Empirical CDF of observed latency; tied samples form a single step."""
    if not log:
        raise ValueError("cannot compute the CDF of an empty log")
    xs = sorted(e.observed for e in log)
    n = len(xs)
    out: list[tuple[float, float]] = []
    for i, x in enumerate(xs, start=1):
        if out and out[-1][0] == x:
            out[-1] = (x, i / n)
        else:
            out.append((x, i / n))
    out[-1] = (out[-1][0], 1.0)
    return out


@dataclass(frozen=True)
class SweepGrid:
    alpha: tuple[float, ...] = (0.5,)
    beta: tuple[float, ...] = (0.9,)
    delta: tuple[float, ...] = (0.2,)
    theta: tuple[float, ...] = (0.05,)

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "delta", "theta"):
            values = tuple(getattr(self, name))
            if not values:
                raise ValueError(f"sweep grid for {name} is empty")
            object.__setattr__(self, name, values)

    def points(self) -> list[tuple[float, float, float, float]]:
        return list(itertools.product(self.alpha, self.beta, self.delta, self.theta))


@dataclass(frozen=True)
class SweepResult:
    alpha: float
    beta: float
    delta: float
    theta: float
    stats: RunStats
    pareto: bool = False


def dominates(a: RunStats, b: RunStats) -> bool:
    """True when ``a`` is no worse than ``b`` on (p95, handover rate) and better on one."""
    return (
        a.p95 <= b.p95
        and a.handover_rate <= b.handover_rate
        and (a.p95 < b.p95 or a.handover_rate < b.handover_rate)
    )


def pareto_flags(stats: Sequence[RunStats]) -> list[bool]:
    return [not any(dominates(other, s) for other in stats) for s in stats]


def sweep_experiment(grid: SweepGrid, experiment: Experiment) -> list[SweepResult]:
    rows = []
    for alpha, beta, delta, theta in grid.points():
        config = SelectorConfig(alpha=alpha, beta=beta, delta=delta, theta_handover=theta)
        stats = compute_stats(experiment.run(Policy.MOHAN, config))
        rows.append((alpha, beta, delta, theta, stats))
    flags = pareto_flags([r[4] for r in rows])
    return [SweepResult(*row, pareto=flag) for row, flag in zip(rows, flags)]


def sweep(
    grid: SweepGrid,
    scenario: Scenario,
    seed: int,
    experiment: Optional[Experiment] = None,
) -> list[SweepResult]:
    """MO-HAN over the full factorial grid, all points on identical randomness."""
    if experiment is None:
        experiment = prepare_experiment(scenario, seed)
    return sweep_experiment(grid, experiment)


def frontier_rank(results: Sequence[SweepResult], point: tuple[float, float, float, float]) -> float:
    """Fraction of grid points closer to the Pareto front than ``point``.

    Distance is Euclidean in (p95, handover rate) after min-max normalising
    each axis over the grid. 0.0 means on the front.
    """
    p95s = [r.stats.p95 for r in results]
    hrs = [r.stats.handover_rate for r in results]

    def norm(v: float, vs: list[float]) -> float:
        span = max(vs) - min(vs)
        return (v - min(vs)) / span if span > 0 else 0.0

    front = [(norm(r.stats.p95, p95s), norm(r.stats.handover_rate, hrs)) for r in results if r.pareto]

    def dist(r: SweepResult) -> float:
        x, y = norm(r.stats.p95, p95s), norm(r.stats.handover_rate, hrs)
        return min(((x - fx) ** 2 + (y - fy) ** 2) ** 0.5 for fx, fy in front)

    target = next(r for r in results if (r.alpha, r.beta, r.delta, r.theta) == point)
    d = dist(target)
    return sum(1 for r in results if dist(r) < d) / len(results)
