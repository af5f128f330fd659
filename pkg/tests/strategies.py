"""Hypothesis strategies for traces, models and decision logs."""

import math

from hypothesis import strategies as st

from mohan.core import FeatureVector, LogEntry, PathDescriptor, TraceRecord
from mohan.predictor import ModelCoefficients, Scaler

finite = st.floats(allow_nan=False, allow_infinity=False)
nonneg = st.floats(0, 1e12, allow_nan=False)
positive = st.floats(1e-9, 1e9, allow_nan=False)
unit = st.floats(0, 1)


@st.composite
def traces(draw, max_rows=8):
    servers = draw(st.integers(2, 4))
    layout = draw(st.lists(st.integers(1, 3), min_size=servers, max_size=servers))
    n = draw(st.integers(0, max_rows))
    out = []
    for _ in range(n):
        frame = draw(st.integers(0, 10**9))
        paths = tuple(
            PathDescriptor(
                j,
                tuple(FeatureVector(frame, draw(unit), draw(nonneg)) for _ in range(layout[j])),
            )
            for j in range(servers)
        )
        if draw(st.booleans()):
            served, obs = draw(st.integers(0, servers - 1)), draw(positive)
        else:
            served, obs = None, None
        out.append(TraceRecord(draw(nonneg), frame, paths, served, obs))
    return out, tuple(layout)


small = st.floats(-1e3, 1e3, allow_nan=False)


@st.composite
def models(draw):
    vec = st.tuples(small, small, small)
    return ModelCoefficients(
        a=draw(vec),
        b=draw(vec),
        c=draw(small),
        d=draw(st.floats(-5, 5)),
        exp_feature_index=draw(st.integers(0, 2)),
        scaler=Scaler(draw(vec), draw(st.tuples(positive, positive, positive))),
    )


maybe_nan = st.one_of(st.just(math.nan), finite)


@st.composite
def log_entries(draw):
    j = draw(st.integers(1, 4))
    vec = lambda elems: st.tuples(*([elems] * j))  # noqa: E731
    return LogEntry(
        t=draw(nonneg),
        policy=draw(st.sampled_from(["mohan", "nearest", "roundrobin", "lowestlatency"])),
        selected=draw(st.integers(0, j - 1)),
        handover=draw(st.booleans()),
        scores=draw(vec(maybe_nan)),
        predicted=draw(vec(maybe_nan)),
        reliability=draw(vec(unit)),
        observed=draw(positive),
        reason=draw(st.sampled_from(["FirstDecision", "KeptSame", "HysteresisHold", "Handover", "BaselinePolicy"])),
    )


def same_entry(a: LogEntry, b: LogEntry) -> bool:
    """Equality that treats NaN as equal to NaN."""
    def eq(x, y):
        return all((u == v) or (u != u and v != v) for u, v in zip(x, y)) and len(x) == len(y)

    return (
        (a.t, a.policy, a.selected, a.handover, a.observed, a.reason, a.reliability)
        == (b.t, b.policy, b.selected, b.handover, b.observed, b.reason, b.reliability)
        and eq(a.scores, b.scores)
        and eq(a.predicted, b.predicted)
    )
