import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings

from mohan.core import LogEntry
from mohan.simulator import Scenario, Topology, collect, simulate
from mohan.trace_io import (
    TraceFormatError,
    dumps_trace,
    loads_trace,
    read_latency_table,
    read_log,
    read_model,
    read_trace,
    write_latency_table,
    write_log,
    write_model,
    write_trace,
)
from strategies import log_entries, models, same_entry, traces


@pytest.fixture(scope="module")
def generated():
    data = simulate(Scenario(requests=5000), seed=12)
    return data, collect(data, seed=12)


def test_header_only_file(tmp_path):
    p = tmp_path / "t.csv"
    write_trace([], p, layout=(2, 2))
    lines = p.read_text().splitlines()
    assert lines == [
        "# mohan-trace/1",
        "t_s,frame_bytes,s0_h0_util,s0_h0_pps,s0_h1_util,s0_h1_pps,"
        "s1_h0_util,s1_h0_pps,s1_h1_util,s1_h1_pps,served_by,observed_ms",
    ]
    assert read_trace(p) == []


def test_roundtrip_5000_generated(tmp_path, generated):
    _, records = generated
    p = tmp_path / "trace.csv"
    write_trace(records, p)
    assert read_trace(p) == records


def test_unserved_rows_have_blank_tail(generated):
    data, _ = generated
    text = dumps_trace(data.records[:3])
    for line in text.splitlines()[2:]:
        assert line.endswith(",,")
    assert loads_trace(text) == list(data.records[:3])


def test_latency_table_roundtrip(generated):
    data, _ = generated
    buf = io.StringIO()
    times = [r.timestamp for r in data.records]
    write_latency_table(times, data.latencies, buf)
    buf.seek(0)
    t2, lat2 = read_latency_table(buf)
    assert t2 == times
    np.testing.assert_array_equal(lat2, data.latencies)


@settings(max_examples=200)
@given(traces())
def test_trace_roundtrip_property(case):
    records, layout = case
    buf = io.StringIO()
    write_trace(records, buf, layout=layout)
    assert loads_trace(buf.getvalue()) == records


@settings(max_examples=200)
@given(model=models())
def test_model_roundtrip_property(tmp_path_factory, model):
    p = tmp_path_factory.mktemp("m") / "model.json"
    write_model(model, p)
    assert read_model(p) == model


@settings(max_examples=200)
@given(log_entries())
def test_log_roundtrip_property(entry):
    buf = io.StringIO()
    write_log([entry, entry], buf)
    buf.seek(0)
    back = read_log(buf)
    assert len(back) == 2 and all(same_entry(entry, b) for b in back)


def test_log_nan_written_as_null():
    e = LogEntry(0.5, "nearest", 0, False, (math.nan,), (math.nan,), (1.0,), 3.0, "BaselinePolicy")
    buf = io.StringIO()
    write_log([e], buf)
    line = buf.getvalue()
    assert '"scores": [null]' in line and "NaN" not in line
    assert list(json.loads(line)) == [
        "t", "policy", "selected", "handover", "scores", "predicted", "reliability", "observed", "reason"
    ]


VALID = (
    "# mohan-trace/1\n"
    "t_s,frame_bytes,s0_h0_util,s0_h0_pps,s1_h0_util,s1_h0_pps,served_by,observed_ms\n"
    "0.1,500000,0.2,300.0,0.4,700.0,1,42.5\n"
    "0.2,450000,0.3,310.0,0.5,710.0,,\n"
)


def test_valid_fixture_parses():
    recs = loads_trace(VALID)
    assert len(recs) == 2 and recs[0].served_by == 1 and recs[1].served_by is None


def test_percentage_utilization_rejected_with_line():
    bad = VALID.replace("0.4,700.0,1", "57.3,700.0,1")
    with pytest.raises(TraceFormatError, match="utilization must be a fraction in \\[0,1\\]") as exc:
        loads_trace(bad)
    assert exc.value.line == 3
    assert "divide by 100" in str(exc.value)


def test_missing_column_named():
    bad = VALID.replace("s1_h0_pps,", "").replace(",700.0", "").replace(",710.0", "")
    with pytest.raises(TraceFormatError, match="s1_h0_pps"):
        loads_trace(bad)


def test_version_line_required():
    with pytest.raises(TraceFormatError, match="version"):
        loads_trace(VALID.split("\n", 1)[1])


MUTATIONS = [
    ("0.1,500000", "-0.1,500000"),
    ("0.1,500000", "abc,500000"),
    ("500000,0.2", "5e5x,0.2"),
    ("500000,0.2", "-5,0.2"),
    ("0.2,300.0", "1.5,300.0"),
    ("0.2,300.0", "-0.2,300.0"),
    ("0.2,300.0", "nan,300.0"),
    ("300.0,0.4", "-300.0,0.4"),
    ("300.0,0.4", "inf,0.4"),
    (",1,42.5", ",2,42.5"),
    (",1,42.5", ",-1,42.5"),
    (",1,42.5", ",1,0.0"),
    (",1,42.5", ",1,-3"),
    (",1,42.5", ",1,"),
    (",1,42.5", ",,42.5"),
    (",1,42.5", ",one,42.5"),
    (",1,42.5", ",1,42.5,9"),
    ("710.0,,", "710.0,"),
]


@pytest.mark.parametrize("old, new", MUTATIONS)
def test_mutations_rejected(old, new):
    assert old in VALID
    with pytest.raises(TraceFormatError) as exc:
        loads_trace(VALID.replace(old, new, 1))
    assert exc.value.line in (3, 4)


def test_write_rejects_mixed_layouts(generated):
    data, _ = generated
    other = simulate(Scenario(topology=Topology(3, (1, 1, 1))), 0, requests=1)
    with pytest.raises(TraceFormatError):
        dumps_trace([data.records[0], other.records[0]])
