"""Readers and writers for traces, latency tables, models, logs and reports.

Traces and tables are CSV; models, configs and manifests are JSON; decision
logs are JSON lines. Floats are written with ``repr`` (shortest round-trip),
so a read after a write reproduces every value bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
from pathlib import Path
from typing import IO, Any, Iterable, Optional, Sequence, Union

import numpy as np

from .core import FeatureVector, LogEntry, PathDescriptor, TraceRecord, hops_layout
from .predictor import ModelCoefficients

TRACE_VERSION = "mohan-trace/1"
LATENCY_VERSION = "mohan-latency/1"

PathLike = Union[str, os.PathLike]
_HOP_COLUMN = re.compile(r"^s(\d+)_h(\d+)_(util|pps)$")


class TraceFormatError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


def _fmt(v: float) -> str:
    return repr(float(v))


def trace_header(layout: Sequence[int]) -> list[str]:
    cols = ["t_s", "frame_bytes"]
    for j, n_hops in enumerate(layout):
        for k in range(n_hops):
            cols += [f"s{j}_h{k}_util", f"s{j}_h{k}_pps"]
    return cols + ["served_by", "observed_ms"]


def _open_write(dest: Union[PathLike, IO[str]]):
    if hasattr(dest, "write"):
        return dest, False
    return open(dest, "w", newline="", encoding="utf-8"), True


def _open_read(src: Union[PathLike, IO[str]]):
    if hasattr(src, "read"):
        return src, False
    return open(src, newline="", encoding="utf-8"), True


def write_trace(
    records: Sequence[TraceRecord],
    destination: Union[PathLike, IO[str]],
    layout: Optional[Sequence[int]] = None,
) -> None:
    """Write ``records`` as a versioned CSV trace.

    ``layout`` (hops per server) is only needed for an empty record list,
    which produces a header-only file.
    """
    if records:
        layout = hops_layout(records[0])
    elif layout is None:
        layout = (1, 1)
    fh, close = _open_write(destination)
    try:
        fh.write(f"# {TRACE_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trace_header(layout))
        for i, rec in enumerate(records):
            if hops_layout(rec) != tuple(layout):
                raise TraceFormatError(f"record {i} has hop layout {hops_layout(rec)}, expected {tuple(layout)}")
            row = [_fmt(rec.timestamp), str(int(rec.frame_size))]
            for path in rec.paths:
                for hop in path.hops:
                    if hop.payload_bytes != rec.frame_size:
                        raise TraceFormatError(f"record {i}: hop payload differs from frame size")
                    row += [_fmt(hop.utilization), _fmt(hop.arrival_rate)]
            if rec.served_by is None:
                row += ["", ""]
            else:
                row += [str(int(rec.served_by)), _fmt(rec.observed_latency)]
            writer.writerow(row)
    finally:
        if close:
            fh.close()


def _parse_layout(header: list[str]) -> tuple[int, ...]:
    for required in ("t_s", "frame_bytes"):
        if required not in header:
            raise TraceFormatError(f"missing column {required!r}", line=2)
    hops: dict[int, set[int]] = {}
    seen = set()
    for col in header:
        m = _HOP_COLUMN.match(col)
        if m:
            j, k = int(m.group(1)), int(m.group(2))
            hops.setdefault(j, set()).add(k)
            seen.add(col)
    if not hops:
        raise TraceFormatError("no per-hop columns (s{j}_h{k}_util / s{j}_h{k}_pps)", line=2)
    n_servers = max(hops) + 1
    layout = []
    for j in range(n_servers):
        n_hops = max(hops.get(j, {0})) + 1
        layout.append(n_hops)
    expected = trace_header(layout)
    for col in expected:
        if col not in header:
            raise TraceFormatError(f"missing column {col!r}", line=2)
    if header != expected:
        extra = [c for c in header if c not in expected]
        if extra:
            raise TraceFormatError(f"unexpected column {extra[0]!r}", line=2)
        raise TraceFormatError("columns out of order", line=2)
    return tuple(layout)


def _float(cell: str, column: str, line: int) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise TraceFormatError(f"column {column!r}: not a number: {cell!r}", line) from None
    if math.isnan(v):
        raise TraceFormatError(f"column {column!r}: NaN is not allowed", line)
    return v


def read_trace(source: Union[PathLike, IO[str]]) -> list[TraceRecord]:
    fh, close = _open_read(source)
    try:
        first = fh.readline().rstrip("\r\n")
        if first.strip() != f"# {TRACE_VERSION}":
            raise TraceFormatError(f"unrecognised trace version line {first!r}", line=1)
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TraceFormatError("missing column header", line=2)
        layout = _parse_layout(header)
        width = len(header)
        records = []
        for offset, row in enumerate(reader):
            line = offset + 3
            if not row:
                continue
            if len(row) != width:
                raise TraceFormatError(f"expected {width} fields, got {len(row)}", line)
            records.append(_parse_row(row, header, layout, line))
        return records
    finally:
        if close:
            fh.close()


def _parse_row(row: list[str], header: list[str], layout: tuple[int, ...], line: int) -> TraceRecord:
    t = _float(row[0], "t_s", line)
    try:
        frame = int(row[1])
    except ValueError:
        raise TraceFormatError(f"column 'frame_bytes': not an integer: {row[1]!r}", line) from None
    col = 2
    paths = []
    try:
        for j, n_hops in enumerate(layout):
            hops = []
            for _ in range(n_hops):
                util = _float(row[col], header[col], line)
                pps = _float(row[col + 1], header[col + 1], line)
                if not 0.0 <= util <= 1.0:
                    hint = " (looks like a percentage; divide by 100)" if 1.0 < util <= 100.0 else ""
                    raise TraceFormatError(
                        f"column {header[col]!r}: utilization must be a fraction in [0,1], got {row[col]}{hint}",
                        line,
                    )
                hops.append(FeatureVector(frame, util, pps))
                col += 2
            paths.append(PathDescriptor(j, tuple(hops)))
        served_cell, obs_cell = row[col], row[col + 1]
        if served_cell == "" and obs_cell == "":
            served, observed = None, None
        else:
            if served_cell == "" or obs_cell == "":
                raise TraceFormatError("served_by and observed_ms must both be set or both be empty", line)
            try:
                served = int(served_cell)
            except ValueError:
                raise TraceFormatError(f"column 'served_by': not an integer: {served_cell!r}", line) from None
            observed = _float(obs_cell, "observed_ms", line)
        return TraceRecord(t, frame, tuple(paths), served, observed)
    except TraceFormatError:
        raise
    except ValueError as e:
        raise TraceFormatError(str(e), line) from None


# -- per-server latency tables -------------------------------------------------


def write_latency_table(
    timestamps: Sequence[float], latencies: np.ndarray, destination: Union[PathLike, IO[str]]
) -> None:
    latencies = np.asarray(latencies, dtype=float)
    if latencies.ndim != 2 or len(latencies) != len(timestamps):
        raise ValueError("latency table must be (T, J) with one row per timestamp")
    fh, close = _open_write(destination)
    try:
        fh.write(f"# {LATENCY_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t_s"] + [f"s{j}_ms" for j in range(latencies.shape[1])])
        for t, row in zip(timestamps, latencies):
            writer.writerow([_fmt(t)] + [_fmt(v) for v in row])
    finally:
        if close:
            fh.close()


def read_latency_table(source: Union[PathLike, IO[str]]) -> tuple[list[float], np.ndarray]:
    fh, close = _open_read(source)
    try:
        first = fh.readline().rstrip("\r\n")
        if first.strip() != f"# {LATENCY_VERSION}":
            raise TraceFormatError(f"unrecognised latency table version line {first!r}", line=1)
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "t_s":
            raise TraceFormatError("missing column 't_s'", line=2)
        n = len(header) - 1
        if header[1:] != [f"s{j}_ms" for j in range(n)] or n < 1:
            raise TraceFormatError("latency columns must be s0_ms..s{J-1}_ms", line=2)
        times, rows = [], []
        for offset, row in enumerate(reader):
            line = offset + 3
            if not row:
                continue
            if len(row) != n + 1:
                raise TraceFormatError(f"expected {n + 1} fields, got {len(row)}", line)
            times.append(_float(row[0], "t_s", line))
            values = [_float(c, header[i + 1], line) for i, c in enumerate(row[1:])]
            if any(not v > 0 for v in values):
                raise TraceFormatError("latencies must be > 0", line)
            rows.append(values)
        return times, np.asarray(rows, dtype=float).reshape(len(rows), n)
    finally:
        if close:
            fh.close()


# -- JSON documents ------------------------------------------------------------


def write_json(doc: Any, destination: PathLike) -> None:
    Path(destination).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def read_json(source: PathLike) -> Any:
    return json.loads(Path(source).read_text(encoding="utf-8"))


def write_model(model: ModelCoefficients, destination: PathLike) -> None:
    write_json(model.to_dict(), destination)


def read_model(source: PathLike) -> ModelCoefficients:
    return ModelCoefficients.from_dict(read_json(source))


def _nan_to_none(values: Iterable[float]) -> list[Optional[float]]:
    return [None if v != v else v for v in values]


def _none_to_nan(values: Iterable[Optional[float]]) -> tuple[float, ...]:
    return tuple(math.nan if v is None else float(v) for v in values)


def log_line(entry: LogEntry) -> str:
    return json.dumps(
        {
            "t": entry.t,
            "policy": entry.policy,
            "selected": entry.selected,
            "handover": entry.handover,
            "scores": _nan_to_none(entry.scores),
            "predicted": _nan_to_none(entry.predicted),
            "reliability": list(entry.reliability),
            "observed": entry.observed,
            "reason": entry.reason,
        }
    )


def write_log(log: Sequence[LogEntry], destination: Union[PathLike, IO[str]]) -> None:
    fh, close = _open_write(destination)
    try:
        for entry in log:
            fh.write(log_line(entry) + "\n")
    finally:
        if close:
            fh.close()


def read_log(source: Union[PathLike, IO[str]]) -> list[LogEntry]:
    fh, close = _open_read(source)
    try:
        out = []
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            out.append(
                LogEntry(
                    t=float(d["t"]),
                    policy=d["policy"],
                    selected=int(d["selected"]),
                    handover=bool(d["handover"]),
                    scores=_none_to_nan(d["scores"]),
                    predicted=_none_to_nan(d["predicted"]),
                    reliability=tuple(float(v) for v in d["reliability"]),
                    observed=float(d["observed"]),
                    reason=d["reason"],
                )
            )
        return out
    finally:
        if close:
            fh.close()


# -- report CSVs -----------------------------------------------------------------

STATS_COLUMNS = ["policy", "mean_ms", "median_ms", "p95_ms", "handover_rate_pct", "count"]
SWEEP_COLUMNS = ["alpha", "beta", "delta", "theta", "mean_ms", "median_ms", "p95_ms", "hr_pct", "pareto"]


def write_stats_csv(rows: Sequence[tuple[str, Any]], destination: PathLike) -> None:
    """``rows`` are ``(policy name, RunStats)`` pairs."""
    with open(destination, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATS_COLUMNS)
        for name, s in rows:
            w.writerow([name, _fmt(s.mean), _fmt(s.median), _fmt(s.p95), _fmt(100.0 * s.handover_rate), s.count])


def write_cdf_csv(points: Sequence[tuple[float, float]], destination: PathLike) -> None:
    with open(destination, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["latency_ms", "fraction"])
        for x, f in points:
            w.writerow([_fmt(x), _fmt(f)])


def write_sweep_csv(results: Sequence[Any], destination: PathLike) -> None:
    with open(destination, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in results:
            s = r.stats
            w.writerow(
                [
                    _fmt(r.alpha), _fmt(r.beta), _fmt(r.delta), _fmt(r.theta),
                    _fmt(s.mean), _fmt(s.median), _fmt(s.p95), _fmt(100.0 * s.handover_rate),
                    "true" if r.pareto else "false",
                ]
            )


def dumps_trace(records: Sequence[TraceRecord]) -> str:
    buf = io.StringIO()
    write_trace(records, buf)
    return buf.getvalue()


def loads_trace(text: str) -> list[TraceRecord]:
    return read_trace(io.StringIO(text))
