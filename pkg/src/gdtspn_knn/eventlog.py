"""Event logs: ingestion (XES, CSV), validation, splitting and summaries.

Timestamps are integer milliseconds since the Unix epoch.  Durations handed
out by the public helpers are in seconds unless the name says otherwise.
"""
from __future__ import annotations

import csv
import gzip
import io
import math
import os
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from fractions import Fraction
from typing import BinaryIO, Iterable, Mapping, Sequence, Union

MS_PER_DAY = 86_400_000

Source = Union[bytes, str, os.PathLike, BinaryIO]


class LogError(ValueError):
    """Raised for malformed or inconsistent event data."""


@dataclass(frozen=True, slots=True)
class Event:
    activity: str
    timestamp: int  # ms since epoch

    def __post_init__(self):
        if not self.activity:
            raise LogError("event activity must be non-empty")


@dataclass(frozen=True)
class Trace:
    case_id: str
    events: tuple[Event, ...]

    def __post_init__(self):
        if not self.events:
            raise LogError(f"trace {self.case_id!r} has no events")
        prev = None
        for ev in self.events:
            if prev is not None and ev.timestamp < prev:
                raise LogError(f"trace {self.case_id!r} is not sorted by timestamp")
            prev = ev.timestamp

    def __len__(self):
        return len(self.events)

    @property
    def start(self) -> int:
        return self.events[0].timestamp

    @property
    def end(self) -> int:
        return self.events[-1].timestamp

    @property
    def duration_ms(self) -> int:
        return self.end - self.start

    @property
    def activities(self) -> tuple[str, ...]:
        return tuple(ev.activity for ev in self.events)


@dataclass(frozen=True)
class EventLog:
    traces: tuple[Trace, ...] = ()
    vocabulary: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        traces = tuple(self.traces)
        object.__setattr__(self, "traces", traces)
        seen = set()
        labels = set()
        for tr in traces:
            if tr.case_id in seen:
                raise LogError(f"duplicate case id {tr.case_id!r}")
            seen.add(tr.case_id)
            labels.update(tr.activities)
        object.__setattr__(self, "vocabulary", tuple(sorted(labels)))

    def __len__(self):
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    def __getitem__(self, i):
        return self.traces[i]

    def case(self, case_id: str) -> Trace:
        for tr in self.traces:
            if tr.case_id == case_id:
                return tr
        raise KeyError(case_id)

    def without(self, case_id: str) -> "EventLog":
        return EventLog(tuple(t for t in self.traces if t.case_id != case_id))


@dataclass(frozen=True)
class LogStats:
    cases: int
    events: int
    event_classes: int
    max_case_length: int
    avg_case_length: float
    max_case_time: float  # days
    avg_case_time: float  # days


def make_trace(case_id: str, events: Iterable[tuple[str, int]]) -> Trace:
    """Build a trace from ``(activity, ms)`` pairs, stable-sorted by time."""
    evs = sorted((Event(a, int(ts)) for a, ts in events), key=lambda e: e.timestamp)
    return Trace(str(case_id), tuple(evs))


# ---------------------------------------------------------------------------
# timestamps
# ---------------------------------------------------------------------------

_FRACTION = re.compile(r"(\.\d+)")


def parse_iso(text: str) -> int:
    """ISO-8601 → ms since epoch.  Naive timestamps are taken as UTC."""
    s = text.strip()
    if s.endswith("Z") or s.endswith("z"):
        s = s[:-1] + "+00:00"
    # Python 3.10 only accepts 3 or 6 fractional digits
    m = _FRACTION.search(s)
    if m:
        frac = m.group(1)[1:]
        frac = (frac + "000000")[:6]
        s = s[: m.start()] + "." + frac + s[m.end():]
    # "+0100" → "+01:00"
    s = re.sub(r"([+-]\d{2})(\d{2})$", r"\1:\2", s)
    try:
        dt = datetime.fromisoformat(s)
    except ValueError as exc:
        raise LogError(f"unparsable timestamp {text!r}") from exc
    return _to_ms(dt)


def _to_ms(dt: datetime) -> int:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    delta = dt - datetime(1970, 1, 1, tzinfo=timezone.utc)
    return (delta.days * 86_400 + delta.seconds) * 1000 + delta.microseconds // 1000


def format_iso(ms: int) -> str:
    dt = datetime(1970, 1, 1, tzinfo=timezone.utc) + timedelta(milliseconds=int(ms))
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}+00:00"


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _read_bytes(source: Source) -> bytes:
    if isinstance(source, bytes):
        data = source
    elif isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    else:
        data = source.read()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def parse_xes(source: Source) -> EventLog:
    """Read an XES document (optionally gzip-compressed).

    Only ``concept:name`` and ``time:timestamp`` are used.  Events carrying a
    ``lifecycle:transition`` other than ``complete`` are skipped.
    """
    data = _read_bytes(source)
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        line, col = exc.position
        raise LogError(f"malformed XES at line {line}, column {col}: {exc}") from exc

    traces = []
    for n, tr_el in enumerate(el for el in root if _local(el.tag) == "trace"):
        case_id = None
        for attr in tr_el:
            if _local(attr.tag) == "string" and attr.get("key") == "concept:name":
                case_id = attr.get("value")
        if case_id is None:
            case_id = f"trace_{n}"
        events = []
        for i, ev_el in enumerate(el for el in tr_el if _local(el.tag) == "event"):
            activity = ts = None
            lifecycle = None
            for attr in ev_el:
                key = attr.get("key")
                if key == "concept:name":
                    activity = attr.get("value")
                elif key == "time:timestamp":
                    ts = attr.get("value")
                elif key == "lifecycle:transition":
                    lifecycle = attr.get("value")
            if lifecycle is not None and lifecycle.lower() != "complete":
                continue
            if not activity or ts is None:
                missing = "activity" if not activity else "timestamp"
                raise LogError(f"case {case_id!r}: event {i} has no {missing}")
            events.append((activity, parse_iso(ts)))
        if events:
            traces.append(make_trace(case_id, events))
    return EventLog(tuple(traces))


DEFAULT_MAPPING = {"case": "case", "activity": "activity", "timestamp": "timestamp"}


def parse_csv(source: Source, mapping: Mapping[str, str] | None = None,
              timestamp_format: str | None = None) -> EventLog:
    """Read a comma-separated log with a header row.

    ``mapping`` maps the keys ``case``, ``activity`` and ``timestamp`` to column
    names.  ``timestamp_format`` is a :func:`datetime.strptime` format; ``None``
    or ``"iso"`` means ISO-8601.
    """
    mapping = {**DEFAULT_MAPPING, **(mapping or {})}
    text = _read_bytes(source).decode("utf-8-sig")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise LogError("CSV input has no header row") from None
    cols = {}
    for key in ("case", "activity", "timestamp"):
        try:
            cols[key] = header.index(mapping[key])
        except ValueError:
            raise LogError(f"CSV column {mapping[key]!r} not found in header {header}") from None

    iso = timestamp_format in (None, "", "iso")
    grouped: dict[str, list[tuple[str, int]]] = {}
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            case, act, raw = row[cols["case"]], row[cols["activity"]], row[cols["timestamp"]]
        except IndexError:
            raise LogError(f"CSV row {row_no}: too few columns") from None
        try:
            ts = parse_iso(raw) if iso else _to_ms(datetime.strptime(raw, timestamp_format))
        except (LogError, ValueError) as exc:
            raise LogError(f"CSV row {row_no}: unparsable timestamp {raw!r}") from exc
        if not act:
            raise LogError(f"CSV row {row_no}: empty activity for case {case!r}")
        grouped.setdefault(case, []).append((act, ts))
    return EventLog(tuple(make_trace(c, evs) for c, evs in grouped.items()))


def write_csv(log: EventLog) -> bytes:
    """Serialise to the internal CSV layout read back by :func:`parse_csv`."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["case", "activity", "timestamp"])
    for tr in log.traces:
        for ev in tr.events:
            w.writerow([tr.case_id, ev.activity, format_iso(ev.timestamp)])
    return buf.getvalue().encode("utf-8")


def write_xes(log: EventLog) -> bytes:
    root = ET.Element("log", {"xes.version": "1.0", "xmlns": "http://www.xes-standard.org/"})
    for tr in log.traces:
        t_el = ET.SubElement(root, "trace")
        ET.SubElement(t_el, "string", key="concept:name", value=tr.case_id)
        for ev in tr.events:
            e_el = ET.SubElement(t_el, "event")
            ET.SubElement(e_el, "string", key="concept:name", value=ev.activity)
            ET.SubElement(e_el, "date", key="time:timestamp", value=format_iso(ev.timestamp))
    return ET.tostring(root, encoding="utf-8", xml_declaration=True)


def read_log(path: str | os.PathLike, mapping: Mapping[str, str] | None = None,
             timestamp_format: str | None = None) -> EventLog:
    """Dispatch on file extension (``.xes``, ``.csv``, optionally ``.gz``)."""
    path = os.fspath(path)
    name = path.lower()
    if name.endswith(".gz"):
        name = name[:-3]
    if name.endswith(".xes"):
        return parse_xes(path)
    if name.endswith(".csv"):
        return parse_csv(path, mapping, timestamp_format)
    raise LogError(f"unknown log format for {path!r} (expected .xes or .csv)")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def split_out_of_time(log: EventLog, test_count: int) -> tuple[EventLog, EventLog]:
    """Out-of-time split.

    The ``test_count`` latest-starting traces form the test log.  Training keeps
    only the traces that finish strictly before the earliest test start; traces
    straddling that boundary are dropped.
    """
    if not 0 < test_count < len(log):
        raise LogError(f"test_count must be in [1, {len(log) - 1}], got {test_count}")
    order = sorted(range(len(log)), key=lambda i: (log[i].start, i))
    test_ids = order[-test_count:]
    boundary = min(log[i].start for i in test_ids)
    test_set = set(test_ids)
    train = [log[i] for i in order[:-test_count] if log[i].end < boundary and i not in test_set]
    if not train:
        raise LogError("out-of-time split leaves an empty training log")
    test = [log[i] for i in sorted(test_ids, key=lambda i: (log[i].start, i))]
    return EventLog(tuple(train)), EventLog(tuple(test))


def prefix_at(trace: Trace, t0: float) -> Trace:
    """Events observed up to and including ``t0`` (ms)."""
    if t0 < trace.start:
        raise LogError(f"t0={t0} precedes the start of case {trace.case_id!r}")
    events = tuple(ev for ev in trace.events if ev.timestamp <= t0)
    return Trace(trace.case_id, events)


def mean_case_duration_ms(log: EventLog) -> Fraction:
    """Exact mean case duration in milliseconds."""
    if not len(log):
        raise LogError("mean case duration of an empty log")
    return Fraction(sum(tr.duration_ms for tr in log.traces), len(log))


def mean_case_duration(log: EventLog) -> float:
    """Mean of (last − first timestamp) over traces, in seconds."""
    return float(mean_case_duration_ms(log) / 1000)


def descriptive_stats(log: EventLog) -> LogStats:
    n = len(log)
    if n == 0:
        return LogStats(0, 0, 0, 0, 0.0, 0.0, 0.0)
    lengths = [len(tr) for tr in log.traces]
    times = [tr.duration_ms for tr in log.traces]
    return LogStats(
        cases=n,
        events=sum(lengths),
        event_classes=len(log.vocabulary),
        max_case_length=max(lengths),
        avg_case_length=sum(lengths) / n,
        max_case_time=max(times) / MS_PER_DAY,
        avg_case_time=math.fsum(times) / n / MS_PER_DAY,
    )


def concat(logs: Sequence[EventLog]) -> EventLog:
    return EventLog(tuple(tr for lg in logs for tr in lg.traces))
