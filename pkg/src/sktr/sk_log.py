"""Stochastically known event logs.

An SK event carries a probability distribution over activity labels rather
than a single label.  This module holds the log data model, the parsers
(SK-CSV, SK-JSON, and a deterministic XES subset), writers for the same
formats, the chain-shaped stochastic trace net built from one SK trace, and
the argmax baseline that picks each event's most probable label.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Mapping, Optional, Sequence

import xml.etree.ElementTree as ET

from .errors import ValidationError
from .nets import Marking, SystemNet

# Tolerance on the probability mass of a distribution.  Near-miss sums are
# rejected, never renormalized: they usually indicate a data bug upstream.
PROB_SUM_TOL = 1e-6

SK_CSV_HEADER = ("case_id", "event_id", "distribution", "timestamp")


def _validate_distribution(dist: Mapping[str, float], where: str) -> dict[str, float]:
    if not dist:
        raise ValidationError(f"{where}: empty distribution")
    out: dict[str, float] = {}
    for label, prob in dist.items():
        if not isinstance(label, str) or not label:
            raise ValidationError(f"{where}: activity label must be a non-empty string")
        prob = float(prob)
        if not prob > 0.0:
            raise ValidationError(
                f"{where}: probability for {label!r} must be strictly positive "
                "(omit zero-mass labels)"
            )
        if prob > 1.0:
            raise ValidationError(f"{where}: probability for {label!r} exceeds 1")
        out[label] = prob
    total = sum(out.values())
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise ValidationError(f"{where}: probabilities sum to {total!r}, expected 1")
    return out


@dataclass(frozen=True)
class SKEvent:
    """One event with a probability distribution over activity labels."""

    event_id: str
    distribution: Mapping[str, float]
    timestamp: Optional[datetime] = None

    def __post_init__(self):
        where = f"event {self.event_id!r}"
        object.__setattr__(self, "distribution", _validate_distribution(self.distribution, where))

    def support(self) -> tuple[str, ...]:
        return tuple(sorted(self.distribution))

    def probability(self, label: str) -> float:
        return self.distribution.get(label, 0.0)

    def is_deterministic(self) -> bool:
        return len(self.distribution) == 1


@dataclass(frozen=True)
class SKTrace:
    """Ordered SK events for one case."""

    case_id: str
    events: tuple[SKEvent, ...]

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        last: Optional[datetime] = None
        for ev in self.events:
            if ev.timestamp is None:
                continue
            if last is not None:
                try:
                    out_of_order = ev.timestamp < last
                except TypeError as exc:
                    raise ValidationError(
                        f"case {self.case_id!r}: mixed aware and naive timestamps"
                    ) from exc
                if out_of_order:
                    raise ValidationError(
                        f"case {self.case_id!r}: timestamps decrease at event {ev.event_id!r}"
                    )
            last = ev.timestamp

    def __len__(self) -> int:
        return len(self.events)

    def is_deterministic(self) -> bool:
        return all(ev.is_deterministic() for ev in self.events)

    def deterministic_labels(self) -> tuple[str, ...]:
        if not self.is_deterministic():
            raise ValidationError(f"case {self.case_id!r} is not deterministic")
        return tuple(next(iter(ev.distribution)) for ev in self.events)


@dataclass(frozen=True)
class StochasticTraceNet:
    """Chain net for one SK trace plus per-transition firing probabilities.

    Alternative transitions between consecutive places stand for one
    event's possible labels; their probabilities sum to 1.
    """

    net: SystemNet
    firing_prob: Mapping[str, float]

    def __post_init__(self):
        object.__setattr__(self, "firing_prob", dict(self.firing_prob))
        if set(self.firing_prob) != set(self.net.transitions):
            raise ValidationError("firing_prob must cover exactly the net's transitions")
        for tid, p in self.firing_prob.items():
            if not 0.0 < p <= 1.0:
                raise ValidationError(f"transition {tid!r}: firing probability {p!r} not in (0, 1]")
        self._validate_chain()

    def _validate_chain(self) -> None:
        net = self.net
        initial = net.initial_marking.as_dict()
        if len(initial) != 1 or set(initial.values()) != {1}:
            raise ValidationError("trace net must start with a single token in one place")
        current = next(iter(initial))
        seen = {current}
        while current not in net.final_marking:
            outgoing = net.consumers.get(current, ())
            if not outgoing:
                raise ValidationError(f"trace net dead-ends at place {current!r}")
            nexts = set()
            mass = 0.0
            for tid in outgoing:
                if net.preset[tid] != (current,) or len(net.postset[tid]) != 1:
                    raise ValidationError(f"transition {tid!r} breaks the chain shape")
                nexts.add(net.postset[tid][0])
                mass += self.firing_prob[tid]
            if len(nexts) != 1:
                raise ValidationError(f"alternatives from {current!r} disagree on the next place")
            if abs(mass - 1.0) > PROB_SUM_TOL:
                raise ValidationError(
                    f"alternatives out of {current!r} carry total probability {mass!r}"
                )
            current = next(iter(nexts))
            if current in seen:
                raise ValidationError("trace net contains a cycle")
            seen.add(current)
        if net.final_marking.as_dict() != {current: 1}:
            raise ValidationError("trace net final marking must be one token in the last place")

    def length(self) -> int:
        return len(self.net.places) - 1


def build_trace_net(trace: SKTrace) -> StochasticTraceNet:
    """Build the chain net of an SK trace: one place per position, one
    transition per (position, label) alternative."""
    if not trace.events:
        raise ValidationError(f"case {trace.case_id!r}: cannot build a trace net from no events")
    places = [f"p{i}" for i in range(len(trace.events) + 1)]
    transitions: set[str] = set()
    arcs: set[tuple[str, str]] = set()
    labeling: dict[str, Optional[str]] = {}
    firing_prob: dict[str, float] = {}
    for i, event in enumerate(trace.events):
        for label in event.support():
            tid = f"t{i}_{label}"
            transitions.add(tid)
            labeling[tid] = label
            firing_prob[tid] = event.distribution[label]
            arcs.add((places[i], tid))
            arcs.add((tid, places[i + 1]))
    net = SystemNet(
        places=frozenset(places),
        transitions=frozenset(transitions),
        arcs=frozenset(arcs),
        labeling=labeling,
        initial_marking=Marking.of(places[0]),
        final_marking=Marking.of(places[-1]),
        name=f"trace_{trace.case_id}",
    )
    return StochasticTraceNet(net=net, firing_prob=firing_prob)


def argmax_recover(trace: SKTrace) -> tuple[str, ...]:
    """Pick each event's most probable label, ignoring any model.

    Ties break to the lexicographically smallest label, which keeps the
    baseline deterministic.
    """
    recovered = []
    for event in trace.events:
        best = min(event.distribution.items(), key=lambda kv: (-kv[1], kv[0]))
        recovered.append(best[0])
    return tuple(recovered)


def _parse_timestamp(text: str, where: str) -> datetime:
    raw = text.strip()
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    try:
        return datetime.fromisoformat(raw)
    except ValueError as exc:
        raise ValidationError(f"{where}: bad timestamp {text!r}") from exc


def _parse_distribution_field(field: str, where: str) -> dict[str, float]:
    dist: dict[str, float] = {}
    for chunk in field.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        label, sep, prob_text = chunk.rpartition(":")
        if not sep or not label:
            raise ValidationError(f"{where}: bad distribution entry {chunk!r}")
        try:
            prob = float(prob_text)
        except ValueError as exc:
            raise ValidationError(f"{where}: bad probability {prob_text!r}") from exc
        if label in dist:
            raise ValidationError(f"{where}: duplicate label {label!r}")
        dist[label] = prob
    return dist


def _group_traces(rows: Iterable[tuple[str, SKEvent]]) -> list[SKTrace]:
    grouped: dict[str, list[SKEvent]] = {}
    for case_id, event in rows:
        grouped.setdefault(case_id, []).append(event)
    return [SKTrace(case_id=cid, events=tuple(evs)) for cid, evs in grouped.items()]


def parse_sk_csv(text: str) -> list[SKTrace]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        return []
    if tuple(h.strip() for h in header) != SK_CSV_HEADER:
        raise ValidationError(
            f"bad SK-CSV header {header!r}, expected {','.join(SK_CSV_HEADER)}"
        )
    rows: list[tuple[str, SKEvent]] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 4:
            raise ValidationError(f"line {lineno}: expected 4 fields, got {len(row)}")
        case_id, event_id, dist_field, ts_field = (cell.strip() for cell in row)
        where = f"case {case_id!r} event {event_id!r}"
        dist = _parse_distribution_field(dist_field, where)
        total = sum(dist.values())
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ValidationError(f"{where}: probabilities sum to {total!r}, expected 1")
        timestamp = _parse_timestamp(ts_field, where) if ts_field else None
        rows.append((case_id, SKEvent(event_id, dist, timestamp)))
    return _group_traces(rows)


def _strict_pairs_hook(pairs: list[tuple[str, object]]) -> dict:
    out: dict = {}
    for key, value in pairs:
        if key in out:
            raise ValidationError(f"duplicate JSON key {key!r}")
        out[key] = value
    return out


def parse_sk_json(text: str) -> list[SKTrace]:
    try:
        payload = json.loads(text, object_pairs_hook=_strict_pairs_hook)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"bad JSON: {exc}") from exc
    if not isinstance(payload, list):
        raise ValidationError("SK-JSON must be an array of traces")
    rows: list[tuple[str, SKEvent]] = []
    for i, entry in enumerate(payload):
        if not isinstance(entry, dict) or "case_id" not in entry or "events" not in entry:
            raise ValidationError(f"trace {i}: expected an object with case_id and events")
        case_id = str(entry["case_id"])
        events = entry["events"]
        if not isinstance(events, list):
            raise ValidationError(f"case {case_id!r}: events must be an array")
        for j, ev in enumerate(events):
            if not isinstance(ev, dict) or "distribution" not in ev:
                raise ValidationError(f"case {case_id!r} event {j}: missing distribution")
            event_id = str(ev.get("event_id", f"e{j + 1}"))
            where = f"case {case_id!r} event {event_id!r}"
            dist = ev["distribution"]
            if not isinstance(dist, dict):
                raise ValidationError(f"{where}: distribution must be an object")
            total = sum(float(v) for v in dist.values()) if dist else 0.0
            if abs(total - 1.0) > PROB_SUM_TOL:
                raise ValidationError(f"{where}: probabilities sum to {total!r}, expected 1")
            ts = ev.get("timestamp")
            timestamp = _parse_timestamp(str(ts), where) if ts is not None else None
            rows.append((case_id, SKEvent(event_id, dist, timestamp)))
    return _group_traces(rows)


def parse_sk_log(text: str, fmt: str = "csv") -> list[SKTrace]:
    """Parse an SK log from text in the given format (``csv`` or ``json``)."""
    if fmt == "csv":
        return parse_sk_csv(text)
    if fmt == "json":
        return parse_sk_json(text)
    raise ValidationError(f"unknown SK log format {fmt!r}")


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def parse_xes(text: str) -> list[SKTrace]:
    """Parse the deterministic XES subset: each event becomes a singleton
    distribution.  Only ``concept:name`` and ``time:timestamp`` are read."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ValidationError(f"malformed XES: {exc}") from exc
    traces: list[SKTrace] = []
    trace_els = [el for el in root.iter() if _local(el.tag) == "trace"]
    for i, trace_el in enumerate(trace_els):
        case_id: Optional[str] = None
        for sub in trace_el:
            if _local(sub.tag) == "string" and sub.get("key") == "concept:name":
                case_id = sub.get("value")
        if case_id is None:
            raise ValidationError(f"trace {i}: missing trace-level concept:name")
        events: list[SKEvent] = []
        event_els = [sub for sub in trace_el if _local(sub.tag) == "event"]
        for j, event_el in enumerate(event_els):
            label: Optional[str] = None
            timestamp: Optional[datetime] = None
            for attr in event_el:
                tag = _local(attr.tag)
                key = attr.get("key")
                if tag == "string" and key == "concept:name":
                    label = attr.get("value")
                elif tag == "date" and key == "time:timestamp":
                    value = attr.get("value")
                    if value:
                        timestamp = _parse_timestamp(value, f"trace {i} event {j}")
            if not label:
                raise ValidationError(f"trace {i} event {j}: missing concept:name")
            events.append(SKEvent(f"e{j + 1}", {label: 1.0}, timestamp))
        traces.append(SKTrace(case_id=case_id, events=tuple(events)))
    return traces


def write_sk_csv(traces: Sequence[SKTrace]) -> str:
    """Serialize traces in the SK-CSV format (round-trips probabilities)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SK_CSV_HEADER)
    for trace in traces:
        for event in trace.events:
            dist = ";".join(f"{label}:{event.distribution[label]!r}" for label in event.support())
            ts = event.timestamp.isoformat() if event.timestamp else ""
            writer.writerow([trace.case_id, event.event_id, dist, ts])
    return buf.getvalue()


def write_xes(traces: Sequence[SKTrace]) -> str:
    """Serialize deterministic traces as XES."""
    log_el = ET.Element("log", {"xes.version": "1.0"})
    for trace in traces:
        labels = trace.deterministic_labels()
        trace_el = ET.SubElement(log_el, "trace")
        ET.SubElement(trace_el, "string", {"key": "concept:name", "value": trace.case_id})
        for event, label in zip(trace.events, labels):
            event_el = ET.SubElement(trace_el, "event")
            ET.SubElement(event_el, "string", {"key": "concept:name", "value": label})
            if event.timestamp is not None:
                ET.SubElement(
                    event_el, "date",
                    {"key": "time:timestamp", "value": event.timestamp.isoformat()},
                )
    ET.indent(log_el)
    return ET.tostring(log_el, encoding="unicode", xml_declaration=True)


def deterministic_trace(case_id: str, labels: Sequence[str],
                        template: Optional[SKTrace] = None) -> SKTrace:
    """Build a deterministic SK trace from labels, optionally reusing event
    ids and timestamps from a template trace of equal length."""
    if template is not None and len(template.events) != len(labels):
        raise ValidationError("template length does not match label count")
    events = []
    for i, label in enumerate(labels):
        if template is not None:
            src = template.events[i]
            events.append(SKEvent(src.event_id, {label: 1.0}, src.timestamp))
        else:
            events.append(SKEvent(f"e{i + 1}", {label: 1.0}))
    return SKTrace(case_id=case_id, events=tuple(events))
