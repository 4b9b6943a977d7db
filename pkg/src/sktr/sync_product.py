"""Stochastic synchronous product of a process model and a trace net.

The product runs the model and the trace net side by side over the disjoint
union of their places.  Every product transition is a move: the model
advances alone, the trace advances alone, or both advance on a shared
visible label.  Trace-side moves (log and synchronous) carry the firing
probability of the trace transition involved; model moves carry none.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Mapping, Optional

import xml.etree.ElementTree as ET

from .errors import ValidationError
from .nets import SILENT, Marking, SystemNet
from .pnml import net_to_element
from .sk_log import StochasticTraceNet

# Placeholder for the side that does not move in a nonsynchronous move.
SKIP = ">>"


class MoveKind(str, Enum):
    MODEL = "model"
    LOG = "log"
    SYNC = "sync"


_KIND_RANK = {MoveKind.SYNC: 0, MoveKind.MODEL: 1, MoveKind.LOG: 2}


@dataclass(frozen=True)
class Move:
    """One product transition, typed by which side advances."""

    kind: MoveKind
    model_transition: Optional[str]
    log_transition: Optional[str]
    label_pair: tuple[Optional[str], Optional[str]]
    probability: Optional[float]

    def __post_init__(self):
        kind = self.kind
        model_label, trace_label = self.label_pair
        if kind is MoveKind.MODEL:
            if self.model_transition is None or self.log_transition is not None:
                raise ValidationError("model move must reference only a model transition")
            if trace_label != SKIP:
                raise ValidationError("model move must skip on the trace side")
            if self.probability is not None:
                raise ValidationError("model move carries no probability")
        elif kind is MoveKind.LOG:
            if self.log_transition is None or self.model_transition is not None:
                raise ValidationError("log move must reference only a trace transition")
            if model_label != SKIP:
                raise ValidationError("log move must skip on the model side")
            if self.probability is None:
                raise ValidationError("log move must carry the trace firing probability")
        elif kind is MoveKind.SYNC:
            if self.model_transition is None or self.log_transition is None:
                raise ValidationError("synchronous move needs both transitions")
            if model_label in (SKIP, SILENT) or model_label != trace_label:
                raise ValidationError("synchronous move needs equal visible labels")
            if self.probability is None:
                raise ValidationError("synchronous move must carry the trace firing probability")
        else:
            raise ValidationError(f"unknown move kind {kind!r}")
        if self.probability is not None and not 0.0 < self.probability <= 1.0:
            raise ValidationError(f"move probability {self.probability!r} not in (0, 1]")

    def sort_key(self) -> tuple:
        return (
            _KIND_RANK[self.kind],
            self.label_pair[0] or "",
            self.label_pair[1] or "",
            self.model_transition or "",
            self.log_transition or "",
        )


def _esc(ident: str) -> str:
    return ident.replace("%", "%25").replace("|", "%7C")


def _model_place(p: str) -> str:
    return f"m|{_esc(p)}"


def _trace_place(p: str) -> str:
    return f"l|{_esc(p)}"


@dataclass(frozen=True)
class SyncProduct:
    """Product net plus the move attached to each product transition."""

    net: SystemNet
    moves: Mapping[str, Move]

    def __post_init__(self):
        object.__setattr__(self, "moves", dict(self.moves))
        if set(self.moves) != set(self.net.transitions):
            raise ValidationError("moves must cover exactly the product transitions")

    @property
    def initial_marking(self) -> Marking:
        return self.net.initial_marking

    @property
    def final_marking(self) -> Marking:
        return self.net.final_marking

    def move(self, transition_id: str) -> Move:
        return self.moves[transition_id]

    @cached_property
    def sorted_transitions(self) -> tuple[str, ...]:
        """Product transitions in deterministic search order."""
        return tuple(sorted(self.moves, key=lambda tid: (self.moves[tid].sort_key(), tid)))

    def kind_counts(self) -> dict[MoveKind, int]:
        counts = {kind: 0 for kind in MoveKind}
        for move in self.moves.values():
            counts[move.kind] += 1
        return counts


def build_sync_product(model: SystemNet, trace_net: StochasticTraceNet) -> SyncProduct:
    """Construct the synchronous product of a model and a stochastic trace net.

    Model and trace places are namespaced so the union is disjoint even when
    the two nets reuse identifiers.  Synchronous moves pair every model
    transition with every trace transition sharing its visible label; silent
    model transitions never synchronize.
    """
    tnet = trace_net.net
    places = {_model_place(p) for p in model.places} | {_trace_place(p) for p in tnet.places}
    transitions: set[str] = set()
    arcs: set[tuple[str, str]] = set()
    labeling: dict[str, Optional[str]] = {}
    moves: dict[str, Move] = {}

    def add(tid: str, move: Move, label: Optional[str],
            pre: list[str], post: list[str]) -> None:
        transitions.add(tid)
        labeling[tid] = label
        moves[tid] = move
        for p in pre:
            arcs.add((p, tid))
        for p in post:
            arcs.add((tid, p))

    for t in sorted(model.transitions):
        tid = f"mm|{_esc(t)}"
        label = model.label(t)
        add(
            tid,
            Move(MoveKind.MODEL, t, None, (label, SKIP), None),
            label,
            [_model_place(p) for p in model.preset[t]],
            [_model_place(p) for p in model.postset[t]],
        )

    for t in sorted(tnet.transitions):
        tid = f"lm|{_esc(t)}"
        label = tnet.label(t)
        add(
            tid,
            Move(MoveKind.LOG, None, t, (SKIP, label), trace_net.firing_prob[t]),
            label,
            [_trace_place(p) for p in tnet.preset[t]],
            [_trace_place(p) for p in tnet.postset[t]],
        )

    trace_by_label: dict[str, list[str]] = {}
    for t in sorted(tnet.transitions):
        label = tnet.label(t)
        if label is not SILENT:
            trace_by_label.setdefault(label, []).append(t)
    for tm in sorted(model.transitions):
        label = model.label(tm)
        if label is SILENT:
            continue
        for tl in trace_by_label.get(label, ()):
            tid = f"sm|{_esc(tm)}|{_esc(tl)}"
            add(
                tid,
                Move(MoveKind.SYNC, tm, tl, (label, label), trace_net.firing_prob[tl]),
                label,
                [_model_place(p) for p in model.preset[tm]]
                + [_trace_place(p) for p in tnet.preset[tl]],
                [_model_place(p) for p in model.postset[tm]]
                + [_trace_place(p) for p in tnet.postset[tl]],
            )

    initial = Marking({_model_place(p): n for p, n in model.initial_marking.items()}) + Marking(
        {_trace_place(p): n for p, n in tnet.initial_marking.items()}
    )
    final = Marking({_model_place(p): n for p, n in model.final_marking.items()}) + Marking(
        {_trace_place(p): n for p, n in tnet.final_marking.items()}
    )
    net = SystemNet(
        places=frozenset(places),
        transitions=frozenset(transitions),
        arcs=frozenset(arcs),
        labeling=labeling,
        initial_marking=initial,
        final_marking=final,
        name=f"{model.name}_x_{tnet.name}",
    )
    return SyncProduct(net=net, moves=moves)


def move_probability(move: Move) -> Optional[float]:
    """Probability attached to a move: present for SYNC and LOG moves (the
    trace transition's firing probability), absent for MODEL moves."""
    return move.probability


def _label_text(label: Optional[str]) -> str:
    if label is SILENT:
        return "tau"
    return label


def format_label_pair(move: Move) -> str:
    ml, tl = move.label_pair
    return f"({_label_text(ml)},{_label_text(tl)})"


def move_table_csv(sp: SyncProduct) -> str:
    """Debug table of the product's moves, one row per product transition."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["kind", "model_transition", "log_transition", "label_pair", "probability"])
    for tid in sp.sorted_transitions:
        move = sp.moves[tid]
        writer.writerow([
            move.kind.value,
            move.model_transition or "",
            move.log_transition or "",
            format_label_pair(move),
            "" if move.probability is None else repr(move.probability),
        ])
    return buf.getvalue()


def annotated_pnml(sp: SyncProduct) -> str:
    """PNML of the product net with per-transition move annotations."""
    root = net_to_element(sp.net)
    by_id = {el.get("id"): el for el in root.iter() if el.tag == "transition"}
    for tid, move in sp.moves.items():
        el = by_id.get(tid)
        if el is None:
            continue
        attrs = {"tool": "sktr", "version": "0.1", "kind": move.kind.value}
        if move.probability is not None:
            attrs["probability"] = repr(move.probability)
        ET.SubElement(el, "toolspecific", attrs)
    ET.indent(root)
    return ET.tostring(root, encoding="unicode", xml_declaration=True)
