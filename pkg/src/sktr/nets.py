"""Labeled Petri nets with initial/final markings and token-game semantics.

A system net is the shared substrate for process models, stochastic trace
nets, and synchronous products.  Nets are immutable after construction and
may be shared freely across threads; markings are small value objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Optional, Union

from .errors import ValidationError

# Label value of invisible transitions.  Never the empty string.
SILENT: Optional[str] = None

# Default per-place token bound enforced while exploring state spaces.
# Exceeding it raises instead of silently truncating the search.
DEFAULT_TOKEN_CAP = 8

MarkingLike = Union["Marking", Mapping[str, int], Iterable[tuple[str, int]]]


class Marking:
    """Immutable multiset of places: the state of a net."""

    __slots__ = ("_items",)

    def __init__(self, counts: MarkingLike = ()):
        if isinstance(counts, Marking):
            self._items: tuple[tuple[str, int], ...] = counts._items
            return
        pairs = counts.items() if isinstance(counts, Mapping) else counts
        acc: dict[str, int] = {}
        for place, count in pairs:
            count = int(count)
            if count < 0:
                raise ValidationError(f"negative token count for place {place!r}")
            if count:
                acc[place] = acc.get(place, 0) + count
        self._items = tuple(sorted(acc.items()))

    @classmethod
    def of(cls, *places: str) -> "Marking":
        """Marking with one token per argument (repeats accumulate)."""
        return cls((p, 1) for p in places)

    def __getitem__(self, place: str) -> int:
        for p, n in self._items:
            if p == place:
                return n
        return 0

    def __contains__(self, place: str) -> bool:
        return self[place] > 0

    def __iter__(self) -> Iterator[str]:
        return (p for p, _ in self._items)

    def items(self) -> tuple[tuple[str, int], ...]:
        return self._items

    def places(self) -> tuple[str, ...]:
        return tuple(p for p, _ in self._items)

    def total(self) -> int:
        """Total number of tokens (multiset cardinality)."""
        return sum(n for _, n in self._items)

    def as_dict(self) -> dict[str, int]:
        return dict(self._items)

    def __add__(self, other: "Marking") -> "Marking":
        merged = dict(self._items)
        for p, n in other._items:
            merged[p] = merged.get(p, 0) + n
        return Marking(merged)

    def __bool__(self) -> bool:
        return bool(self._items)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Marking) and self._items == other._items

    def __hash__(self) -> int:
        return hash(self._items)

    def __repr__(self) -> str:
        return f"Marking({dict(self._items)!r})"


@dataclass(frozen=True)
class SystemNet:
    """Labeled place/transition net with initial and final markings.

    Place and transition identifiers are opaque strings drawn from disjoint
    namespaces; activity labels live in a namespace of their own, so two
    transitions may carry the same label.  Arc weights are fixed at 1.
    """

    places: frozenset[str]
    transitions: frozenset[str]
    arcs: frozenset[tuple[str, str]]
    labeling: Mapping[str, Optional[str]]
    initial_marking: Marking
    final_marking: Marking
    name: str = "net"

    def __post_init__(self):
        object.__setattr__(self, "places", frozenset(self.places))
        object.__setattr__(self, "transitions", frozenset(self.transitions))
        object.__setattr__(self, "arcs", frozenset((s, t) for s, t in self.arcs))
        object.__setattr__(self, "labeling", dict(self.labeling))
        object.__setattr__(self, "initial_marking", Marking(self.initial_marking))
        object.__setattr__(self, "final_marking", Marking(self.final_marking))
        self._validate()

    def _validate(self) -> None:
        overlap = self.places & self.transitions
        if overlap:
            raise ValidationError(
                f"identifiers used as both place and transition: {sorted(overlap)!r}"
            )
        for tid, label in self.labeling.items():
            if tid not in self.transitions:
                raise ValidationError(f"label for unknown transition {tid!r}")
            if label is not SILENT and (not isinstance(label, str) or not label):
                raise ValidationError(
                    f"transition {tid!r}: label must be a non-empty string or SILENT"
                )
        for src, dst in self.arcs:
            ok = (src in self.places and dst in self.transitions) or (
                src in self.transitions and dst in self.places
            )
            if not ok:
                raise ValidationError(f"arc ({src!r}, {dst!r}) has a dangling or same-kind endpoint")
        for which, marking in (("initial", self.initial_marking), ("final", self.final_marking)):
            unknown = [p for p in marking if p not in self.places]
            if unknown:
                raise ValidationError(f"{which} marking references unknown places {unknown!r}")

    def label(self, transition: str) -> Optional[str]:
        if transition not in self.transitions:
            raise ValidationError(f"unknown transition {transition!r}")
        return self.labeling.get(transition)

    def is_silent(self, transition: str) -> bool:
        return self.label(transition) is SILENT

    @cached_property
    def preset(self) -> dict[str, tuple[str, ...]]:
        """Transition id -> ordered tuple of input places."""
        pre: dict[str, list[str]] = {t: [] for t in self.transitions}
        for src, dst in sorted(self.arcs):
            if src in self.places:
                pre[dst].append(src)
        return {t: tuple(v) for t, v in pre.items()}

    @cached_property
    def postset(self) -> dict[str, tuple[str, ...]]:
        """Transition id -> ordered tuple of output places."""
        post: dict[str, list[str]] = {t: [] for t in self.transitions}
        for src, dst in sorted(self.arcs):
            if src in self.transitions:
                post[src].append(dst)
        return {t: tuple(v) for t, v in post.items()}

    @cached_property
    def consumers(self) -> dict[str, tuple[str, ...]]:
        """Place id -> transitions that consume a token from it."""
        cons: dict[str, list[str]] = {p: [] for p in self.places}
        for src, dst in sorted(self.arcs):
            if src in self.places:
                cons[src].append(dst)
        return {p: tuple(v) for p, v in cons.items()}


def _check_marking(net: SystemNet, marking: Marking) -> None:
    unknown = [p for p in marking if p not in net.places]
    if unknown:
        raise ValidationError(f"marking references unknown places {unknown!r}")


def enabled_transitions(net: SystemNet, marking: Marking) -> set[str]:
    """Transitions whose every input place holds at least one token."""
    _check_marking(net, marking)
    counts = marking.as_dict()
    return {
        t
        for t in net.transitions
        if all(counts.get(p, 0) >= 1 for p in net.preset[t])
    }


def is_enabled(net: SystemNet, marking: Marking, transition: str) -> bool:
    if transition not in net.transitions:
        raise ValidationError(f"unknown transition {transition!r}")
    _check_marking(net, marking)
    counts = marking.as_dict()
    return all(counts.get(p, 0) >= 1 for p in net.preset[transition])


def fire(net: SystemNet, marking: Marking, transition: str) -> Marking:
    """Fire ``transition`` at ``marking`` and return the successor marking.

    Pure function; firing a disabled transition raises instead of producing
    a corrupt marking.
    """
    if not is_enabled(net, marking, transition):
        raise ValidationError(f"transition {transition!r} is not enabled at {marking!r}")
    counts = marking.as_dict()
    for p in net.preset[transition]:
        counts[p] -= 1
        if not counts[p]:
            del counts[p]
    for p in net.postset[transition]:
        counts[p] = counts.get(p, 0) + 1
    return Marking(counts)


def replay(net: SystemNet, transitions: Iterable[str], start: Marking | None = None) -> Marking:
    """Fire a sequence of transitions, returning the resulting marking."""
    marking = net.initial_marking if start is None else start
    for t in transitions:
        marking = fire(net, marking, t)
    return marking
