from pathlib import Path

import pytest

from sktr import Marking, SKEvent, SKTrace, SystemNet

DATA_DIR = Path(__file__).parent / "data"


def two_branch_model() -> SystemNet:
    """Reference model accepting exactly <B,C,E> and <A,D,F>."""
    arcs = set()

    def seq(t, src, dst):
        arcs.add((src, t))
        arcs.add((t, dst))

    seq("tB", "q0", "q1")
    seq("tC", "q1", "q2")
    seq("tE", "q2", "q5")
    seq("tA", "q0", "q3")
    seq("tD", "q3", "q4")
    seq("tF", "q4", "q5")
    return SystemNet(
        places={"q0", "q1", "q2", "q3", "q4", "q5"},
        transitions={"tA", "tB", "tC", "tD", "tE", "tF"},
        arcs=arcs,
        labeling={"tA": "A", "tB": "B", "tC": "C", "tD": "D", "tE": "E", "tF": "F"},
        initial_marking=Marking.of("q0"),
        final_marking=Marking.of("q5"),
        name="two_branch",
    )


def uncertain_trace() -> SKTrace:
    """Three events with two alternatives each: the golden fixture trace."""
    return SKTrace("1", (
        SKEvent("e1", {"A": 0.8, "B": 0.2}),
        SKEvent("e2", {"C": 0.7, "D": 0.3}),
        SKEvent("e3", {"E": 0.6, "F": 0.4}),
    ))


def sequence_model(labels, name="seq") -> SystemNet:
    """Strict sequence model accepting exactly one trace."""
    labels = list(labels)
    places = [f"s{i}" for i in range(len(labels) + 1)]
    arcs = set()
    transitions = set()
    labeling = {}
    for i, label in enumerate(labels):
        tid = f"u{i}"
        transitions.add(tid)
        labeling[tid] = label
        arcs.add((places[i], tid))
        arcs.add((tid, places[i + 1]))
    return SystemNet(
        places=frozenset(places),
        transitions=frozenset(transitions),
        arcs=frozenset(arcs),
        labeling=labeling,
        initial_marking=Marking.of(places[0]),
        final_marking=Marking.of(places[-1]),
        name=name,
    )


@pytest.fixture
def model() -> SystemNet:
    return two_branch_model()


@pytest.fixture
def trace() -> SKTrace:
    return uncertain_trace()


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR
