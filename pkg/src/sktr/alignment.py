"""Optimal alignments over the synchronous product.

The product's reachability multigraph is expanded on the fly: nodes are
markings, and parallel edges between the same pair of markings (one per
alternative transition) are preserved as distinct relaxation candidates.
Dijkstra finds the minimum-cost path from the initial to the final marking;
the recovered trace is the trace-side label sequence of that path.

A deliberately dumb exhaustive enumerator doubles as a test oracle.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from heapq import heappop, heappush
from typing import Literal, Optional, Sequence

from .errors import (
    InfeasibleAlignmentError,
    OracleError,
    SearchLimitError,
    ValidationError,
)
from .nets import DEFAULT_TOKEN_CAP
from .sync_product import Move, MoveKind, SyncProduct

# Two path costs within this distance count as tied.
TIE_TOL = 1e-9

# Upper bound on enumerated equal-cost paths during tie detection.
MAX_TIE_PATHS = 128

COST_KINDS = ("exp", "lin", "log")


@dataclass(frozen=True)
class CostFunction:
    """Maps move probabilities to edge costs.

    Synchronous moves cost ``1 - e^(1 - 1/p)`` (exp), ``1 - p`` (lin), or
    ``-ln(p) / c`` (log).  All three vanish at p = 1 and grow as the
    probability drops.  Visible model moves cost 1, silent ones 0, and log
    moves cost ``1 + epsilon * (1 - p)`` so that, among nonsynchronous trace
    alternatives, the more probable one wins.  ``epsilon = 0`` restores the
    flat nonsynchronous cost of plain conformance checking.
    """

    kind: Literal["exp", "lin", "log"]
    c: float = 2.4
    epsilon: float = 1e-4
    p_min: float = 1e-9
    auto_c: bool = False

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise ValidationError(f"unknown cost function kind {self.kind!r}")
        if not self.c > 0:
            raise ValidationError("normalization constant c must be positive")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValidationError("epsilon must lie in [0, 1)")
        if not 0.0 < self.p_min < 1.0:
            raise ValidationError("p_min must lie in (0, 1)")

    @classmethod
    def parse(cls, token: str, epsilon: float = 1e-4) -> "CostFunction":
        """Parse a method token: ``exp``, ``lin``, ``log``, ``log:<c>``,
        or ``log:auto``."""
        token = token.strip().lower()
        if token in ("exp", "lin"):
            return cls(kind=token, epsilon=epsilon)
        if token == "log":
            return cls(kind="log", epsilon=epsilon)
        if token.startswith("log:"):
            arg = token.split(":", 1)[1]
            if arg == "auto":
                return cls(kind="log", epsilon=epsilon, auto_c=True)
            try:
                return cls(kind="log", c=float(arg), epsilon=epsilon)
            except ValueError as exc:
                raise ValidationError(f"bad cost token {token!r}") from exc
        raise ValidationError(f"unknown cost token {token!r}")

    def describe(self) -> str:
        if self.kind == "log":
            return "log:auto" if self.auto_c else f"log:{self.c:g}"
        return self.kind

    def clamp(self, p: float) -> float:
        return min(max(p, self.p_min), 1.0)

    def sync_cost(self, p: float) -> float:
        p = self.clamp(p)
        if self.kind == "exp":
            return 1.0 - math.exp(1.0 - 1.0 / p)
        if self.kind == "lin":
            return 1.0 - p
        return -math.log(p) / self.c

    def log_move_cost(self, p: float) -> float:
        return 1.0 + self.epsilon * (1.0 - self.clamp(p))

    def resolve(self, sp: SyncProduct) -> "CostFunction":
        """Resolve ``log:auto`` against a product: pick c so that no
        synchronous edge costs more than 1."""
        if not self.auto_c:
            return self
        worst = 0.0
        for move in sp.moves.values():
            if move.probability is not None:
                worst = max(worst, -math.log(self.clamp(move.probability)))
        return replace(self, c=worst if worst > 0.0 else 1.0, auto_c=False)


def edge_cost(f: CostFunction, move: Move) -> float:
    """Cost of traversing one product edge under ``f``."""
    if f.auto_c:
        raise ValidationError("resolve log:auto against a product before costing edges")
    if move.kind is MoveKind.SYNC:
        return f.sync_cost(move.probability)
    if move.kind is MoveKind.LOG:
        return f.log_move_cost(move.probability)
    # Model move: silent transitions align for free.
    return 0.0 if move.label_pair[0] is None else 1.0


@dataclass(frozen=True)
class SearchLimits:
    """Resource caps for one alignment search."""

    max_states: int = 200_000
    max_seconds: Optional[float] = None
    token_cap: int = DEFAULT_TOKEN_CAP

    def __post_init__(self):
        if self.max_states <= 0:
            raise ValidationError("max_states must be positive")
        if self.max_seconds is not None and self.max_seconds <= 0:
            raise ValidationError("max_seconds must be positive")
        if self.token_cap <= 0:
            raise ValidationError("token_cap must be positive")


@dataclass(frozen=True)
class Alignment:
    """An ordered sequence of legal moves from the initial to the final
    product marking, with its total cost and the recovered trace."""

    moves: tuple[Move, ...]
    total_cost: float
    recovered: tuple[str, ...]
    is_tie: bool = False
    candidates: tuple[tuple[str, ...], ...] = ()
    states_expanded: int = 0
    elapsed_seconds: float = 0.0


def extract_recovered_trace(alignment: "Alignment | Sequence[Move]") -> tuple[str, ...]:
    """Trace-side labels of the synchronous and log moves, in order."""
    moves = alignment.moves if isinstance(alignment, Alignment) else alignment
    return tuple(
        m.label_pair[1] for m in moves if m.kind in (MoveKind.SYNC, MoveKind.LOG)
    )


def _path_tie_key(moves: Sequence[Move]) -> tuple:
    """Deterministic preference among equal-cost alignments: more
    synchronous moves first, then a larger product of their probabilities,
    then the lexicographically smallest move sequence."""
    sync_probs = [m.probability for m in moves if m.kind is MoveKind.SYNC]
    product = 1.0
    for p in sync_probs:
        product *= p
    return (-len(sync_probs), -product, tuple(m.sort_key() for m in moves))


class _Compiled:
    """Per-search arrays for the hot loop."""

    __slots__ = ("tids", "pre", "post", "cost", "s2", "s3", "consumers", "always")

    def __init__(self, sp: SyncProduct, f: CostFunction):
        net = sp.net
        self.tids = sp.sorted_transitions
        self.pre = []
        self.post = []
        self.cost = []
        self.s2 = []
        self.s3 = []
        consumers: dict[str, list[int]] = {}
        always: list[int] = []
        for idx, tid in enumerate(self.tids):
            move = sp.moves[tid]
            pre = net.preset[tid]
            self.pre.append(pre)
            self.post.append(net.postset[tid])
            self.cost.append(edge_cost(f, move))
            self.s2.append(1 if move.kind is MoveKind.LOG else 0)
            if move.kind is MoveKind.SYNC:
                self.s3.append(-math.log(f.clamp(move.probability)))
            else:
                self.s3.append(0.0)
            if pre:
                for p in pre:
                    consumers.setdefault(p, []).append(idx)
            else:
                always.append(idx)
        self.consumers = consumers
        self.always = always


def search_optimal_alignment(
    sp: SyncProduct,
    f: CostFunction,
    limits: SearchLimits | None = None,
    *,
    detect_ties: bool = True,
    tie_tol: float = TIE_TOL,
) -> Alignment:
    """Dijkstra over the product's lazily expanded reachability multigraph.

    Ties in total cost are resolved deterministically; with ``detect_ties``
    the search keeps going at equal cost, enumerates the optimal paths, and
    reports every distinct recovered trace among them.
    """
    limits = limits or SearchLimits()
    f = f.resolve(sp)
    comp = _Compiled(sp, f)
    token_cap = limits.token_cap
    start = time.monotonic()

    init_key = sp.initial_marking.items()
    final_key = sp.final_marking.items()

    best: dict[tuple, tuple[float, int, float]] = {init_key: (0.0, 0, 0.0)}
    # With tie detection each node keeps every near-optimal incoming edge;
    # otherwise a single parent pointer suffices.
    parents: dict[tuple, list[tuple[tuple, int, float]]] = {init_key: []}
    settled: set = set()
    heap: list = [(0.0, 0, 0.0, 0, init_key)]
    counter = 1
    expanded = 0
    final_g: Optional[float] = None

    while heap:
        g, s2, s3, _, key = heappop(heap)
        if key in settled:
            continue
        settled.add(key)
        if final_g is not None and g > final_g + tie_tol:
            break
        if key == final_key:
            final_g = g
            if not detect_ties:
                break
            continue
        expanded += 1
        if expanded > limits.max_states:
            raise SearchLimitError(
                f"state cap exceeded after expanding {expanded} markings",
                states_expanded=expanded,
            )
        if limits.max_seconds is not None and not expanded % 256:
            if time.monotonic() - start > limits.max_seconds:
                raise SearchLimitError(
                    f"time cap exceeded after expanding {expanded} markings",
                    states_expanded=expanded,
                )

        marking = dict(key)
        candidates: set[int] = set(comp.always)
        for place in marking:
            candidates.update(comp.consumers.get(place, ()))
        for idx in sorted(candidates):
            enabled = True
            for p in comp.pre[idx]:
                if marking.get(p, 0) < 1:
                    enabled = False
                    break
            if not enabled:
                continue
            succ = dict(marking)
            for p in comp.pre[idx]:
                v = succ[p] - 1
                if v:
                    succ[p] = v
                else:
                    del succ[p]
            overflow = False
            for p in comp.post[idx]:
                v = succ.get(p, 0) + 1
                if v > token_cap:
                    overflow = True
                    break
                succ[p] = v
            if overflow:
                raise SearchLimitError(
                    f"token cap {token_cap} exceeded at place {p!r}; "
                    "raise SearchLimits.token_cap if the net is legitimately unsafe",
                    states_expanded=expanded,
                )
            nkey = tuple(sorted(succ.items()))
            ng = g + comp.cost[idx]
            ns2 = s2 + comp.s2[idx]
            ns3 = s3 + comp.s3[idx]
            cur = best.get(nkey)
            if cur is None:
                best[nkey] = (ng, ns2, ns3)
                parents[nkey] = [(key, idx, ng)]
                heappush(heap, (ng, ns2, ns3, counter, nkey))
                counter += 1
            elif (ng, ns2, ns3) < cur:
                if detect_ties and ng <= cur[0] + tie_tol:
                    entries = [e for e in parents[nkey] if e[2] <= ng + tie_tol]
                    entries.append((key, idx, ng))
                    parents[nkey] = entries
                else:
                    parents[nkey] = [(key, idx, ng)]
                best[nkey] = (ng, ns2, ns3)
                heappush(heap, (ng, ns2, ns3, counter, nkey))
                counter += 1
            elif detect_ties and ng <= cur[0] + tie_tol:
                parents[nkey].append((key, idx, ng))

    if final_g is None:
        raise InfeasibleAlignmentError(
            f"final marking unreachable after expanding {expanded} markings"
        )

    if detect_ties:
        paths = _enumerate_optimal_paths(best, parents, init_key, final_key, tie_tol)
    else:
        paths = [_walk_single_path(parents, init_key, final_key)]

    move_paths = [tuple(sp.moves[comp.tids[idx]] for idx in path) for path in paths]
    chosen = min(move_paths, key=_path_tie_key)
    total = math.fsum(edge_cost(f, m) for m in chosen)
    recovered = extract_recovered_trace(chosen)
    candidates = ()
    if detect_ties:
        candidates = tuple(sorted({extract_recovered_trace(mp) for mp in move_paths}))
    return Alignment(
        moves=chosen,
        total_cost=total,
        recovered=recovered,
        is_tie=len(move_paths) > 1,
        candidates=candidates,
        states_expanded=expanded,
        elapsed_seconds=time.monotonic() - start,
    )


def _walk_single_path(parents, init_key, final_key) -> list[int]:
    path: list[int] = []
    key = final_key
    while key != init_key:
        pred, idx, _ = parents[key][-1]
        path.append(idx)
        key = pred
    path.reverse()
    return path


def _enumerate_optimal_paths(best, parents, init_key, final_key, tie_tol) -> list[list[int]]:
    """All distinct optimal transition paths, bounded by MAX_TIE_PATHS."""
    paths: list[list[int]] = []

    def walk(key: tuple, suffix: list[int], on_stack: frozenset) -> None:
        if len(paths) >= MAX_TIE_PATHS:
            return
        if key == init_key:
            paths.append(list(reversed(suffix)))
            return
        limit = best[key][0] + tie_tol
        for pred, idx, g_via in parents.get(key, ()):
            if g_via > limit or pred in on_stack:
                continue
            suffix.append(idx)
            walk(pred, suffix, on_stack | {key})
            suffix.pop()

    walk(final_key, [], frozenset())
    unique = {tuple(p) for p in paths}
    return [list(p) for p in sorted(unique)]


def conformance_cost(
    sp: SyncProduct, f: CostFunction, limits: SearchLimits | None = None
) -> float:
    """Total cost of the optimal alignment, for conformance-only callers."""
    return search_optimal_alignment(sp, f, limits, detect_ties=False).total_cost


def brute_force_alignment(
    sp: SyncProduct,
    f: CostFunction,
    depth_cap: int = 64,
    token_cap: int = DEFAULT_TOKEN_CAP,
) -> Alignment:
    """Exhaustive enumeration of the product's complete firing sequences.

    Test oracle for the search: independent of the Dijkstra code path and
    honest about its limits.  If any branch is cut off by ``depth_cap`` (or
    the token cap) while it could still undercut the best complete sequence,
    the oracle refuses to answer.
    """
    if depth_cap <= 0:
        raise ValidationError("depth_cap must be positive")
    f = f.resolve(sp)
    comp = _Compiled(sp, f)
    final_key = sp.final_marking.items()
    order = sorted(range(len(comp.tids)), key=lambda i: (comp.cost[i], i))

    best_g: Optional[float] = None
    best_path: Optional[list[int]] = None
    best_tie: Optional[tuple] = None
    min_capped: Optional[float] = None

    def tie_key(path: list[int]) -> tuple:
        return _path_tie_key([sp.moves[comp.tids[i]] for i in path])

    def walk(marking: dict, g: float, path: list[int]) -> None:
        nonlocal best_g, best_path, best_tie, min_capped
        if best_g is not None and g > best_g:
            return
        if tuple(sorted(marking.items())) == final_key:
            key = tie_key(path)
            if best_g is None or g < best_g or (g == best_g and key < best_tie):
                best_g, best_path, best_tie = g, list(path), key
            return
        if len(path) >= depth_cap:
            min_capped = g if min_capped is None else min(min_capped, g)
            return
        for idx in order:
            enabled = all(marking.get(p, 0) >= 1 for p in comp.pre[idx])
            if not enabled:
                continue
            succ = dict(marking)
            for p in comp.pre[idx]:
                v = succ[p] - 1
                if v:
                    succ[p] = v
                else:
                    del succ[p]
            overflow = False
            for p in comp.post[idx]:
                v = succ.get(p, 0) + 1
                if v > token_cap:
                    overflow = True
                    break
                succ[p] = v
            if overflow:
                min_capped = g if min_capped is None else min(min_capped, g)
                continue
            path.append(idx)
            walk(succ, g + comp.cost[idx], path)
            path.pop()

    walk(dict(sp.initial_marking.items()), 0.0, [])

    if best_g is None:
        if min_capped is not None:
            raise OracleError(f"no complete sequence within depth cap {depth_cap}")
        raise InfeasibleAlignmentError("final marking unreachable")
    if min_capped is not None and min_capped < best_g:
        raise OracleError(
            "a branch was cut off below the best complete cost; raise depth_cap"
        )

    moves = tuple(sp.moves[comp.tids[i]] for i in best_path)
    return Alignment(
        moves=moves,
        total_cost=math.fsum(edge_cost(f, m) for m in moves),
        recovered=extract_recovered_trace(moves),
    )


def alignment_to_dict(a: Alignment, f: CostFunction, sp: SyncProduct | None = None) -> dict:
    """JSON-ready view of an alignment (move records, cost, recovered trace,
    tie flag, search statistics)."""
    resolved = f.resolve(sp) if (f.auto_c and sp is not None) else f
    move_records = []
    for m in a.moves:
        move_records.append({
            "kind": m.kind.value,
            "model_transition": m.model_transition,
            "log_transition": m.log_transition,
            "model_label": m.label_pair[0],
            "trace_label": m.label_pair[1],
            "probability": m.probability,
            "cost": edge_cost(resolved, m),
        })
    return {
        "moves": move_records,
        "total_cost": a.total_cost,
        "recovered": list(a.recovered),
        "is_tie": a.is_tie,
        "candidates": [list(c) for c in a.candidates],
        "states_expanded": a.states_expanded,
        "wall_seconds": a.elapsed_seconds,
    }
