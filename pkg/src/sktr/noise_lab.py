"""Controlled-noise experiments: turn a deterministic log into an SK log,
recover it, and score recovery accuracy across a grid of noise levels.

The protocol has four controls: how many alternative labels each uncertain
event carries (``n_t``), which fraction of a trace's events become
uncertain (``t_p``), the probability that the true label keeps the highest
mass (``p_a``), and the pool the alternative labels are drawn from (the
whole alphabet or the top-k most frequent labels).
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

from .alignment import CostFunction, SearchLimits, search_optimal_alignment
from .errors import InfeasibleAlignmentError, SearchLimitError, ValidationError
from .nets import SystemNet
from .sk_log import SKEvent, SKTrace, argmax_recover, build_trace_net
from .sync_product import build_sync_product

POOL_ALL = "all"
POOL_TOP_K = "topk"

ARGMAX_METHOD = "argmax"


def derive_seed(*parts: object) -> int:
    """Stable 64-bit sub-seed derived from arbitrary parts (hash-salt free)."""
    label = ":".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "big")


@dataclass(frozen=True)
class NoiseConfig:
    """Parameters of one noise injection."""

    n_t: int = 2
    t_p: float = 1.0
    p_a: float = 0.0
    pool: str = POOL_ALL
    k: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.t_p <= 1.0:
            raise ValidationError("t_p must lie in [0, 1]")
        if not 0.0 <= self.p_a <= 1.0:
            raise ValidationError("p_a must lie in [0, 1]")
        if self.t_p > 0 and self.n_t < 2:
            raise ValidationError("n_t must be at least 2 when events become uncertain")
        if self.pool not in (POOL_ALL, POOL_TOP_K):
            raise ValidationError(f"unknown label pool {self.pool!r}")
        if self.pool == POOL_TOP_K and (self.k is None or self.k < 1):
            raise ValidationError("top-k pool needs k >= 1")


@dataclass(frozen=True)
class NoiseInjection:
    """An SK log plus the ground-truth labels it was derived from."""

    traces: tuple[SKTrace, ...]
    truth: tuple[tuple[str, ...], ...]


def assign_probabilities(
    true_label: str,
    alternatives: Sequence[str],
    p_a: float,
    rng: random.Random | int,
) -> dict[str, float]:
    """Divide probability mass over the true label and its alternatives.

    Draws a flat Dirichlet vector (rejecting draws whose two largest values
    tie within 1e-12), hands the maximum to the true label with probability
    ``p_a`` and to a uniformly chosen alternative otherwise, and scatters
    the remaining values over the remaining labels at random.  The chance
    that the true label ends up as the argmax is exactly ``p_a``.
    """
    if isinstance(rng, int):
        rng = random.Random(rng)
    labels = [true_label, *alternatives]
    if len(set(labels)) != len(labels):
        raise ValidationError("alternative labels must be distinct from each other and the truth")
    n = len(labels)
    if n == 1:
        return {true_label: 1.0}
    while True:
        raw = [rng.expovariate(1.0) for _ in range(n)]
        total = math.fsum(raw)
        values = sorted((v / total for v in raw), reverse=True)
        if values[0] - values[1] > 1e-12:
            break
    if rng.random() < p_a:
        target = true_label
    else:
        target = alternatives[rng.randrange(len(alternatives))]
    rest_labels = [l for l in labels if l != target]
    rng.shuffle(rest_labels)
    dist = {target: values[0]}
    dist.update(zip(rest_labels, values[1:]))
    return dist


def _alphabet(traces: Sequence[SKTrace]) -> list[str]:
    labels = set()
    for trace in traces:
        for event in trace.events:
            labels.update(event.distribution)
    return sorted(labels)


def top_k_labels(traces: Sequence[SKTrace], k: int) -> list[str]:
    """The k most frequent labels by event count; ties break alphabetically."""
    counts: Counter[str] = Counter()
    for trace in traces:
        counts.update(trace.deterministic_labels())
    if k > len(counts):
        raise ValidationError(f"k={k} exceeds the {len(counts)} distinct labels in the log")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [label for label, _ in ranked[:k]]


def inject_noise(traces: Sequence[SKTrace], cfg: NoiseConfig) -> NoiseInjection:
    """Make a deterministic log stochastically known under ``cfg``.

    A seeded, per-trace uniform subset of events receives ``n_t - 1``
    distinct alternative labels from the pool (never the true label); the
    mass split follows :func:`assign_probabilities`.  The true label always
    stays in the support.  Identical inputs and seed give identical output.
    """
    for trace in traces:
        if not trace.is_deterministic():
            raise ValidationError(f"case {trace.case_id!r}: noise injection needs a deterministic log")
    if cfg.pool == POOL_TOP_K:
        pool = top_k_labels(traces, cfg.k)
    else:
        pool = _alphabet(traces)
    noisy: list[SKTrace] = []
    truth: list[tuple[str, ...]] = []
    for index, trace in enumerate(traces):
        rng = random.Random(derive_seed(cfg.seed, "trace", index))
        labels = trace.deterministic_labels()
        n_events = len(labels)
        n_uncertain = math.ceil(cfg.t_p * n_events)
        chosen = set(rng.sample(range(n_events), n_uncertain))
        events: list[SKEvent] = []
        for i, event in enumerate(trace.events):
            true_label = labels[i]
            if i in chosen:
                candidates = [l for l in pool if l != true_label]
                if len(candidates) < cfg.n_t - 1:
                    raise ValidationError(
                        f"label pool too small: need {cfg.n_t - 1} alternatives for "
                        f"{true_label!r}, pool offers {len(candidates)}"
                    )
                alternatives = rng.sample(candidates, cfg.n_t - 1)
                dist = assign_probabilities(true_label, alternatives, cfg.p_a, rng)
            else:
                dist = {true_label: 1.0}
            events.append(SKEvent(event.event_id, dist, event.timestamp))
        noisy.append(SKTrace(case_id=trace.case_id, events=tuple(events)))
        truth.append(labels)
    return NoiseInjection(traces=tuple(noisy), truth=tuple(truth))


def accuracy(recovered: Sequence[Sequence[str]], truth: Sequence[Sequence[str]]) -> float:
    """Fraction of correctly recovered events, micro-averaged over all
    traces.  Length mismatches are reported, never silently truncated."""
    if len(recovered) != len(truth):
        raise ValidationError(
            f"recovered {len(recovered)} traces but truth has {len(truth)}"
        )
    correct = 0
    total = 0
    for i, (rec, ref) in enumerate(zip(recovered, truth)):
        if len(rec) != len(ref):
            raise ValidationError(
                f"trace {i}: recovered {len(rec)} events but truth has {len(ref)}"
            )
        total += len(ref)
        correct += sum(1 for a, b in zip(rec, ref) if a == b)
    if not total:
        raise ValidationError("cannot score an empty log")
    return correct / total


@dataclass(frozen=True)
class SweepRow:
    p_a: float
    method: str
    cost_function: str
    accuracy: float
    traces: int
    events: int
    failures: int


@dataclass(frozen=True)
class SweepReport:
    rows: tuple[SweepRow, ...]
    metadata: dict = field(default_factory=dict)


def parse_methods(tokens: Iterable[str], epsilon: float = 1e-4) -> list[tuple[str, Optional[CostFunction]]]:
    """Turn method tokens (``argmax``, ``exp``, ``lin``, ``log:2.4``, ...)
    into (method, cost function) pairs."""
    parsed: list[tuple[str, Optional[CostFunction]]] = []
    for token in tokens:
        token = token.strip()
        if not token:
            continue
        if token.lower() == ARGMAX_METHOD:
            parsed.append((ARGMAX_METHOD, None))
        else:
            parsed.append(("sktr", CostFunction.parse(token, epsilon=epsilon)))
    if not parsed:
        raise ValidationError("no recovery methods given")
    return parsed


def recover_trace(
    model: SystemNet,
    trace: SKTrace,
    cost: CostFunction,
    limits: SearchLimits | None = None,
) -> tuple[str, ...]:
    """Recover one SK trace against a model: align and project."""
    product = build_sync_product(model, build_trace_net(trace))
    result = search_optimal_alignment(product, cost, limits, detect_ties=False)
    return result.recovered


def run_pa_sweep(
    model: SystemNet,
    traces: Sequence[SKTrace],
    cfg: NoiseConfig,
    methods: Sequence[str],
    grid: Sequence[float],
    limits: SearchLimits | None = None,
    jobs: int = 1,
    metadata: Optional[dict] = None,
) -> SweepReport:
    """Regenerate noise at every grid point and score each method.

    Noise is rebuilt per point with a sub-seed derived from the base seed
    and the point, so runs are reproducible and points are independent.
    Searches that hit a resource cap or an unreachable final marking are
    counted as failures and excluded from the score rather than aborting
    the sweep.
    """
    if not traces:
        raise ValidationError("sweep needs a nonempty log")
    grid = [float(p) for p in grid]
    if any(not 0.0 <= p <= 1.0 for p in grid):
        raise ValidationError("grid points must lie in [0, 1]")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValidationError("grid points must be strictly increasing")
    parsed = parse_methods(methods)
    limits = limits or SearchLimits()

    rows: list[SweepRow] = []
    for p_a in grid:
        point_cfg = replace(cfg, p_a=p_a, seed=derive_seed(cfg.seed, "pa", f"{p_a:.6f}"))
        injection = inject_noise(traces, point_cfg)
        for method, cost in parsed:
            recovered: list[tuple[str, ...]] = []
            kept_truth: list[tuple[str, ...]] = []
            failures = 0
            if method == ARGMAX_METHOD:
                for trace, truth in zip(injection.traces, injection.truth):
                    recovered.append(argmax_recover(trace))
                    kept_truth.append(truth)
            else:
                outcomes = _recover_many(model, injection.traces, cost, limits, jobs)
                for outcome, truth in zip(outcomes, injection.truth):
                    if outcome is None:
                        failures += 1
                        continue
                    recovered.append(outcome)
                    kept_truth.append(truth)
            score = accuracy(recovered, kept_truth) if recovered else 0.0
            rows.append(SweepRow(
                p_a=p_a,
                method=method,
                cost_function=cost.describe() if cost else "",
                accuracy=score,
                traces=len(recovered),
                events=sum(len(t) for t in kept_truth),
                failures=failures,
            ))

    meta = {
        "n_t": cfg.n_t,
        "t_p": cfg.t_p,
        "pool": cfg.pool,
        "k": cfg.k,
        "seed": cfg.seed,
        "model": model.name,
        "methods": list(methods),
        "grid": grid,
        "input_traces": len(traces),
        "input_events": sum(len(t) for t in traces),
    }
    if metadata:
        meta.update(metadata)
    return SweepReport(rows=tuple(rows), metadata=meta)


def _recover_one(args) -> Optional[tuple[str, ...]]:
    model, trace, cost, limits = args
    try:
        return recover_trace(model, trace, cost, limits)
    except (InfeasibleAlignmentError, SearchLimitError):
        return None


def _recover_many(
    model: SystemNet,
    traces: Sequence[SKTrace],
    cost: CostFunction,
    limits: SearchLimits,
    jobs: int,
) -> list[Optional[tuple[str, ...]]]:
    tasks = [(model, trace, cost, limits) for trace in traces]
    if jobs <= 1 or len(tasks) < 2:
        return [_recover_one(task) for task in tasks]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_recover_one, tasks, chunksize=16))


def subsample_for_discovery(
    traces: Sequence[SKTrace], count: int, seed: int = 0
) -> list[SKTrace]:
    """Uniformly subsample ``count`` traces to hand to an external process
    discovery tool (the sample size is recorded as provenance only)."""
    if count < 1 or count > len(traces):
        raise ValidationError(f"cannot sample {count} of {len(traces)} traces")
    rng = random.Random(derive_seed(seed, "subsample", count))
    picked = sorted(rng.sample(range(len(traces)), count))
    return [traces[i] for i in picked]


def truth_csv(injection: NoiseInjection) -> str:
    """Ground-truth labels for an injection as ``case_id,event_id,label``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["case_id", "event_id", "label"])
    for trace, labels in zip(injection.traces, injection.truth):
        for event, label in zip(trace.events, labels):
            writer.writerow([trace.case_id, event.event_id, label])
    return buf.getvalue()
