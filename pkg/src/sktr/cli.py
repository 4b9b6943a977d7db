"""Command-line surface: recover traces, emit alignments, inject noise,
and drive accuracy sweeps.

Exit codes: 0 success, 2 invalid input, 3 infeasible alignment,
4 resource cap exceeded.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import click

from . import __version__
from .alignment import (
    Alignment,
    CostFunction,
    SearchLimits,
    alignment_to_dict,
    search_optimal_alignment,
)
from .errors import (
    InfeasibleAlignmentError,
    SearchLimitError,
    SktrError,
    ValidationError,
)
from .nets import SystemNet
from .noise_lab import (
    NoiseConfig,
    inject_noise,
    run_pa_sweep,
    subsample_for_discovery,
    truth_csv,
)
from .pnml import load_model
from .report import write_sweep_report
from .sk_log import (
    SKTrace,
    argmax_recover,
    build_trace_net,
    deterministic_trace,
    parse_sk_log,
    parse_xes,
    write_sk_csv,
    write_xes,
)
from .sync_product import build_sync_product

EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_RESOURCE = 4


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_log(path: str, fmt: str) -> list[SKTrace]:
    text = Path(path).read_text(encoding="utf-8")
    if fmt == "auto":
        suffix = Path(path).suffix.lower()
        if suffix == ".xes":
            fmt = "xes"
        elif suffix == ".json":
            fmt = "json"
        else:
            fmt = "csv"
    if fmt == "xes":
        return parse_xes(text)
    return parse_sk_log(text, fmt=fmt)


def _cost_from_flags(cost: str, c: str, epsilon: float) -> CostFunction:
    token = cost
    if cost == "log":
        token = f"log:{c}"
    return CostFunction.parse(token, epsilon=epsilon)


def _guard(func):
    """Map package errors onto the documented exit codes."""

    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ValidationError as exc:
            _fail(EXIT_VALIDATION, str(exc))
        except InfeasibleAlignmentError as exc:
            _fail(EXIT_INFEASIBLE, str(exc))
        except SearchLimitError as exc:
            _fail(EXIT_RESOURCE, str(exc))
        except (OSError, SktrError) as exc:
            _fail(EXIT_VALIDATION, str(exc))

    wrapper.__name__ = func.__name__
    wrapper.__doc__ = func.__doc__
    return wrapper


@click.group()
@click.version_option(version=__version__, prog_name="sktr")
def main():
    """Recover the most likely true traces from stochastically known logs
    by aligning them against a reference Petri net."""


log_format_option = click.option(
    "--format", "fmt", type=click.Choice(["auto", "csv", "json", "xes"]), default="auto",
    help="Input log format; auto picks by file suffix.",
)
cost_options = [
    click.option("--cost", type=click.Choice(["exp", "lin", "log"]), default="exp",
                 show_default=True, help="Cost function for synchronous moves."),
    click.option("--c", "c", default="2.4", show_default=True,
                 help="Normalization constant for the log cost (number or 'auto')."),
    click.option("--epsilon", type=float, default=1e-4, show_default=True,
                 help="Log-move cost perturbation."),
]
limit_options = [
    click.option("--max-states", type=int, default=200_000, show_default=True,
                 help="Cap on expanded markings per trace."),
    click.option("--timeout", type=float, default=None,
                 help="Per-trace time cap in seconds."),
    click.option("--token-cap", type=int, default=8, show_default=True,
                 help="Per-place token bound during search."),
]


def _apply(options):
    def deco(func):
        for opt in reversed(options):
            func = opt(func)
        return func
    return deco


def _recover_one_trace(args) -> tuple[dict, Optional[Alignment]]:
    model, trace, method, cost, limits, detect_ties = args
    record: dict = {"case_id": trace.case_id, "events": len(trace)}
    alignment: Optional[Alignment] = None
    if method == "argmax":
        record.update(status="ok", recovered=list(argmax_recover(trace)))
    else:
        try:
            product = build_sync_product(model, build_trace_net(trace))
            alignment = search_optimal_alignment(
                product, cost, limits, detect_ties=detect_ties
            )
            record.update(
                status="ok",
                recovered=list(alignment.recovered),
                cost=alignment.total_cost,
                is_tie=alignment.is_tie,
                states_expanded=alignment.states_expanded,
                wall_seconds=alignment.elapsed_seconds,
            )
        except InfeasibleAlignmentError as exc:
            record.update(status="infeasible", error=str(exc))
        except SearchLimitError as exc:
            record.update(status="resource", error=str(exc),
                          states_expanded=exc.states_expanded)
    return record, alignment


def _recover_all(
    model: SystemNet,
    traces: Sequence[SKTrace],
    method: str,
    cost: CostFunction,
    limits: SearchLimits,
    detect_ties: bool,
    jobs: int = 1,
) -> tuple[list[dict], list[Optional[Alignment]]]:
    tasks = [(model, trace, method, cost, limits, detect_ties) for trace in traces]
    if jobs <= 1 or len(tasks) < 2:
        results = [_recover_one_trace(task) for task in tasks]
    else:
        from concurrent.futures import ProcessPoolExecutor

        # input order is preserved regardless of completion order
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_recover_one_trace, tasks, chunksize=8))
    records = [record for record, _ in results]
    alignments = [alignment for _, alignment in results]
    return records, alignments


def _exit_code_for(records: Sequence[dict]) -> int:
    statuses = {r["status"] for r in records}
    if "resource" in statuses:
        return EXIT_RESOURCE
    if "infeasible" in statuses:
        return EXIT_INFEASIBLE
    return 0


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True),
              help="Reference process model (PNML).")
@click.option("--log", "log_path", required=True, type=click.Path(exists=True),
              help="SK log (SK-CSV, SK-JSON, or deterministic XES).")
@log_format_option
@click.option("--method", type=click.Choice(["sktr", "argmax"]), default="sktr",
              show_default=True, help="Recovery method.")
@_apply(cost_options)
@_apply(limit_options)
@click.option("--emit", type=click.Choice(["csv", "xes"]), default="csv", show_default=True,
              help="Format of the recovered deterministic log.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Parallel workers for per-trace recovery.")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Output directory; omit to print to stdout.")
@_guard
def recover(model_path, log_path, fmt, method, cost, c, epsilon,
            max_states, timeout, token_cap, emit, jobs, out_dir):
    """Recover the most likely true trace for every trace in a log."""
    model = load_model(model_path)
    traces = _load_log(log_path, fmt)
    if not traces:
        raise ValidationError("empty log")
    cost_fn = _cost_from_flags(cost, c, epsilon)
    limits = SearchLimits(max_states=max_states, max_seconds=timeout, token_cap=token_cap)
    records, _ = _recover_all(model, traces, method, cost_fn, limits,
                              detect_ties=True, jobs=jobs)

    config = {
        "command": "recover", "model": str(model_path), "log": str(log_path),
        "method": method, "cost": cost_fn.describe(), "epsilon": epsilon,
        "max_states": max_states, "timeout": timeout, "token_cap": token_cap,
        "jobs": jobs,
    }
    recovered_traces = [
        deterministic_trace(r["case_id"], r["recovered"], template=t)
        for r, t in zip(records, traces)
        if r["status"] == "ok"
    ]
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if emit == "xes":
            (out / "recovered.xes").write_text(write_xes(recovered_traces), encoding="utf-8")
        else:
            (out / "recovered.csv").write_text(write_sk_csv(recovered_traces), encoding="utf-8")
        payload = {"config": config, "traces": records}
        (out / "recover.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        click.echo(f"recovered {len(recovered_traces)}/{len(traces)} traces into {out}")
    else:
        for record in records:
            if record["status"] != "ok":
                click.echo(f"{record['case_id']}\t<{record['status']}>")
            elif len(records) == 1:
                click.echo(" ".join(record["recovered"]))
            else:
                click.echo(f"{record['case_id']}\t" + " ".join(record["recovered"]))
    code = _exit_code_for(records)
    if code:
        sys.exit(code)


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--log", "log_path", required=True, type=click.Path(exists=True))
@log_format_option
@_apply(cost_options)
@_apply(limit_options)
@click.option("--emit-alignment", is_flag=True, default=True,
              help="Emit full move-level JSON (default on).")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Output file; omit to print to stdout.")
@_guard
def align(model_path, log_path, fmt, cost, c, epsilon,
          max_states, timeout, token_cap, emit_alignment, out_path):
    """Compute optimal alignments and emit them move by move."""
    model = load_model(model_path)
    traces = _load_log(log_path, fmt)
    if not traces:
        raise ValidationError("empty log")
    cost_fn = _cost_from_flags(cost, c, epsilon)
    limits = SearchLimits(max_states=max_states, max_seconds=timeout, token_cap=token_cap)
    records, alignments = _recover_all(model, traces, "sktr", cost_fn, limits, detect_ties=True)
    payload = []
    for trace, record, alignment in zip(traces, records, alignments):
        entry = {"case_id": trace.case_id, "status": record["status"]}
        if alignment is not None and emit_alignment:
            product = build_sync_product(model, build_trace_net(trace))
            entry["alignment"] = alignment_to_dict(alignment, cost_fn, product)
        elif alignment is not None:
            entry["cost"] = alignment.total_cost
            entry["recovered"] = list(alignment.recovered)
        payload.append(entry)
    config = {
        "command": "align", "model": str(model_path), "log": str(log_path),
        "cost": cost_fn.describe(), "epsilon": epsilon,
        "max_states": max_states, "timeout": timeout, "token_cap": token_cap,
    }
    text = json.dumps({"config": config, "alignments": payload}, indent=2) + "\n"
    if out_path:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        Path(out_path).write_text(text, encoding="utf-8")
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text, nl=False)
    code = _exit_code_for(records)
    if code:
        sys.exit(code)


def _noise_options(func):
    options = [
        click.option("--nt", "n_t", type=int, default=2, show_default=True,
                     help="Alternatives per uncertain event."),
        click.option("--tp", "t_p", type=float, default=1.0, show_default=True,
                     help="Fraction of events made uncertain."),
        click.option("--pool", type=click.Choice(["all", "topk"]), default="all",
                     show_default=True, help="Pool the alternative labels come from."),
        click.option("--k", type=int, default=None,
                     help="Pool size for --pool topk."),
        click.option("--seed", type=int, default=0, show_default=True,
                     help="Base seed; all randomness derives from it."),
    ]
    return _apply(options)(func)


@main.command()
@click.option("--log", "log_path", required=True, type=click.Path(exists=True),
              help="Deterministic log (XES or SK-CSV with point distributions).")
@log_format_option
@_noise_options
@click.option("--pa", "p_a", type=float, required=True,
              help="Probability that the true label keeps the highest mass.")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Output directory for the SK log and the ground truth.")
@_guard
def inject(log_path, fmt, n_t, t_p, pool, k, seed, p_a, out_dir):
    """Inject controlled noise into a deterministic log."""
    traces = _load_log(log_path, fmt)
    if not traces:
        raise ValidationError("empty log")
    cfg = NoiseConfig(n_t=n_t, t_p=t_p, p_a=p_a, pool=pool, k=k, seed=seed)
    injection = inject_noise(traces, cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "injected.csv").write_text(write_sk_csv(injection.traces), encoding="utf-8")
    (out / "truth.csv").write_text(truth_csv(injection), encoding="utf-8")
    config = {
        "command": "inject", "log": str(log_path), "n_t": n_t, "t_p": t_p,
        "p_a": p_a, "pool": pool, "k": k, "seed": seed,
    }
    (out / "inject.json").write_text(json.dumps({"config": config}, indent=2) + "\n",
                                     encoding="utf-8")
    click.echo(f"wrote {out / 'injected.csv'} and {out / 'truth.csv'}")


def _parse_grid(expr: str) -> list[float]:
    expr = expr.strip()
    if ":" in expr:
        parts = expr.split(":")
        if len(parts) != 3:
            raise ValidationError(f"bad grid {expr!r}: expected start:stop:step")
        try:
            start, stop, step = (float(p) for p in parts)
        except ValueError as exc:
            raise ValidationError(f"bad grid {expr!r}") from exc
        if step <= 0 or stop < start:
            raise ValidationError(f"bad grid {expr!r}")
        count = int(round((stop - start) / step))
        points = [round(start + i * step, 10) for i in range(count + 1)]
        return [p for p in points if p <= stop + 1e-12]
    try:
        return [float(p) for p in expr.split(",") if p.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad grid {expr!r}") from exc


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--log", "log_path", required=True, type=click.Path(exists=True),
              help="Deterministic log providing the ground truth.")
@log_format_option
@_noise_options
@click.option("--grid", default="0:1:0.05", show_default=True,
              help="Noise grid as start:stop:step or a comma list.")
@click.option("--methods", default="exp,argmax", show_default=True,
              help="Comma-separated methods: exp, lin, log, log:<c>, log:auto, argmax.")
@click.option("--epsilon", type=float, default=1e-4, show_default=True)
@click.option("--ts", type=int, default=None,
              help="Trace count used for external model discovery (provenance only).")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Parallel workers for per-trace recovery.")
@_apply(limit_options)
@click.option("--no-figure", is_flag=True, default=False, help="Skip the rendered figure.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@_guard
def sweep(model_path, log_path, fmt, n_t, t_p, pool, k, seed, grid, methods, epsilon,
          ts, jobs, max_states, timeout, token_cap, no_figure, out_dir):
    """Sweep the noise parameter and score every method at each point."""
    model = load_model(model_path)
    traces = _load_log(log_path, fmt)
    cfg = NoiseConfig(n_t=n_t, t_p=t_p, p_a=0.0, pool=pool, k=k, seed=seed)
    grid_points = _parse_grid(grid)
    method_tokens = [m for m in methods.split(",") if m.strip()]
    limits = SearchLimits(max_states=max_states, max_seconds=timeout, token_cap=token_cap)
    metadata = {
        "command": "sweep", "model_path": str(model_path), "log": str(log_path),
        "epsilon": epsilon, "jobs": jobs, "ts": ts,
        "max_states": max_states, "timeout": timeout, "token_cap": token_cap,
    }
    report = run_pa_sweep(
        model, traces, cfg, method_tokens, grid_points,
        limits=limits, jobs=jobs, metadata=metadata,
    )
    paths = write_sweep_report(report, out_dir, figure=not no_figure)
    for kind, path in sorted(paths.items()):
        click.echo(f"wrote {kind}: {path}")


@main.command()
@click.option("--log", "log_path", required=True, type=click.Path(exists=True))
@log_format_option
@click.option("--ts", type=int, required=True, help="Number of traces to sample.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Output XES file for the external discovery tool.")
@_guard
def subsample(log_path, fmt, ts, seed, out_path):
    """Sample traces for external process discovery and export them as XES."""
    traces = _load_log(log_path, fmt)
    sample = subsample_for_discovery(traces, ts, seed=seed)
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    Path(out_path).write_text(write_xes(sample), encoding="utf-8")
    click.echo(f"wrote {len(sample)} traces to {out_path}")


if __name__ == "__main__":
    main()
