"""Command line interface.

Exit codes: 0 success, 1 usage error, 2 invalid query, 3 no related pairs.
"""

from __future__ import annotations

import csv
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .evaluation import CSV_HEADER, METHODS, pick_pair_of_interest, run_evaluation, run_method
from .explainer import ExplainError, ExplainerConfig, prepare
from .logmodel import LogError, load_log, save_log
from .metrics import score
from .pairs import EncodedLog, PairFeatureCatalog
from .pxql import PXQLError, parse_query
from .synthlog import WorkloadSpec, generate_job_log, generate_task_log

SCHEMA_VERSION = 1


def _read_query_text(value: str) -> str:
    p = Path(value)
    if p.exists():
        return p.read_text(encoding="utf-8")
    if "OBSERVED" in value.upper():
        return value
    raise click.BadParameter(f"{value!r} is neither a file nor PXQL text", param_hint="--query")


def _load(schema: str, log: str):
    try:
        return load_log(schema, log)
    except LogError as exc:
        raise click.ClickException(str(exc)) from None


def _bind_query(text: str, log, pair, seed: int, threshold: float):
    try:
        q = parse_query(text, PairFeatureCatalog.for_log(log))
    except PXQLError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    if pair:
        q = q.bind(*pair)
    elif not q.bound:
        try:
            q = pick_pair_of_interest(log, q, np.random.default_rng(seed), threshold)
        except ExplainError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.exit_code)
    return q


def _fail(exc: ExplainError):
    click.echo(f"error: {exc}", err=True)
    sys.exit(exc.exit_code)


def _fmt(v):
    return "undefined" if v is None else f"{v:.4f}"


common_options = [
    click.option("--log", "log_path", required=True, type=click.Path(exists=True, dir_okay=False)),
    click.option("--schema", "schema_path", required=True, type=click.Path(exists=True, dir_okay=False)),
    click.option("--query", "query", required=True, help="PXQL file, or PXQL text."),
    click.option("--pair", nargs=2, default=None, help="Ids of the pair of interest (overrides the query)."),
    click.option("--precision-weight", default=0.8, show_default=True, type=float),
    click.option("--sample-size", default=2000, show_default=True, type=int),
    click.option("--feature-level", default=3, show_default=True, type=click.IntRange(1, 3)),
    click.option("--relevance-threshold", default=None, type=click.FloatRange(0, 1)),
    click.option("--similarity-threshold", default=0.10, show_default=True, type=float),
    click.option("--despite-width", default=0, show_default=True, type=int,
                 help="Atoms to add to the despite clause before explaining."),
    click.option("--seed", default=0, show_default=True, type=int),
]


def with_common(f):
    for opt in reversed(common_options):
        f = opt(f)
    return f


@click.group()
@click.version_option(__version__)
def cli():
    """Explain why a pair of jobs or tasks performed differently than expected."""


@cli.command("explain")
@with_common
@click.option("--method", type=click.Choice(METHODS), default="perfxplain", show_default=True)
@click.option("--width", default=3, show_default=True, type=click.IntRange(0))
@click.option("--test-log", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Held-out log (same schema) on which to also report metrics.")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text", show_default=True)
def cmd_explain(log_path, schema_path, query, pair, precision_weight, sample_size, feature_level,
                relevance_threshold, similarity_threshold, despite_width, seed, method, width,
                test_log, fmt):
    """Explain one PXQL query against a log."""
    log = _load(schema_path, log_path)
    text = _read_query_text(query)
    cfg = ExplainerConfig(width=width, precision_weight=precision_weight, sample_size=sample_size,
                          similarity_threshold=similarity_threshold, feature_level=feature_level,
                          relevance_threshold=relevance_threshold, rng_seed=seed)
    q = _bind_query(text, log, pair, seed, similarity_threshold)
    t0 = time.perf_counter()
    try:
        e = run_method(method, q, log, cfg, despite_width)
    except ExplainError as exc:
        _fail(exc)
    elapsed = time.perf_counter() - t0
    test_scores = None
    if test_log:
        test = _load(schema_path, test_log)
        test_scores = score(e.des_prime, e.bec, q, EncodedLog(test, similarity_threshold))
    report = {
        "schema_version": SCHEMA_VERSION,
        "method": method,
        "query": str(q),
        "explanation": e.to_dict(),
        "training": e.scores.to_dict(),
        "test": test_scores.to_dict() if test_scores else None,
        "timings": {"explain_seconds": elapsed},
        "seed": seed,
    }
    if fmt == "json":
        click.echo(json.dumps(report, indent=2))
        return
    click.echo(e.text())
    for label, s in (("training", e.scores), ("test", test_scores)):
        if s is None:
            continue
        click.echo(f"{label}: relevance={_fmt(s.relevance.value)} precision={_fmt(s.precision.value)}"
                   f" generality={_fmt(s.generality.value)}")


@cli.command("eval")
@with_common
@click.option("--methods", default=",".join(METHODS), show_default=True)
@click.option("--widths", default="0,1,2,3", show_default=True)
@click.option("--repeats", default=10, show_default=True, type=click.IntRange(1))
@click.option("--train-fraction", "train_fractions", multiple=True, type=float, default=(0.5,),
              show_default=True, help="Repeatable, for log-size sweeps.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None)
@click.option("--jobs", default=1, show_default=True, type=click.IntRange(1))
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text", show_default=True)
def cmd_eval(log_path, schema_path, query, pair, precision_weight, sample_size, feature_level,
             relevance_threshold, similarity_threshold, despite_width, seed, methods, widths,
             repeats, train_fractions, csv_path, jobs, fmt):
    """Repeated train/test evaluation of explanation precision."""
    log = _load(schema_path, log_path)
    method_list = [m.strip() for m in methods.split(",") if m.strip()]
    bad = [m for m in method_list if m not in METHODS]
    if bad:
        raise click.BadParameter(f"unknown method(s) {bad}", param_hint="--methods")
    try:
        width_list = [int(w) for w in widths.split(",")]
    except ValueError:
        raise click.BadParameter("widths must be integers", param_hint="--widths") from None
    for f in train_fractions:
        if not 0 < f < 1:
            raise click.BadParameter("must lie strictly between 0 and 1", param_hint="--train-fraction")
    cfg = ExplainerConfig(precision_weight=precision_weight, sample_size=sample_size,
                          similarity_threshold=similarity_threshold, feature_level=feature_level,
                          relevance_threshold=relevance_threshold, rng_seed=seed)
    q = _bind_query(_read_query_text(query), log, pair, seed, similarity_threshold)
    try:
        prepare(q, log, cfg)
        result = run_evaluation(q, log, method_list, width_list, cfg, repeats,
                                tuple(train_fractions), despite_width, jobs)
    except ExplainError as exc:
        _fail(exc)
    sweep = len(train_fractions) > 1
    if csv_path:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(CSV_HEADER) + (["train_fraction"] if sweep else []))
            for row in result.rows:
                w.writerow(row.csv_cells(sweep))
    summary = result.summary()
    if fmt == "json":
        click.echo(json.dumps({
            "schema_version": SCHEMA_VERSION,
            "query": str(q),
            "seed": seed,
            "repeats": repeats,
            "summary": [s.__dict__ for s in summary],
        }, indent=2))
        return
    click.echo(f"{'method':<12} {'width':>5} {'fraction':>8} {'precision':>18}")
    for s in summary:
        cell = "undefined" if s.mean is None else f"{s.mean:.4f} ± {s.sd:.4f}"
        click.echo(f"{s.method:<12} {s.width:>5} {s.train_fraction:>8.2f} {cell:>18}")


@cli.command("synth")
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Workload spec JSON; defaults to the standard parameter grid.")
@click.option("--out-log", required=True, type=click.Path(dir_okay=False))
@click.option("--out-schema", required=True, type=click.Path(dir_okay=False))
@click.option("--task-level", is_flag=True, help="Write map-task records instead of jobs.")
@click.option("--seed", default=None, type=int, help="Overrides the workload spec's rng_seed.")
@click.option("--noise", default=None, type=float, help="Overrides the workload spec's noise.")
def cmd_synth(spec_path, out_log, out_schema, task_level, seed, noise):
    """Write a synthetic log drawn from the planted causal model."""
    try:
        spec = WorkloadSpec.from_file(spec_path) if spec_path else WorkloadSpec()
        if seed is not None:
            spec.rng_seed = seed
        if noise is not None:
            spec.noise = noise
        spec.__post_init__()
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"invalid spec: {exc}") from None
    log = generate_job_log(spec)
    if task_level:
        log = generate_task_log(spec, log)
    save_log(log, out_schema, out_log)
    click.echo(f"wrote {len(log)} {log.level} records to {out_log}")


def main(argv=None):
    try:
        rv = cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        sys.exit(1)
    except click.UsageError as exc:
        exc.show()
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    sys.exit(rv if isinstance(rv, int) else 0)


if __name__ == "__main__":
    main()
