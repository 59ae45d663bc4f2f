"""Command-line entry point.

Subcommands: ``build-corpus``, ``track``, ``evaluate``, ``sweep-alpha``,
``schema-lint``. Every file-writing run first emits a ``<out>.manifest.json``
recording the resolved configuration, seed, input digests, tool version and
timestamp; outputs are written to a temp file and atomically renamed, so an
interrupted run never leaves an unmanifested artifact.

Exit codes: 0 ok, 2 config error, 3 data error, 4 backend error.
All randomness flows from ``--seed``; subcommands derive sub-seeds by hashing
the seed with a purpose string.
"""

from __future__ import annotations

import csv
import functools
import hashlib
import io
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import click

from . import __version__
from .answer_backend import HttpBackend, NoisyGateBackend, oracle_from_gold
from .corpus_io import (
    DialogueFormat,
    ExtractiveFormat,
    MultiChoiceFormat,
    atomic_write_text,
    load_dialogue_dataset,
    load_extractive_dataset,
    load_multichoice_dataset,
    load_schema,
    read_qa_jsonl,
    write_qa_jsonl,
)
from .dst_tracker import (
    AliasTable,
    read_predictions_jsonl,
    track_corpus,
    write_diagnostics_jsonl,
    write_predictions_jsonl,
)
from .errors import BackendError, ConfigError, DataError, EvaluationError
from .evaluation import evaluate_corpus, per_slot_accuracy
from .negative_synthesis import SynthesisConfig, synthesize_stream
from .prompting import DEFAULT_CONTEXT_BUDGET
from .records import NONE_SENTINEL
from .seeding import derive_seed

BACKEND_URL_ENV = "TRANSFERQA_BACKEND_URL"

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_BACKEND = 4

_QA_FORMATS = {
    "squad2": (load_extractive_dataset, ExtractiveFormat.SQUAD2_JSON),
    "mrqa": (load_extractive_dataset, ExtractiveFormat.MRQA_JSONL),
    "race": (load_multichoice_dataset, MultiChoiceFormat.RACE_JSON),
    "dream": (load_multichoice_dataset, MultiChoiceFormat.DREAM_JSON),
    "qa-jsonl": (None, None),
}

_CONTEXT_SETTINGS = {"max_content_width": 80, "terminal_width": 80}


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def handle_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ConfigError as exc:
            _fail(EXIT_CONFIG, str(exc))
        except (DataError, EvaluationError) as exc:
            _fail(EXIT_DATA, str(exc))
        except BackendError as exc:
            _fail(EXIT_BACKEND, str(exc))
        except OSError as exc:
            _fail(EXIT_CONFIG, str(exc))

    return wrapper


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def write_manifest(out_path: Path, command: str, config: dict, seed: int, inputs: list[Path]) -> Path:
    manifest = {
        "command": command,
        "config": {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(config.items())},
        "seed": seed,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "tool_version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    manifest_path = Path(f"{out_path}.manifest.json")
    atomic_write_text(manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def _require_file(path: str | None, what: str) -> Path:
    if not path:
        raise ConfigError(f"missing {what}")
    resolved = Path(path)
    if not resolved.is_file():
        raise ConfigError(f"{what} not found: {path}")
    return resolved


def _load_qa_inputs(inputs: tuple[str, ...]):
    sources = []
    per_file = []
    paths = []
    used_ids: set[str] = set()
    renamed = 0
    for spec_str in inputs:
        fmt, _, raw_path = spec_str.partition(":")
        if fmt not in _QA_FORMATS or not raw_path:
            raise ConfigError(
                f"--input must look like FORMAT:PATH with FORMAT one of "
                f"{sorted(_QA_FORMATS)}, got {spec_str!r}"
            )
        path = _require_file(raw_path, "input dataset")
        paths.append(path)
        loader, loader_format = _QA_FORMATS[fmt]
        if fmt == "qa-jsonl":
            result = read_qa_jsonl(path)
        else:
            result = loader(path, loader_format)
        for example in result.examples:
            # ids are unique per file; across files, disambiguate collisions
            # deterministically so the merged corpus keeps the uniqueness invariant
            if example.id in used_ids:
                suffix = 2
                while f"{example.id}#{suffix}" in used_ids:
                    suffix += 1
                example.id = f"{example.id}#{suffix}"
                renamed += 1
            used_ids.add(example.id)
            sources.append(example)
        per_file.append((path, fmt, len(result.examples), dict(result.dropped)))
    if renamed:
        click.echo(f"disambiguated {renamed} colliding ids across inputs", err=True)
    return sources, per_file, paths


def _resolve_backend(backend_flag: str | None, dialogues, schema, batch_size: int,
                     max_inflight: int, context_budget: int = DEFAULT_CONTEXT_BUDGET):
    value = backend_flag or os.environ.get(BACKEND_URL_ENV)
    if not value:
        raise ConfigError(f"no backend given (use --backend or {BACKEND_URL_ENV})")
    if value == "oracle":
        return oracle_from_gold(dialogues, schema, context_budget=context_budget)
    if value.startswith(("http://", "https://")):
        return HttpBackend(value, batch_size=batch_size, max_inflight=max_inflight)
    raise ConfigError(f"backend must be 'oracle' or an http(s) URL, got {value!r}")


def _load_gold(dialogues_path: Path, schema, dialogue_format: str):
    return load_dialogue_dataset(dialogues_path, schema, DialogueFormat(dialogue_format))


@click.group(context_settings=_CONTEXT_SETTINGS)
@click.version_option(__version__, prog_name="transferqa")
def main():
    """QA-to-DST toolkit: corpus building, tracking, and evaluation."""


@main.command("build-corpus")
@click.option("--input", "inputs", multiple=True, metavar="FORMAT:PATH",
              help="Dataset to ingest; FORMAT is squad2|mrqa|race|dream|qa-jsonl. Repeatable.")
@click.option("--out", required=True, type=click.Path(), help="Unified QA JSONL output path.")
@click.option("--alpha", default=0.0, show_default=True,
              help="Probability of replacing an example with an unanswerable variant.")
@click.option("--nqs-fraction", default=0.95, show_default=True,
              help="Share of unanswerable variants built by negative question sampling.")
@click.option("--seed", default=13, show_default=True, help="Master RNG seed.")
@click.option("--nqs-multichoice", type=click.Choice(["on", "off"]), default="off",
              show_default=True, help="Also synthesize negatives from multi-choice sources.")
@handle_errors
def cmd_build_corpus(inputs, out, alpha, nqs_fraction, seed, nqs_multichoice):
    """Concatenate QA datasets and mix in synthesized unanswerable examples."""
    if not inputs:
        raise ConfigError("at least one --input is required")
    sources, per_file, paths = _load_qa_inputs(inputs)
    if not sources:
        raise DataError("no examples survived loading")
    config = SynthesisConfig(
        alpha=alpha,
        nqs_fraction=nqs_fraction,
        seed=derive_seed(seed, "build-corpus"),
        include_multichoice=nqs_multichoice == "on",
    )
    out_path = Path(out)
    write_manifest(
        out_path,
        "build-corpus",
        {
            "inputs": list(inputs),
            "out": out,
            "alpha": alpha,
            "nqs_fraction": nqs_fraction,
            "nqs_multichoice": nqs_multichoice,
        },
        seed,
        paths,
    )
    stream = list(synthesize_stream(sources, config))
    written = write_qa_jsonl(out_path, stream)
    unanswerable = sum(1 for ex in stream if ex.answer == NONE_SENTINEL)
    for path, fmt, count, dropped in per_file:
        note = f" dropped={dropped}" if dropped else ""
        click.echo(f"{path} [{fmt}]: {count} examples{note}", err=True)
    click.echo(
        f"wrote {written} examples to {out_path} "
        f"({unanswerable} unanswerable, {unanswerable / written:.3f})",
        err=True,
    )


@main.command("track")
@click.option("--schema", "schema_path", required=True, type=click.Path(), help="Schema JSON.")
@click.option("--dialogues", "dialogues_path", required=True, type=click.Path(),
              help="Dialogue dataset to track.")
@click.option("--dialogue-format", type=click.Choice(["multiwoz", "sgd", "jsonl"]),
              default="jsonl", show_default=True)
@click.option("--backend", "backend_flag", default=None, metavar="oracle|URL",
              help=f"Answer backend; falls back to ${BACKEND_URL_ENV}.")
@click.option("--out", required=True, type=click.Path(), help="Predictions JSONL output path.")
@click.option("--diagnostics", "diagnostics_path", type=click.Path(), default=None,
              help="Optional diagnostics JSONL (pass-1 raw values and gates).")
@click.option("--workers", default=None, type=int, help="Dialogue-level worker pool size.")
@click.option("--batch-size", default=32, show_default=True, help="Backend batch size.")
@click.option("--max-inflight", default=4, show_default=True,
              help="Concurrent batches for the remote client.")
@click.option("--context-budget", default=DEFAULT_CONTEXT_BUDGET, show_default=True,
              help="Character budget for slot-query inputs (oldest turns drop first).")
@click.option("--number-slots-noncategorical/--no-number-slots-noncategorical", default=True,
              show_default=True, help="Re-kind all-integer categorical slots as non-categorical.")
@click.option("--aliases", "aliases_path", type=click.Path(), default=None,
              help="Alias table JSON overriding the packaged canonicalization data.")
@click.option("--seed", default=13, show_default=True, help="Master RNG seed (manifest only).")
@handle_errors
def cmd_track(schema_path, dialogues_path, dialogue_format, backend_flag, out, diagnostics_path,
              workers, batch_size, max_inflight, context_budget,
              number_slots_noncategorical, aliases_path, seed):
    """Run two-pass zero-shot state tracking over a dialogue corpus."""
    schema_file = _require_file(schema_path, "--schema")
    dialogues_file = _require_file(dialogues_path, "--dialogues")
    schema = load_schema(schema_file, number_slots_noncategorical=number_slots_noncategorical)
    dialogues = _load_gold(dialogues_file, schema, dialogue_format)
    backend = _resolve_backend(backend_flag, dialogues, schema, batch_size, max_inflight,
                               context_budget)
    aliases = AliasTable.load(aliases_path) if aliases_path else None

    out_path = Path(out)
    write_manifest(
        out_path,
        "track",
        {
            "schema": schema_path,
            "dialogues": dialogues_path,
            "dialogue_format": dialogue_format,
            "backend": backend_flag or os.environ.get(BACKEND_URL_ENV, "oracle"),
            "out": out,
            "diagnostics": diagnostics_path,
            "workers": workers,
            "batch_size": batch_size,
            "max_inflight": max_inflight,
            "context_budget": context_budget,
            "number_slots_noncategorical": number_slots_noncategorical,
            "aliases": aliases_path,
        },
        seed,
        [schema_file, dialogues_file],
    )
    predictions = track_corpus(
        dialogues, schema, backend,
        workers=workers, context_budget=context_budget, aliases=aliases,
    )
    written = write_predictions_jsonl(out_path, predictions)
    if diagnostics_path:
        write_diagnostics_jsonl(diagnostics_path, predictions)
    click.echo(
        f"tracked {len(dialogues)} dialogues ({written} turns) -> {out_path}", err=True
    )


@main.command("evaluate")
@click.option("--predictions", "predictions_path", required=True, type=click.Path())
@click.option("--diagnostics", "diagnostics_path", type=click.Path(), default=None,
              help="Diagnostics JSONL matching the predictions (needed for --oracle-gate).")
@click.option("--dialogues", "dialogues_path", required=True, type=click.Path(),
              help="Gold dialogue dataset.")
@click.option("--dialogue-format", type=click.Choice(["multiwoz", "sgd", "jsonl"]),
              default="jsonl", show_default=True)
@click.option("--schema", "schema_path", required=True, type=click.Path())
@click.option("--number-slots-noncategorical/--no-number-slots-noncategorical", default=True,
              show_default=True)
@click.option("--per-domain", default=None, metavar="D1,D2",
              help="Domains for per-domain JGA (default: all schema domains).")
@click.option("--per-domain-active-only", is_flag=True, default=False,
              help="Restrict per-domain JGA to turns where the domain is active in gold.")
@click.option("--oracle-gate", is_flag=True, default=False,
              help="Also rescore with gold gates and predicted values.")
@click.option("--aga", "aga_mode", type=click.Choice(["micro", "macro"]), default="micro",
              show_default=True, help="Average goal accuracy flavor.")
@click.option("--out", type=click.Path(), default=None,
              help="Report JSON path (default: print to stdout).")
@click.option("--per-slot-csv", type=click.Path(), default=None,
              help="Optional per-slot accuracy CSV.")
@click.option("--plot", "plot_path", type=click.Path(), default=None,
              help="Optional metrics summary figure (PNG).")
@click.option("--seed", default=13, show_default=True, help="Master RNG seed (manifest only).")
@handle_errors
def cmd_evaluate(predictions_path, diagnostics_path, dialogues_path, dialogue_format,
                 schema_path, number_slots_noncategorical, per_domain, per_domain_active_only,
                 oracle_gate, aga_mode, out, per_slot_csv, plot_path, seed):
    """Score predictions against gold states and emit a metrics report."""
    predictions_file = _require_file(predictions_path, "--predictions")
    dialogues_file = _require_file(dialogues_path, "--dialogues")
    schema_file = _require_file(schema_path, "--schema")
    if diagnostics_path:
        _require_file(diagnostics_path, "--diagnostics")
    schema = load_schema(schema_file, number_slots_noncategorical=number_slots_noncategorical)
    golds = _load_gold(dialogues_file, schema, dialogue_format)
    predictions = read_predictions_jsonl(predictions_file, diagnostics_path, schema)
    domains = [d.strip() for d in per_domain.split(",") if d.strip()] if per_domain else None
    report = evaluate_corpus(
        predictions,
        golds,
        schema,
        domains=domains,
        oracle_gate=oracle_gate,
        aga_macro=aga_mode == "macro",
        per_domain_active_turns_only=per_domain_active_only,
    )
    payload = json.dumps(report.to_json_dict(), indent=2, sort_keys=True)
    if out:
        out_path = Path(out)
        inputs = [predictions_file, dialogues_file, schema_file]
        if diagnostics_path:
            inputs.append(Path(diagnostics_path))
        write_manifest(
            out_path,
            "evaluate",
            {
                "predictions": predictions_path,
                "diagnostics": diagnostics_path,
                "dialogues": dialogues_path,
                "dialogue_format": dialogue_format,
                "schema": schema_path,
                "per_domain": per_domain,
                "per_domain_active_only": per_domain_active_only,
                "oracle_gate": oracle_gate,
                "aga": aga_mode,
                "out": out,
                "per_slot_csv": per_slot_csv,
                "plot": plot_path,
            },
            seed,
            inputs,
        )
        atomic_write_text(out_path, payload + "\n")
        click.echo(f"wrote report to {out_path}", err=True)
    else:
        click.echo(payload)
    if per_slot_csv:
        rows = per_slot_accuracy(predictions, golds, schema)
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
        atomic_write_text(per_slot_csv, buffer.getvalue())
    if plot_path:
        from .report import render_metrics_summary

        render_metrics_summary(report.to_json_dict(), plot_path)


@main.command("sweep-alpha")
@click.option("--alphas", required=True, metavar="A1,A2,...",
              help="Comma-separated unanswerable ratios to sweep.")
@click.option("--schema", "schema_path", required=True, type=click.Path())
@click.option("--dialogues", "dialogues_path", required=True, type=click.Path())
@click.option("--dialogue-format", type=click.Choice(["multiwoz", "sgd", "jsonl"]),
              default="jsonl", show_default=True)
@click.option("--backend", "backend_flag", default="synthetic", show_default=True,
              metavar="synthetic|oracle|URL",
              help="Backend per row; a URL may embed {alpha} to address per-ratio models.")
@click.option("--gate-noise", default=0.3, show_default=True,
              help="Base gate-noise rate of the synthetic backend.")
@click.option("--number-slots-noncategorical/--no-number-slots-noncategorical", default=True,
              show_default=True)
@click.option("--out", required=True, type=click.Path(), help="Sweep CSV output path.")
@click.option("--plot", "plot_path", type=click.Path(), default=None,
              help="Optional sweep curve figure (PNG).")
@click.option("--batch-size", default=32, show_default=True)
@click.option("--max-inflight", default=4, show_default=True)
@click.option("--workers", default=None, type=int)
@click.option("--seed", default=13, show_default=True, help="Master RNG seed.")
@handle_errors
def cmd_sweep_alpha(alphas, schema_path, dialogues_path, dialogue_format, backend_flag,
                    gate_noise, number_slots_noncategorical, out, plot_path,
                    batch_size, max_inflight, workers, seed):
    """Track and score the corpus once per alpha, emitting one CSV row each.

    The synthetic backend wraps the gold oracle and flips gate decisions at
    alpha-dependent rates (false positives at gate_noise*(1-alpha)^2, false
    negatives at gate_noise*alpha^2), simulating the trade-off between
    missing unmentioned slots and over-predicting none. Rows are
    deterministic for a fixed seed.
    """
    try:
        alpha_values = [float(a) for a in alphas.split(",") if a.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --alphas: {exc}") from exc
    if not alpha_values:
        raise ConfigError("--alphas is empty")
    schema_file = _require_file(schema_path, "--schema")
    dialogues_file = _require_file(dialogues_path, "--dialogues")
    schema = load_schema(schema_file, number_slots_noncategorical=number_slots_noncategorical)
    dialogues = _load_gold(dialogues_file, schema, dialogue_format)

    out_path = Path(out)
    write_manifest(
        out_path,
        "sweep-alpha",
        {
            "alphas": alphas,
            "schema": schema_path,
            "dialogues": dialogues_path,
            "dialogue_format": dialogue_format,
            "backend": backend_flag,
            "gate_noise": gate_noise,
            "number_slots_noncategorical": number_slots_noncategorical,
            "out": out,
            "plot": plot_path,
        },
        seed,
        [schema_file, dialogues_file],
    )
    rows = []
    for alpha in alpha_values:
        if backend_flag == "synthetic":
            oracle = oracle_from_gold(dialogues, schema)
            backend = NoisyGateBackend(
                oracle,
                fp_rate=gate_noise * (1.0 - alpha) ** 2,
                fn_rate=gate_noise * alpha**2,
                seed=derive_seed(seed, "sweep-alpha", alpha),
            )
        else:
            flag = backend_flag.format(alpha=alpha) if "{alpha}" in (backend_flag or "") else backend_flag
            backend = _resolve_backend(flag, dialogues, schema, batch_size, max_inflight)
        predictions = track_corpus(dialogues, schema, backend, workers=workers)
        report = evaluate_corpus(predictions, golds=dialogues, schema=schema, domains=[])
        rows.append(
            {"alpha": alpha, "jga": report.jga, "aga": report.aga, "sga": report.sga}
        )
        click.echo(f"alpha={alpha}: jga={report.jga:.4f} sga={report.sga:.4f}", err=True)
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=["alpha", "jga", "aga", "sga"])
    writer.writeheader()
    writer.writerows(rows)
    atomic_write_text(out_path, buffer.getvalue())
    if plot_path:
        from .report import render_sweep_curve

        render_sweep_curve(rows, plot_path)


@main.command("schema-lint")
@click.option("--schema", "schema_path", required=True, type=click.Path())
@click.option("--number-slots-noncategorical", is_flag=True, default=False,
              help="Preview which slots the number-type rule would re-kind.")
@handle_errors
def cmd_schema_lint(schema_path, number_slots_noncategorical):
    """Validate a schema file and summarize its slots."""
    schema_file = _require_file(schema_path, "--schema")
    slots = load_schema(schema_file, number_slots_noncategorical=False)
    rekinded = set()
    if number_slots_noncategorical:
        after = load_schema(schema_file, number_slots_noncategorical=True)
        before_kinds = {slot.slot_id: slot.kind for slot in slots}
        rekinded = {slot.slot_id for slot in after if before_kinds[slot.slot_id] != slot.kind}
    domains: dict[str, int] = {}
    for slot in slots:
        domains[slot.domain] = domains.get(slot.domain, 0) + 1
    click.echo(f"{len(slots)} slots across {len(domains)} domains")
    for domain, count in sorted(domains.items()):
        click.echo(f"  {domain}: {count} slots")
    for slot in slots:
        marker = " [number-type -> non_categorical]" if slot.slot_id in rekinded else ""
        click.echo(f"  {slot.slot_id} ({slot.kind.value}, {len(slot.value_candidates)} candidates){marker}")


if __name__ == "__main__":
    main()
