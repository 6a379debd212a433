"""Command-line driver.

Every command works inside one run directory::

    <run-dir>/manifest.json        config snapshot, input and output hashes, versions
    <run-dir>/index/               BM25 postings and molecule vectors
    <run-dir>/alignments.jsonl     alignment store
    <run-dir>/cache/*.jsonl        recorded model responses
    <run-dir>/datasets/            emitted training files
    <run-dir>/reports/             stage reports, evaluation JSON/TSV/PNG
    <run-dir>/probes/              transformed test sets
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import httpx
import matplotlib
import numpy

from . import __version__
from .config import ConfigError, RunConfig, load_config, parse_override
from .emitter import PARADIGMS, emit, validate_file
from .evaluation.plotting import plot_report
from .evaluation.probes import PROBE_KINDS, probe_testset
from .evaluation.report import evaluate, read_id_text
from .llm import Gateway, HttpBackend, MockBackend, ResponseCache
from .pipeline import STAGES, AlignmentStore, PartialFailure, PipelineSettings, load_dataset, run_stage
from .prompts import DIRECTIONS, template_versions
from .retrieval import (
    FingerprintProvider,
    RemoteProvider,
    RetrievalIndex,
    build_bm25_index,
    build_embedding_store,
)

log = logging.getLogger("molforge")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_STAGE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Wiring
# ---------------------------------------------------------------------------


def make_gateway(config: RunConfig, role: str) -> Gateway:
    ep = config.teacher if role == "teacher" else config.scorer
    cache = ResponseCache(config.run_path / "cache" / f"{role}.jsonl")
    if config.mock:
        return Gateway(MockBackend(), f"mock-{role}", cache, config.pipeline.max_in_flight)
    backend = HttpBackend(ep.endpoint, config.api_key, timeout=ep.timeout, max_retries=ep.max_retries)
    return Gateway(backend, ep.model, cache, config.pipeline.max_in_flight)


def make_provider(config: RunConfig):
    r = config.retrieval
    if r.provider == "remote":
        if not r.embedding_endpoint:
            raise ConfigError("retrieval.provider is 'remote' but retrieval.embedding_endpoint is unset")
        return RemoteProvider(r.embedding_endpoint, r.dimension, config.api_key)
    return FingerprintProvider(dimension=r.dimension)


def settings_for(config: RunConfig) -> PipelineSettings:
    p = config.pipeline
    return PipelineSettings(
        n_examples=config.retrieval.n_examples,
        params=config.generation.params(),
        max_workers=p.max_workers,
        failure_threshold=p.failure_threshold,
        directions=tuple(p.directions),
        allow_missing_k1=p.allow_missing_k1,
    )


def _store(config: RunConfig) -> AlignmentStore:
    return AlignmentStore(config.run_path / "alignments.jsonl")


def _load_index(config: RunConfig) -> RetrievalIndex:
    path = config.run_path / "index"
    if not (path / "bm25.json").exists():
        raise ConfigError(f"no retrieval index under {path}; run the 'index' command first")
    return RetrievalIndex.load(path)


def store_digest(path: Path) -> dict:
    """Record count and a hash of the store contents with timestamps removed."""
    if not path.exists():
        return {"records": 0, "content_sha256": None}
    store = AlignmentStore(path)
    h = hashlib.sha256()
    for record in store.records():
        data = json.loads(record.to_json())
        data.pop("timestamps", None)
        h.update((json.dumps(data, sort_keys=True) + "\n").encode("utf-8"))
    return {"records": len(store), "content_sha256": h.hexdigest()}


def write_manifest(config: RunConfig, command: str, inputs: list[Path]) -> Path:
    run = config.run_path
    outputs = {}
    for sub in ("index", "datasets", "reports", "probes"):
        for p in sorted((run / sub).rglob("*")) if (run / sub).exists() else []:
            if p.is_file():
                outputs[p.relative_to(run).as_posix()] = sha256_file(p)
    manifest = {
        "command": command,
        "config": config.snapshot(),
        "seed": config.seed,
        "inputs": {str(p): sha256_file(p) for p in inputs if p.is_file()},
        "outputs": outputs,
        "alignment_store": store_digest(run / "alignments.jsonl"),
        "versions": {
            "molforge": __version__,
            "python": platform.python_version(),
            "numpy": numpy.__version__,
            "httpx": httpx.__version__,
            "matplotlib": matplotlib.__version__,
            "templates": template_versions(),
        },
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    run.mkdir(parents=True, exist_ok=True)
    path = run / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_index(config: RunConfig, args) -> dict:
    config.validate(needs_dataset=True)
    items = load_dataset(config.dataset)
    index = build_bm25_index({i.id: i.caption for i in items}, config.retrieval.k1, config.retrieval.b)
    build_embedding_store(index, {i.id: i.smiles for i in items}, make_provider(config))
    index.save(config.run_path / "index")
    return {"documents": index.doc_count, "dimension": index.dimension}


def _run(config: RunConfig, stage: str) -> dict:
    config.validate(
        needs_dataset=True, needs_teacher=stage in ("extract", "reflect"), needs_scorer=stage == "select"
    )
    items = load_dataset(config.dataset)
    kwargs = {}
    if stage in ("extract", "reflect"):
        kwargs["teacher"] = make_gateway(config, "teacher")
    if stage == "reflect":
        kwargs["index"] = _load_index(config)
        kwargs["provider"] = make_provider(config)
    if stage == "select":
        kwargs["scorer"] = make_gateway(config, "scorer")
    reports = config.run_path / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    try:
        report = run_stage(items, stage, _store(config), settings=settings_for(config), **kwargs)
    except PartialFailure as exc:
        (reports / f"stage_{stage}.json").write_text(
            json.dumps(exc.report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        raise
    (reports / f"stage_{stage}.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    gw = kwargs.get("teacher") or kwargs.get("scorer")
    return {**report.to_dict(), "network_calls": gw.network_calls}


def cmd_emit(config: RunConfig, args) -> dict:
    config.validate(needs_dataset=True)
    items = load_dataset(config.dataset)
    paradigms = PARADIGMS if args.paradigm == "all" else (args.paradigm,)
    directions = tuple(config.pipeline.directions) if args.direction == "all" else (args.direction,)
    if args.output and (len(paradigms) > 1 or len(directions) > 1):
        raise UsageError("--output needs a single --paradigm and --direction")
    store = _store(config)
    index = None
    if any(p in ("icmt", "cot_icmt") for p in paradigms):
        index = _load_index(config)
    provider = make_provider(config)
    files = {}
    for paradigm in paradigms:
        for direction in directions:
            out = Path(args.output) if args.output else config.run_path / "datasets" / f"{paradigm}_{direction}.jsonl"
            stats = emit(
                paradigm,
                items,
                direction,
                out,
                store=store,
                index=index,
                n=config.retrieval.n_examples,
                flatten=args.flatten,
                provider=provider,
            )
            validate_file(out, paradigm)
            files[str(out)] = {"lines": stats.lines, "sha256": stats.sha256, "overflow": stats.overflow}
    return {"files": files}


def cmd_evaluate(config: RunConfig, args) -> dict:
    predictions = read_id_text(args.predictions, "output")
    if args.references:
        references = read_id_text(args.references, "target")
    else:
        config.validate(needs_dataset=True)
        references = {i.id: i.target(args.direction) for i in load_dataset(config.dataset)}
    report = evaluate(args.direction, references, predictions)
    out = Path(args.output_dir) if args.output_dir else config.run_path / "reports"
    out.mkdir(parents=True, exist_ok=True)
    stem = f"eval_{args.direction}"
    (out / f"{stem}.json").write_text(report.to_json(), encoding="utf-8")
    (out / f"{stem}.tsv").write_text(report.to_tsv(), encoding="utf-8")
    plot_report(report, out / f"{stem}.png")
    return report.to_dict()


def cmd_probe(config: RunConfig, args) -> dict:
    config.validate(needs_dataset=True)
    items = load_dataset(config.dataset)
    out = Path(args.output) if args.output else config.run_path / "probes" / f"{args.kind}.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    probed = probe_testset(items, args.kind, config.seed)
    lines = [json.dumps({"caption": i.caption, "id": i.id, "smiles": i.smiles}, ensure_ascii=False) for i in probed]
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return {"kind": args.kind, "seed": config.seed, "items": len(probed), "output": str(out)}


def cmd_pipeline(config: RunConfig, args) -> dict:
    config.validate(needs_dataset=True, needs_teacher=True, needs_scorer=True)
    summary = {"index": cmd_index(config, args)}
    for stage in STAGES:
        summary[stage] = _run(config, stage)
    args.paradigm, args.direction, args.output = "all", "all", None
    summary["emit"] = cmd_emit(config, args)
    return summary


COMMANDS = {
    "index": cmd_index,
    "extract": lambda c, a: _run(c, "extract"),
    "reflect": lambda c, a: _run(c, "reflect"),
    "select": lambda c, a: _run(c, "select"),
    "emit": cmd_emit,
    "evaluate": cmd_evaluate,
    "probe": cmd_probe,
    "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML or JSON config file")
    common.add_argument("--run-dir", help="run directory (default runs/default)")
    common.add_argument("--dataset", help="JSONL dataset of {id, smiles, caption}")
    common.add_argument("--seed", type=int, help="random seed recorded in the manifest")
    common.add_argument("--mock", action="store_true", default=None, help="use in-process mock teacher and scorer")
    common.add_argument("--n-examples", type=int, help="context examples per item")
    common.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key (dotted path)"
    )
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="molforge", description="Alignment-augmented molecule-caption dataset builder.")
    parser.add_argument("--version", action="version", version=f"molforge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("index", "extract", "reflect", "select", "pipeline"):
        sub.add_parser(name, parents=[common])
    for p in (sub.add_parser("emit", parents=[common]), sub.choices["pipeline"]):
        p.add_argument("--flatten", action="store_true", help="write prompt/completion records")
    emit_p = sub.choices["emit"]
    emit_p.add_argument("--paradigm", choices=PARADIGMS + ("all",), default="all")
    emit_p.add_argument("--direction", choices=DIRECTIONS + ("all",), default="all")
    emit_p.add_argument("--output")
    ev = sub.add_parser("evaluate", parents=[common])
    ev.add_argument("--direction", choices=DIRECTIONS, required=True)
    ev.add_argument("--predictions", required=True, help="JSONL of {id, output}")
    ev.add_argument("--references", help="JSONL of {id, target}; defaults to the dataset")
    ev.add_argument("--output-dir")
    pr = sub.add_parser("probe", parents=[common])
    pr.add_argument("--kind", choices=PROBE_KINDS, required=True)
    pr.add_argument("--output")
    return parser


def _flags(args) -> dict:
    flags = {
        "run_dir": args.run_dir,
        "dataset": args.dataset,
        "seed": args.seed,
        "mock": args.mock,
        "retrieval.n_examples": args.n_examples,
    }
    for text in args.set:
        key, value = parse_override(text)
        flags[key] = value
    return flags


def _fail(code: int, exc: BaseException) -> int:
    body = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    failure = getattr(exc, "report", None)
    if failure is not None and hasattr(failure, "failed_ids"):
        body["failed_ids"] = failure.failed_ids
    sys.stderr.write(json.dumps(body, sort_keys=True) + "\n")
    return code


def main(argv: list[str] | None = None, env: dict | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        config = load_config(args.config, os.environ if env is None else env, _flags(args))
    except (ConfigError, TypeError) as exc:
        return _fail(EXIT_CONFIG, exc)

    inputs = [Path(p) for p in (config.dataset, args.config, getattr(args, "predictions", None),
                                 getattr(args, "references", None)) if p]
    try:
        result = COMMANDS[args.command](config, args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except Exception as exc:  # noqa: BLE001 - any stage failure maps to one exit code
        log.debug("stage failure", exc_info=True)
        code = _fail(EXIT_STAGE, exc)
        write_manifest(config, args.command, inputs)
        return code
    write_manifest(config, args.command, inputs)
    sys.stdout.write(json.dumps({"command": args.command, "result": result}, indent=2, sort_keys=True, default=str) + "\n")
    return EXIT_OK


def main_entry():
    sys.exit(main())
