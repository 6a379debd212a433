"""Alignment extraction, in-context reflection and perplexity-based selection over a dataset."""

from __future__ import annotations

import json
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .llm import ChatPrompt, Gateway, GatewayError, GenerationParams, perplexity
from .prompts import DIRECTIONS, load_template
from .retrieval import ContextExample, EmbeddingProvider, RetrievalIndex, natural_key, retrieve_context

log = logging.getLogger(__name__)

STAGES = ("extract", "reflect", "select")


class EmptyTeacherResponse(ValueError):
    pass


class StageOrderError(RuntimeError):
    """A stage was asked to run before its inputs exist."""


class PartialFailure(RuntimeError):
    def __init__(self, report: "StageReport", threshold: float):
        self.report = report
        self.threshold = threshold
        super().__init__(
            f"{report.stage}: {len(report.failed)} of {report.total} units failed "
            f"(threshold {threshold:.1%}); failed items: {', '.join(report.failed_ids)}"
        )


@dataclass(frozen=True)
class DatasetItem:
    id: str
    smiles: str
    caption: str

    def source(self, direction: str) -> str:
        return self.smiles if direction == "mol2cap" else self.caption

    def target(self, direction: str) -> str:
        return self.caption if direction == "mol2cap" else self.smiles


def load_dataset(path: str | Path) -> list[DatasetItem]:
    """JSONL rows of {id, smiles, caption}, sorted by natural id order."""
    items = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            row = json.loads(line)
            missing = {"id", "smiles", "caption"} - row.keys()
            if missing:
                raise ValueError(f"{path}:{line_no}: missing fields {sorted(missing)}")
            item = DatasetItem(str(row["id"]), row["smiles"], row["caption"])
            if item.id in items:
                raise ValueError(f"{path}:{line_no}: duplicate id {item.id!r}")
            items[item.id] = item
    return [items[k] for k in sorted(items, key=natural_key)]


def choose_branch(ppl0: float, ppl1: float) -> str:
    """Lower perplexity wins; a tie keeps the zero-shot alignment."""
    return "K0" if ppl0 <= ppl1 else "K1"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class AlignmentRecord:
    item_id: str
    direction: str
    input_text: str
    target_text: str
    k0: str | None = None
    k1: str | None = None
    ppl0: float | None = None
    ppl1: float | None = None
    selected: str | None = None
    selected_text: str | None = None
    teacher_model: str | None = None
    scorer_model: str | None = None
    timestamps: dict[str, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def check(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.selected is None:
            return
        chosen = {"K0": self.k0, "K1": self.k1}.get(self.selected)
        if chosen is None or chosen != self.selected_text:
            raise ValueError(f"{self.item_id}: selected_text does not match branch {self.selected}")
        if self.ppl0 is not None and self.ppl1 is not None:
            if self.selected != choose_branch(self.ppl0, self.ppl1):
                raise ValueError(f"{self.item_id}: selection disagrees with perplexities")
        elif self.k1 is not None and not self.warnings:
            raise ValueError(f"{self.item_id}: K1 present but not scored")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_dict(cls, data: dict) -> "AlignmentRecord":
        return cls(**data)


class AlignmentStore:
    """JSONL store of records, last write wins per (item id, direction)."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._records: dict[tuple[str, str], AlignmentRecord] = {}
        self._lock = threading.Lock()
        self._torn_tail = False
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self):
        raw = self.path.read_bytes()
        self._torn_tail = bool(raw) and not raw.endswith(b"\n")
        for line_no, line in enumerate(raw.decode("utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                record = AlignmentRecord.from_dict(json.loads(line))
            except (json.JSONDecodeError, TypeError):
                log.warning("skipping unreadable store line %d in %s", line_no, self.path)
                continue
            self._records[(record.item_id, record.direction)] = record

    def __len__(self):
        return len(self._records)

    def get(self, item_id: str, direction: str) -> AlignmentRecord | None:
        return self._records.get((item_id, direction))

    def records(self, direction: str | None = None) -> list[AlignmentRecord]:
        keys = sorted(self._records, key=lambda k: (natural_key(k[0]), k[1]))
        return [self._records[k] for k in keys if direction is None or k[1] == direction]

    def alignments(self, direction: str, branch: str = "k0") -> dict[str, str]:
        """item id -> alignment text for ``branch`` in {k0, k1, selected_text}."""
        out = {}
        for (item_id, d), record in self._records.items():
            text = getattr(record, branch)
            if d == direction and text is not None:
                out[item_id] = text
        return out

    def put(self, record: AlignmentRecord):
        record.check()
        with self._lock:
            self._records[(record.item_id, record.direction)] = record
            if self.path is None:
                return
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                if self._torn_tail:
                    fh.write("\n")
                    self._torn_tail = False
                fh.write(record.to_json() + "\n")

    def compact(self):
        """Rewrite the file with one line per key in sorted order."""
        if self.path is None:
            return
        with self._lock:
            tmp = self.path.with_suffix(self.path.suffix + ".tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                for record in self.records():
                    fh.write(record.to_json() + "\n")
            os.replace(tmp, self.path)
            self._torn_tail = False


# ---------------------------------------------------------------------------
# Stage operations
# ---------------------------------------------------------------------------


def _teacher_prompt(template: str, direction: str, params: GenerationParams, **values) -> ChatPrompt:
    t = load_template(template)
    return ChatPrompt.build(t.render("system", direction), t.render("user", direction, **values), params)


def _clean(text: str, item_id: str) -> str:
    if not text.strip():
        raise EmptyTeacherResponse(f"teacher returned an empty alignment for {item_id!r}")
    return text.strip()


def zero_shot_prompt(item: DatasetItem, direction: str, params: GenerationParams | None = None) -> ChatPrompt:
    return _teacher_prompt("zero_shot", direction, params or GenerationParams(), source=item.source(direction))


def extract_zero_shot(
    item: DatasetItem, direction: str, teacher: Gateway, params: GenerationParams | None = None
) -> str:
    return _clean(teacher.chat_complete(zero_shot_prompt(item, direction, params)), item.id)


def reflection_prompt(
    item: DatasetItem,
    direction: str,
    context: Sequence[ContextExample],
    params: GenerationParams | None = None,
) -> ChatPrompt:
    t = load_template("reflection")
    blocks = []
    for ex in context:
        if ex.neighbor_id == item.id:
            raise ValueError(f"context for {item.id!r} contains the item itself")
        if ex.alignment is None:
            raise ValueError(f"context example {ex.neighbor_id!r} has no alignment")
        blocks.append(t.render("example", direction, input=ex.input_text, alignment=ex.alignment))
    return _teacher_prompt(
        "reflection", direction, params or GenerationParams(), examples="\n\n".join(blocks), source=item.source(direction)
    )


def reflect_in_context(
    item: DatasetItem,
    direction: str,
    context: Sequence[ContextExample],
    teacher: Gateway,
    params: GenerationParams | None = None,
    n: int = 2,
) -> str:
    if len(context) != n:
        raise ValueError(f"expected {n} context examples, got {len(context)}")
    return _clean(teacher.chat_complete(reflection_prompt(item, direction, context, params)), item.id)


def score_condition(direction: str, source: str) -> str:
    return load_template("score").render("condition", direction, source=source) + "\n"


def alignment_perplexity(scorer: Gateway, direction: str, source: str, alignment: str) -> float:
    return perplexity(scorer.score_continuation(score_condition(direction, source), alignment))


def select_alignment(record: AlignmentRecord, scorer: Gateway, allow_missing_k1: bool = False) -> AlignmentRecord:
    """Score both alignments and keep the one with lower perplexity."""
    if record.k0 is None:
        raise StageOrderError(f"{record.item_id}: no zero-shot alignment to select from")
    rec = AlignmentRecord.from_dict(json.loads(record.to_json()))
    rec.scorer_model = scorer.model
    rec.ppl0 = alignment_perplexity(scorer, rec.direction, rec.input_text, rec.k0)
    rec.ppl1 = None
    if rec.k1 is None:
        if not allow_missing_k1:
            raise StageOrderError(f"{record.item_id}: no reflected alignment to select from")
        rec.warnings.append("no reflected alignment; kept zero-shot")
        rec.selected = "K0"
    else:
        try:
            rec.ppl1 = alignment_perplexity(scorer, rec.direction, rec.input_text, rec.k1)
        except GatewayError as exc:
            rec.warnings.append(f"scoring the reflected alignment failed ({exc}); kept zero-shot")
            rec.selected = "K0"
        else:
            rec.selected = choose_branch(rec.ppl0, rec.ppl1)
    rec.selected_text = rec.k0 if rec.selected == "K0" else rec.k1
    rec.timestamps["select"] = _now()
    rec.check()
    return rec


# ---------------------------------------------------------------------------
# Stage runner
# ---------------------------------------------------------------------------


@dataclass
class PipelineSettings:
    n_examples: int = 2
    params: GenerationParams = field(default_factory=GenerationParams)
    max_workers: int = 8
    failure_threshold: float = 0.05
    directions: tuple[str, ...] = DIRECTIONS
    allow_missing_k1: bool = False


@dataclass
class StageReport:
    stage: str
    total: int = 0
    completed: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)

    @property
    def failed_ids(self) -> list[str]:
        ids = {unit.split("/")[0] for unit in self.failed}
        return sorted(ids, key=natural_key)

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "total": self.total,
            "completed": len(self.completed),
            "skipped": len(self.skipped),
            "failed": dict(sorted(self.failed.items())),
        }


def _done(stage: str, record: AlignmentRecord | None, teacher: Gateway | None, scorer: Gateway | None) -> bool:
    if record is None:
        return False
    if stage == "extract":
        return record.k0 is not None and record.teacher_model == teacher.model
    if stage == "reflect":
        return record.k1 is not None and record.teacher_model == teacher.model
    return record.selected is not None and record.scorer_model == scorer.model


def run_stage(
    items: Iterable[DatasetItem],
    stage: str,
    store: AlignmentStore,
    *,
    teacher: Gateway | None = None,
    scorer: Gateway | None = None,
    index: RetrievalIndex | None = None,
    provider: EmbeddingProvider | None = None,
    settings: PipelineSettings | None = None,
) -> StageReport:
    """Run one stage over every (item, direction) unit not already finished.

    Finished units are skipped, so a re-run after success issues no model
    calls and an interrupted run resumes where it stopped.
    """
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    settings = settings or PipelineSettings()
    if stage in ("extract", "reflect") and teacher is None:
        raise ValueError(f"stage {stage!r} needs a teacher gateway")
    if stage == "select" and scorer is None:
        raise ValueError("stage 'select' needs a scorer gateway")
    if stage == "reflect" and index is None:
        raise ValueError("stage 'reflect' needs a retrieval index")

    items = list(items)
    by_id = {item.id: item for item in items}
    report = StageReport(stage)
    units = [(item, d) for item in items for d in settings.directions]
    report.total = len(units)
    zero_shot = {d: store.alignments(d, "k0") for d in settings.directions} if stage == "reflect" else {}

    def work(item: DatasetItem, direction: str) -> str:
        record = store.get(item.id, direction)
        if _done(stage, record, teacher, scorer):
            return "skipped"
        if stage == "extract":
            text = extract_zero_shot(item, direction, teacher, settings.params)
            rec = AlignmentRecord(item.id, direction, item.source(direction), item.target(direction))
            rec.k0 = text
            rec.teacher_model = teacher.model
            rec.timestamps["extract"] = _now()
        elif stage == "reflect":
            if record is None or record.k0 is None:
                raise StageOrderError(f"{item.id}: zero-shot alignment missing")
            context = retrieve_context(
                index, item, settings.n_examples, direction, by_id, zero_shot[direction], provider
            )
            rec = AlignmentRecord.from_dict(json.loads(record.to_json()))
            rec.k1 = reflect_in_context(item, direction, context, teacher, settings.params, settings.n_examples)
            rec.ppl0 = rec.ppl1 = rec.selected = rec.selected_text = None
            rec.warnings = []
            rec.timestamps["reflect"] = _now()
        else:
            if record is None:
                raise StageOrderError(f"{item.id}: nothing to select from")
            rec = select_alignment(record, scorer, settings.allow_missing_k1)
        store.put(rec)
        return "completed"

    def guarded(unit):
        item, direction = unit
        try:
            return unit, work(item, direction), None
        except Exception as exc:  # noqa: BLE001 - every failure is reported per unit
            return unit, "failed", f"{type(exc).__name__}: {exc}"

    with ThreadPoolExecutor(max_workers=max(1, settings.max_workers)) as pool:
        for (item, direction), status, error in pool.map(guarded, units):
            name = f"{item.id}/{direction}"
            if status == "failed":
                log.error("%s %s failed: %s", stage, name, error)
                report.failed[name] = error
            elif status == "skipped":
                report.skipped.append(name)
            else:
                report.completed.append(name)
    store.compact()
    if report.total and len(report.failed) / report.total > settings.failure_threshold:
        raise PartialFailure(report, settings.failure_threshold)
    return report
