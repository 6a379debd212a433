"""Fine-tuning dataset emission for the four training paradigms.

Each output line is a chat record ``{paradigm, direction, messages, metadata}``
whose last message is the assistant target. With ``flatten`` the record is
``{paradigm, direction, prompt, completion, metadata}`` instead.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .pipeline import AlignmentStore, DatasetItem
from .prompts import load_template
from .retrieval import EmbeddingProvider, MissingAlignment, RetrievalIndex, retrieve_context

log = logging.getLogger(__name__)

PARADIGMS = ("naive_sft", "instruction", "icmt", "cot_icmt")
CUTOFF_TOKENS = 4096

_TOKEN_PROXY = re.compile(r"\w+|[^\w\s]")


class SchemaViolation(ValueError):
    def __init__(self, line: int, reason: str):
        self.line = line
        super().__init__(f"line {line}: {reason}")


def estimate_tokens(text: str) -> int:
    """Word and punctuation count, a model-independent proxy for token length."""
    return len(_TOKEN_PROXY.findall(text))


@dataclass(frozen=True)
class TrainingExample:
    paradigm: str
    direction: str
    messages: tuple[dict, ...]
    metadata: dict

    def to_record(self, flatten: bool = False) -> dict:
        record = {"paradigm": self.paradigm, "direction": self.direction, "metadata": self.metadata}
        if flatten:
            record["prompt"] = "\n\n".join(m["content"] for m in self.messages[:-1])
            record["completion"] = self.messages[-1]["content"]
        else:
            record["messages"] = list(self.messages)
        return record

    @property
    def token_estimate(self) -> int:
        return sum(estimate_tokens(m["content"]) for m in self.messages)


def build_example(
    paradigm: str,
    item: DatasetItem,
    direction: str,
    *,
    store: AlignmentStore | None = None,
    index: RetrievalIndex | None = None,
    items_by_id: dict[str, DatasetItem] | None = None,
    n: int = 2,
    provider: EmbeddingProvider | None = None,
) -> TrainingExample:
    if paradigm not in PARADIGMS:
        raise ValueError(f"unknown paradigm {paradigm!r}")
    t = load_template(paradigm)
    values = {"source": item.source(direction)}
    metadata: dict = {"item_id": item.id, "neighbor_ids": [], "alignment": None}

    selected = store.alignments(direction, "selected_text") if store is not None else {}
    if paradigm in ("instruction", "cot_icmt"):
        if item.id not in selected:
            raise MissingAlignment(item.id)
        values["alignment"] = selected[item.id]
        metadata["alignment"] = store.get(item.id, direction).selected

    if paradigm in ("icmt", "cot_icmt"):
        if index is None or items_by_id is None:
            raise ValueError(f"paradigm {paradigm!r} needs a retrieval index and the item table")
        context = retrieve_context(
            index, item, n, direction, items_by_id, selected if paradigm == "cot_icmt" else None, provider
        )
        blocks = []
        for ex in context:
            fields = {"input": ex.input_text, "target": ex.target_text}
            if ex.alignment is not None:
                fields["alignment"] = ex.alignment
            blocks.append(t.render("example", direction, **fields))
        values["examples"] = "\n\n".join(blocks)
        metadata["neighbor_ids"] = [ex.neighbor_id for ex in context]

    messages = (
        {"role": "system", "content": t.render("system", direction)},
        {"role": "user", "content": t.render("user", direction, **values)},
        {"role": "assistant", "content": item.target(direction)},
    )
    return TrainingExample(paradigm, direction, messages, metadata)


@dataclass
class EmitStats:
    path: str
    paradigm: str
    direction: str
    lines: int
    sha256: str
    overflow: list[str] = field(default_factory=list)


def emit(
    paradigm: str,
    items: Sequence[DatasetItem],
    direction: str,
    output: str | Path,
    *,
    store: AlignmentStore | None = None,
    index: RetrievalIndex | None = None,
    n: int = 2,
    flatten: bool = False,
    provider: EmbeddingProvider | None = None,
    cutoff: int = CUTOFF_TOKENS,
) -> EmitStats:
    """Write one training record per item, in item order.

    Records over ``cutoff`` estimated tokens are written unchanged and
    listed in the returned stats.
    """
    by_id = {item.id: item for item in items}
    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    overflow = []
    for item in items:
        ex = build_example(
            paradigm, item, direction, store=store, index=index, items_by_id=by_id, n=n, provider=provider
        )
        if ex.token_estimate > cutoff:
            log.warning("%s %s: estimated %d tokens exceeds %d", paradigm, item.id, ex.token_estimate, cutoff)
            overflow.append(item.id)
        lines.append(json.dumps(ex.to_record(flatten), sort_keys=True, ensure_ascii=False))
    data = ("\n".join(lines) + "\n" if lines else "").encode("utf-8")
    output.write_bytes(data)
    return EmitStats(str(output), paradigm, direction, len(lines), hashlib.sha256(data).hexdigest(), overflow)


@dataclass
class ValidationReport:
    path: str
    lines: int
    overflow: list[tuple[int, str, int]]


def _record_texts(line_no: int, record: dict) -> list[str]:
    if "messages" in record:
        messages = record["messages"]
        if not isinstance(messages, list) or not messages:
            raise SchemaViolation(line_no, "messages must be a non-empty list")
        roles = []
        for m in messages:
            if not isinstance(m, dict) or set(m) != {"role", "content"} or not isinstance(m["content"], str):
                raise SchemaViolation(line_no, "each message needs exactly a role and string content")
            roles.append(m["role"])
        if roles.count("assistant") != 1 or roles[-1] != "assistant":
            raise SchemaViolation(line_no, "exactly one assistant message is required, placed last")
        if roles[0] != "system" or roles[1:-1] != ["user"] * (len(roles) - 2) or len(roles) < 3:
            raise SchemaViolation(line_no, f"unexpected role sequence {roles}")
        return [m["content"] for m in messages]
    if isinstance(record.get("prompt"), str) and isinstance(record.get("completion"), str):
        return [record["prompt"], record["completion"]]
    raise SchemaViolation(line_no, "record has neither messages nor prompt/completion")


def validate_file(path: str | Path, paradigm: str, cutoff: int = CUTOFF_TOKENS) -> ValidationReport:
    """Check every line against the record schema; collect over-length records."""
    if paradigm not in PARADIGMS:
        raise ValueError(f"unknown paradigm {paradigm!r}")
    overflow = []
    count = 0
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            count += 1
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(line_no, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise SchemaViolation(line_no, "record is not an object")
            if record.get("paradigm") != paradigm:
                raise SchemaViolation(line_no, f"paradigm {record.get('paradigm')!r} != {paradigm!r}")
            meta = record.get("metadata")
            if not isinstance(meta, dict) or "item_id" not in meta:
                raise SchemaViolation(line_no, "metadata.item_id missing")
            tokens = sum(estimate_tokens(t) for t in _record_texts(line_no, record))
            if tokens > cutoff:
                overflow.append((line_no, meta["item_id"], tokens))
    return ValidationReport(str(path), count, overflow)
