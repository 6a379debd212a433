"""Metric suites per translation direction and their JSON / TSV renderings."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from ..retrieval import natural_key
from . import metrics as M

MOL2CAP_COLUMNS = ("bleu2", "bleu4", "rouge1", "rouge2", "rougeL", "meteor")
CAP2MOL_COLUMNS = (
    "bleu",
    "exact_match",
    "levenshtein",
    "maccs_fts",
    "rdk_fts",
    "morgan_fts",
    "validity",
)


@dataclass
class EvalReport:
    direction: str
    metrics: dict[str, float]
    sample_count: int
    invalid_count: int = 0

    @property
    def columns(self) -> tuple[str, ...]:
        return MOL2CAP_COLUMNS if self.direction == "mol2cap" else CAP2MOL_COLUMNS

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "metrics": {k: self.metrics[k] for k in self.columns},
            "sample_count": self.sample_count,
            "invalid_count": self.invalid_count,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_tsv(self) -> str:
        header = "\t".join(("direction", "n") + self.columns)
        row = "\t".join([self.direction, str(self.sample_count)] + [f"{self.metrics[c]:.4f}" for c in self.columns])
        return header + "\n" + row + "\n"


def evaluate_mol2cap(references, hypotheses) -> EvalReport:
    scores = {
        "bleu2": M.bleu(references, hypotheses, 2),
        "bleu4": M.bleu(references, hypotheses, 4),
        "rouge1": M.rouge(references, hypotheses, "1"),
        "rouge2": M.rouge(references, hypotheses, "2"),
        "rougeL": M.rouge(references, hypotheses, "L"),
        "meteor": M.meteor(references, hypotheses),
    }
    return EvalReport("mol2cap", scores, len(references), 0)


def evaluate_cap2mol(references, hypotheses) -> EvalReport:
    scores = {
        "bleu": M.bleu(references, hypotheses, 4, tokenizer=M.char_tokens),
        "exact_match": M.exact_match(references, hypotheses),
        "levenshtein": M.mean_levenshtein(references, hypotheses),
        "maccs_fts": M.fingerprint_fts(references, hypotheses, "maccs"),
        "rdk_fts": M.fingerprint_fts(references, hypotheses, "rdk"),
        "morgan_fts": M.fingerprint_fts(references, hypotheses, "morgan"),
        "validity": M.validity(hypotheses),
    }
    invalid = sum(1 for h in hypotheses if not M.is_valid(h))
    return EvalReport("cap2mol", scores, len(references), invalid)


def pair_by_id(references: Mapping[str, str], predictions: Mapping[str, str]) -> tuple[list[str], list[str], list[str]]:
    """Align two id-keyed maps; any id present on one side only is an error."""
    missing = sorted(set(references) - set(predictions))
    extra = sorted(set(predictions) - set(references))
    if missing or extra:
        raise M.LengthMismatch(
            f"id sets differ: missing predictions for {missing[:20]}, unexpected predictions for {extra[:20]}"
        )
    ids = sorted(references, key=natural_key)
    return ids, [references[i] for i in ids], [predictions[i] for i in ids]


def evaluate(direction: str, references: Mapping[str, str], predictions: Mapping[str, str]) -> EvalReport:
    _, refs, hyps = pair_by_id(references, predictions)
    if direction == "mol2cap":
        return evaluate_mol2cap(refs, hyps)
    if direction == "cap2mol":
        return evaluate_cap2mol(refs, hyps)
    raise ValueError(f"unknown direction {direction!r}")


def read_id_text(path: str | Path, field: str) -> dict[str, str]:
    """JSONL rows of {id, <field>} as a dict; duplicate ids are rejected."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            row = json.loads(line)
            if "id" not in row or field not in row:
                raise ValueError(f"{path}:{line_no}: expected fields 'id' and {field!r}")
            key = str(row["id"])
            if key in out:
                raise ValueError(f"{path}:{line_no}: duplicate id {key!r}")
            out[key] = row[field]
    return out
