"""Equivalent-SMILES robustness probes over a test set."""

from __future__ import annotations

from dataclasses import replace
from typing import Sequence

from ..chem import (
    NoKekuleAssignment,
    SmilesError,
    add_explicit_hydrogens,
    canonical_smiles,
    kekulize,
    parse_smiles,
    renumber_ring_closures,
    write_smiles,
)
from ..fingerprints import fnv1a_64
from ..pipeline import DatasetItem

PROBE_KINDS = ("canonical", "hydrogen", "kekulization", "cycles")


class ProbeError(ValueError):
    def __init__(self, item_id: str, kind: str, cause: Exception):
        self.item_id = item_id
        super().__init__(f"{kind} probe failed on {item_id!r}: {cause}")


def item_seed(seed: int, item_id: str) -> int:
    return fnv1a_64(f"{seed}:{item_id}") & 0x7FFFFFFF


def transform_smiles(smiles: str, kind: str, seed: int = 0) -> str:
    if kind == "canonical":
        return canonical_smiles(smiles)
    if kind == "hydrogen":
        return write_smiles(add_explicit_hydrogens(parse_smiles(smiles)))
    if kind == "kekulization":
        return write_smiles(kekulize(parse_smiles(smiles)))
    if kind == "cycles":
        return renumber_ring_closures(smiles, seed=seed)
    raise ValueError(f"unknown probe kind {kind!r}")


def probe_testset(items: Sequence[DatasetItem], kind: str, seed: int = 0) -> list[DatasetItem]:
    """Replace every SMILES by an equivalent variant; captions are untouched."""
    if kind not in PROBE_KINDS:
        raise ValueError(f"unknown probe kind {kind!r}")
    out = []
    for item in items:
        try:
            smiles = transform_smiles(item.smiles, kind, item_seed(seed, item.id))
        except (SmilesError, NoKekuleAssignment, ValueError) as exc:
            raise ProbeError(item.id, kind, exc) from exc
        out.append(replace(item, smiles=smiles))
    return out
