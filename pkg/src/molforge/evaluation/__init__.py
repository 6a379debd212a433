"""Translation metrics, robustness probes and report rendering."""

from .metrics import (
    EmptyCorpus,
    LengthMismatch,
    bleu,
    exact_match,
    fingerprint_fts,
    levenshtein,
    meteor,
    rouge,
    validity,
)
from .probes import PROBE_KINDS, ProbeError, probe_testset, transform_smiles
from .report import EvalReport, evaluate, evaluate_cap2mol, evaluate_mol2cap

__all__ = [
    "PROBE_KINDS",
    "EmptyCorpus",
    "EvalReport",
    "LengthMismatch",
    "ProbeError",
    "bleu",
    "evaluate",
    "evaluate_cap2mol",
    "evaluate_mol2cap",
    "exact_match",
    "fingerprint_fts",
    "levenshtein",
    "meteor",
    "probe_testset",
    "rouge",
    "transform_smiles",
    "validity",
]
