"""SMILES parsing, writing, canonicalization and equivalence transforms."""

from .canon import CanonicalSmiles, canonical_ranks, canonical_smiles, canonicalize
from .errors import (
    EmptyInput,
    GraphInvariantError,
    NoKekuleAssignment,
    SmilesError,
    SmilesSyntaxError,
    UnbalancedParenthesis,
    UnknownElement,
    UnmatchedRingClosure,
    ValenceViolation,
)
from .graph import Atom, Bond, MoleculeGraph, heavy_atom_graph, renumber_atoms
from .isomorphism import graph_isomorphic, isomorphism_mapping
from .parser import parse_smiles, tokenize_smiles
from .transforms import (
    add_explicit_hydrogens,
    is_valid_smiles,
    kekulize,
    renumber_ring_closures,
    resonance_normalize,
)
from .writer import write_smiles

__all__ = [
    "Atom",
    "Bond",
    "CanonicalSmiles",
    "EmptyInput",
    "GraphInvariantError",
    "MoleculeGraph",
    "NoKekuleAssignment",
    "SmilesError",
    "SmilesSyntaxError",
    "UnbalancedParenthesis",
    "UnknownElement",
    "UnmatchedRingClosure",
    "ValenceViolation",
    "add_explicit_hydrogens",
    "canonical_ranks",
    "canonical_smiles",
    "canonicalize",
    "graph_isomorphic",
    "heavy_atom_graph",
    "is_valid_smiles",
    "isomorphism_mapping",
    "kekulize",
    "parse_smiles",
    "renumber_atoms",
    "renumber_ring_closures",
    "resonance_normalize",
    "tokenize_smiles",
    "write_smiles",
]
