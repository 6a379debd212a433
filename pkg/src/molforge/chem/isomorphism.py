"""Graph isomorphism between molecules, used as an oracle for round trips and probes."""

from __future__ import annotations

import networkx as nx
from networkx.algorithms import isomorphism as nxiso

from .graph import IMPLICIT_H, MoleculeGraph, heavy_atom_graph
from .writer import _permutation_parity


def _to_nx(graph: MoleculeGraph, bond_orders: bool) -> nx.Graph:
    g = nx.Graph()
    for i, a in enumerate(graph.atoms):
        label = (a.element, a.charge, a.hcount, a.isotope)
        if bond_orders:
            label += (a.aromatic,)
        g.add_node(i, label=label)
    for b in graph.bonds:
        g.add_edge(b.begin, b.end, label=b.code if bond_orders else "-")
    return g


def _stereo_consistent(a: MoleculeGraph, b: MoleculeGraph, mapping: dict[int, int]) -> bool:
    for i, atom in enumerate(a.atoms):
        other = b.atoms[mapping[i]]
        has_a = atom.chirality is not None and atom.chiral_ref is not None
        has_b = other.chirality is not None and other.chiral_ref is not None
        if has_a != has_b:
            return False
        if not has_a:
            continue
        mapped = [r if r == IMPLICIT_H else mapping[r] for r in atom.chiral_ref]
        if sorted(mapped) != sorted(other.chiral_ref):
            return False
        same = atom.chirality == other.chirality
        if _permutation_parity(mapped, list(other.chiral_ref)) == (0 if same else 1):
            continue
        return False

    for bond in a.bonds:
        other = b.bond_between(mapping[bond.begin], mapping[bond.end])
        if (bond.stereo is None) != (other.stereo is None):
            return False
        if bond.stereo is None:
            continue
        x, y, rel = bond.stereo
        mx, my = mapping[x], mapping[y]
        ox, oy, orel = other.stereo
        if other.begin != mapping[bond.begin]:
            ox, oy = oy, ox
        flips = (mx != ox) + (my != oy)
        expected = rel if flips % 2 == 0 else ("cis" if rel == "trans" else "trans")
        if expected != orel:
            return False
    return True


def isomorphism_mapping(
    a: MoleculeGraph,
    b: MoleculeGraph,
    *,
    heavy_atoms: bool = False,
    bond_orders: bool = True,
    stereo: bool = False,
) -> dict[int, int] | None:
    """An atom mapping a -> b preserving the compared attributes, or None.

    ``heavy_atoms`` folds explicit hydrogens into H counts first.
    ``bond_orders=False`` compares connectivity only, ignoring bond orders and
    aromatic flags (used for kekulized forms).
    """
    if heavy_atoms:
        a, b = heavy_atom_graph(a), heavy_atom_graph(b)
    if len(a.atoms) != len(b.atoms) or len(a.bonds) != len(b.bonds):
        return None
    ga, gb = _to_nx(a, bond_orders), _to_nx(b, bond_orders)
    matcher = nxiso.GraphMatcher(
        ga,
        gb,
        node_match=lambda x, y: x["label"] == y["label"],
        edge_match=lambda x, y: x["label"] == y["label"],
    )
    for mapping in matcher.isomorphisms_iter():
        if not stereo or _stereo_consistent(a, b, mapping):
            return mapping
    return None


def graph_isomorphic(a: MoleculeGraph, b: MoleculeGraph, **kwargs) -> bool:
    """True iff an atom bijection preserves element, charge, aromaticity, H count and bonds."""
    return isomorphism_mapping(a, b, **kwargs) is not None
