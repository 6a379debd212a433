"""Canonical atom ranking and canonical SMILES.

Atoms start from a lexicographic invariant, are refined by neighborhood
classes until the partition is stable, and remaining ties are broken by trying
each member of the first tied class and keeping the smallest output string.
Stereo annotations are emitted but never used for ranking.
"""

from __future__ import annotations

from dataclasses import dataclass

from .graph import MoleculeGraph, renumber_atoms
from .writer import write_smiles

# Upper bound on tie-break leaves explored per component; past it the first
# member of each tied class is taken.
TIE_BREAK_BUDGET = 256


@dataclass(frozen=True)
class CanonicalSmiles:
    text: str

    def __str__(self):
        return self.text


def _initial_invariant(graph: MoleculeGraph, i: int) -> tuple:
    a = graph.atoms[i]
    return (
        a.element,
        a.charge,
        graph.degree(i),
        a.hcount,
        a.aromatic,
        a.isotope or 0,
        a.atom_class or 0,
    )


def _dense_ranks(keys: list) -> list[int]:
    ordered = sorted(set(keys))
    index = {k: r for r, k in enumerate(ordered)}
    return [index[k] for k in keys]


def refine(graph: MoleculeGraph, ranks: list[int]) -> list[int]:
    """Split rank classes by the multiset of (bond, neighbor rank) until stable."""
    classes = len(set(ranks))
    while True:
        keys = []
        for i in range(len(graph.atoms)):
            env = sorted((graph.bonds[b].code, ranks[nbr]) for nbr, b in graph.adjacency[i])
            keys.append((ranks[i], tuple(env)))
        new = _dense_ranks(keys)
        new_classes = len(set(new))
        if new_classes == classes:
            return new
        ranks, classes = new, new_classes


def canonical_ranks(graph: MoleculeGraph) -> list[int]:
    """Stable (refined) ranks; ties are left in place."""
    keys = [_initial_invariant(graph, i) for i in range(len(graph.atoms))]
    return refine(graph, _dense_ranks(keys))


def _break_ties(graph: MoleculeGraph, ranks: list[int], budget: list[int]) -> str:
    n = len(ranks)
    if len(set(ranks)) == n:
        order = sorted(range(n), key=lambda i: ranks[i])
        budget[0] -= 1
        return write_smiles(graph, order)
    counts: dict[int, int] = {}
    for r in ranks:
        counts[r] = counts.get(r, 0) + 1
    tied = min(r for r, c in counts.items() if c > 1)
    members = []
    seen_neighborhoods = set()
    for i in range(n):
        if ranks[i] != tied:
            continue
        # atoms with identical neighborhoods are interchangeable; trying one suffices
        hood = frozenset((nbr, graph.bonds[b].code) for nbr, b in graph.adjacency[i])
        if hood in seen_neighborhoods:
            continue
        seen_neighborhoods.add(hood)
        members.append(i)
    best = None
    for atom in members:
        if best is not None and budget[0] <= 0:
            break
        split = [2 * r for r in ranks]
        split[atom] -= 1
        text = _break_ties(graph, refine(graph, _dense_ranks(split)), budget)
        if best is None or text < best:
            best = text
    return best


def _canonical_component(graph: MoleculeGraph) -> str:
    return _break_ties(graph, canonical_ranks(graph), [TIE_BREAK_BUDGET])


def canonicalize(graph: MoleculeGraph) -> CanonicalSmiles:
    """Canonical SMILES: one string per connected component, sorted and dot-joined."""
    parts = []
    for comp in graph.components:
        if len(graph.components) == 1:
            sub = graph
        else:
            sub = _subgraph(graph, comp)
        parts.append(_canonical_component(sub))
    parts.sort()
    return CanonicalSmiles(".".join(parts))


def _subgraph(graph: MoleculeGraph, members) -> MoleculeGraph:
    members = list(members)
    inside = set(members)
    rest = [i for i in range(len(graph.atoms)) if i not in inside]
    moved = renumber_atoms(graph, members + rest)
    k = len(members)
    bonds = tuple(b for b in moved.bonds if b.begin < k and b.end < k)
    return MoleculeGraph(moved.atoms[:k], bonds, graph.source_text)


def canonical_smiles(text: str) -> str:
    """Parse and canonicalize in one step."""
    from .parser import parse_smiles

    return canonicalize(parse_smiles(text)).text
