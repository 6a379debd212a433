"""Equivalence-preserving SMILES transforms: explicit H, kekulization, ring relabeling."""

from __future__ import annotations

import random
from dataclasses import replace

from .errors import NoKekuleAssignment, SmilesError
from .graph import IMPLICIT_H, Atom, Bond, MoleculeGraph, needs_double_bond
from .parser import parse_smiles, tokenize_smiles


def add_explicit_hydrogens(graph: MoleculeGraph) -> MoleculeGraph:
    """Turn every implicit hydrogen into an H atom joined by a single bond.

    New H atoms are appended after the heavy atoms, in heavy-atom order.
    """
    atoms = list(graph.atoms)
    bonds = list(graph.bonds)
    for i, atom in enumerate(graph.atoms):
        if atom.hcount == 0:
            continue
        first_h = len(atoms)
        for _ in range(atom.hcount):
            bonds.append(Bond(i, len(atoms), 1))
            atoms.append(Atom("H"))
        ref = atom.chiral_ref
        if ref is not None:
            ref = tuple(first_h if r == IMPLICIT_H else r for r in ref)
        atoms[i] = replace(atom, hcount=0, chiral_ref=ref)
    return MoleculeGraph(tuple(atoms), tuple(bonds), graph.source_text)


def _kekule_matching(graph: MoleculeGraph, needy: set[int]) -> dict[int, int] | None:
    """Perfect matching over aromatic bonds between atoms that need a double bond.

    Backtracking search, always extending the atom with the fewest free
    partners; exact, which is cheap for ring systems of ordinary size.
    """
    options: dict[int, list[int]] = {}
    for i in needy:
        options[i] = sorted(
            nbr for nbr, b in graph.adjacency[i] if graph.bonds[b].aromatic and nbr in needy
        )
    mate: dict[int, int] = {}

    def free_options(i):
        return [j for j in options[i] if j not in mate]

    def solve() -> bool:
        unmatched = [i for i in needy if i not in mate]
        if not unmatched:
            return True
        best = min(unmatched, key=lambda i: (len(free_options(i)), i))
        for j in free_options(best):
            mate[best] = j
            mate[j] = best
            if solve():
                return True
            del mate[best]
            del mate[j]
        return False

    return mate if solve() else None


def kekulize(graph: MoleculeGraph) -> MoleculeGraph:
    """Replace aromatic bonds with an explicit single/double assignment."""
    if not any(b.aromatic for b in graph.bonds) and not any(a.aromatic for a in graph.atoms):
        return graph
    needy = {i for i in range(len(graph.atoms)) if needs_double_bond(graph, i)}
    if len(needy) % 2:
        raise NoKekuleAssignment("odd number of aromatic atoms need a double bond")
    mate = _kekule_matching(graph, needy)
    if mate is None:
        raise NoKekuleAssignment("no alternating bond assignment exists")
    bonds = []
    for bond in graph.bonds:
        if bond.aromatic:
            order = 2 if mate.get(bond.begin) == bond.end else 1
            bond = replace(bond, order=order, aromatic=False)
        bonds.append(bond)
    atoms = [replace(a, aromatic=False) if a.aromatic else a for a in graph.atoms]
    return MoleculeGraph(tuple(atoms), tuple(bonds), graph.source_text)


def _has_perfect_matching(nodes: set[int], edges: list[tuple[int, int]]) -> bool:
    options: dict[int, list[int]] = {v: [] for v in nodes}
    for a, b in edges:
        if a in nodes and b in nodes:
            options[a].append(b)
            options[b].append(a)
    mate: set[int] = set()

    def solve() -> bool:
        free = [v for v in nodes if v not in mate]
        if not free:
            return True
        best = min(free, key=lambda v: (sum(1 for w in options[v] if w not in mate), v))
        for w in options[best]:
            if w in mate:
                continue
            mate.update((best, w))
            if solve():
                return True
            mate.difference_update((best, w))
        return False

    return solve()


def resonance_normalize(graph: MoleculeGraph) -> MoleculeGraph:
    """Mark bonds whose order differs between Kekule structures as aromatic.

    Works on a kekulized graph. Atoms carrying exactly one double bond (and no
    triple bond) form the conjugated set; a double/single bond between two such
    atoms is resonant when some perfect matching of the set contains it and
    another one does not. Every Kekule structure of a molecule, and its
    aromatic spelling after kekulization, maps to the same graph.
    """
    graph = kekulize(graph)
    conjugated = set()
    for i in range(len(graph.atoms)):
        orders = [graph.bonds[b].order for _, b in graph.adjacency[i]]
        if orders.count(2) == 1 and max(orders) == 2:
            conjugated.add(i)
    candidates = [
        idx
        for idx, b in enumerate(graph.bonds)
        if b.order in (1, 2) and b.begin in conjugated and b.end in conjugated
    ]
    # split the conjugated set into connected systems; each is matched on its own
    system = {v: v for v in conjugated}

    def root(v):
        while system[v] != v:
            system[v] = system[system[v]]
            v = system[v]
        return v

    for idx in candidates:
        system[root(graph.bonds[idx].begin)] = root(graph.bonds[idx].end)
    members: dict[int, set[int]] = {}
    for v in conjugated:
        members.setdefault(root(v), set()).add(v)
    resonant = set()
    for idx in candidates:
        b = graph.bonds[idx]
        if idx not in graph.ring_bonds:
            continue
        nodes = members[root(b.begin)]
        edges = [
            (graph.bonds[k].begin, graph.bonds[k].end)
            for k in candidates
            if graph.bonds[k].begin in nodes and k != idx
        ]
        if b.order == 2:
            # can the double bond move away?
            moved = _has_perfect_matching(nodes, edges)
        else:
            moved = _has_perfect_matching(nodes - {b.begin, b.end}, edges)
        if moved:
            resonant.add(idx)
    if not resonant:
        return graph
    bonds = [
        replace(b, order=1, aromatic=True, stereo=None) if i in resonant else b for i, b in enumerate(graph.bonds)
    ]
    ring_atoms = {a for i in resonant for a in (graph.bonds[i].begin, graph.bonds[i].end)}
    atoms = [replace(a, aromatic=True) if i in ring_atoms else a for i, a in enumerate(graph.atoms)]
    return MoleculeGraph(tuple(atoms), tuple(bonds), graph.source_text)


def is_valid_smiles(text: str) -> bool:
    """Parse success, valence check, and a Kekulé assignment for aromatic systems."""
    try:
        graph = parse_smiles(text)
        kekulize(graph)
    except (SmilesError, NoKekuleAssignment):
        return False
    return True


def _label_text(label: int) -> str:
    return str(label) if label < 10 else f"%{label:02d}"


def renumber_ring_closures(
    text: str, seed: int = 0, mapping: dict[int, int] | None = None
) -> str:
    """Relabel ring-closure identifiers; every other token is left untouched.

    Without ``mapping`` a seed-deterministic injective relabeling is drawn,
    preferring labels not already used in the string.
    """
    parse_smiles(text)
    tokens = tokenize_smiles(text)
    labels = []
    for tok in tokens:
        if tok.kind == "ring":
            label = int(tok.text.lstrip("%"))
            if label not in labels:
                labels.append(label)
    if mapping is None:
        rng = random.Random(seed)
        pool = [x for x in range(100) if x not in labels]
        if len(pool) < len(labels):
            pool = list(range(100))
        mapping = dict(zip(labels, rng.sample(pool, len(labels))))
    else:
        mapping = {**{x: x for x in labels}, **mapping}
        targets = [mapping[x] for x in labels]
        if len(set(targets)) != len(targets):
            raise ValueError("ring-closure mapping is not injective")
        if any(not 0 <= t <= 99 for t in targets):
            raise ValueError("ring-closure labels must lie in 0..99")

    out = []
    for tok in tokens:
        if tok.kind == "ring":
            out.append(_label_text(mapping[int(tok.text.lstrip("%"))]))
        else:
            out.append(tok.text)
    return "".join(out)
