"""Attributed molecular graph shared by every chemistry routine."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

from .elements import allowed_valences
from .errors import GraphInvariantError

IMPLICIT_H = -1  # placeholder for an implicit hydrogen in a chirality reference order


@dataclass(frozen=True)
class Atom:
    element: str
    charge: int = 0
    hcount: int = 0
    aromatic: bool = False
    isotope: int | None = None
    # '@' or '@@', read against ``chiral_ref`` (neighbor indices, IMPLICIT_H for an H)
    chirality: str | None = None
    chiral_ref: tuple[int, ...] | None = None
    atom_class: int | None = None


@dataclass(frozen=True)
class Bond:
    begin: int
    end: int
    order: int = 1
    aromatic: bool = False
    # Double-bond geometry: (neighbor of begin, neighbor of end, "cis" | "trans")
    stereo: tuple[int, int, str] | None = None

    def other(self, atom: int) -> int:
        return self.end if atom == self.begin else self.begin

    @property
    def code(self) -> str:
        return "a" if self.aromatic else str(self.order)

    @property
    def valence_contribution(self) -> int:
        return 1 if self.aromatic else self.order


@dataclass(frozen=True)
class MoleculeGraph:
    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]
    source_text: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "bonds", tuple(self.bonds))
        n = len(self.atoms)
        seen = set()
        for bond in self.bonds:
            a, b = bond.begin, bond.end
            if a == b or not (0 <= a < n and 0 <= b < n):
                raise GraphInvariantError(f"bad bond endpoints ({a}, {b})")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise GraphInvariantError(f"duplicate bond between {a} and {b}")
            seen.add(key)
            if bond.aromatic and not (self.atoms[a].aromatic and self.atoms[b].aromatic):
                raise GraphInvariantError(f"aromatic bond ({a}, {b}) joins a non-aromatic atom")
            if bond.order not in (1, 2, 3, 4):
                raise GraphInvariantError(f"bond order {bond.order} out of range")

    def __len__(self):
        return len(self.atoms)

    @cached_property
    def adjacency(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """Per atom, ``(neighbor, bond index)`` pairs in bond order."""
        adj: list[list[tuple[int, int]]] = [[] for _ in self.atoms]
        for idx, bond in enumerate(self.bonds):
            adj[bond.begin].append((bond.end, idx))
            adj[bond.end].append((bond.begin, idx))
        return tuple(tuple(x) for x in adj)

    @cached_property
    def bond_index(self) -> dict[tuple[int, int], int]:
        out = {}
        for idx, bond in enumerate(self.bonds):
            out[(bond.begin, bond.end)] = idx
            out[(bond.end, bond.begin)] = idx
        return out

    def neighbors(self, atom: int) -> list[int]:
        return [nbr for nbr, _ in self.adjacency[atom]]

    def bond_between(self, a: int, b: int) -> Bond | None:
        idx = self.bond_index.get((a, b))
        return None if idx is None else self.bonds[idx]

    def degree(self, atom: int) -> int:
        return len(self.adjacency[atom])

    def bond_sum(self, atom: int) -> int:
        return sum(self.bonds[b].valence_contribution for _, b in self.adjacency[atom])

    def heavy_degree(self, atom: int) -> int:
        return sum(1 for nbr, _ in self.adjacency[atom] if self.atoms[nbr].element != "H")

    def total_hydrogens(self, atom: int) -> int:
        explicit = sum(1 for nbr, _ in self.adjacency[atom] if self.atoms[nbr].element == "H")
        return self.atoms[atom].hcount + explicit

    @cached_property
    def components(self) -> tuple[tuple[int, ...], ...]:
        """Connected components, each sorted, ordered by their smallest atom."""
        seen = [False] * len(self.atoms)
        comps = []
        for start in range(len(self.atoms)):
            if seen[start]:
                continue
            stack = [start]
            seen[start] = True
            members = []
            while stack:
                v = stack.pop()
                members.append(v)
                for nbr, _ in self.adjacency[v]:
                    if not seen[nbr]:
                        seen[nbr] = True
                        stack.append(nbr)
            comps.append(tuple(sorted(members)))
        return tuple(comps)

    @cached_property
    def ring_bonds(self) -> frozenset[int]:
        """Indices of bonds lying on at least one cycle (the non-bridges)."""
        n = len(self.atoms)
        disc = [-1] * n
        low = [0] * n
        bridges = set()
        timer = 0
        for root in range(n):
            if disc[root] != -1:
                continue
            disc[root] = low[root] = timer
            timer += 1
            # frames: (vertex, bond used to enter it, neighbor iterator position)
            stack = [(root, -1, 0)]
            while stack:
                v, via, pos = stack[-1]
                adj = self.adjacency[v]
                if pos < len(adj):
                    stack[-1] = (v, via, pos + 1)
                    nbr, bidx = adj[pos]
                    if bidx == via:
                        continue
                    if disc[nbr] == -1:
                        disc[nbr] = low[nbr] = timer
                        timer += 1
                        stack.append((nbr, bidx, 0))
                    else:
                        low[v] = min(low[v], disc[nbr])
                else:
                    stack.pop()
                    if stack:
                        parent = stack[-1][0]
                        low[parent] = min(low[parent], low[v])
                        if low[v] > disc[parent]:
                            bridges.add(via)
        return frozenset(i for i in range(len(self.bonds)) if i not in bridges)

    @cached_property
    def ring_atoms(self) -> frozenset[int]:
        out = set()
        for idx in self.ring_bonds:
            out.add(self.bonds[idx].begin)
            out.add(self.bonds[idx].end)
        return frozenset(out)

    def with_atoms(self, atoms, bonds=None) -> "MoleculeGraph":
        return MoleculeGraph(tuple(atoms), tuple(self.bonds if bonds is None else bonds), self.source_text)


def valence_violations(graph: MoleculeGraph) -> list[int]:
    """Atoms whose bond orders plus hydrogens exceed the largest allowed valence."""
    bad = []
    for i, atom in enumerate(graph.atoms):
        allowed = allowed_valences(atom.element, atom.charge)
        if allowed is None:
            continue
        if graph.bond_sum(i) + atom.hcount > max(allowed):
            bad.append(i)
    return bad


def needs_double_bond(graph: MoleculeGraph, atom: int) -> bool:
    """Whether an aromatic atom must receive one double bond when kekulized."""
    a = graph.atoms[atom]
    if not a.aromatic:
        return False
    allowed = allowed_valences(a.element, a.charge)
    if allowed is None:
        return False
    used = graph.bond_sum(atom) + a.hcount
    return used + 1 in allowed


def renumber_atoms(graph: MoleculeGraph, order) -> MoleculeGraph:
    """Relabel atoms so that new atom ``k`` is old atom ``order[k]``."""
    order = list(order)
    if sorted(order) != list(range(len(graph.atoms))):
        raise ValueError("order must be a permutation of atom indices")
    new_of = {old: new for new, old in enumerate(order)}

    def remap(i):
        return i if i == IMPLICIT_H else new_of[i]

    atoms = []
    for old in order:
        atom = graph.atoms[old]
        if atom.chiral_ref is not None:
            atom = replace(atom, chiral_ref=tuple(remap(i) for i in atom.chiral_ref))
        atoms.append(atom)
    bonds = []
    for bond in graph.bonds:
        stereo = bond.stereo
        if stereo is not None:
            stereo = (new_of[stereo[0]], new_of[stereo[1]], stereo[2])
        bonds.append(replace(bond, begin=new_of[bond.begin], end=new_of[bond.end], stereo=stereo))
    return MoleculeGraph(tuple(atoms), tuple(bonds), graph.source_text)


def _is_foldable_hydrogen(graph: MoleculeGraph, i: int) -> bool:
    atom = graph.atoms[i]
    if atom.element != "H" or atom.isotope is not None or atom.charge != 0 or atom.hcount:
        return False
    if graph.degree(i) != 1:
        return False
    nbr = graph.adjacency[i][0][0]
    return graph.atoms[nbr].element != "H" and graph.bonds[graph.adjacency[i][0][1]].order == 1


def heavy_atom_graph(graph: MoleculeGraph) -> MoleculeGraph:
    """Fold explicit hydrogen atoms back into their neighbors' H counts."""
    drop = {i for i in range(len(graph.atoms)) if _is_foldable_hydrogen(graph, i)}
    if not drop:
        return graph
    keep = [i for i in range(len(graph.atoms)) if i not in drop]
    new_of = {old: new for new, old in enumerate(keep)}
    extra = [0] * len(graph.atoms)
    for h in drop:
        extra[graph.adjacency[h][0][0]] += 1

    atoms = []
    for old in keep:
        atom = graph.atoms[old]
        ref = atom.chiral_ref
        if ref is not None:
            ref = tuple(-1 if (r == IMPLICIT_H or r in drop) else new_of[r] for r in ref)
        atoms.append(replace(atom, hcount=atom.hcount + extra[old], chiral_ref=ref))

    bonds = []
    for bond in graph.bonds:
        if bond.begin in drop or bond.end in drop:
            continue
        stereo = bond.stereo
        if stereo is not None:
            stereo = _reroute_stereo(graph, bond, stereo, drop)
            if stereo is not None:
                stereo = (new_of[stereo[0]], new_of[stereo[1]], stereo[2])
        bonds.append(replace(bond, begin=new_of[bond.begin], end=new_of[bond.end], stereo=stereo))
    return MoleculeGraph(tuple(atoms), tuple(bonds), graph.source_text)


def _reroute_stereo(graph, bond, stereo, drop):
    """Swap a dropped hydrogen reference for the other substituent on that side."""
    x, y, rel = stereo
    flips = 0
    for side, ref in ((bond.begin, x), (bond.end, y)):
        if ref not in drop:
            continue
        others = [n for n in graph.neighbors(side) if n != bond.other(side) and n != ref and n not in drop]
        if not others:
            return None
        if side == bond.begin:
            x = others[0]
        else:
            y = others[0]
        flips += 1
    if flips % 2:
        rel = "cis" if rel == "trans" else "trans"
    return (x, y, rel)
