"""Depth-first SMILES emission over a caller-supplied atom priority order."""

from __future__ import annotations

import sys

from .elements import ORGANIC_SUBSET, WILDCARD, implicit_hydrogens
from .graph import IMPLICIT_H, MoleculeGraph

_ORDER_SYMBOL = {1: "", 2: "=", 3: "#", 4: "$"}


def _flip(char: str) -> str:
    return "\\" if char == "/" else "/"


def _permutation_parity(ref: list, emitted: list) -> int:
    pos = {v: i for i, v in enumerate(ref)}
    seq = [pos[v] for v in emitted]
    inversions = 0
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                inversions += 1
    return inversions % 2


def _charge_text(charge: int) -> str:
    if charge == 0:
        return ""
    sign = "+" if charge > 0 else "-"
    return sign if abs(charge) == 1 else f"{sign}{abs(charge)}"


class _Plan:
    """DFS spanning forest, ring closures and per-atom emission details."""

    def __init__(self, graph: MoleculeGraph, order: list[int]):
        self.g = graph
        self.rank = {atom: r for r, atom in enumerate(order)}
        n = len(graph.atoms)
        self.parent = [-1] * n
        self.parent_bond = [-1] * n
        self.children: list[list[int]] = [[] for _ in range(n)]
        self.ring_open: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        self.ring_close: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        self.preorder = [-1] * n
        self.roots: list[int] = []
        self.first_atom: dict[int, int] = {}
        counter = 0
        for start in order:
            if self.preorder[start] != -1:
                continue
            self.roots.append(start)
            counter = self._dfs(start, counter)
        for atom in range(n):
            self.ring_close[atom].sort(key=lambda rb: self.preorder[rb[0]])
            self.ring_open[atom].sort(key=lambda rb: self.preorder[rb[0]])

    def _dfs(self, start: int, counter: int) -> int:
        g = self.g
        registered: set[int] = set()
        self.preorder[start] = counter
        counter += 1
        stack = [(start, iter(sorted(g.adjacency[start], key=lambda nb: self.rank[nb[0]])))]
        while stack:
            v, it = stack[-1]
            advanced = False
            for nbr, bidx in it:
                if bidx == self.parent_bond[v] or bidx in registered:
                    continue
                if self.preorder[nbr] == -1:
                    self.parent[nbr] = v
                    self.parent_bond[nbr] = bidx
                    self.children[v].append(nbr)
                    self.first_atom[bidx] = v
                    self.preorder[nbr] = counter
                    counter += 1
                    stack.append((nbr, iter(sorted(g.adjacency[nbr], key=lambda nb: self.rank[nb[0]]))))
                    advanced = True
                    break
                # back edge: nbr is an ancestor that opens the ring
                registered.add(bidx)
                self.ring_open[nbr].append((v, bidx))
                self.ring_close[v].append((nbr, bidx))
                self.first_atom[bidx] = nbr
            if not advanced:
                stack.pop()
        return counter

    def emitted_neighbors(self, atom: int, h_in_bracket: bool) -> list[int]:
        """Neighbor order as it will appear in the output string."""
        out = []
        if self.parent[atom] != -1:
            out.append(self.parent[atom])
        if h_in_bracket:
            out.append(IMPLICIT_H)
        out.extend(nbr for nbr, _ in self.ring_close[atom])
        out.extend(nbr for nbr, _ in self.ring_open[atom])
        out.extend(self.children[atom])
        return out


def _chirality(graph: MoleculeGraph, plan: _Plan, atom: int) -> str | None:
    a = graph.atoms[atom]
    if a.chirality is None or a.chiral_ref is None:
        return None
    ref = list(a.chiral_ref)
    emitted = plan.emitted_neighbors(atom, h_in_bracket=a.hcount == 1)
    if sorted(ref) != sorted(emitted) or len(ref) not in (3, 4):
        return None
    if _permutation_parity(ref, emitted):
        return "@@" if a.chirality == "@" else "@"
    return a.chirality


def _directional_marks(graph: MoleculeGraph, plan: _Plan) -> dict[int, str]:
    """Pick ``/`` ``\\`` markers (relative to bond.begin -> bond.end) for stereo double bonds."""
    marks: dict[int, str] = {}

    def rel_for(bidx: int, from_atom: int) -> str | None:
        if bidx not in marks:
            return None
        char = marks[bidx]
        return char if graph.bonds[bidx].begin == from_atom else _flip(char)

    def set_rel(bidx: int, from_atom: int, rel: str):
        marks[bidx] = rel if graph.bonds[bidx].begin == from_atom else _flip(rel)

    stereo_bonds = [i for i, b in enumerate(graph.bonds) if b.stereo is not None and b.order == 2 and not b.aromatic]
    stereo_bonds.sort(key=lambda i: min(plan.preorder[graph.bonds[i].begin], plan.preorder[graph.bonds[i].end]))

    for idx in stereo_bonds:
        bond = graph.bonds[idx]
        x_ref, y_ref, relation = bond.stereo
        chosen = []
        for end, ref in ((bond.begin, x_ref), (bond.end, y_ref)):
            candidates = []
            for nbr, bidx in graph.adjacency[end]:
                if bidx == idx:
                    continue
                b = graph.bonds[bidx]
                if b.order != 1 or b.aromatic:
                    continue
                candidates.append((bidx not in marks, plan.preorder[nbr], nbr, bidx))
            if not candidates:
                chosen = None
                break
            candidates.sort()
            _, _, nbr, bidx = candidates[0]
            chosen.append((end, nbr, bidx, nbr != ref))
        if chosen is None:
            continue
        (ea, xa, ba, flip_a), (eb, xb, bb, flip_b) = chosen
        rel = relation
        if flip_a != flip_b:
            rel = "cis" if rel == "trans" else "trans"
        ra, rb = rel_for(ba, ea), rel_for(bb, eb)
        if ra is None and rb is None:
            # the first directional bond in output order is written as "/"
            def written_from(bidx):
                b = graph.bonds[bidx]
                return min(b.begin, b.end, key=lambda a: plan.preorder[a])

            first = min((ba, bb), key=lambda b: plan.preorder[written_from(b)])
            set_rel(first, written_from(first), "/")
            ra, rb = rel_for(ba, ea), rel_for(bb, eb)
        if ra is None:
            ra = rb if rel == "cis" else _flip(rb)
            set_rel(ba, ea, ra)
        elif rb is None:
            rb = ra if rel == "cis" else _flip(ra)
            set_rel(bb, eb, rb)
        # when both were fixed by earlier bonds and disagree the geometry is dropped
    return marks


def _atom_text(graph: MoleculeGraph, atom: int, chirality: str | None) -> str:
    a = graph.atoms[atom]
    symbol = a.element.lower() if a.aromatic else a.element
    organic = a.element in ORGANIC_SUBSET or a.element == WILDCARD
    if organic and a.charge == 0 and a.isotope is None and a.atom_class is None and chirality is None:
        if a.element == WILDCARD:
            expected = 0
        else:
            expected = implicit_hydrogens(a.element, a.aromatic, graph.bond_sum(atom))
        if a.hcount == expected:
            return symbol
    parts = ["["]
    if a.isotope is not None:
        parts.append(str(a.isotope))
    parts.append(symbol)
    if chirality:
        parts.append(chirality)
    if a.hcount:
        parts.append("H" if a.hcount == 1 else f"H{a.hcount}")
    parts.append(_charge_text(a.charge))
    if a.atom_class is not None:
        parts.append(f":{a.atom_class}")
    parts.append("]")
    return "".join(parts)


def _bond_text(graph: MoleculeGraph, bidx: int, from_atom: int, marks: dict[int, str]) -> str:
    bond = graph.bonds[bidx]
    if bond.aromatic:
        return "" if bidx in graph.ring_bonds else ":"
    if bond.order == 1:
        if bidx in marks:
            char = marks[bidx]
            return char if bond.begin == from_atom else _flip(char)
        if graph.atoms[bond.begin].aromatic and graph.atoms[bond.end].aromatic:
            return "-"
        return ""
    return _ORDER_SYMBOL[bond.order]


def _ring_label_text(label: int) -> str:
    return str(label) if label < 10 else f"%{label}"


def write_smiles(graph: MoleculeGraph, order=None) -> str:
    """Write ``graph`` as SMILES, starting and branching by priority ``order``.

    ``order`` is a permutation of atom indices; earlier atoms start components
    and are visited first among neighbors. Defaults to the identity order.
    """
    n = len(graph.atoms)
    order = list(range(n)) if order is None else list(order)
    if sorted(order) != list(range(n)):
        raise ValueError("order must be a permutation of atom indices")
    if n == 0:
        return ""

    plan = _Plan(graph, order)
    marks = _directional_marks(graph, plan)
    out: list[str] = []
    free_labels = list(range(1, 100))
    open_labels: dict[int, int] = {}

    def take_label() -> int:
        if not free_labels:
            raise ValueError("more than 99 simultaneously open ring closures")
        free_labels.sort()
        return free_labels.pop(0)

    def emit(atom: int):
        out.append(_atom_text(graph, atom, _chirality(graph, plan, atom)))
        released = []
        for _, bidx in plan.ring_close[atom]:
            label = open_labels.pop(bidx)
            out.append(_ring_label_text(label))
            released.append(label)
        for partner, bidx in plan.ring_open[atom]:
            label = take_label()
            open_labels[bidx] = label
            out.append(_bond_text(graph, bidx, atom, marks))
            out.append(_ring_label_text(label))
        free_labels.extend(released)
        kids = plan.children[atom]
        for i, child in enumerate(kids):
            last = i == len(kids) - 1
            if not last:
                out.append("(")
            out.append(_bond_text(graph, plan.parent_bond[child], atom, marks))
            emit(child)
            if not last:
                out.append(")")

    limit = sys.getrecursionlimit()
    if n + 100 > limit:
        sys.setrecursionlimit(n + 200)
    try:
        for i, root in enumerate(plan.roots):
            if i:
                out.append(".")
            emit(root)
    finally:
        sys.setrecursionlimit(limit)
    return "".join(out)
