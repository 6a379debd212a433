"""Binary molecular fingerprints (circular, linear-path, structural keys) and Tanimoto similarity.

All fingerprints are computed on the heavy-atom graph, so explicit and
implicit hydrogen spellings of one molecule give identical bits.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .chem import MoleculeGraph, heavy_atom_graph, parse_smiles
from .chem.parser import _BRACKET_RE, tokenize_smiles

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

DEFAULT_MORGAN_RADIUS = 2
DEFAULT_PATH_LENGTH = 7
DEFAULT_NBITS = 2048

_BOND_SYMBOLS = {"1": "-", "2": "=", "3": "#", "4": "$", "a": ":"}


class KindMismatch(ValueError):
    """Two fingerprints of different kind or parameters were compared."""


def fnv1a_64(text: str) -> int:
    h = FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class Fingerprint:
    kind: str
    nbits: int
    params: tuple
    bits: int = 0

    def __post_init__(self):
        if self.bits < 0 or self.bits >> self.nbits:
            raise ValueError("bit vector does not fit the declared length")

    @classmethod
    def from_bits(cls, kind: str, nbits: int, on_bits, params: tuple = ()) -> "Fingerprint":
        value = 0
        for b in on_bits:
            if not 0 <= b < nbits:
                raise ValueError(f"bit {b} outside 0..{nbits - 1}")
            value |= 1 << b
        return cls(kind, nbits, params, value)

    def on_bits(self) -> list[int]:
        return [i for i in range(self.nbits) if self.bits >> i & 1]

    def count(self) -> int:
        return bin(self.bits).count("1")

    def to_vector(self) -> list[float]:
        return [float(self.bits >> i & 1) for i in range(self.nbits)]


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """|a and b| / |a or b|; two empty fingerprints score 1.0."""
    if a.kind != b.kind or a.nbits != b.nbits or a.params != b.params:
        raise KindMismatch(f"cannot compare {a.kind}{a.params} with {b.kind}{b.params}")
    union = bin(a.bits | b.bits).count("1")
    if union == 0:
        return 1.0
    return bin(a.bits & b.bits).count("1") / union


def _check_nbits(nbits: int):
    if nbits < 64 or nbits & (nbits - 1):
        raise ValueError("nbits must be a power of two >= 64")


def _atom_invariant(graph: MoleculeGraph, i: int) -> str:
    a = graph.atoms[i]
    return "|".join(
        str(x)
        for x in (
            a.element,
            graph.heavy_degree(i),
            graph.total_hydrogens(i),
            a.charge,
            a.isotope or 0,
            int(i in graph.ring_atoms),
            int(a.aromatic),
        )
    )


def morgan_environments(graph: MoleculeGraph, radius: int) -> list[set[int]]:
    """Environment identifiers per radius 0..radius (before folding)."""
    g = heavy_atom_graph(graph)
    ids = [fnv1a_64(_atom_invariant(g, i)) for i in range(len(g.atoms))]
    layers = [set(ids)]
    for _ in range(radius):
        nxt = []
        for i in range(len(g.atoms)):
            env = sorted(f"{g.bonds[b].code}:{ids[nbr]}" for nbr, b in g.adjacency[i])
            nxt.append(fnv1a_64(f"{ids[i]}[{';'.join(env)}]"))
        ids = nxt
        layers.append(set(ids))
    return layers


def morgan_fingerprint(graph: MoleculeGraph, radius: int = DEFAULT_MORGAN_RADIUS, nbits: int = DEFAULT_NBITS) -> Fingerprint:
    if radius < 0:
        raise ValueError("radius must be >= 0")
    _check_nbits(nbits)
    bits = set()
    for layer in morgan_environments(graph, radius):
        bits.update(x % nbits for x in layer)
    return Fingerprint.from_bits("morgan", nbits, bits, (("radius", radius),))


def _atom_label(graph: MoleculeGraph, i: int) -> str:
    a = graph.atoms[i]
    label = a.element.lower() if a.aromatic else a.element
    if a.charge:
        label += f"{a.charge:+d}"
    return label


def linear_paths(graph: MoleculeGraph, max_len: int) -> set[str]:
    """Canonical strings of every simple bond path with 1..max_len bonds."""
    g = heavy_atom_graph(graph)
    labels = [_atom_label(g, i) for i in range(len(g.atoms))]
    found: set[str] = set()

    def path_string(atoms, bonds):
        parts = [labels[atoms[0]]]
        for b, a in zip(bonds, atoms[1:]):
            parts.append(_BOND_SYMBOLS[g.bonds[b].code])
            parts.append(labels[a])
        return "".join(parts)

    for start in range(len(g.atoms)):
        stack = [([start], [])]
        while stack:
            atoms, bonds = stack.pop()
            if bonds and atoms[0] < atoms[-1]:
                fwd = path_string(atoms, bonds)
                rev = path_string(atoms[::-1], bonds[::-1])
                found.add(min(fwd, rev))
            if len(bonds) == max_len:
                continue
            on_path = set(atoms)
            for nbr, b in g.adjacency[atoms[-1]]:
                if nbr not in on_path:
                    stack.append((atoms + [nbr], bonds + [b]))
    return found


def path_fingerprint(graph: MoleculeGraph, max_len: int = DEFAULT_PATH_LENGTH, nbits: int = DEFAULT_NBITS) -> Fingerprint:
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    _check_nbits(nbits)
    bits = {fnv1a_64(p) % nbits for p in linear_paths(graph, max_len)}
    return Fingerprint.from_bits("path", nbits, bits, (("max_len", max_len),))


# ---------------------------------------------------------------------------
# Structural keys
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StructuralKey:
    key_id: int
    descriptor: str
    label: str


@dataclass(frozen=True)
class _PatternAtom:
    element: str
    aromatic_only: bool
    charge: int | None
    hydrogens: int | None


@dataclass(frozen=True)
class _Pattern:
    atoms: tuple[_PatternAtom, ...]
    bonds: tuple[tuple[int, int, str], ...]


def _compile_pattern(smiles: str) -> _Pattern:
    graph = parse_smiles(smiles)
    atom_tokens = [t for t in tokenize_smiles(smiles) if t.kind in ("atom", "bracket")]
    atoms = []
    for atom, tok in zip(graph.atoms, atom_tokens):
        charge = hydrogens = None
        if tok.kind == "bracket":
            charge = atom.charge
            if _BRACKET_RE.match(tok.text[1:-1]).group("hydrogens"):
                hydrogens = atom.hcount
        atoms.append(_PatternAtom(atom.element, atom.aromatic, charge, hydrogens))
    bonds = tuple((b.begin, b.end, b.code) for b in graph.bonds)
    return _Pattern(tuple(atoms), bonds)


def _atom_matches(p: _PatternAtom, graph: MoleculeGraph, i: int) -> bool:
    a = graph.atoms[i]
    if p.element != "*" and p.element != a.element:
        return False
    if p.aromatic_only and not a.aromatic:
        return False
    if p.charge is not None and p.charge != a.charge:
        return False
    if p.hydrogens is not None and p.hydrogens != graph.total_hydrogens(i):
        return False
    return True


def has_substructure(graph: MoleculeGraph, pattern: _Pattern) -> bool:
    """Backtracking subgraph monomorphism of a small pattern into ``graph``."""
    n = len(pattern.atoms)
    p_adj: list[list[tuple[int, str]]] = [[] for _ in range(n)]
    for a, b, code in pattern.bonds:
        p_adj[a].append((b, code))
        p_adj[b].append((a, code))
    # visit pattern atoms in BFS order so every atom after the first has a mapped neighbor
    order = [0]
    seen = {0}
    q = deque([0])
    while q:
        v = q.popleft()
        for w, _ in p_adj[v]:
            if w not in seen:
                seen.add(w)
                order.append(w)
                q.append(w)
    order += [i for i in range(n) if i not in seen]

    mapping: dict[int, int] = {}
    used: set[int] = set()

    def extend(k: int) -> bool:
        if k == len(order):
            return True
        p = order[k]
        anchors = [(w, code) for w, code in p_adj[p] if w in mapping]
        if anchors:
            w0, _ = anchors[0]
            candidates = graph.neighbors(mapping[w0])
        else:
            candidates = range(len(graph.atoms))
        for t in candidates:
            if t in used or not _atom_matches(pattern.atoms[p], graph, t):
                continue
            ok = True
            for w, code in anchors:
                bond = graph.bond_between(mapping[w], t)
                if bond is None or bond.code != code:
                    ok = False
                    break
            if not ok:
                continue
            mapping[p] = t
            used.add(t)
            if extend(k + 1):
                return True
            del mapping[p]
            used.discard(t)
        return False

    return extend(0)


def smallest_ring_sizes(graph: MoleculeGraph) -> set[int]:
    """Size of the smallest cycle through each ring bond."""
    sizes = set()
    for idx in graph.ring_bonds:
        bond = graph.bonds[idx]
        dist = {bond.begin: 0}
        q = deque([bond.begin])
        while q:
            v = q.popleft()
            if v == bond.end:
                break
            for nbr, b in graph.adjacency[v]:
                if b == idx or nbr in dist:
                    continue
                dist[nbr] = dist[v] + 1
                q.append(nbr)
        if bond.end in dist:
            sizes.add(dist[bond.end] + 1)
    return sizes


_COMMON_ELEMENTS = frozenset({"C", "H", "N", "O", "P", "S", "F", "Cl", "Br", "I", "B", "Si", "Se", "*"})
_HALOGENS = frozenset({"F", "Cl", "Br", "I"})


class _KeyContext:
    """Per-molecule facts shared by all key predicates."""

    def __init__(self, graph: MoleculeGraph):
        self.graph = graph
        self.elements: dict[str, int] = {}
        for a in graph.atoms:
            self.elements[a.element] = self.elements.get(a.element, 0) + 1
        self._rings = None

    @property
    def ring_sizes(self) -> set[int]:
        if self._rings is None:
            self._rings = smallest_ring_sizes(self.graph)
        return self._rings

    @property
    def ring_count(self) -> int:
        g = self.graph
        return len(g.bonds) - len(g.atoms) + len(g.components)


_DESCRIPTOR_RE = re.compile(r"^(?P<kind>[a-z_]+)(?::(?P<arg>.+))?$")


def _compile_descriptor(descriptor: str):
    m = _DESCRIPTOR_RE.match(descriptor)
    if m is None:
        raise ValueError(f"bad key descriptor {descriptor!r}")
    kind, arg = m.group("kind"), m.group("arg")
    if kind == "element":
        return lambda ctx: ctx.elements.get(arg, 0) > 0
    if kind == "count":
        element, n = arg.split(":")
        return lambda ctx: ctx.elements.get(element, 0) >= int(n)
    if kind == "halogen":
        return lambda ctx: any(e in ctx.elements for e in _HALOGENS)
    if kind == "other_element":
        return lambda ctx: any(e not in _COMMON_ELEMENTS for e in ctx.elements)
    if kind == "ring":
        return lambda ctx: int(arg) in ctx.ring_sizes
    if kind == "ring_min":
        return lambda ctx: any(s >= int(arg) for s in ctx.ring_sizes)
    if kind == "rings":
        return lambda ctx: ctx.ring_count >= int(arg)
    if kind == "fused":
        def fused(ctx):
            g = ctx.graph
            return any(sum(1 for _, b in g.adjacency[i] if b in g.ring_bonds) >= 3 for i in g.ring_atoms)
        return fused
    if kind == "aromatic":
        return lambda ctx: any(a.aromatic for a in ctx.graph.atoms)
    if kind == "charge":
        if arg == "+":
            return lambda ctx: any(a.charge > 0 for a in ctx.graph.atoms)
        return lambda ctx: any(a.charge < 0 for a in ctx.graph.atoms)
    if kind == "isotope":
        return lambda ctx: any(a.isotope is not None for a in ctx.graph.atoms)
    if kind == "fragments":
        return lambda ctx: len(ctx.graph.components) >= int(arg)
    if kind == "sub":
        pattern = _compile_pattern(arg)
        return lambda ctx: has_substructure(ctx.graph, pattern)
    raise ValueError(f"unknown key descriptor kind {kind!r}")


def load_structural_keys(path=None) -> tuple[StructuralKey, ...]:
    """Read the line-oriented key file (key-id, descriptor, label)."""
    if path is None:
        text = resources.files("molforge.data").joinpath("structural_keys.tsv").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    keys = []
    for line_no, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ValueError(f"key file line {line_no}: expected 3 tab-separated fields")
        keys.append(StructuralKey(int(fields[0]), fields[1], fields[2]))
    ids = [k.key_id for k in keys]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate key ids in key file")
    return tuple(keys)


@lru_cache(maxsize=None)
def _default_key_table():
    keys = load_structural_keys()
    return keys, tuple(_compile_descriptor(k.descriptor) for k in keys)


def structural_keys(graph: MoleculeGraph, keys: tuple[StructuralKey, ...] | None = None) -> Fingerprint:
    """Bit ``i`` is set iff key ``i`` (in file order) matches the molecule."""
    if keys is None:
        keys, predicates = _default_key_table()
    else:
        predicates = tuple(_compile_descriptor(k.descriptor) for k in keys)
    ctx = _KeyContext(heavy_atom_graph(graph))
    on = [i for i, pred in enumerate(predicates) if pred(ctx)]
    return Fingerprint.from_bits("keys", len(keys), on, (("keys", len(keys)),))


def fingerprint(graph: MoleculeGraph, kind: str) -> Fingerprint:
    """Default-parameter fingerprint of one of the three kinds."""
    if kind == "morgan":
        return morgan_fingerprint(graph)
    if kind == "path":
        return path_fingerprint(graph)
    if kind == "keys":
        return structural_keys(graph)
    raise ValueError(f"unknown fingerprint kind {kind!r}")
