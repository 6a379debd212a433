"""SMILES tokenizer and parser.

Grammar covered: organic-subset and bracket atoms (isotope, chirality, H count,
charge, atom class), bond symbols ``- = # $ : / \\``, branches, ring-closure
digits and ``%nn`` labels, and ``.`` disconnections.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .elements import (
    AROMATIC_BRACKET,
    ELEMENTS,
    ORGANIC_SUBSET,
    WILDCARD,
    implicit_hydrogens,
)
from .errors import (
    EmptyInput,
    GraphInvariantError,
    SmilesSyntaxError,
    UnbalancedParenthesis,
    UnknownElement,
    UnmatchedRingClosure,
    ValenceViolation,
)
from .graph import IMPLICIT_H, Atom, Bond, MoleculeGraph, valence_violations


@dataclass(frozen=True)
class Token:
    kind: str  # atom, bracket, bond, ring, open, close, dot
    text: str
    offset: int


_TOKEN_RE = re.compile(
    r"(?P<bracket>\[[^\]]*\])"
    r"|(?P<atom>Cl|Br|[BCNOPSFI]|[bcnops]|\*)"
    r"|(?P<ring>%\d\d|\d)"
    r"|(?P<bond>[-=#$:/\\])"
    r"|(?P<open>\()"
    r"|(?P<close>\))"
    r"|(?P<dot>\.)"
)

_BRACKET_RE = re.compile(
    r"^(?P<isotope>\d+)?"
    r"(?P<symbol>[A-Z][a-z]?|[a-z][a-z]?|\*)"
    r"(?P<chiral>@(?:@|TH[12]|AL[12]|SP[123]|TB\d{1,2}|OH\d{1,2})?)?"
    r"(?P<hydrogens>H\d*)?"
    r"(?P<charge>\+\+|--|[+-]\d*)?"
    r"(?P<cls>:\d+)?$"
)

_BOND_ORDERS = {"-": 1, "=": 2, "#": 3, "$": 4, "/": 1, "\\": 1}


def tokenize_smiles(text: str) -> list[Token]:
    """Split a SMILES string into tokens, each carrying its byte offset."""
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            ch = text[pos]
            if ch == "[":
                raise SmilesSyntaxError("unterminated bracket atom", pos)
            if ch.isalpha():
                raise UnknownElement(f"unknown element symbol {ch!r}", pos)
            raise SmilesSyntaxError(f"unexpected character {ch!r}", pos)
        tokens.append(Token(m.lastgroup, m.group(), pos))
        pos = m.end()
    return tokens


@dataclass
class _AtomSpec:
    element: str
    aromatic: bool
    bracket: bool
    charge: int = 0
    hcount: int | None = None
    isotope: int | None = None
    chirality: str | None = None
    atom_class: int | None = None
    offset: int = 0


def _parse_bracket(tok: Token) -> _AtomSpec:
    inner = tok.text[1:-1]
    m = _BRACKET_RE.match(inner)
    if m is None:
        raise SmilesSyntaxError(f"malformed bracket atom {tok.text!r}", tok.offset)
    symbol = m.group("symbol")
    if symbol == WILDCARD:
        element, aromatic = WILDCARD, False
    elif symbol[0].islower():
        if symbol not in AROMATIC_BRACKET:
            raise UnknownElement(f"unknown aromatic symbol {symbol!r}", tok.offset + 1)
        element, aromatic = symbol.capitalize(), True
    else:
        if symbol not in ELEMENTS:
            raise UnknownElement(f"unknown element {symbol!r}", tok.offset + 1)
        element, aromatic = symbol, False

    hydrogens = m.group("hydrogens")
    hcount = 0
    if hydrogens:
        hcount = int(hydrogens[1:]) if len(hydrogens) > 1 else 1

    charge_text = m.group("charge")
    charge = 0
    if charge_text:
        sign = 1 if charge_text[0] == "+" else -1
        if charge_text in ("++", "--"):
            charge = 2 * sign
        elif len(charge_text) > 1:
            charge = sign * int(charge_text[1:])
        else:
            charge = sign

    chiral = m.group("chiral")
    if chiral in ("@", "@TH1"):
        chirality = "@"
    elif chiral in ("@@", "@TH2"):
        chirality = "@@"
    else:
        chirality = None  # non-tetrahedral classes are accepted but not kept

    return _AtomSpec(
        element=element,
        aromatic=aromatic,
        bracket=True,
        charge=charge,
        hcount=hcount,
        isotope=int(m.group("isotope")) if m.group("isotope") else None,
        chirality=chirality,
        atom_class=int(m.group("cls")[1:]) if m.group("cls") else None,
        offset=tok.offset,
    )


def _ring_label(text: str) -> int:
    return int(text[1:]) if text.startswith("%") else int(text)


class _Builder:
    def __init__(self, text: str):
        self.text = text
        self.specs: list[_AtomSpec] = []
        # per bond: [a, b, order, aromatic, explicit_symbol, direction]
        self.bonds: list[list] = []
        self.pairs: dict[tuple[int, int], int] = {}
        self.nbr_order: list[list] = []

    def add_atom(self, spec: _AtomSpec) -> int:
        self.specs.append(spec)
        self.nbr_order.append([])
        return len(self.specs) - 1

    def add_bond(self, a: int, b: int, symbol: str | None, offset: int) -> int:
        if a == b:
            raise SmilesSyntaxError("ring closure bonds an atom to itself", offset)
        key = (min(a, b), max(a, b))
        if key in self.pairs:
            raise SmilesSyntaxError(f"duplicate bond between atoms {a} and {b}", offset)
        both_aromatic = self.specs[a].aromatic and self.specs[b].aromatic
        if symbol is None:
            order, aromatic = 1, both_aromatic
        elif symbol == ":":
            if not both_aromatic:
                raise SmilesSyntaxError("aromatic bond between non-aromatic atoms", offset)
            order, aromatic = 1, True
        else:
            order, aromatic = _BOND_ORDERS[symbol], False
        direction = None
        if symbol in ("/", "\\"):
            # marker as read when travelling from a to b
            direction = (a, symbol)
        self.pairs[key] = len(self.bonds)
        self.bonds.append([a, b, order, aromatic, symbol is not None, direction])
        return len(self.bonds) - 1


def parse_smiles(text: str) -> MoleculeGraph:
    """Parse a SMILES string into a validated :class:`MoleculeGraph`."""
    if text is None or not text.strip():
        raise EmptyInput("empty SMILES input", 0)
    if text != text.strip():
        raise SmilesSyntaxError("leading or trailing whitespace", 0)

    tokens = tokenize_smiles(text)
    bld = _Builder(text)
    prev: int | None = None
    pending: Token | None = None
    branches: list[tuple[int, int]] = []  # (atom, offset of '(')
    rings: dict[int, tuple[int, Token | None, int, object]] = {}

    for tok in tokens:
        kind = tok.kind
        if kind in ("atom", "bracket"):
            if kind == "atom":
                sym = tok.text
                if sym == WILDCARD:
                    spec = _AtomSpec(WILDCARD, False, False, offset=tok.offset)
                elif sym in ORGANIC_SUBSET:
                    spec = _AtomSpec(sym, False, False, offset=tok.offset)
                else:
                    spec = _AtomSpec(sym.upper(), True, False, offset=tok.offset)
            else:
                spec = _parse_bracket(tok)
            idx = bld.add_atom(spec)
            if prev is not None:
                bld.add_bond(prev, idx, pending.text if pending else None, tok.offset)
                bld.nbr_order[prev].append(idx)
                bld.nbr_order[idx].append(prev)
            elif pending is not None:
                raise SmilesSyntaxError("bond symbol with no preceding atom", pending.offset)
            if spec.bracket and spec.hcount and spec.chirality:
                bld.nbr_order[idx].append(IMPLICIT_H)
            pending = None
            prev = idx
        elif kind == "bond":
            if pending is not None:
                raise SmilesSyntaxError("consecutive bond symbols", tok.offset)
            if prev is None:
                raise SmilesSyntaxError("bond symbol with no preceding atom", tok.offset)
            pending = tok
        elif kind == "ring":
            if prev is None:
                raise SmilesSyntaxError("ring-closure digit with no preceding atom", tok.offset)
            label = _ring_label(tok.text)
            if label in rings:
                opener, open_bond, open_offset, marker = rings.pop(label)
                symbol = _merge_ring_bond(open_bond, pending, tok)
                bidx = bld.add_bond(opener, prev, symbol, tok.offset)
                if open_bond is not None and pending is None and open_bond.text in "/\\":
                    # marker written at the opening digit reads from the opener
                    bld.bonds[bidx][5] = (opener, open_bond.text)
                elif pending is not None and pending.text in "/\\":
                    bld.bonds[bidx][5] = (prev, pending.text)
                slot = bld.nbr_order[opener].index(marker)
                bld.nbr_order[opener][slot] = prev
                bld.nbr_order[prev].append(opener)
            else:
                marker = object()
                bld.nbr_order[prev].append(marker)
                rings[label] = (prev, pending, tok.offset, marker)
            pending = None
        elif kind == "open":
            if prev is None:
                raise SmilesSyntaxError("branch with no preceding atom", tok.offset)
            if pending is not None:
                raise SmilesSyntaxError("bond symbol before '('", pending.offset)
            branches.append((prev, tok.offset))
        elif kind == "close":
            if not branches:
                raise UnbalancedParenthesis("unmatched ')'", tok.offset)
            if pending is not None:
                raise SmilesSyntaxError("bond symbol before ')'", pending.offset)
            prev = branches.pop()[0]
        elif kind == "dot":
            if pending is not None:
                raise SmilesSyntaxError("bond symbol before '.'", pending.offset)
            if branches:
                raise UnbalancedParenthesis("'.' inside a branch", tok.offset)
            prev = None

    if pending is not None:
        raise SmilesSyntaxError("dangling bond symbol", pending.offset)
    if branches:
        raise UnbalancedParenthesis("unclosed '('", branches[-1][1])
    if rings:
        offset = min(r[2] for r in rings.values())
        raise UnmatchedRingClosure("ring closure opened but never closed", offset)
    if not bld.specs:
        raise EmptyInput("no atoms in SMILES", 0)

    return _finish(bld)


def _merge_ring_bond(open_bond: Token | None, close_bond: Token | None, tok: Token) -> str | None:
    if open_bond is None:
        return close_bond.text if close_bond else None
    if close_bond is None:
        return open_bond.text
    a, b = open_bond.text, close_bond.text
    if a == b or (a in "/\\" and b in "/\\"):
        return a
    raise SmilesSyntaxError(f"conflicting ring-closure bonds {a!r} and {b!r}", tok.offset)


def _finish(bld: _Builder) -> MoleculeGraph:
    specs = bld.specs

    # Implicit bonds between aromatic atoms only stay aromatic inside rings.
    raw = [Bond(b[0], b[1], b[2], b[3]) for b in bld.bonds]
    skeleton = MoleculeGraph(
        tuple(Atom(s.element, aromatic=s.aromatic) for s in specs), tuple(raw)
    )
    ring_bonds = skeleton.ring_bonds
    for idx, b in enumerate(bld.bonds):
        if b[3] and not b[4] and idx not in ring_bonds:
            b[3] = False

    bond_sum = [0] * len(specs)
    for b in bld.bonds:
        contribution = 1 if b[3] else b[2]
        bond_sum[b[0]] += contribution
        bond_sum[b[1]] += contribution

    atoms = []
    for i, s in enumerate(specs):
        if s.bracket:
            hcount = s.hcount or 0
        elif s.element == WILDCARD:
            hcount = 0
        else:
            hcount = implicit_hydrogens(s.element, s.aromatic, bond_sum[i])
        chiral_ref = None
        if s.chirality is not None:
            chiral_ref = tuple(bld.nbr_order[i])
        atoms.append(
            Atom(
                element=s.element,
                charge=s.charge,
                hcount=hcount,
                aromatic=s.aromatic,
                isotope=s.isotope,
                chirality=s.chirality,
                chiral_ref=chiral_ref,
                atom_class=s.atom_class,
            )
        )

    stereo = _double_bond_stereo(bld)
    bonds = [
        Bond(b[0], b[1], b[2], b[3], stereo.get(idx)) for idx, b in enumerate(bld.bonds)
    ]
    try:
        graph = MoleculeGraph(tuple(atoms), tuple(bonds), bld.text)
    except GraphInvariantError as exc:
        raise SmilesSyntaxError(str(exc)) from exc

    bad = valence_violations(graph)
    if bad:
        i = bad[0]
        raise ValenceViolation(
            f"atom {i} ({atoms[i].element}) exceeds its allowed valence", specs[i].offset
        )
    return graph


def _relative_marker(direction: tuple[int, str], from_atom: int) -> str:
    origin, char = direction
    if origin == from_atom:
        return char
    return "\\" if char == "/" else "/"


def _double_bond_stereo(bld: _Builder) -> dict[int, tuple[int, int, str]]:
    """Turn ``/`` and ``\\`` markers into cis/trans relations on double bonds."""
    incident: dict[int, list[int]] = {}
    for idx, b in enumerate(bld.bonds):
        incident.setdefault(b[0], []).append(idx)
        incident.setdefault(b[1], []).append(idx)

    out = {}
    for idx, b in enumerate(bld.bonds):
        if b[2] != 2 or b[3]:
            continue
        sides = []
        for end in (b[0], b[1]):
            found = None
            for other in incident.get(end, ()):
                ob = bld.bonds[other]
                if other != idx and ob[5] is not None:
                    nbr = ob[1] if ob[0] == end else ob[0]
                    found = (nbr, _relative_marker(ob[5], end))
                    break
            sides.append(found)
        if sides[0] is None or sides[1] is None:
            continue
        (x, rx), (y, ry) = sides
        out[idx] = (x, y, "cis" if rx == ry else "trans")
    return out
