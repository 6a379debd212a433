"""Element symbols and the valence table used for implicit hydrogens and checks."""

from __future__ import annotations

PERIODIC_TABLE = (
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni "
    "Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe "
    "Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt Au Hg "
    "Tl Pb Bi Po At Rn Fr Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es Fm Md No Lr Rf Db Sg "
    "Bh Hs Mt Ds Rg Cn Nh Fl Mc Lv Ts Og"
).split()
ELEMENTS = frozenset(PERIODIC_TABLE)

ORGANIC_SUBSET = frozenset({"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"})
AROMATIC_ORGANIC = frozenset({"b", "c", "n", "o", "p", "s"})
AROMATIC_BRACKET = AROMATIC_ORGANIC | {"se", "as", "te"}

WILDCARD = "*"

# Neutral valences. Bracket atoms outside this table are never valence-checked.
VALENCES: dict[str, tuple[int, ...]] = {
    "H": (1,),
    "B": (3,),
    "C": (4,),
    "Si": (4,),
    "N": (3, 5),
    "P": (3, 5),
    "As": (3, 5),
    "O": (2,),
    "S": (2, 4, 6),
    "Se": (2, 4, 6),
    "Te": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
}

_ELECTRON_RICH = frozenset({"N", "P", "As", "O", "S", "Se", "Te", "F", "Cl", "Br", "I"})


def allowed_valences(element: str, charge: int = 0) -> tuple[int, ...] | None:
    """Valences an atom may take, shifted to the isoelectronic element for ions.

    Returns None for elements the table does not cover.
    """
    base = VALENCES.get(element)
    if base is None:
        return None
    if charge == 0:
        return base
    if element == "H":
        return (0,)
    if element in ("C", "Si"):
        shifted = tuple(v - abs(charge) for v in base)
    elif element == "B":
        shifted = tuple(v - charge for v in base)
    elif element in _ELECTRON_RICH:
        shifted = tuple(v + charge for v in base)
    else:
        return None
    shifted = tuple(v for v in shifted if v >= 0)
    return shifted or (0,)


def implicit_hydrogens(element: str, aromatic: bool, bond_sum: int) -> int:
    """Implicit H count for an unbracketed organic-subset atom.

    ``bond_sum`` counts aromatic bonds as 1. Aromatic atoms reserve one unit of
    valence for the delocalised bond, so a ring ``c`` with two ring bonds
    carries one H and a ring ``n`` carries none.
    """
    valences = VALENCES.get(element)
    if valences is None:
        return 0
    if aromatic:
        return max(0, valences[0] - 1 - bond_sum)
    for v in valences:
        if v >= bond_sum:
            return v - bond_sum
    return 0
