from __future__ import annotations

import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import load_corpus, random_order
from molforge.chem import parse_smiles, renumber_atoms, write_smiles
from molforge.fingerprints import (
    Fingerprint,
    KindMismatch,
    fnv1a_64,
    linear_paths,
    load_structural_keys,
    morgan_environments,
    morgan_fingerprint,
    path_fingerprint,
    smallest_ring_sizes,
    structural_keys,
    tanimoto,
)

CORPUS = load_corpus()
KEYS = load_structural_keys()


def key_bit(label: str) -> int:
    return next(i for i, k in enumerate(KEYS) if k.label == label)


def test_fnv1a_reference_values():
    # published FNV-1a 64-bit test vectors
    assert fnv1a_64("") == 0xCBF29CE484222325
    assert fnv1a_64("a") == 0xAF63DC4C8601EC8C
    assert fnv1a_64("foobar") == 0x85944171F73967E8


def test_morgan_radius0_ethanol():
    # three distinct environments by hand: CH3 (deg 1), CH2 (deg 2), OH
    envs = morgan_environments(parse_smiles("CCO"), 0)
    assert len(envs[0]) == 3
    fp = morgan_fingerprint(parse_smiles("CCO"), radius=0)
    assert fp.count() == 3


def test_morgan_radius_superset():
    for s in CORPUS[:100]:
        g = parse_smiles(s)
        r0 = set(morgan_fingerprint(g, 0).on_bits())
        r1 = set(morgan_fingerprint(g, 1).on_bits())
        r2 = set(morgan_fingerprint(g, 2).on_bits())
        assert r0 <= r1 <= r2


def test_morgan_parameter_checks():
    g = parse_smiles("CCO")
    with pytest.raises(ValueError):
        morgan_fingerprint(g, -1)
    with pytest.raises(ValueError):
        morgan_fingerprint(g, 2, 1000)
    with pytest.raises(ValueError):
        morgan_fingerprint(g, 2, 32)
    assert morgan_fingerprint(g, 2, 64).nbits == 64


def test_explicit_h_does_not_change_fingerprints():
    plain = parse_smiles("CCO")
    explicit = parse_smiles("[H]C([H])([H])C([H])([H])O[H]")
    for fn in (morgan_fingerprint, path_fingerprint, structural_keys):
        assert fn(plain) == fn(explicit)


def test_path_no_bonds():
    assert path_fingerprint(parse_smiles("C")).count() == 0


def test_path_enumeration_ethanol():
    # exhaustive enumeration by hand with max_len 2
    assert linear_paths(parse_smiles("CCO"), 2) == {"C-C", "C-O", "C-C-O"}
    assert path_fingerprint(parse_smiles("CCO"), 2).count() <= 3


def test_path_subset_gives_tanimoto_below_one():
    small, large = linear_paths(parse_smiles("CCO"), 7), linear_paths(parse_smiles("CCCO"), 7)
    assert small < large
    a, b = path_fingerprint(parse_smiles("CCO")), path_fingerprint(parse_smiles("CCCO"))
    assert tanimoto(a, b) < 1.0


def test_path_ring_closes():
    # cyclopropane: 3 one-bond, 3 two-bond paths, all identical labels
    assert linear_paths(parse_smiles("C1CC1"), 7) == {"C-C", "C-C-C"}


def test_structural_key_examples():
    ethanol = structural_keys(parse_smiles("CCO"))
    assert key_bit("oxygen") in ethanol.on_bits()
    assert key_bit("six-membered ring") in structural_keys(parse_smiles("C1CCCCC1")).on_bits()
    assert key_bit("six-membered ring") not in ethanol.on_bits()
    anhydride = structural_keys(parse_smiles("CCCCCCCCCCCC(=O)OC(=O)CCCCCCCCCCC")).on_bits()
    assert key_bit("carbonyl") in anhydride
    assert key_bit("anhydride") in anhydride
    assert key_bit("anhydride") not in structural_keys(parse_smiles("CCCCCCCCCCCC(=O)O")).on_bits()


@pytest.mark.parametrize(
    "smiles, present, absent",
    [
        ("OC(=O)c1ccccc1", ["carboxylic acid", "benzene ring", "aromatic atom"], ["carboxylate", "ester"]),
        ("CC(=O)[O-].[Na+]", ["carboxylate", "negative charge", "multiple fragments"], ["carboxylic acid"]),
        ("C[NH3+]", ["cationic nitrogen", "positive charge"], ["primary amine"]),
        ("CCN", ["primary amine"], ["cationic nitrogen"]),
        ("c1ccncc1", ["pyridine ring"], ["benzene ring"]),
        ("c1cc[nH]c1", ["aromatic NH", "five-membered ring"], ["six-membered ring"]),
        ("Oc1ccccc1", ["phenol", "hydroxyl on carbon"], []),
        ("c1ccc2ccccc2c1", ["fused ring system", "two or more rings"], ["four or more rings"]),
        ("C1CCCCCCC1", ["ring of eight or more atoms"], ["six-membered ring"]),
        ("[2H]C", ["isotope label"], []),
        ("FC(F)(F)C", ["trifluoromethyl", "any halogen", "fluorine"], ["chlorine"]),
        ("[Cu+2]", ["metal or other element"], []),
    ],
)
def test_structural_key_groups(smiles, present, absent):
    bits = set(structural_keys(parse_smiles(smiles)).on_bits())
    for label in present:
        assert key_bit(label) in bits, label
    for label in absent:
        assert key_bit(label) not in bits, label


def test_key_file_shape():
    assert len(KEYS) >= 60
    assert len({k.key_id for k in KEYS}) == len(KEYS)
    assert structural_keys(parse_smiles("C")).nbits == len(KEYS)


def test_smallest_ring_sizes():
    assert smallest_ring_sizes(parse_smiles("c1ccc2ccccc2c1")) == {6}
    # every norbornane bond lies on a five-membered cycle
    assert smallest_ring_sizes(parse_smiles("C1CC2CCC1C2")) == {5}
    assert smallest_ring_sizes(parse_smiles("CCO")) == set()


def test_tanimoto_examples():
    a = Fingerprint.from_bits("morgan", 64, [1, 2, 3])
    b = Fingerprint.from_bits("morgan", 64, [2, 3, 4])
    assert tanimoto(a, b) == 2 / 4
    assert tanimoto(a, a) == 1.0
    assert tanimoto(a, Fingerprint.from_bits("morgan", 64, [10, 11])) == 0.0
    empty = Fingerprint.from_bits("morgan", 64, [])
    assert tanimoto(empty, empty) == 1.0


def test_tanimoto_kind_mismatch():
    a = Fingerprint.from_bits("morgan", 64, [1])
    with pytest.raises(KindMismatch):
        tanimoto(a, Fingerprint.from_bits("path", 64, [1]))
    with pytest.raises(KindMismatch):
        tanimoto(a, Fingerprint.from_bits("morgan", 128, [1]))
    with pytest.raises(KindMismatch):
        tanimoto(morgan_fingerprint(parse_smiles("C"), 1), morgan_fingerprint(parse_smiles("C"), 2))


def test_fingerprint_bit_range():
    with pytest.raises(ValueError):
        Fingerprint.from_bits("morgan", 64, [64])


bitsets = st.sets(st.integers(0, 255), max_size=40)


@given(bitsets, bitsets)
def test_tanimoto_properties(x, y):
    a = Fingerprint.from_bits("path", 256, x)
    b = Fingerprint.from_bits("path", 256, y)
    t = tanimoto(a, b)
    assert t == tanimoto(b, a)
    assert 0.0 <= t <= 1.0
    if x:
        assert tanimoto(a, a) == 1.0
    union = x | y
    assert t == (len(x & y) / len(union) if union else 1.0)


@given(st.integers(0, len(CORPUS) - 1), st.integers(0, 2**32 - 1))
def test_fingerprints_invariant_under_relabeling(index, seed):
    g = parse_smiles(CORPUS[index])
    h = parse_smiles(write_smiles(renumber_atoms(g, random_order(len(g.atoms), random.Random(seed)))))
    assert morgan_fingerprint(g) == morgan_fingerprint(h)
    assert path_fingerprint(g) == path_fingerprint(h)
    assert structural_keys(g) == structural_keys(h)


def test_fingerprints_deterministic():
    g = parse_smiles("CC(=O)Oc1ccccc1C(=O)O")
    assert morgan_fingerprint(g).bits == morgan_fingerprint(parse_smiles("CC(=O)Oc1ccccc1C(=O)O")).bits
