from __future__ import annotations

import json
import math
import random
from functools import lru_cache
from itertools import combinations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import load_corpus, random_order
from molforge.chem import graph_isomorphic, heavy_atom_graph, parse_smiles, write_smiles
from molforge.evaluation import (
    EmptyCorpus,
    EvalReport,
    LengthMismatch,
    bleu,
    evaluate,
    evaluate_cap2mol,
    evaluate_mol2cap,
    exact_match,
    fingerprint_fts,
    levenshtein,
    meteor,
    probe_testset,
    rouge,
    transform_smiles,
    validity,
)
from molforge.evaluation.metrics import char_tokens, count_chunks, meteor_alignment, meteor_pair, mean_levenshtein
from molforge.evaluation.plotting import plot_report
from molforge.evaluation.probes import ProbeError
from molforge.pipeline import DatasetItem
from molforge.retrieval import tokenize_caption

CORPUS = load_corpus()
WORDS = ["the", "cat", "sat", "on", "mat", "a", "acid", "ring", "is"]

# Sixty strings that fail parsing, valence or kekulization.
INVALID_SMILES = [
    "C1CC", "c1cccc1", "C(", "CC)", "[Xx]", "C(C)(C)(C)(C)C", "N(C)(C)(C)(C)(C)C", "O(C)(C)C", "C(=O)(=O)=O",
    "CC(=O", "c1ccccc", "C%1", "[C", "Cl(C)C", "FF(F)", "C1=CC=CC=C12", "C==C", "C##C", "1CC", "c1ccc[nH]c1",
]
INVALID_SMILES = [s + suffix for suffix in ("", "C", "CC") for s in INVALID_SMILES]


# --- brute-force oracles -----------------------------------------------------


def oracle_ngrams(tokens, n):
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def oracle_clipped_matches(ref, hyp, n):
    hyp_grams, ref_grams = oracle_ngrams(hyp, n), oracle_ngrams(ref, n)
    total = 0
    for gram in set(hyp_grams):
        total += min(hyp_grams.count(gram), ref_grams.count(gram))
    return total


def oracle_bleu(refs, hyps, max_n):
    refs = [tokenize_caption(r) for r in refs]
    hyps = [tokenize_caption(h) for h in hyps]
    c = sum(len(h) for h in hyps)
    r = sum(len(x) for x in refs)
    precisions = []
    for n in range(1, max_n + 1):
        num = sum(oracle_clipped_matches(x, h, n) for x, h in zip(refs, hyps))
        den = sum(max(0, len(h) - n + 1) for h in hyps)
        precisions.append(num / den if den else 0.0)
    if c == 0 or precisions[0] == 0:
        return 0.0
    geo = math.exp(sum(math.log(p if p > 0 else 1e-9) for p in precisions) / max_n)
    return geo * (1.0 if c > r else math.exp(1 - r / c))


def oracle_lcs(a, b):
    """Longest common subsequence by enumerating every subsequence of the shorter list."""
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)

    def is_subsequence(sub):
        it = iter(long_)
        return all(any(x == y for y in it) for x in sub)

    for size in range(len(short), 0, -1):
        for idx in combinations(range(len(short)), size):
            if is_subsequence([short[i] for i in idx]):
                return size
    return 0


def oracle_f1(overlap, hyp_total, ref_total):
    if overlap == 0:
        return 0.0
    p, r = overlap / hyp_total, overlap / ref_total
    return 2 * p * r / (p + r)


def oracle_rouge_pair(ref, hyp, variant):
    r, h = tokenize_caption(ref), tokenize_caption(hyp)
    if variant == "L":
        if not r and not h:
            return 1.0
        if not r or not h:
            return 0.0
        return oracle_f1(oracle_lcs(r, h), len(h), len(r))
    n = int(variant)
    rg, hg = oracle_ngrams(r, n), oracle_ngrams(h, n)
    if not rg and not hg:
        return 1.0 if r == h else 0.0
    if not rg or not hg:
        return 0.0
    return oracle_f1(oracle_clipped_matches(r, h, n), len(hg), len(rg))


def oracle_levenshtein(a: str, b: str) -> int:
    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


def random_pairs(seed, count=200, max_tokens=12):
    rng = random.Random(seed)
    pairs = []
    for _ in range(count):
        ref = " ".join(rng.choice(WORDS) for _ in range(rng.randint(0, max_tokens)))
        hyp = " ".join(rng.choice(WORDS) for _ in range(rng.randint(0, max_tokens)))
        pairs.append((ref, hyp))
    return pairs


def random_strings(seed, count=200, max_len=8, alphabet="CNO()=1c"):
    rng = random.Random(seed)
    return [
        ("".join(rng.choice(alphabet) for _ in range(rng.randint(0, max_len))),
         "".join(rng.choice(alphabet) for _ in range(rng.randint(0, max_len))))
        for _ in range(count)
    ]


# --- BLEU --------------------------------------------------------------------


def test_bleu_toy_pair_by_hand():
    # unigram precision 5/5, bigram precision 3/4, brevity penalty exp(1 - 6/5)
    score = bleu(["the cat sat on the mat"], ["the cat on the mat"], max_n=2)
    assert abs(score - math.exp(-0.2) * math.sqrt(0.75)) <= 1e-9


def test_bleu_identity_and_zero():
    refs = ["a fatty acid", "the ring is aromatic and fused"]
    assert bleu(refs, refs, 4) == pytest.approx(1.0, abs=1e-12)
    assert bleu(["a b c"], ["x y z"], 2) == 0.0
    with pytest.raises(LengthMismatch):
        bleu(["a"], [], 2)
    with pytest.raises(EmptyCorpus):
        bleu([], [], 2)


@pytest.mark.parametrize("max_n", [2, 4])
def test_bleu_matches_brute_force(max_n):
    pairs = random_pairs(11)
    refs, hyps = [p[0] for p in pairs], [p[1] for p in pairs]
    assert abs(bleu(refs, hyps, max_n) - oracle_bleu(refs, hyps, max_n)) <= 1e-9
    for ref, hyp in pairs[:50]:
        assert abs(bleu([ref], [hyp], max_n) - oracle_bleu([ref], [hyp], max_n)) <= 1e-9


def test_char_bleu_on_smiles():
    assert bleu(["CC(=O)Oc1ccccc1"], ["CC(=O)Oc1ccccc1"], 4, tokenizer=char_tokens) == pytest.approx(1.0)
    assert char_tokens("C(=O)") == ["C", "(", "=", "O", ")"]


# --- ROUGE -------------------------------------------------------------------


def test_rouge_examples():
    assert rouge(["a b c d"], ["a c d"], "L") == pytest.approx(6 / 7, abs=1e-12)
    assert rouge(["a b c"], ["a b c"], "1") == 1.0
    assert rouge(["a b c"], ["x y z"], "2") == 0.0
    with pytest.raises(ValueError):
        rouge(["a"], ["a"], "3")


@pytest.mark.parametrize("variant", ["1", "2", "L"])
def test_rouge_matches_brute_force(variant):
    pairs = random_pairs(12)
    expected = math.fsum(oracle_rouge_pair(r, h, variant) for r, h in pairs) / len(pairs)
    got = rouge([p[0] for p in pairs], [p[1] for p in pairs], variant)
    assert abs(got - expected) <= 1e-9


@given(st.lists(st.sampled_from(WORDS), max_size=12), st.lists(st.sampled_from(WORDS), max_size=12))
def test_text_metric_bounds(r, h):
    ref, hyp = " ".join(r), " ".join(h)
    for variant in ("1", "2", "L"):
        assert 0.0 <= rouge([ref], [hyp], variant) <= 1.0
    assert 0.0 <= meteor([ref], [hyp]) <= 1.0
    assert 0.0 <= bleu([ref], [hyp], 2) <= 1.0 + 1e-12


# --- METEOR ------------------------------------------------------------------


def meteor_formula(m, chunks, hyp_len, ref_len):
    p, r = m / hyp_len, m / ref_len
    f = 10 * p * r / (r + 9 * p)
    return f * (1 - 0.5 * (chunks / m) ** 3)


METEOR_CASES = [
    ("the acid is a fatty acid", "the acid is a fatty acid", (6, 1, 6, 6)),
    ("a b c d", "a c d", (3, 2, 3, 4)),
    ("fatty acids chain", "fatty acid chain", (3, 1, 3, 3)),
    ("x y z", "z y x", (3, 3, 3, 3)),
    ("one two three four five", "one two five", (3, 2, 3, 5)),
    ("the the cat", "the cat the", (3, 3, 3, 3)),
    ("running dogs bark", "dog runs barking", (3, 3, 3, 3)),
    ("a b c d e f", "a b x d e f", (5, 2, 6, 6)),
    ("alpha beta", "alpha beta gamma delta", (2, 1, 4, 2)),
]


@pytest.mark.parametrize("ref, hyp, counts", METEOR_CASES)
def test_meteor_hand_pairs(ref, hyp, counts):
    m, chunks, hyp_len, ref_len = counts
    pairs = meteor_alignment(tokenize_caption(ref), tokenize_caption(hyp))
    assert (len(pairs), count_chunks(pairs)) == (m, chunks)
    assert abs(meteor_pair(ref, hyp) - meteor_formula(*counts)) <= 1e-9


def test_meteor_disjoint_and_identity():
    assert meteor(["alpha beta"], ["gamma delta"]) == 0.0
    ten = "one two three four five six seven eight nine ten"
    assert meteor([ten], [ten]) >= 0.99
    assert meteor([ten], [ten]) == pytest.approx(1 - 0.5 * (1 / 10) ** 3, abs=1e-12)


def test_meteor_stemming_adds_matches():
    assert meteor(["fatty acids chain"], ["fatty acid chain"]) > meteor(
        ["fatty acids chain"], ["fatty acid chain"], stemming=False
    )


# --- Levenshtein -------------------------------------------------------------


def test_levenshtein_examples():
    assert levenshtein("kitten", "sitting") == 3
    assert levenshtein("CCO", "CCO") == 0
    assert levenshtein("CCO", "") == 3
    assert mean_levenshtein(["CCO", "C"], ["CCN", "C"]) == 0.5


def test_levenshtein_matches_exhaustive_recursion():
    for a, b in random_strings(13):
        assert levenshtein(a, b) == oracle_levenshtein(a, b)


short = st.text(alphabet="CNOc1()=", max_size=10)


@given(short, short, short)
def test_levenshtein_is_a_metric(a, b, c):
    assert levenshtein(a, b) == levenshtein(b, a)
    assert (levenshtein(a, b) == 0) == (a == b)
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


# --- molecule metrics --------------------------------------------------------


def test_exact_match_examples():
    assert exact_match(["CCO"], ["OCC"]) == 1.0
    assert exact_match(["CCO"], ["C1CC"]) == 0.0
    assert exact_match(["c1ccccc1"], ["C1=CC=CC=C1"]) == 1.0
    refs = CORPUS[:100]
    hyps = refs[:51] + ["C(" for _ in range(49)]
    assert exact_match(refs, hyps) == 0.51


def test_exact_match_never_exceeds_validity():
    rng = random.Random(5)
    hyps = [rng.choice(CORPUS + INVALID_SMILES) for _ in range(300)]
    refs = [rng.choice(CORPUS) if rng.random() < 0.5 else h for h in hyps]
    assert exact_match(refs, hyps) <= validity(hyps)


@pytest.mark.parametrize("kind", ["canonical", "hydrogen", "kekulization", "cycles"])
def test_exact_match_invariant_under_probes(kind):
    rng = random.Random(21)
    refs = CORPUS[:150]
    hyps = []
    for s in refs:
        g = parse_smiles(s)
        hyps.append(write_smiles(g, random_order(len(g.atoms), rng)) if rng.random() < 0.6 else rng.choice(refs))
    before = exact_match(refs, hyps)
    after = exact_match([transform_smiles(s, kind, 3) for s in refs], [transform_smiles(s, kind, 3) for s in hyps])
    assert before == after


def test_validity_counts():
    hyps = (CORPUS * 4)[:3240] + INVALID_SMILES
    assert len(hyps) == 3300
    assert all(not validity([s]) for s in INVALID_SMILES)
    assert validity(hyps) == 3240 / 3300
    assert validity(CORPUS[:10]) == 1.0
    assert validity(INVALID_SMILES) == 0.0
    with pytest.raises(EmptyCorpus):
        validity([])


def test_fts_path_by_enumeration():
    # CCO paths {C-C, C-O, C-C-O}; CCCO adds {C-C-C, C-C-C-O}: 3 shared of 5
    assert fingerprint_fts(["CCO"], ["CCCO"], "rdk") == pytest.approx(3 / 5)


@pytest.mark.parametrize("kind", ["maccs", "rdk", "morgan"])
def test_fts_identity_and_invalid(kind):
    refs = CORPUS[:20]
    assert fingerprint_fts(refs, refs, kind) == pytest.approx(1.0)
    assert fingerprint_fts(refs, ["C(" for _ in refs], kind) == 0.0


# --- probes ------------------------------------------------------------------


def items(smiles):
    return [DatasetItem(f"p{k}", s, f"caption {k}") for k, s in enumerate(smiles, 1)]


def test_probe_hydrogen_on_methane():
    out = transform_smiles("C", "hydrogen")
    g = parse_smiles(out)
    assert sorted(a.element for a in g.atoms) == ["C", "H", "H", "H", "H"]


def test_probes_keep_captions_and_graphs():
    sample = items(CORPUS[:120])
    for kind in ("canonical", "hydrogen", "kekulization", "cycles"):
        probed = probe_testset(sample, kind, seed=9)
        for before, after in zip(sample, probed):
            assert after.caption == before.caption and after.id == before.id
            a, b = parse_smiles(before.smiles), parse_smiles(after.smiles)
            if kind == "hydrogen":
                assert graph_isomorphic(heavy_atom_graph(a), heavy_atom_graph(b))
            elif kind == "kekulization":
                assert graph_isomorphic(a, b, bond_orders=False)
            else:
                assert graph_isomorphic(a, b)


def test_cycles_probe_is_seed_deterministic_and_canonical_idempotent():
    sample = items(CORPUS[:60])
    assert probe_testset(sample, "cycles", 4) == probe_testset(sample, "cycles", 4)
    once = probe_testset(sample, "canonical")
    assert probe_testset(once, "canonical") == once


def test_probe_errors_name_the_item():
    with pytest.raises(ProbeError) as info:
        probe_testset(items(["CCO", "c1cccc1"]), "kekulization")
    assert info.value.item_id == "p2"
    with pytest.raises(ValueError):
        probe_testset(items(["CCO"]), "shuffle")


# --- reports -----------------------------------------------------------------


def test_mol2cap_report():
    refs = ["the molecule is a fatty acid", "it is an aromatic amine"]
    report = evaluate_mol2cap(refs, refs)
    assert report.metrics["bleu2"] == pytest.approx(1.0)
    assert list(report.to_dict()["metrics"]) == ["bleu2", "bleu4", "rouge1", "rouge2", "rougeL", "meteor"]
    lines = report.to_tsv().splitlines()
    assert lines[0].split("\t") == ["direction", "n", "bleu2", "bleu4", "rouge1", "rouge2", "rougeL", "meteor"]
    assert lines[1].startswith("mol2cap\t2\t1.0000")


def test_cap2mol_report_and_plot(tmp_path):
    refs = ["CCO", "c1ccccc1", "CC(=O)O"]
    hyps = ["OCC", "C1=CC=CC=C1", "C("]
    report = evaluate_cap2mol(refs, hyps)
    assert report.invalid_count == 1
    assert report.metrics["validity"] == pytest.approx(2 / 3)
    assert report.metrics["exact_match"] == pytest.approx(2 / 3)
    assert report.metrics["exact_match"] <= report.metrics["validity"]
    for key in ("bleu", "maccs_fts", "rdk_fts", "morgan_fts"):
        assert 0.0 <= report.metrics[key] <= 1.0
    data = json.loads(report.to_json())
    assert data["sample_count"] == 3
    path = plot_report(report, tmp_path / "fig" / "cap2mol.png")
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_evaluate_pairs_by_id():
    refs = {"a2": "CCO", "a10": "CCN"}
    preds = {"a10": "CCN", "a2": "OCC"}
    assert evaluate("cap2mol", refs, preds).metrics["exact_match"] == 1.0
    with pytest.raises(LengthMismatch) as info:
        evaluate("cap2mol", refs, {"a2": "CCO", "zz": "C"})
    assert "a10" in str(info.value) and "zz" in str(info.value)


def test_report_round_trip_fields():
    report = EvalReport("mol2cap", {k: 0.5 for k in ("bleu2", "bleu4", "rouge1", "rouge2", "rougeL", "meteor")}, 4)
    assert json.loads(report.to_json())["metrics"]["meteor"] == 0.5
