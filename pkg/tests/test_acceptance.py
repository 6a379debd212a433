"""One test per acceptance criterion, each reporting a single PASS/FAIL line."""

from __future__ import annotations

import json
import math
import random
import time

import numpy as np

from conftest import TOY, load_corpus, make_items, random_order, run_all_stages
from molforge.chem import (
    canonicalize,
    graph_isomorphic,
    kekulize,
    parse_smiles,
    renumber_atoms,
    write_smiles,
)
from molforge.cli import main
from molforge.emitter import PARADIGMS, validate_file
from molforge.evaluation import bleu, levenshtein, meteor, probe_testset, rouge, validity
from molforge.evaluation.metrics import count_chunks, meteor_alignment
from molforge.fingerprints import Fingerprint, morgan_fingerprint, path_fingerprint, structural_keys, tanimoto
from molforge.llm import Gateway, MockBackend, ScoredText, perplexity
from molforge.pipeline import AlignmentRecord, AlignmentStore, DatasetItem, PipelineSettings, select_alignment
from molforge.prompts import DIRECTIONS
from molforge.retrieval import bm25_query, bm25_scores, build_bm25_index, tokenize_caption
from test_evaluation import (
    INVALID_SMILES,
    METEOR_CASES,
    meteor_formula,
    oracle_bleu,
    oracle_levenshtein,
    oracle_rouge_pair,
    random_pairs,
    random_strings,
)
from test_pipeline import ScriptedScorer
from test_retrieval import brute_bm25, brute_rank, random_corpus

CORPUS = load_corpus()
LAURIC_ANHYDRIDE = "CCCCCCCCCCCC(=O)OC(=O)CCCCCCCCCCC"


def test_smiles_round_trip(criterion):
    assert len(CORPUS) == 1000 and LAURIC_ANHYDRIDE in CORPUS
    rng = random.Random(2024)
    start = time.perf_counter()
    round_trip_failures = canonical_failures = 0
    for s in CORPUS:
        g = parse_smiles(s)
        out = write_smiles(g, random_order(len(g.atoms), rng))
        if not graph_isomorphic(g, parse_smiles(out), stereo=True):
            round_trip_failures += 1
        reference = canonicalize(g)
        for _ in range(10):
            if canonicalize(renumber_atoms(g, random_order(len(g.atoms), rng))) != reference:
                canonical_failures += 1
                break
    elapsed = time.perf_counter() - start
    ok = round_trip_failures == 0 and canonical_failures == 0 and elapsed < 30
    criterion(
        ok,
        f"1000 molecules, round-trip failures {round_trip_failures}, canonical failures {canonical_failures}, "
        f"{elapsed:.1f} s (limit 30 s)",
    )


def test_probe_soundness(criterion):
    rng = random.Random(500)
    sample = [DatasetItem(f"s{k}", s, "c") for k, s in enumerate(rng.sample(CORPUS, 500))]
    broken = {}
    for kind in ("canonical", "hydrogen", "kekulization", "cycles"):
        probed = probe_testset(sample, kind, seed=11)
        bad = 0
        for before, after in zip(sample, probed):
            a, b = parse_smiles(before.smiles), parse_smiles(after.smiles)
            if kind == "hydrogen":
                same = graph_isomorphic(a, b, heavy_atoms=True, stereo=True)
            elif kind == "kekulization":
                same = graph_isomorphic(kekulize(a), b, stereo=True) and graph_isomorphic(a, b, bond_orders=False)
            else:
                same = graph_isomorphic(a, b, stereo=True)
            bad += not same
        broken[kind] = bad
    once = probe_testset(sample, "canonical")
    idempotent = probe_testset(once, "canonical") == once
    deterministic = probe_testset(sample, "cycles", 11) == probe_testset(sample, "cycles", 11)
    ok = not any(broken.values()) and idempotent and deterministic
    criterion(ok, f"500 molecules, non-isomorphic outputs {broken}, canonical idempotent {idempotent}, "
                  f"cycles deterministic {deterministic}")


def test_metric_oracles(criterion):
    pairs = random_pairs(99)
    refs, hyps = [p[0] for p in pairs], [p[1] for p in pairs]
    worst = 0.0
    for n in (2, 4):
        worst = max(worst, abs(bleu(refs, hyps, n) - oracle_bleu(refs, hyps, n)))
    for variant in ("1", "2", "L"):
        expected = math.fsum(oracle_rouge_pair(r, h, variant) for r, h in pairs) / len(pairs)
        worst = max(worst, abs(rouge(refs, hyps, variant) - expected))
    lev_mismatch = sum(levenshtein(a, b) != oracle_levenshtein(a, b) for a, b in random_strings(98))
    meteor_worst = 0.0
    structure_ok = True
    for ref, hyp, counts in METEOR_CASES:
        aligned = meteor_alignment(tokenize_caption(ref), tokenize_caption(hyp))
        structure_ok &= (len(aligned), count_chunks(aligned)) == counts[:2]
        meteor_worst = max(meteor_worst, abs(meteor([ref], [hyp]) - meteor_formula(*counts)))
    meteor_worst = max(meteor_worst, abs(meteor(["alpha beta"], ["gamma delta"]) - 0.0))
    ok = worst <= 1e-9 and lev_mismatch == 0 and meteor_worst <= 1e-9 and structure_ok
    criterion(
        ok,
        f"BLEU/ROUGE max error {worst:.2e} on 200 pairs, Levenshtein mismatches {lev_mismatch}/200, "
        f"METEOR max error {meteor_worst:.2e} on {len(METEOR_CASES) + 1} pairs",
    )


def test_bm25_equivalence(criterion):
    worst = 0.0
    ranking_mismatches = 0
    for seed in range(100):
        rng = random.Random(seed)
        corpus = random_corpus(rng)
        docs = {k: tokenize_caption(v) for k, v in corpus.items()}
        index = build_bm25_index(corpus)
        query = " ".join(rng.choice(list(corpus.values()) + ["fatty acid ring"]).split()[:4]) or "acid"
        expected = brute_bm25(docs, tokenize_caption(query))
        got = bm25_scores(index, query)
        worst = max(worst, max(abs(got[d] - expected[d]) for d in corpus))
        k = len(corpus)
        if [d for d, _ in bm25_query(index, query, k)] != [d for d, _ in brute_rank(expected, k)]:
            ranking_mismatches += 1
    ok = worst <= 1e-9 and ranking_mismatches == 0
    criterion(ok, f"100 corpora of 5-20 docs, max score error {worst:.2e}, ranking mismatches {ranking_mismatches}")


def test_perplexity_and_selection(criterion):
    uniform = Gateway(MockBackend(uniform_logprob=math.log(0.25)), "scorer")
    ppl_uniform = perplexity(uniform.score_continuation("condition\n", "w x y z"))
    direct = perplexity(ScoredText("t", (math.log(0.25),) * 4))

    rng = random.Random(10)
    wrong = 0
    for k in range(1000):
        a = round(rng.uniform(1.0, 6.0), 2)
        b = a if k % 10 == 0 else round(rng.uniform(1.0, 6.0), 2)
        record = AlignmentRecord(f"r{k}", "mol2cap", "CCO", "x", k0=f"zero {k}", k1=f"reflected {k}")
        rec = select_alignment(record, Gateway(ScriptedScorer({f"zero {k}": a, f"reflected {k}": b}), "s"))
        expected = "K0" if a <= b else "K1"
        wrong += rec.selected != expected

    items = make_items(CORPUS[:100])
    store = AlignmentStore()
    run_all_stages(items, store, Gateway(MockBackend(), "t"), Gateway(MockBackend(), "s"),
                   PipelineSettings(directions=("mol2cap",)))
    recs = store.records()
    mean0 = np.mean([r.ppl0 for r in recs])
    mean1 = np.mean([r.ppl1 for r in recs])
    mean_sel = np.mean([r.ppl0 if r.selected == "K0" else r.ppl1 for r in recs])
    ok = (
        abs(ppl_uniform - 4.0) <= 1e-12 and abs(direct - 4.0) <= 1e-12 and wrong == 0 and len(recs) == 100
        and mean_sel <= min(mean0, mean1)
    )
    criterion(
        ok,
        f"uniform ppl {ppl_uniform:.12f}, wrong selections {wrong}/1000, mean ppl selected {mean_sel:.4f} "
        f"vs K0 {mean0:.4f} / K1 {mean1:.4f} over {len(recs)} items",
    )


def test_validity_arithmetic(criterion, tmp_path):
    outputs = (CORPUS * 4)[:3240] + INVALID_SMILES
    random.Random(60).shuffle(outputs)
    path = tmp_path / "predictions.jsonl"
    path.write_text("".join(json.dumps({"id": f"p{k}", "output": s}) + "\n" for k, s in enumerate(outputs)))
    loaded = [json.loads(line)["output"] for line in path.read_text().splitlines()]
    value = validity(loaded)
    ok = len(loaded) == 3300 and value == 3240 / 3300
    criterion(ok, f"validity {value:.6f} = {round(value * 3300)}/3300 (expected 3240/3300)")


def test_paradigm_emission(criterion, tmp_path, capsys):
    dataset = tmp_path / "toy20.jsonl"
    dataset.write_text("".join(TOY.read_text(encoding="utf-8").splitlines(keepends=True)[:20]), encoding="utf-8")
    timings = []
    for name in ("a", "b"):
        start = time.perf_counter()
        code = main(["pipeline", "--mock", "--dataset", str(dataset), "--run-dir", str(tmp_path / name)], env={})
        timings.append(time.perf_counter() - start)
        capsys.readouterr()
        assert code == 0
    problems = []
    for paradigm in PARADIGMS:
        for direction in DIRECTIONS:
            rel = f"datasets/{paradigm}_{direction}.jsonl"
            a, b = (tmp_path / "a" / rel).read_bytes(), (tmp_path / "b" / rel).read_bytes()
            if a != b:
                problems.append(f"{rel} differs")
            validate_file(tmp_path / "a" / rel, paradigm)
            records = [json.loads(line) for line in a.decode().splitlines()]
            if len(records) != 20:
                problems.append(f"{rel} has {len(records)} lines")
            for rec in records:
                roles = [m["role"] for m in rec["messages"]]
                user = rec["messages"][1]["content"]
                if roles != ["system", "user", "assistant"]:
                    problems.append(f"{rel} roles {roles}")
                chains = user.count("Alignments:")
                expected_chains = {"naive_sft": 0, "instruction": 1, "icmt": 0, "cot_icmt": 3}[paradigm]
                if chains != expected_chains:
                    problems.append(f"{rel} {rec['metadata']['item_id']} has {chains} alignment blocks")
                n_neighbors = len(rec["metadata"]["neighbor_ids"])
                if n_neighbors != (2 if paradigm in ("icmt", "cot_icmt") else 0):
                    problems.append(f"{rel} {rec['metadata']['item_id']} has {n_neighbors} neighbors")
    # strict containment between paradigms, per item
    for direction in DIRECTIONS:
        load = lambda p: [json.loads(x)["messages"][1]["content"] for x in  # noqa: E731
                          (tmp_path / "a" / f"datasets/{p}_{direction}.jsonl").read_text().splitlines()]
        naive, inst, icmt, cot = load("naive_sft"), load("instruction"), load("icmt"), load("cot_icmt")
        for k in range(20):
            if not (naive[k] in inst[k] and len(inst[k]) > len(naive[k])):
                problems.append(f"instruction does not extend naive for item {k}")
            examples = icmt[k].split("\n\n")[1:-1]
            for block in examples:
                for line in block.splitlines():
                    if line not in cot[k]:
                        problems.append(f"cot_icmt misses context line for item {k}")
            if not len(cot[k]) > len(icmt[k]):
                problems.append(f"cot_icmt not longer than icmt for item {k}")
    ok = not problems and max(timings) < 60
    criterion(ok, f"8 files x 20 lines byte-identical across runs, shape problems {len(problems)} "
                  f"{problems[:3]}, pipeline {max(timings):.1f} s (limit 60 s)")


def test_fingerprint_properties(criterion):
    rng = random.Random(8)
    bad_pairs = 0
    for _ in range(1000):
        x = set(rng.sample(range(512), rng.randint(0, 40)))
        y = set(rng.sample(range(512), rng.randint(0, 40)))
        a, b = Fingerprint.from_bits("morgan", 512, x), Fingerprint.from_bits("morgan", 512, y)
        t = tanimoto(a, b)
        if t != tanimoto(b, a) or not 0.0 <= t <= 1.0 or tanimoto(a, a) != 1.0:
            bad_pairs += 1
    variant_failures = 0
    for s in rng.sample(CORPUS, 100):
        g = parse_smiles(s)
        reference = (morgan_fingerprint(g), path_fingerprint(g), structural_keys(g))
        for _ in range(10):
            h = parse_smiles(write_smiles(renumber_atoms(g, random_order(len(g.atoms), rng))))
            if (morgan_fingerprint(h), path_fingerprint(h), structural_keys(h)) != reference:
                variant_failures += 1
    ok = bad_pairs == 0 and variant_failures == 0
    criterion(ok, f"1000 random pairs with property violations {bad_pairs}; "
                  f"100 molecules x 10 relabelings with changed fingerprints {variant_failures}")
