"""Caption and molecule generation metrics."""

from __future__ import annotations

import math
from collections import Counter
from functools import lru_cache
from typing import Callable, Sequence

from nltk.stem.porter import PorterStemmer

from ..chem import NoKekuleAssignment, SmilesError, canonicalize, kekulize, parse_smiles, resonance_normalize
from ..fingerprints import fingerprint, tanimoto
from ..retrieval import tokenize_caption

BLEU_EPSILON = 1e-9


class LengthMismatch(ValueError):
    pass


class EmptyCorpus(ValueError):
    pass


def _paired(references: Sequence, hypotheses: Sequence):
    if len(references) != len(hypotheses):
        raise LengthMismatch(f"{len(references)} references vs {len(hypotheses)} hypotheses")


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(
    references: Sequence[str],
    hypotheses: Sequence[str],
    max_n: int = 4,
    tokenizer: Callable[[str], list] = tokenize_caption,
) -> float:
    """Corpus BLEU with uniform weights, one reference per hypothesis.

    No unigram overlap at all scores 0; any other zero precision is
    replaced by a small epsilon before taking logs.
    """
    _paired(references, hypotheses)
    if not references:
        raise EmptyCorpus("BLEU needs at least one pair")
    matches = [0] * max_n
    totals = [0] * max_n
    ref_len = hyp_len = 0
    for ref, hyp in zip(references, hypotheses):
        r, h = tokenizer(ref), tokenizer(hyp)
        ref_len += len(r)
        hyp_len += len(h)
        for n in range(1, max_n + 1):
            hc, rc = ngrams(h, n), ngrams(r, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            totals[n - 1] += max(0, len(h) - n + 1)
    if hyp_len == 0 or matches[0] == 0:
        return 0.0
    log_p = 0.0
    for m, t in zip(matches, totals):
        p = m / t if t else 0.0
        log_p += math.log(p if p > 0 else BLEU_EPSILON) / max_n
    bp = 1.0 if hyp_len > ref_len else math.exp(1 - ref_len / hyp_len)
    return bp * math.exp(log_p)


def char_tokens(text: str) -> list[str]:
    return list(text)


def _f1(overlap: int, hyp_total: int, ref_total: int) -> float:
    if overlap == 0:
        return 0.0
    p, r = overlap / hyp_total, overlap / ref_total
    return 2 * p * r / (p + r)


def lcs_length(a: Sequence, b: Sequence) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_pair(reference: str, hypothesis: str, variant) -> float:
    r, h = tokenize_caption(reference), tokenize_caption(hypothesis)
    if variant == "L":
        if not r and not h:
            return 1.0
        if not r or not h:
            return 0.0
        return _f1(lcs_length(r, h), len(h), len(r))
    n = int(variant)
    rc, hc = ngrams(r, n), ngrams(h, n)
    if not rc and not hc:
        return 1.0 if r == h else 0.0
    if not rc or not hc:
        return 0.0
    overlap = sum(min(c, rc[g]) for g, c in hc.items())
    return _f1(overlap, sum(hc.values()), sum(rc.values()))


def rouge(references: Sequence[str], hypotheses: Sequence[str], variant="L") -> float:
    """Mean per-pair ROUGE F1 for variant 1, 2 or L."""
    _paired(references, hypotheses)
    if str(variant) not in ("1", "2", "L"):
        raise ValueError(f"unknown ROUGE variant {variant!r}")
    if not references:
        raise EmptyCorpus("ROUGE needs at least one pair")
    return math.fsum(rouge_pair(r, h, str(variant)) for r, h in zip(references, hypotheses)) / len(references)


_STEMMER = PorterStemmer()


@lru_cache(maxsize=65536)
def _stem(word: str) -> str:
    return _STEMMER.stem(word)


def meteor_alignment(ref: Sequence[str], hyp: Sequence[str], stemming: bool = True) -> list[tuple[int, int]]:
    """Greedy unigram alignment: exact matches first, then Porter-stem matches.

    Each stage scans the hypothesis left to right and takes the first free
    reference position with the same form. Returns sorted (hyp, ref) pairs.
    """
    pairs: list[tuple[int, int]] = []
    used_h: set[int] = set()
    used_r: set[int] = set()
    stages = (lambda w: w, _stem) if stemming else (lambda w: w,)
    for form in stages:
        ref_forms = [form(w) for w in ref]
        for i, w in enumerate(hyp):
            if i in used_h:
                continue
            fw = form(w)
            for j, rw in enumerate(ref_forms):
                if j not in used_r and rw == fw:
                    pairs.append((i, j))
                    used_h.add(i)
                    used_r.add(j)
                    break
    return sorted(pairs)


def count_chunks(pairs: Sequence[tuple[int, int]]) -> int:
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor_pair(reference: str, hypothesis: str, *, stemming: bool = True) -> float:
    r, h = tokenize_caption(reference), tokenize_caption(hypothesis)
    pairs = meteor_alignment(r, h, stemming)
    m = len(pairs)
    if m == 0:
        return 0.0
    p, rec = m / len(h), m / len(r)
    fmean = 10 * p * rec / (rec + 9 * p)
    penalty = 0.5 * (count_chunks(pairs) / m) ** 3
    return fmean * (1 - penalty)


def meteor(references: Sequence[str], hypotheses: Sequence[str], *, stemming: bool = True) -> float:
    """Mean per-pair METEOR (exact and stem stages, no synonyms)."""
    _paired(references, hypotheses)
    if not references:
        raise EmptyCorpus("METEOR needs at least one pair")
    return math.fsum(
        meteor_pair(r, h, stemming=stemming) for r, h in zip(references, hypotheses)
    ) / len(references)


def levenshtein(a: str, b: str) -> int:
    """Character edit distance with unit-cost insert, delete and substitute."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def mean_levenshtein(references: Sequence[str], hypotheses: Sequence[str]) -> float:
    _paired(references, hypotheses)
    if not references:
        raise EmptyCorpus("no pairs")
    return sum(levenshtein(r, h) for r, h in zip(references, hypotheses)) / len(references)


@lru_cache(maxsize=65536)
def _parsed(smiles: str):
    """The parsed graph when the SMILES is valid, else None."""
    try:
        graph = parse_smiles(smiles)
        kekulize(graph)
    except (SmilesError, NoKekuleAssignment):
        return None
    return graph


@lru_cache(maxsize=65536)
def _canonical(smiles: str) -> str | None:
    """Canonical SMILES of the resonance-normalized graph, so that aromatic and
    Kekule spellings of one molecule compare equal."""
    graph = _parsed(smiles)
    return None if graph is None else canonicalize(resonance_normalize(graph)).text


def is_valid(smiles: str) -> bool:
    return _parsed(smiles) is not None


def exact_match(references: Sequence[str], hypotheses: Sequence[str]) -> float:
    """Fraction of pairs naming the same molecule; invalid outputs never match."""
    _paired(references, hypotheses)
    if not references:
        raise EmptyCorpus("no pairs")
    hits = 0
    for r, h in zip(references, hypotheses):
        cr, ch = _canonical(r), _canonical(h)
        if cr is not None and cr == ch:
            hits += 1
    return hits / len(references)


FTS_KINDS = {"maccs": "keys", "rdk": "path", "morgan": "morgan", "keys": "keys", "path": "path"}


def fingerprint_fts(references: Sequence[str], hypotheses: Sequence[str], kind: str) -> float:
    """Mean Tanimoto between reference and output fingerprints; invalid pairs count 0."""
    _paired(references, hypotheses)
    if not references:
        raise EmptyCorpus("no pairs")
    fp_kind = FTS_KINDS[kind]
    total = 0.0
    for r, h in zip(references, hypotheses):
        pr, ph = _parsed(r), _parsed(h)
        if pr is None or ph is None:
            continue
        total += tanimoto(fingerprint(pr, fp_kind), fingerprint(ph, fp_kind))
    return total / len(references)


def validity(hypotheses: Sequence[str]) -> float:
    if not hypotheses:
        raise EmptyCorpus("validity needs at least one output")
    return sum(1 for h in hypotheses if is_valid(h)) / len(hypotheses)
