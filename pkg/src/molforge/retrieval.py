"""Caption retrieval with BM25 and molecule retrieval by embedding cosine similarity."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import httpx
import numpy as np

from .chem import MoleculeGraph, parse_smiles, write_smiles
from .fingerprints import morgan_fingerprint

BM25_K1 = 1.5
BM25_B = 0.75

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:(?:-|(?<=\d),(?=\d)|')[a-z0-9]+)*")


class EmptyCorpus(ValueError):
    pass


class InsufficientCorpus(ValueError):
    pass


class MissingAlignment(KeyError):
    """A retrieved neighbor has no stored alignment."""

    def __str__(self):
        return f"no alignment stored for item {self.args[0]!r}"


class DimensionMismatch(ValueError):
    pass


class ProviderUnavailable(RuntimeError):
    pass


def tokenize_caption(text: str) -> list[str]:
    """Lowercased alphanumeric tokens; hyphenated and comma-locant chemistry terms stay whole."""
    return _TOKEN_RE.findall(text.lower())


def natural_key(doc_id: str):
    """Sort key that orders ``item2`` before ``item10``."""
    return [(0, int(p), "") if p.isdigit() else (1, 0, p) for p in re.split(r"(\d+)", str(doc_id)) if p]


@dataclass
class RetrievalIndex:
    doc_ids: list[str]
    doc_lengths: dict[str, int]
    postings: dict[str, dict[str, int]]
    avg_doc_length: float
    k1: float = BM25_K1
    b: float = BM25_B
    vectors: np.ndarray | None = None
    vector_ids: list[str] = field(default_factory=list)

    @property
    def doc_count(self) -> int:
        return len(self.doc_ids)

    @property
    def dimension(self) -> int | None:
        return None if self.vectors is None else int(self.vectors.shape[1])

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        n = self.doc_count
        return math.log((n - df + 0.5) / (df + 0.5) + 1.0)

    def add_vectors(self, ids: Sequence[str], vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or len(ids) != vectors.shape[0]:
            raise ValueError("expected one vector per id")
        norms = np.linalg.norm(vectors, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("stored vectors must be unit-norm")
        self.vector_ids = list(ids)
        self.vectors = vectors

    def save(self, directory: str | Path):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        meta = {
            "doc_ids": self.doc_ids,
            "doc_lengths": self.doc_lengths,
            "postings": self.postings,
            "avg_doc_length": self.avg_doc_length,
            "k1": self.k1,
            "b": self.b,
            "vector_ids": self.vector_ids,
        }
        (directory / "bm25.json").write_text(json.dumps(meta, sort_keys=True), encoding="utf-8")
        if self.vectors is not None:
            with open(directory / "vectors.npy", "wb") as fh:
                np.save(fh, self.vectors)

    @classmethod
    def load(cls, directory: str | Path) -> "RetrievalIndex":
        directory = Path(directory)
        meta = json.loads((directory / "bm25.json").read_text(encoding="utf-8"))
        vec_path = directory / "vectors.npy"
        vectors = np.load(vec_path) if vec_path.exists() else None
        return cls(
            doc_ids=meta["doc_ids"],
            doc_lengths=meta["doc_lengths"],
            postings=meta["postings"],
            avg_doc_length=meta["avg_doc_length"],
            k1=meta["k1"],
            b=meta["b"],
            vectors=vectors,
            vector_ids=meta["vector_ids"],
        )


def build_bm25_index(corpus: Mapping[str, str], k1: float = BM25_K1, b: float = BM25_B) -> RetrievalIndex:
    if not corpus:
        raise EmptyCorpus("cannot index an empty corpus")
    doc_ids = sorted(corpus, key=natural_key)
    postings: dict[str, dict[str, int]] = {}
    lengths = {}
    for doc_id in doc_ids:
        tokens = tokenize_caption(corpus[doc_id])
        lengths[doc_id] = len(tokens)
        for tok in tokens:
            row = postings.setdefault(tok, {})
            row[doc_id] = row.get(doc_id, 0) + 1
    avg = sum(lengths.values()) / len(lengths)
    return RetrievalIndex(doc_ids, lengths, postings, avg, k1, b)


def bm25_scores(index: RetrievalIndex, query: str) -> dict[str, float]:
    """BM25 score of every indexed document against ``query``."""
    scores = {doc_id: 0.0 for doc_id in index.doc_ids}
    avg = index.avg_doc_length or 1.0
    for term in tokenize_caption(query):
        row = index.postings.get(term)
        if not row:
            continue
        idf = index.idf(term)
        for doc_id, tf in row.items():
            norm = index.k1 * (1 - index.b + index.b * index.doc_lengths[doc_id] / avg)
            scores[doc_id] += idf * tf * (index.k1 + 1) / (tf + norm)
    return scores


def _rank(scores: Mapping[str, float], k: int, exclude) -> list[tuple[str, float]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = sorted(
        ((doc_id, s) for doc_id, s in scores.items() if doc_id != exclude),
        key=lambda pair: (-pair[1], natural_key(pair[0])),
    )
    return ranked[:k]


def bm25_query(index: RetrievalIndex, query: str, k: int, exclude: str | None = None) -> list[tuple[str, float]]:
    """Top-k documents by BM25, ties broken by ascending id, ``exclude`` removed."""
    return _rank(bm25_scores(index, query), k, exclude)


def cosine_topk(index: RetrievalIndex, query_vec, k: int, exclude: str | None = None) -> list[tuple[str, float]]:
    if index.vectors is None:
        raise ValueError("index has no embedding store")
    q = np.asarray(query_vec, dtype=np.float64)
    if q.shape != (index.vectors.shape[1],):
        raise DimensionMismatch(f"query has shape {q.shape}, store dimension is {index.vectors.shape[1]}")
    sims = index.vectors @ q
    return _rank(dict(zip(index.vector_ids, sims.tolist())), k, exclude)


# ---------------------------------------------------------------------------
# Embedding providers
# ---------------------------------------------------------------------------


class EmbeddingProvider(Protocol):
    dimension: int

    def embed(self, ids: Sequence[str], graphs: Sequence[MoleculeGraph]) -> np.ndarray: ...


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return matrix / norms


@dataclass
class FingerprintProvider:
    """Offline embedding: morgan bits as a normalized real vector."""

    dimension: int = 2048
    radius: int = 2

    def embed(self, ids, graphs) -> np.ndarray:
        out = np.zeros((len(graphs), self.dimension))
        for row, graph in enumerate(graphs):
            fp = morgan_fingerprint(graph, self.radius, self.dimension)
            out[row, fp.on_bits()] = 1.0
        # a molecule with no bits (never happens for non-empty graphs) keeps a fixed unit vector
        for row in np.where(~out.any(axis=1))[0]:
            out[row, 0] = 1.0
        return _normalize_rows(out)


@dataclass
class RemoteProvider:
    """HTTP embedding service: POST {ids, smiles} -> {vectors, dimension}."""

    url: str
    dimension: int
    api_key: str | None = None
    timeout: float = 30.0
    client: httpx.Client | None = None

    def embed(self, ids, graphs) -> np.ndarray:
        payload = {"ids": list(ids), "smiles": [write_smiles(g) for g in graphs]}
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        client = self.client or httpx.Client(timeout=self.timeout)
        try:
            response = client.post(self.url, json=payload, headers=headers)
            response.raise_for_status()
            body = response.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise ProviderUnavailable(f"embedding service at {self.url} failed: {exc}") from exc
        finally:
            if self.client is None:
                client.close()
        vectors = np.asarray(body.get("vectors", []), dtype=np.float64)
        declared = body.get("dimension")
        if declared != self.dimension or vectors.shape != (len(graphs), self.dimension):
            raise DimensionMismatch(
                f"expected {len(graphs)}x{self.dimension}, got {vectors.shape} (declared {declared})"
            )
        return _normalize_rows(vectors)


def embed_molecule(provider: EmbeddingProvider, graph: MoleculeGraph, item_id: str = "query") -> np.ndarray:
    return provider.embed([item_id], [graph])[0]


def build_embedding_store(index: RetrievalIndex, smiles: Mapping[str, str], provider: EmbeddingProvider):
    ids = sorted(smiles, key=natural_key)
    graphs = [parse_smiles(smiles[i]) for i in ids]
    index.add_vectors(ids, provider.embed(ids, graphs))


# ---------------------------------------------------------------------------
# Context assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContextExample:
    neighbor_id: str
    input_text: str
    alignment: str | None
    target_text: str
    score: float


def retrieve_context(
    index: RetrievalIndex,
    item,
    n: int,
    direction: str,
    items: Mapping[str, object],
    alignments: Mapping[str, str] | None = None,
    provider: EmbeddingProvider | None = None,
) -> list[ContextExample]:
    """The ``n`` nearest neighbors of ``item`` with their inputs, alignments and targets.

    ``direction`` ``mol2cap`` retrieves by molecule embedding, ``cap2mol`` by
    caption BM25. The query item itself is never returned. With
    ``alignments`` set to None the examples carry no alignment text.
    """
    available = sum(1 for i in index.doc_ids if i != item.id)
    if available < n:
        raise InsufficientCorpus(f"need {n} neighbors for {item.id!r}, corpus offers {available}")
    if direction == "mol2cap":
        provider = provider or FingerprintProvider(dimension=index.dimension or 2048)
        query = embed_molecule(provider, parse_smiles(item.smiles), item.id)
        hits = cosine_topk(index, query, n, exclude=item.id)
    elif direction == "cap2mol":
        hits = bm25_query(index, item.caption, n, exclude=item.id)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    examples = []
    for neighbor_id, score in hits:
        alignment = None
        if alignments is not None:
            if neighbor_id not in alignments:
                raise MissingAlignment(neighbor_id)
            alignment = alignments[neighbor_id]
        other = items[neighbor_id]
        source, target = (other.smiles, other.caption) if direction == "mol2cap" else (other.caption, other.smiles)
        examples.append(ContextExample(neighbor_id, source, alignment, target, float(score)))
    return examples
