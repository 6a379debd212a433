from __future__ import annotations

import json
import random
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from molforge.pipeline import DatasetItem

DATA = Path(__file__).parent / "data"
TOY = Path(__file__).parents[1] / "src" / "molforge" / "data" / "toy_chebi.jsonl"

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def load_corpus() -> list[str]:
    return (DATA / "corpus.smi").read_text(encoding="utf-8").split()


def random_order(n: int, rng: random.Random) -> list[int]:
    order = list(range(n))
    rng.shuffle(order)
    return order


@pytest.fixture(scope="session")
def corpus() -> list[str]:
    return load_corpus()


@pytest.fixture(scope="session")
def toy_path() -> Path:
    return TOY


@pytest.fixture
def toy_items() -> list[DatasetItem]:
    rows = [json.loads(line) for line in TOY.read_text(encoding="utf-8").splitlines() if line.strip()]
    return [DatasetItem(r["id"], r["smiles"], r["caption"]) for r in rows]


def make_items(smiles: list[str], prefix: str = "m") -> list[DatasetItem]:
    """Items with synthetic captions derived from simple structural facts."""
    from molforge.chem import parse_smiles

    items = []
    for k, s in enumerate(smiles, 1):
        g = parse_smiles(s)
        elements = sorted({a.element for a in g.atoms})
        ring = "a ring" if g.ring_bonds else "no ring"
        caption = f"The molecule has {len(g.atoms)} atoms, contains {' '.join(elements)} and {ring}."
        items.append(DatasetItem(f"{prefix}{k}", s, caption))
    return items


def build_index(items):
    """BM25 over captions plus the offline fingerprint embedding store."""
    from molforge.retrieval import FingerprintProvider, build_bm25_index, build_embedding_store

    index = build_bm25_index({i.id: i.caption for i in items})
    build_embedding_store(index, {i.id: i.smiles for i in items}, FingerprintProvider())
    return index


def run_all_stages(items, store, teacher, scorer, settings=None):
    from molforge.pipeline import run_stage

    index = build_index(items)
    reports = [
        run_stage(items, "extract", store, teacher=teacher, settings=settings),
        run_stage(items, "reflect", store, teacher=teacher, index=index, settings=settings),
        run_stage(items, "select", store, scorer=scorer, settings=settings),
    ]
    return index, reports


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion.

    The test calls ``criterion(ok, detail)``; the line is printed immediately
    and repeated in the terminal summary.
    """

    def record(ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} {request.node.name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
