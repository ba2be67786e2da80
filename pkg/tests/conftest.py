from pathlib import Path

import pytest

from riskrag.corpus import dedup_by_risk_text, load_cards, load_incidents
from riskrag.providers import OfflineChatProvider, OfflineEmbeddingProvider
from riskrag.retrieval import build_retriever

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN


@pytest.fixture(scope="session")
def fixture_cards():
    return load_cards(FIXTURES / "cards.jsonl")


@pytest.fixture(scope="session")
def fixture_dedup(fixture_cards):
    return dedup_by_risk_text([c for c in fixture_cards if c.risk_sections])


@pytest.fixture(scope="session")
def fixture_incidents():
    return load_incidents(FIXTURES / "incidents.jsonl")


@pytest.fixture(scope="session")
def chat_provider():
    return OfflineChatProvider()


@pytest.fixture(scope="session")
def embed_provider():
    return OfflineEmbeddingProvider(dim=256)


@pytest.fixture(scope="session")
def fixture_retriever(fixture_dedup, fixture_incidents):
    return build_retriever(fixture_dedup, fixture_incidents, backend="tfidf")
