"""Sparse (TF-IDF 1-2 gram) and dense (embedding) indices with top-k cosine search.

Indices follow the fit/query estimator idiom: `fit(docs)` returns self, after
which `top_k_similar` answers ranked queries. Rows are L2-normalized so cosine
reduces to a dot product. Ties break by ascending doc id for reproducibility.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from sklearn.feature_extraction.text import TfidfVectorizer

from .corpus import DedupResult, IncidentRecord, ModelCardRecord, Section
from .errors import DimensionMismatch, EmptyCorpus, EmptyIndex

INDEX_FORMAT_VERSION = 1

_TOKEN_PATTERN = r"(?u)\b\w+\b"  # keep single-character tokens


@dataclass(frozen=True)
class Hit:
    doc_id: str
    score: float


class SparseIndex:
    """TF-IDF index, n-gram range fixed at 1-2, smoothed IDF, L2 rows."""

    backend = "tfidf"

    def __init__(self):
        self.vectorizer = TfidfVectorizer(
            ngram_range=(1, 2),
            token_pattern=_TOKEN_PATTERN,
            lowercase=True,
            norm="l2",
            smooth_idf=True,
            sublinear_tf=False,
            dtype=np.float64,
        )
        self.doc_ids: list[str] = []
        self.matrix: sp.csr_matrix | None = None

    def get_params(self) -> dict:
        return {"backend": self.backend, "ngram_range": (1, 2)}

    def fit(self, docs: list[tuple[str, str]]) -> "SparseIndex":
        if not docs:
            raise EmptyCorpus("cannot build an index over zero documents")
        self.doc_ids = [d[0] for d in docs]
        self.matrix = self.vectorizer.fit_transform([d[1] for d in docs])
        return self

    @property
    def vocabulary(self) -> dict[str, int]:
        return self.vectorizer.vocabulary_

    @property
    def idf(self) -> np.ndarray:
        return self.vectorizer.idf_

    def query_scores(self, query: str) -> np.ndarray:
        if self.matrix is None:
            raise EmptyIndex("index is not fitted")
        q = self.vectorizer.transform([query])
        return np.asarray((self.matrix @ q.T).todense()).ravel()


class DenseIndex:
    """Embedding index over unit-norm vectors from an embedding provider."""

    backend = "dense"

    def __init__(self, provider):
        self.provider = provider
        self.doc_ids: list[str] = []
        self.matrix: np.ndarray | None = None

    def get_params(self) -> dict:
        return {"backend": self.backend, "model": self.provider.model}

    def fit(self, docs: list[tuple[str, str]]) -> "DenseIndex":
        if not docs:
            raise EmptyCorpus("cannot build an index over zero documents")
        self.doc_ids = [d[0] for d in docs]
        self.matrix = self.provider.embed([d[1] for d in docs])
        return self

    def query_scores(self, query: str) -> np.ndarray:
        if self.matrix is None:
            raise EmptyIndex("index is not fitted")
        q = self.provider.embed([query])[0]
        return self.matrix @ q


def cosine(a, b) -> float:
    """Cosine similarity in [-1, 1]; degenerate (zero) vectors score 0.0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def top_k_similar(index, query: str, k: int, exclude_id: str | None = None) -> list[Hit]:
    if k < 1:
        raise ValueError("k must be >= 1")
    if not query:
        raise ValueError("query must be non-empty")
    scores = index.query_scores(query)
    order = sorted(
        range(len(index.doc_ids)),
        key=lambda i: (-scores[i], index.doc_ids[i]),
    )
    hits = []
    for i in order:
        if exclude_id is not None and index.doc_ids[i] == exclude_id:
            continue
        hits.append(Hit(index.doc_ids[i], float(np.clip(scores[i], -1.0, 1.0))))
        if len(hits) == k:
            break
    return hits


@dataclass(frozen=True)
class CardHit:
    id: str
    score: float
    risk_sections: tuple[Section, ...]
    recommendation_sections: tuple[Section, ...]


@dataclass(frozen=True)
class IncidentHit:
    id: int
    score: float
    description: str


@dataclass(frozen=True)
class RetrievalContext:
    k: int
    card_hits: tuple[CardHit, ...]
    incident_hits: tuple[IncidentHit, ...]


class Retriever:
    """Paired card + incident indices answering description queries.

    Cards are indexed by their descriptions; risk/recommendation sections travel
    as payload on each hit. Incidents are indexed by their descriptions.
    """

    def __init__(self, card_index, incident_index, cards: list[ModelCardRecord], incidents: list[IncidentRecord]):
        self.card_index = card_index
        self.incident_index = incident_index
        self.cards_by_id = {c.id: c for c in cards}
        self.incidents_by_id = {i.id: i for i in incidents}

    @property
    def backend(self) -> str:
        return self.card_index.backend

    def retrieve(self, model_description: str, k: int, exclude_id: str | None = None) -> RetrievalContext:
        card_hits = top_k_similar(self.card_index, model_description, k, exclude_id=exclude_id)
        incident_hits = top_k_similar(self.incident_index, model_description, k)
        return RetrievalContext(
            k=k,
            card_hits=tuple(
                CardHit(
                    h.doc_id,
                    h.score,
                    self.cards_by_id[h.doc_id].risk_sections,
                    self.cards_by_id[h.doc_id].recommendation_sections,
                )
                for h in card_hits
            ),
            incident_hits=tuple(
                IncidentHit(int(h.doc_id), h.score, self.incidents_by_id[int(h.doc_id)].description)
                for h in incident_hits
            ),
        )


def build_retriever(
    corpus: DedupResult | list[ModelCardRecord],
    incidents: list[IncidentRecord],
    backend: str = "tfidf",
    embed_provider=None,
) -> Retriever:
    cards = list(corpus.retained) if isinstance(corpus, DedupResult) else list(corpus)
    card_docs = [(c.id, c.description) for c in cards if c.description.strip()]
    incident_docs = [(str(i.id), i.description) for i in incidents]
    if backend == "tfidf":
        card_index: SparseIndex | DenseIndex = SparseIndex().fit(card_docs)
        incident_index: SparseIndex | DenseIndex = SparseIndex().fit(incident_docs)
    elif backend == "dense":
        if embed_provider is None:
            raise ValueError("dense backend requires an embedding provider")
        card_index = DenseIndex(embed_provider).fit(card_docs)
        incident_index = DenseIndex(embed_provider).fit(incident_docs)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return Retriever(card_index, incident_index, cards, incidents)


def save_index(index, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": INDEX_FORMAT_VERSION,
        "backend": index.backend,
        "doc_ids": index.doc_ids,
    }
    if isinstance(index, SparseIndex):
        meta["vocabulary"] = {k: int(v) for k, v in index.vocabulary.items()}
        meta["idf"] = index.idf.tolist()
        sp.save_npz(out / "rows.npz", index.matrix)
    else:
        meta["model"] = index.provider.model
        np.save(out / "rows.npy", index.matrix)
    with open(out / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh)


def load_index(in_dir: str | Path, embed_provider=None):
    src = Path(in_dir)
    with open(src / "meta.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("format_version") != INDEX_FORMAT_VERSION:
        raise EmptyIndex(f"unsupported index format {meta.get('format_version')!r}")
    if meta["backend"] == "tfidf":
        index = SparseIndex()
        index.vectorizer = TfidfVectorizer(
            ngram_range=(1, 2),
            token_pattern=_TOKEN_PATTERN,
            lowercase=True,
            norm="l2",
            smooth_idf=True,
            sublinear_tf=False,
            dtype=np.float64,
            vocabulary=meta["vocabulary"],
        )
        # Fit against a dummy doc to materialize the fixed vocabulary, then
        # install the stored IDF weights so transform() matches the original.
        index.vectorizer.fit(["placeholder"])
        index.vectorizer.idf_ = np.asarray(meta["idf"], dtype=np.float64)
        index.doc_ids = list(meta["doc_ids"])
        index.matrix = sp.load_npz(src / "rows.npz")
        return index
    if meta["backend"] == "dense":
        if embed_provider is None:
            raise ValueError("dense index requires an embedding provider to answer queries")
        index = DenseIndex(embed_provider)
        index.doc_ids = list(meta["doc_ids"])
        index.matrix = np.load(src / "rows.npy")
        return index
    raise EmptyIndex(f"unknown backend {meta['backend']!r}")
