import math

import numpy as np
import pytest

from riskrag.errors import DimensionMismatch, EmptyCorpus, EmptyIndex
from riskrag.providers import OfflineEmbeddingProvider
from riskrag.retrieval import (
    DenseIndex,
    SparseIndex,
    build_retriever,
    cosine,
    load_index,
    save_index,
    top_k_similar,
)


class TestTfidfGolden:
    """Frozen against hand-computed values for docs ["a b", "a c"]:
    vocabulary {a, b, c, "a b", "a c"}, smoothed IDF ln((1+N)/(1+df)) + 1."""

    def setup_method(self):
        self.idx = SparseIndex().fit([("d0", "a b"), ("d1", "a c")])

    def test_vocabulary(self):
        assert set(self.idx.vocabulary) == {"a", "b", "c", "a b", "a c"}

    def test_idf_values(self):
        v = self.idx.vocabulary
        idf = self.idx.idf
        assert idf[v["a"]] == pytest.approx(1.0)
        expected_rare = math.log(3 / 2) + 1  # df=1, N=2
        for term in ("b", "c", "a b", "a c"):
            assert idf[v[term]] == pytest.approx(expected_rare)

    def test_rows_l2_normalized(self):
        m = self.idx.matrix.toarray()
        np.testing.assert_allclose(np.linalg.norm(m, axis=1), [1.0, 1.0])

    def test_query_ranking(self):
        hits = top_k_similar(self.idx, "a b", 2)
        assert [h.doc_id for h in hits] == ["d0", "d1"]
        assert hits[0].score == pytest.approx(1.0)


class TestSparseIndex:
    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            SparseIndex().fit([])

    def test_unfitted_query(self):
        with pytest.raises(EmptyIndex):
            SparseIndex().query_scores("x")

    def test_single_char_tokens_kept(self):
        idx = SparseIndex().fit([("d0", "a b c")])
        assert "a" in idx.vocabulary

    def test_get_params(self):
        p = SparseIndex().get_params()
        assert p == {"backend": "tfidf", "ngram_range": (1, 2)}


class TestDenseIndex:
    def test_scores_match_manual_cosine(self):
        prov = OfflineEmbeddingProvider(dim=128)
        docs = [("d0", "speech model"), ("d1", "image model"), ("d2", "text model")]
        idx = DenseIndex(prov).fit(docs)
        q = prov.embed(["a speech model"])[0]
        for i, (_, text) in enumerate(docs):
            expected = cosine(prov.embed([text])[0], q)
            assert idx.query_scores("a speech model")[i] == pytest.approx(expected, abs=1e-12)

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            DenseIndex(OfflineEmbeddingProvider()).fit([])


class TestCosine:
    def test_orthogonal(self):
        assert cosine([1, 0], [0, 1]) == 0.0

    def test_identical(self):
        assert cosine([2, 3], [2, 3]) == pytest.approx(1.0)

    def test_opposite(self):
        assert cosine([1, 0], [-1, 0]) == pytest.approx(-1.0)

    def test_zero_vector(self):
        assert cosine([0, 0], [1, 1]) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cosine([1, 0], [1, 0, 0])


class TestTopK:
    def setup_method(self):
        self.idx = SparseIndex().fit(
            [("b", "red apples"), ("a", "red apples"), ("c", "blue sky")]
        )

    def test_tie_breaks_by_id(self):
        hits = top_k_similar(self.idx, "red apples", 2)
        assert [h.doc_id for h in hits] == ["a", "b"]

    def test_exclude_id(self):
        hits = top_k_similar(self.idx, "red apples", 2, exclude_id="a")
        assert [h.doc_id for h in hits] == ["b", "c"]

    def test_k_beyond_corpus(self):
        assert len(top_k_similar(self.idx, "red", 10)) == 3

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            top_k_similar(self.idx, "x", 0)
        with pytest.raises(ValueError):
            top_k_similar(self.idx, "", 1)


class TestRetriever:
    def test_retrieve_shapes(self, fixture_retriever):
        ctx = fixture_retriever.retrieve("an anime image generator", 3)
        assert len(ctx.card_hits) == 3
        assert len(ctx.incident_hits) == 3
        assert ctx.k == 3

    def test_exclusion_is_leak_proof(self, fixture_retriever, fixture_dedup):
        for card in fixture_dedup.retained:
            ctx = fixture_retriever.retrieve(card.description, 4, exclude_id=card.id)
            assert card.id not in {h.id for h in ctx.card_hits}

    def test_dense_backend(self, fixture_dedup, fixture_incidents, embed_provider):
        r = build_retriever(
            fixture_dedup, fixture_incidents, backend="dense", embed_provider=embed_provider
        )
        ctx = r.retrieve("a chatbot", 2)
        assert len(ctx.card_hits) == 2
        assert r.backend == "dense"

    def test_dense_requires_provider(self, fixture_dedup, fixture_incidents):
        with pytest.raises(ValueError):
            build_retriever(fixture_dedup, fixture_incidents, backend="dense")

    def test_unknown_backend(self, fixture_dedup, fixture_incidents):
        with pytest.raises(ValueError):
            build_retriever(fixture_dedup, fixture_incidents, backend="bm25")


class TestPersistence:
    def test_sparse_round_trip(self, tmp_path):
        idx = SparseIndex().fit(
            [("d0", "summarize legal documents"), ("d1", "classify images of wildlife")]
        )
        save_index(idx, tmp_path / "idx")
        loaded = load_index(tmp_path / "idx")
        for q in ("legal summaries", "wildlife photos", "documents"):
            orig = top_k_similar(idx, q, 2)
            back = top_k_similar(loaded, q, 2)
            assert [h.doc_id for h in orig] == [h.doc_id for h in back]
            for a, b in zip(orig, back):
                assert a.score == pytest.approx(b.score, abs=1e-12)

    def test_dense_round_trip(self, tmp_path, embed_provider):
        idx = DenseIndex(embed_provider).fit([("d0", "alpha beta"), ("d1", "gamma delta")])
        save_index(idx, tmp_path / "idx")
        loaded = load_index(tmp_path / "idx", embed_provider=embed_provider)
        np.testing.assert_array_equal(idx.matrix, loaded.matrix)
        assert loaded.doc_ids == ["d0", "d1"]

    def test_dense_load_requires_provider(self, tmp_path, embed_provider):
        idx = DenseIndex(embed_provider).fit([("d0", "alpha")])
        save_index(idx, tmp_path / "idx")
        with pytest.raises(ValueError):
            load_index(tmp_path / "idx")

    def test_version_check(self, tmp_path):
        idx = SparseIndex().fit([("d0", "a b")])
        save_index(idx, tmp_path / "idx")
        meta = (tmp_path / "idx" / "meta.json")
        meta.write_text(meta.read_text().replace('"format_version": 1', '"format_version": 99'))
        with pytest.raises(EmptyIndex):
            load_index(tmp_path / "idx")
