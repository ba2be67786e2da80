import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskrag.errors import DegenerateText
from riskrag.providers import OfflineEmbeddingProvider
from riskrag.similarity import EmbeddingTokenScorer, OfflineTokenScorer, pair_similarity

words = st.sampled_from(
    "model output bias toxic users harm content data text image speech "
    "generate produce unsafe privacy leak medical legal advice".split()
)
texts = st.lists(words, min_size=1, max_size=8).map(" ".join)


class TestPairSimilarity:
    def test_identical_exact_one(self):
        t = "the model may produce biased content about minorities"
        assert pair_similarity(t, t) == 1.0

    def test_bounds(self):
        s = pair_similarity("toxic outputs harm users", "privacy leak in training data")
        assert 0.0 <= s <= 1.0

    def test_symmetry(self):
        a, b = "model generates unsafe advice", "unsafe medical advice is generated"
        assert pair_similarity(a, b) == pytest.approx(pair_similarity(b, a), abs=1e-9)

    def test_near_paraphrase_beats_unrelated(self):
        base = "the model may generate toxic content about minority groups"
        near = "the model can generate toxic content about minorities"
        far = "training consumes significant electricity and water resources"
        assert pair_similarity(base, near) > pair_similarity(base, far)

    def test_disjoint_low(self):
        s = pair_similarity(
            "alpha bravo charlie delta echo", "zulu yankee xray whiskey victor"
        )
        assert s < 0.1

    def test_degenerate_raises(self):
        with pytest.raises(DegenerateText):
            pair_similarity("", "something")
        with pytest.raises(DegenerateText):
            pair_similarity("something", "!!! ...")

    def test_case_and_punctuation_invariant(self):
        a = pair_similarity("The Model fails.", "the model fails")
        assert a == 1.0

    @settings(max_examples=150, deadline=None)
    @given(texts, texts)
    def test_property_bounds_and_symmetry(self, a, b):
        s = pair_similarity(a, b)
        assert 0.0 <= s <= 1.0
        assert s == pytest.approx(pair_similarity(b, a), abs=1e-9)

    @settings(max_examples=75, deadline=None)
    @given(texts)
    def test_property_identity(self, t):
        assert pair_similarity(t, t) == 1.0


class TestScorers:
    def test_offline_contexts_windowing(self):
        sc = OfflineTokenScorer()
        assert sc.contexts(["a", "b", "c"]) == ["a b", "a b c", "b c"]
        assert sc.contexts(["solo"]) == ["solo"]

    def test_offline_cache_consistency(self):
        sc = OfflineTokenScorer(dim=64)
        v1 = sc.token_vectors(["a", "b"])
        v2 = sc.token_vectors(["a", "b"])
        assert (v1 == v2).all()

    def test_embedding_scorer_matches_offline_semantics(self):
        prov = OfflineEmbeddingProvider(dim=256)
        sc = EmbeddingTokenScorer(prov)
        s = pair_similarity("model outputs text", "model outputs text", scorer=sc)
        assert s == 1.0
        assert sc.name == "embedding:offline-hash-256"

    def test_custom_scorer_threadthrough(self):
        sc = OfflineTokenScorer(dim=1024)
        s_small = pair_similarity("model harms users", "model helps users", scorer=sc)
        assert 0.0 <= s_small <= 1.0
