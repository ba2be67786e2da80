"""BERTScore-style pair similarity between two risk texts.

Tokens get per-token vectors from a pluggable backend; greedy max-cosine
matching in both directions yields token precision/recall, and the F1 is the
pair score. The offline backend embeds each token with a one-token context
window through the deterministic hash embedding.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateText
from .providers import hash_embed, l2_normalize, tokenize

DEFAULT_SCORER_DIM = 4096


class OfflineTokenScorer:
    """Per-token vectors from hash_embed over a (prev, token, next) window."""

    name = "offline"

    def __init__(self, dim: int = DEFAULT_SCORER_DIM):
        self.dim = dim
        self._cache: dict[str, np.ndarray] = {}

    def contexts(self, tokens: list[str]) -> list[str]:
        padded = [""] + tokens + [""]
        return [" ".join(filter(None, padded[i : i + 3])) for i in range(len(tokens))]

    def token_vectors(self, tokens: list[str]) -> np.ndarray:
        vecs = []
        for c in self.contexts(tokens):
            v = self._cache.get(c)
            if v is None:
                v = hash_embed(c, self.dim)
                v.setflags(write=False)
                self._cache[c] = v
            vecs.append(v)
        return np.stack(vecs)


class EmbeddingTokenScorer:
    """Per-token vectors from a remote embedding provider (one text per context)."""

    def __init__(self, provider):
        self.provider = provider
        self.name = f"embedding:{provider.model}"

    def contexts(self, tokens: list[str]) -> list[str]:
        padded = [""] + tokens + [""]
        return [" ".join(filter(None, padded[i : i + 3])) for i in range(len(tokens))]

    def token_vectors(self, tokens: list[str]) -> np.ndarray:
        return l2_normalize(self.provider.embed(self.contexts(tokens)))


_default_scorer = OfflineTokenScorer()


def pair_similarity(a: str, b: str, scorer=None) -> float:
    """Token-level greedy-matching F1 in [0, 1]; 1.0 exactly for identical texts."""
    scorer = scorer or _default_scorer
    ta, tb = tokenize(a), tokenize(b)
    if not ta or not tb:
        raise DegenerateText("text tokenizes to zero tokens")
    ca, cb = scorer.contexts(ta), scorer.contexts(tb)
    va, vb = scorer.token_vectors(ta), scorer.token_vectors(tb)
    sim = va @ vb.T
    # Identical contexts are exact matches by definition; pin them to 1.0 so
    # identical texts score exactly 1.0 despite float normalization error.
    for i, c in enumerate(ca):
        for j, c2 in enumerate(cb):
            if c == c2:
                sim[i, j] = 1.0
    sim = np.clip(sim, -1.0, 1.0)
    precision = float(np.mean(np.max(sim, axis=1)))
    recall = float(np.mean(np.max(sim, axis=0)))
    if precision + recall <= 0:
        return 0.0
    f1 = 2.0 * precision * recall / (precision + recall)
    return float(min(max(f1, 0.0), 1.0))
