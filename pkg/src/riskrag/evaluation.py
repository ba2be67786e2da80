"""Baseline evaluation: pseudo ground truth, threshold matching, retriever x k grids.

For each evaluated card, the pipeline retrieves with the card itself excluded,
runs Step-1 extraction to get the retrieved risk set R, and compares it against
the pseudo ground truth G (Step-1 over the card's own risk sections) with
similarity-threshold matching.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass

from .corpus import DedupResult, IncidentRecord, ModelCardRecord
from .generation import extract_risk_items, merge_duplicate_risks
from .pipeline import step1_risks
from .retrieval import build_retriever
from .similarity import pair_similarity

DEFAULT_MATCH_THRESHOLD = 0.6
DEFAULT_TOP_FRACTION = 0.1


@dataclass(frozen=True)
class EvalConfig:
    backend: str = "tfidf"
    k: int = 5
    match_threshold: float = DEFAULT_MATCH_THRESHOLD
    top_fraction: float = DEFAULT_TOP_FRACTION
    scorer: str = "offline"
    one_to_one: bool = True

    def __post_init__(self):
        if not (0.0 <= self.match_threshold <= 1.0):
            raise ValueError("match_threshold must be in [0, 1]")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class MatchResult:
    retrieved: tuple[str, ...]
    ground_truth: tuple[str, ...]
    matches: tuple[tuple[int, int, float], ...]  # (r index, g index, score)
    precision: float
    recall: float
    corpus_score: float
    degenerate: bool = False


@dataclass(frozen=True)
class CardEval:
    card_id: str
    result: MatchResult


@dataclass(frozen=True)
class EvalResult:
    config: EvalConfig
    per_card: tuple[CardEval, ...]
    precision: float
    recall: float
    corpus_score: float


def select_eval_set(corpus: DedupResult, top_fraction: float) -> list[ModelCardRecord]:
    """Top floor(fraction * N) records by downloads (ties by id), at least one."""
    if not (0.0 < top_fraction <= 1.0):
        raise ValueError("top_fraction must be in (0, 1]")
    ranked = sorted(corpus.retained, key=lambda c: (-c.downloads, c.id))
    n = max(1, math.floor(top_fraction * len(ranked) + 1e-9))
    return ranked[:n]


def build_pseudo_ground_truth(card: ModelCardRecord, chat_provider) -> list[str]:
    """Step-1 extraction on the card's own risk sections (no retrieval); duplicate
    texts collapse. Cards yielding an empty list are excluded by callers."""
    texts: list[str] = []
    seen: set[str] = set()
    for section in card.risk_sections:
        for item in extract_risk_items(
            section.text,
            origin=card.id,
            model_description=card.description,
            provider=chat_provider,
            section_kind=section.kind.value,
        ):
            key = re.sub(r"\s+", " ", item.text.lower()).strip()
            if key not in seen:
                seen.add(key)
                texts.append(item.text)
    return texts


def match_and_score(
    retrieved: list[str],
    ground_truth: list[str],
    threshold: float = DEFAULT_MATCH_THRESHOLD,
    scorer=None,
    one_to_one: bool = True,
    sim_fn=None,
) -> MatchResult:
    """Greedy threshold matching by descending score; one-to-one by default
    (each side matched at most once), many-to-one as a sensitivity variant
    (a retrieved risk may match several ground-truth risks). `sim_fn`
    overrides the pair scorer (used by the oracle tests)."""
    if not (0.0 <= threshold <= 1.0):
        raise ValueError("threshold must be in [0, 1]")
    if sim_fn is None:
        sim_fn = lambda a, b: pair_similarity(a, b, scorer=scorer)
    R, G = list(retrieved), list(ground_truth)
    if not R or not G:
        return MatchResult(tuple(R), tuple(G), (), 0.0, 0.0, 0.0, degenerate=True)

    scores = [[sim_fn(r, g) for g in G] for r in R]
    pairs = sorted(
        ((i, j) for i in range(len(R)) for j in range(len(G))),
        key=lambda p: (-scores[p[0]][p[1]], p[0], p[1]),
    )
    matched_r: set[int] = set()
    matched_g: set[int] = set()
    matches: list[tuple[int, int, float]] = []
    for i, j in pairs:
        s = scores[i][j]
        if s < threshold:
            break
        if j in matched_g:
            continue
        if one_to_one and i in matched_r:
            continue
        matched_r.add(i)
        matched_g.add(j)
        matches.append((i, j, s))

    precision = len(matched_r) / len(R)
    recall = len(matched_g) / len(G)
    corpus_score = sum(max(scores[i][j] for i in range(len(R))) for j in range(len(G))) / len(G)
    return MatchResult(tuple(R), tuple(G), tuple(matches), precision, recall, corpus_score)


def evaluate_card(
    card: ModelCardRecord,
    retriever,
    ground_truth: list[str],
    config: EvalConfig,
    chat_provider,
    scorer=None,
) -> MatchResult:
    ctx = retriever.retrieve(card.description, config.k, exclude_id=card.id)
    hit_ids = {h.id for h in ctx.card_hits}
    assert card.id not in hit_ids, f"self-retrieval leakage for {card.id}"
    items = step1_risks(ctx, card.description, chat_provider)
    merged = merge_duplicate_risks(items, threshold=config.match_threshold, scorer=scorer)
    return match_and_score(
        [r.text for r in merged],
        ground_truth,
        threshold=config.match_threshold,
        scorer=scorer,
        one_to_one=config.one_to_one,
    )


def run_grid(
    corpus: DedupResult,
    incidents: list[IncidentRecord],
    eval_cards: list[ModelCardRecord],
    configs: list[EvalConfig],
    chat_provider,
    embed_provider=None,
    scorer=None,
) -> list[EvalResult]:
    ground_truths = {
        c.id: build_pseudo_ground_truth(c, chat_provider) for c in eval_cards
    }
    usable = [c for c in eval_cards if ground_truths[c.id]]

    retrievers: dict[str, object] = {}
    results: list[EvalResult] = []
    for config in configs:
        if config.backend not in retrievers:
            retrievers[config.backend] = build_retriever(
                corpus, incidents, backend=config.backend, embed_provider=embed_provider
            )
        retriever = retrievers[config.backend]
        per_card = tuple(
            CardEval(
                c.id,
                evaluate_card(c, retriever, ground_truths[c.id], config, chat_provider, scorer),
            )
            for c in usable
        )
        n = len(per_card)
        results.append(
            EvalResult(
                config=config,
                per_card=per_card,
                precision=sum(e.result.precision for e in per_card) / n if n else 0.0,
                recall=sum(e.result.recall for e in per_card) / n if n else 0.0,
                corpus_score=sum(e.result.corpus_score for e in per_card) / n if n else 0.0,
            )
        )
    return results


def results_to_csv(results: list[EvalResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["backend", "k", "card_id", "precision", "recall", "corpus_score"])
    for res in results:
        for entry in res.per_card:
            writer.writerow(
                [
                    res.config.backend,
                    res.config.k,
                    entry.card_id,
                    f"{entry.result.precision:.6f}",
                    f"{entry.result.recall:.6f}",
                    f"{entry.result.corpus_score:.6f}",
                ]
            )
    return buf.getvalue()


def results_to_json(results: list[EvalResult]) -> str:
    payload = [
        {
            "backend": r.config.backend,
            "k": r.config.k,
            "match_threshold": r.config.match_threshold,
            "scorer": r.config.scorer,
            "one_to_one": r.config.one_to_one,
            "cards": len(r.per_card),
            "precision": r.precision,
            "recall": r.recall,
            "corpus_score": r.corpus_score,
        }
        for r in results
    ]
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def results_to_markdown(results: list[EvalResult]) -> str:
    """Backends x k grid with precision / recall / similarity columns per k."""
    ks = sorted({r.config.k for r in results})
    backends = []
    for r in results:
        if r.config.backend not in backends:
            backends.append(r.config.backend)
    by_key = {(r.config.backend, r.config.k): r for r in results}

    header = "| backend |" + "".join(
        f" P@{k} | R@{k} | S@{k} |" for k in ks
    )
    sep = "|---" * (1 + 3 * len(ks)) + "|"
    lines = [header, sep]
    for backend in backends:
        cells = []
        for k in ks:
            r = by_key.get((backend, k))
            if r is None:
                cells += ["-", "-", "-"]
            else:
                cells += [f"{r.precision:.2f}", f"{r.recall:.2f}", f"{r.corpus_score:.2f}"]
        lines.append(f"| {backend} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def calibrate_threshold(
    labeled_pairs: list[tuple[str, str, bool]],
    scorer=None,
    step: float = 0.05,
) -> tuple[float, float]:
    """Sweep thresholds and return (best threshold, agreement) against
    human match/no-match labels; ties resolve to the lowest threshold."""
    if not labeled_pairs:
        raise ValueError("no labeled pairs")
    sims = [(pair_similarity(a, b, scorer=scorer), label) for a, b, label in labeled_pairs]
    best_t, best_acc = 0.0, -1.0
    t = 0.0
    while t <= 1.0 + 1e-9:
        acc = sum((s >= t) == label for s, label in sims) / len(sims)
        if acc > best_acc:
            best_t, best_acc = round(t, 4), acc
        t += step
    return best_t, best_acc
