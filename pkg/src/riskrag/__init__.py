"""RiskRAG: retrieval-augmented risk reports for AI models."""

from .corpus import (
    CorpusStats,
    DedupResult,
    IncidentRecord,
    ModelCardRecord,
    Section,
    SectionKind,
    corpus_stats,
    dedup_by_risk_text,
    extract_sections,
    load_cards,
    load_incidents,
    parse_model_card,
)
from .evaluation import (
    EvalConfig,
    EvalResult,
    MatchResult,
    build_pseudo_ground_truth,
    calibrate_threshold,
    match_and_score,
    run_grid,
    select_eval_set,
)
from .generation import (
    MappedRisks,
    MitigationItem,
    RiskItem,
    UseCase,
    adapt_and_map_risks,
    extract_mitigation_items,
    extract_risk_items,
    generate_uses,
    map_mitigations,
    merge_duplicate_risks,
)
from .pipeline import generate_report
from .providers import (
    ChatRequest,
    ChatResponse,
    OfflineChatProvider,
    OfflineEmbeddingProvider,
    OpenAIChatProvider,
    OpenAIEmbeddingProvider,
    ProviderConfig,
    hash_embed,
)
from .report import Provenance, RiskReport, assemble_report, prioritize_risks, render
from .retrieval import (
    DenseIndex,
    Retriever,
    SparseIndex,
    build_retriever,
    cosine,
    load_index,
    save_index,
    top_k_similar,
)
from .similarity import OfflineTokenScorer, pair_similarity

__version__ = "0.1.0"
