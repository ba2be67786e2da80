"""End-to-end wiring: retrieval context -> two-step generation -> assembled report."""

from __future__ import annotations

from .generation import (
    DEFAULT_MERGE_THRESHOLD,
    MappedRisks,
    MitigationItem,
    RiskItem,
    extract_mitigation_items,
    extract_risk_items,
    generate_uses,
    map_mitigations,
    merge_duplicate_risks,
    adapt_and_map_risks,
    prompt_hashes,
)
from .report import Provenance, RiskReport, assemble_report
from .retrieval import RetrievalContext, Retriever


def step1_risks(
    ctx: RetrievalContext, model_description: str, chat_provider
) -> list[RiskItem]:
    """Step-1 extraction over every retrieved risk section and incident description."""
    items: list[RiskItem] = []
    for hit in ctx.card_hits:
        for section in hit.risk_sections:
            items.extend(
                extract_risk_items(
                    section.text,
                    origin=hit.id,
                    model_description=model_description,
                    provider=chat_provider,
                    section_kind=section.kind.value,
                )
            )
    for hit in ctx.incident_hits:
        items.extend(
            extract_risk_items(
                hit.description,
                origin=f"incident:{hit.id}",
                model_description=model_description,
                provider=chat_provider,
                is_incident=True,
            )
        )
    return items


def step1_mitigations(ctx: RetrievalContext, chat_provider) -> list[MitigationItem]:
    """Mitigations from retrieved risk + recommendation sections, per source card."""
    items: list[MitigationItem] = []
    for hit in ctx.card_hits:
        sections = [(s.kind.value, s.text) for s in hit.risk_sections] + [
            (s.kind.value, s.text) for s in hit.recommendation_sections
        ]
        items.extend(extract_mitigation_items(sections, origin=hit.id, provider=chat_provider))
    return items


def generate_report(
    retriever: Retriever,
    model_description: str,
    k: int,
    chat_provider,
    *,
    model_id: str = "novel-model",
    exclude_id: str | None = None,
    merge_threshold: float = DEFAULT_MERGE_THRESHOLD,
    scorer=None,
    n_candidates: int = 12,
    n_top: int = 4,
    timestamp: str | None = None,
) -> RiskReport:
    ctx = retriever.retrieve(model_description, k, exclude_id=exclude_id)

    raw_risks = step1_risks(ctx, model_description, chat_provider)
    merged = merge_duplicate_risks(raw_risks, threshold=merge_threshold, scorer=scorer)
    mitigations = step1_mitigations(ctx, chat_provider)

    uses = generate_uses(model_description, chat_provider, n_candidates=n_candidates, n_top=n_top)

    if uses and merged:
        mapped = adapt_and_map_risks(merged, uses, model_description, chat_provider)
    else:
        mapped = MappedRisks(tuple(merged), tuple(() for _ in merged), ())
        if uses:
            mapped = MappedRisks(
                tuple(merged),
                tuple(tuple(False for _ in uses) for _ in merged),
                (),
            )

    if mapped.risks and mitigations:
        mitigations = map_mitigations(mitigations, list(mapped.risks), chat_provider)

    embedding_model = getattr(getattr(retriever.card_index, "provider", None), "model", None)
    provenance = Provenance(
        backend=retriever.backend,
        k=k,
        embedding_model=embedding_model,
        chat_model=chat_provider.model,
        prompt_hashes=prompt_hashes(),
        timestamp=timestamp,
    )
    return assemble_report(model_id, model_description, uses, mapped, mitigations, provenance)
