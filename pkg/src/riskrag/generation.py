"""Two-step generation: structure retrieved text into taxonomy-labeled risks and
mitigations, generate example uses, adapt/drop risks for the target model, and
map risks to uses and mitigations to risks."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, replace
from importlib import resources

from .errors import SchemaViolation
from .providers import ChatRequest
from .similarity import pair_similarity

LAYERS = ("capability", "human_interaction", "systemic")

HARM_TYPES = (
    "representation_and_toxicity",
    "misinformation",
    "malicious_use",
    "information_and_safety",
    "human_autonomy",
    "socioeconomic_and_environmental",
)

DEFAULT_MERGE_THRESHOLD = 0.6


@dataclass(frozen=True)
class RiskSource:
    origin: str
    section: str | None
    is_incident: bool

    def to_dict(self) -> dict:
        return {"origin": self.origin, "section": self.section, "is_incident": self.is_incident}

    @staticmethod
    def from_dict(d: dict) -> "RiskSource":
        return RiskSource(d["origin"], d.get("section"), bool(d["is_incident"]))


@dataclass(frozen=True)
class RiskItem:
    text: str
    layer: str
    harm_type: str
    from_incident: bool
    sources: tuple[RiskSource, ...]

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "layer": self.layer,
            "harm_type": self.harm_type,
            "from_incident": self.from_incident,
            "sources": [s.to_dict() for s in self.sources],
        }

    @staticmethod
    def from_dict(d: dict) -> "RiskItem":
        return RiskItem(
            d["text"],
            d["layer"],
            d["harm_type"],
            bool(d["from_incident"]),
            tuple(RiskSource.from_dict(s) for s in d["sources"]),
        )


@dataclass(frozen=True)
class MitigationItem:
    text: str
    sources: tuple[RiskSource, ...]
    applies_to: tuple[int, ...] = ()

    @property
    def unmapped(self) -> bool:
        return not self.applies_to

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "sources": [s.to_dict() for s in self.sources],
            "applies_to": list(self.applies_to),
        }

    @staticmethod
    def from_dict(d: dict) -> "MitigationItem":
        return MitigationItem(
            d["text"],
            tuple(RiskSource.from_dict(s) for s in d["sources"]),
            tuple(d.get("applies_to", [])),
        )


@dataclass(frozen=True)
class UseCase:
    domain: str
    purpose: str
    capability: str
    ai_deployer: str
    ai_subject: str
    likelihood_rank: int

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "purpose": self.purpose,
            "capability": self.capability,
            "ai_deployer": self.ai_deployer,
            "ai_subject": self.ai_subject,
            "likelihood_rank": self.likelihood_rank,
        }

    @staticmethod
    def from_dict(d: dict) -> "UseCase":
        return UseCase(
            d["domain"],
            d["purpose"],
            d["capability"],
            d["ai_deployer"],
            d["ai_subject"],
            int(d["likelihood_rank"]),
        )


@dataclass(frozen=True)
class MappedRisks:
    risks: tuple[RiskItem, ...]
    mapping: tuple[tuple[bool, ...], ...]  # risks x uses
    dropped: tuple[tuple[str, str], ...]  # (original text, reason)


def load_prompt(name: str) -> str:
    return resources.files("riskrag.prompts").joinpath(f"{name}.txt").read_text(encoding="utf-8")


def prompt_hashes() -> dict[str, str]:
    names = [
        "risk_extraction",
        "mitigation_extraction",
        "use_generation",
        "risk_mapping",
        "mitigation_mapping",
    ]
    return {
        n: hashlib.sha256(load_prompt(n).encode("utf-8")).hexdigest() for n in names
    }


_SYSTEM = "You are a careful AI-risk analyst. Reply with JSON only."


def _normalize_text(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip().lower())


def extract_risk_items(
    section_text: str,
    origin: str,
    model_description: str,
    provider,
    *,
    is_incident: bool = False,
    section_kind: str | None = None,
    layers: tuple[str, ...] = LAYERS,
    harm_types: tuple[str, ...] = HARM_TYPES,
) -> list[RiskItem]:
    """Step-1 extraction: zero or more taxonomy-classified risks from one section."""
    prompt = load_prompt("risk_extraction").format(
        model_description=model_description, section_text=section_text
    )
    response = provider.chat_complete(
        ChatRequest(
            system=_SYSTEM,
            user=prompt,
            schema_tag="risk_items",
            payload={
                "section_text": section_text,
                "origin_is_incident": is_incident,
                "model_description": model_description,
            },
        )
    )
    items = []
    for entry in response.parsed["risks"]:
        if entry["layer"] not in layers:
            raise SchemaViolation(f"layer {entry['layer']!r} not in configured taxonomy")
        if entry["harm_type"] not in harm_types:
            raise SchemaViolation(f"harm_type {entry['harm_type']!r} not in configured taxonomy")
        items.append(
            RiskItem(
                text=entry["text"],
                layer=entry["layer"],
                harm_type=entry["harm_type"],
                from_incident=is_incident,
                sources=(RiskSource(origin, section_kind, is_incident),),
            )
        )
    return items


def extract_mitigation_items(
    sections: list[tuple[str, str]], origin: str, provider
) -> list[MitigationItem]:
    """Mitigations from a card's risk + recommendation sections; one call per
    section so provenance stays per-section. Duplicate texts merge their sources."""
    out: list[MitigationItem] = []
    index: dict[str, int] = {}
    for kind, text in sections:
        prompt = load_prompt("mitigation_extraction").format(section_text=text)
        response = provider.chat_complete(
            ChatRequest(
                system=_SYSTEM,
                user=prompt,
                schema_tag="mitigation_items",
                payload={"sections_text": text},
            )
        )
        for entry in response.parsed["mitigations"]:
            key = _normalize_text(entry["text"])
            source = RiskSource(origin, kind, False)
            if key in index:
                i = index[key]
                if source not in out[i].sources:
                    out[i] = replace(out[i], sources=out[i].sources + (source,))
            else:
                index[key] = len(out)
                out.append(MitigationItem(entry["text"], (source,)))
    return out


def generate_uses(
    model_description: str, provider, n_candidates: int = 12, n_top: int = 4
) -> list[UseCase]:
    if n_top > n_candidates:
        raise ValueError("n_top must be <= n_candidates")
    if n_top == 0:
        return []
    prompt = load_prompt("use_generation").format(
        model_description=model_description, n_candidates=n_candidates, n_top=n_top
    )
    response = provider.chat_complete(
        ChatRequest(
            system=_SYSTEM,
            user=prompt,
            schema_tag="use_cases",
            payload={
                "model_description": model_description,
                "n_candidates": n_candidates,
                "n_top": n_top,
            },
        )
    )
    uses = [UseCase.from_dict(u) for u in response.parsed["uses"]]
    ranks = [u.likelihood_rank for u in uses]
    if len(uses) != n_top or sorted(ranks) != list(range(1, n_top + 1)):
        raise SchemaViolation(
            f"expected {n_top} uses with unique ranks 1..{n_top}, got ranks {ranks}"
        )
    return uses


def merge_duplicate_risks(
    items: list[RiskItem],
    threshold: float = DEFAULT_MERGE_THRESHOLD,
    scorer=None,
) -> list[RiskItem]:
    """Greedy clustering in input order: an item joins the first cluster whose
    representative (earliest member) scores >= threshold; sources union and the
    incident flag is true if any member's is."""
    merged: list[RiskItem] = []
    for item in items:
        joined = False
        for i, rep in enumerate(merged):
            if pair_similarity(rep.text, item.text, scorer=scorer) >= threshold:
                extra = tuple(s for s in item.sources if s not in rep.sources)
                merged[i] = replace(
                    rep,
                    sources=rep.sources + extra,
                    from_incident=rep.from_incident or item.from_incident,
                )
                joined = True
                break
        if not joined:
            merged.append(item)
    return merged


def _uses_block(uses: list[UseCase]) -> str:
    return "\n".join(
        f"{i}. domain: {u.domain}; purpose: {u.purpose}; capability: {u.capability}; "
        f"AI deployer: {u.ai_deployer}; AI subject: {u.ai_subject}"
        for i, u in enumerate(uses)
    )


def _numbered_block(texts: list[str]) -> str:
    return "\n".join(f"{i}. {t}" for i, t in enumerate(texts))


def adapt_and_map_risks(
    items: list[RiskItem], uses: list[UseCase], model_description: str, provider
) -> MappedRisks:
    """Step 2: adapt each risk to the target model (or drop it with a reason) and
    mark which uses it is relevant to."""
    if not uses:
        raise ValueError("uses must be non-empty")
    prompt = load_prompt("risk_mapping").format(
        model_description=model_description,
        uses_block=_uses_block(uses),
        risks_block=_numbered_block([r.text for r in items]),
    )
    response = provider.chat_complete(
        ChatRequest(
            system=_SYSTEM,
            user=prompt,
            schema_tag="risk_mapping",
            payload={
                "model_description": model_description,
                "uses": [u.to_dict() for u in uses],
                "risks": [r.text for r in items],
            },
        )
    )
    entries = {e["index"]: e for e in response.parsed["risks"]}
    if sorted(entries) != list(range(len(items))):
        raise SchemaViolation("mapping response must cover each risk index exactly once")
    risks: list[RiskItem] = []
    rows: list[tuple[bool, ...]] = []
    dropped: list[tuple[str, str]] = []
    for i, item in enumerate(items):
        entry = entries[i]
        if entry["action"] == "drop":
            dropped.append((item.text, entry.get("reason", "")))
            continue
        use_indices = entry.get("use_indices", [])
        if any(j >= len(uses) for j in use_indices):
            raise SchemaViolation("use index out of range in mapping response")
        text = entry.get("adapted_text", item.text)
        risks.append(replace(item, text=text))
        rows.append(tuple(j in use_indices for j in range(len(uses))))
    return MappedRisks(tuple(risks), tuple(rows), tuple(dropped))


def map_mitigations(
    mitigations: list[MitigationItem], risks: list[RiskItem], provider
) -> list[MitigationItem]:
    """Fill applies_to for every mitigation; zero-risk mitigations stay, flagged
    unmapped via their empty applies_to."""
    if not risks:
        raise ValueError("risks must be non-empty")
    if not mitigations:
        return []
    prompt = load_prompt("mitigation_mapping").format(
        risks_block=_numbered_block([r.text for r in risks]),
        mitigations_block=_numbered_block([m.text for m in mitigations]),
    )
    response = provider.chat_complete(
        ChatRequest(
            system=_SYSTEM,
            user=prompt,
            schema_tag="mitigation_mapping",
            payload={
                "risks": [r.text for r in risks],
                "mitigations": [m.text for m in mitigations],
            },
        )
    )
    entries = {e["index"]: e for e in response.parsed["mitigations"]}
    if sorted(entries) != list(range(len(mitigations))):
        raise SchemaViolation("mapping response must cover each mitigation index exactly once")
    out = []
    for i, mit in enumerate(mitigations):
        indices = entries[i]["risk_indices"]
        if any(j >= len(risks) for j in indices):
            raise SchemaViolation("risk index out of range in mitigation mapping")
        out.append(replace(mit, applies_to=tuple(sorted(set(indices)))))
    return out
