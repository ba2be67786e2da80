"""Model-card and incident corpus ingestion: parsing, section extraction, dedup, stats."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

from .errors import DuplicateId, EmptyCard, InconsistentCounts, ParseError


class SectionKind(str, Enum):
    RISKS = "risks"
    LIMITATIONS = "limitations"
    BIAS = "bias"
    ETHICAL_CONSIDERATIONS = "ethical_considerations"
    OUT_OF_SCOPE_USES = "out_of_scope_uses"
    MISUSE = "misuse"
    RESPONSIBILITY_AND_SAFETY = "responsibility_and_safety"
    RECOMMENDATIONS = "recommendations"


# Kinds whose text feeds risk extraction. Responsibility-and-safety sections carry
# both risks and mitigations, so they are risk sections and also mitigation sources.
RISK_KINDS: frozenset[SectionKind] = frozenset(
    {
        SectionKind.RISKS,
        SectionKind.LIMITATIONS,
        SectionKind.BIAS,
        SectionKind.ETHICAL_CONSIDERATIONS,
        SectionKind.OUT_OF_SCOPE_USES,
        SectionKind.MISUSE,
        SectionKind.RESPONSIBILITY_AND_SAFETY,
    }
)

MITIGATION_KINDS: frozenset[SectionKind] = frozenset(
    {SectionKind.RECOMMENDATIONS, SectionKind.RESPONSIBILITY_AND_SAFETY}
)

# Heading patterns are matched against the heading text, case-insensitively, so a
# compound heading like "Bias, Risks, and Limitations" matches several kinds at once.
_KIND_PATTERNS: dict[SectionKind, re.Pattern[str]] = {
    SectionKind.RISKS: re.compile(r"\brisks?\b", re.I),
    SectionKind.LIMITATIONS: re.compile(r"\blimitations?\b", re.I),
    SectionKind.BIAS: re.compile(r"\bbias(?:es)?\b", re.I),
    SectionKind.ETHICAL_CONSIDERATIONS: re.compile(r"\bethic(?:s|al)\b", re.I),
    SectionKind.OUT_OF_SCOPE_USES: re.compile(r"\bout[\s-]of[\s-]scope\b", re.I),
    SectionKind.MISUSE: re.compile(r"\bmisuse\b|\bmalicious use\b", re.I),
    SectionKind.RESPONSIBILITY_AND_SAFETY: re.compile(
        r"\bresponsibilit(?:y|ies)\s*(?:and|&)\s*safety\b", re.I
    ),
    SectionKind.RECOMMENDATIONS: re.compile(r"\brecommendations?\b", re.I),
}

_HEADING_RE = re.compile(r"^(#{1,6})\s*(.+?)\s*#*\s*$")

_DESCRIPTION_HEADING_RE = re.compile(
    r"\bmodel\s+description\b|^description$|\bmodel\s+details?\b", re.I
)

DESCRIPTION_FALLBACK_CHARS = 2000


@dataclass(frozen=True)
class Section:
    """One extracted card section; a compound heading yields one section with several kinds."""

    kinds: tuple[SectionKind, ...]
    text: str

    @property
    def kind(self) -> SectionKind:
        return self.kinds[0]

    def to_dict(self) -> dict:
        return {"kinds": [k.value for k in self.kinds], "text": self.text}

    @staticmethod
    def from_dict(d: dict) -> "Section":
        return Section(tuple(SectionKind(k) for k in d["kinds"]), d["text"])


@dataclass(frozen=True)
class ModelCardRecord:
    id: str
    description: str
    downloads: int
    risk_sections: tuple[Section, ...] = ()
    recommendation_sections: tuple[Section, ...] = ()
    raw_markdown: str | None = None

    def to_dict(self, include_raw: bool = False) -> dict:
        d = {
            "id": self.id,
            "description": self.description,
            "downloads": self.downloads,
            "risk_sections": [s.to_dict() for s in self.risk_sections],
            "recommendation_sections": [s.to_dict() for s in self.recommendation_sections],
        }
        if include_raw and self.raw_markdown is not None:
            d["raw_markdown"] = self.raw_markdown
        return d

    @staticmethod
    def from_dict(d: dict) -> "ModelCardRecord":
        return ModelCardRecord(
            id=d["id"],
            description=d["description"],
            downloads=int(d["downloads"]),
            risk_sections=tuple(Section.from_dict(s) for s in d.get("risk_sections", [])),
            recommendation_sections=tuple(
                Section.from_dict(s) for s in d.get("recommendation_sections", [])
            ),
            raw_markdown=d.get("raw_markdown"),
        )


@dataclass(frozen=True)
class IncidentRecord:
    id: int
    description: str
    report_count: int = 0
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CorpusStats:
    total_repos: int
    with_cards: int
    with_risk_sections: int
    unique_risk_sections: int
    duplicate_fraction: float

    def to_dict(self) -> dict:
        return {
            "total_repos": self.total_repos,
            "with_cards": self.with_cards,
            "with_risk_sections": self.with_risk_sections,
            "unique_risk_sections": self.unique_risk_sections,
            "duplicate_fraction": self.duplicate_fraction,
        }


@dataclass(frozen=True)
class DedupResult:
    retained: tuple[ModelCardRecord, ...]
    clusters: dict[str, tuple[str, ...]]
    dropped_count: int


def _match_kinds(heading_text: str, kinds: Iterable[SectionKind]) -> tuple[SectionKind, ...]:
    return tuple(k for k in kinds if _KIND_PATTERNS[k].search(heading_text))


def extract_sections(
    markdown: str, kinds: set[SectionKind] | frozenset[SectionKind]
) -> list[Section]:
    """Scan markdown headings and pull out the bodies of sections matching `kinds`.

    A section body runs until the next heading of equal or higher level. A heading
    matching several requested kinds yields a single Section tagged with all of them.
    """
    if not markdown:
        return []
    ordered_kinds = [k for k in SectionKind if k in kinds]
    lines = markdown.splitlines()
    headings: list[tuple[int, int, str]] = []  # (line index, level, heading text)
    for i, line in enumerate(lines):
        m = _HEADING_RE.match(line)
        if m:
            headings.append((i, len(m.group(1)), m.group(2)))

    out: list[Section] = []
    for pos, (idx, level, text) in enumerate(headings):
        matched = _match_kinds(text, ordered_kinds)
        if not matched:
            continue
        end = len(lines)
        for j_idx, j_level, _ in headings[pos + 1 :]:
            if j_level <= level:
                end = j_idx
                break
        body = "\n".join(lines[idx + 1 : end]).strip()
        if body:
            out.append(Section(matched, body))
    return out


def _description_of(markdown: str) -> str:
    """Explicit description section when present, else the body before the first
    risk/recommendation heading, capped at DESCRIPTION_FALLBACK_CHARS."""
    lines = markdown.splitlines()
    headings = [
        (i, len(m.group(1)), m.group(2))
        for i, line in enumerate(lines)
        if (m := _HEADING_RE.match(line))
    ]
    for pos, (idx, level, text) in enumerate(headings):
        if _DESCRIPTION_HEADING_RE.search(text):
            end = len(lines)
            for j_idx, j_level, _ in headings[pos + 1 :]:
                if j_level <= level:
                    end = j_idx
                    break
            body = "\n".join(lines[idx + 1 : end]).strip()
            if body:
                return body[:DESCRIPTION_FALLBACK_CHARS]
    # Fallback: everything before the first heading that names a known section kind.
    cutoff = len(lines)
    for idx, _, text in headings:
        if _match_kinds(text, list(SectionKind)):
            cutoff = idx
            break
    body = "\n".join(
        line for i, line in enumerate(lines[:cutoff]) if not _HEADING_RE.match(lines[i])
    ).strip()
    return body[:DESCRIPTION_FALLBACK_CHARS]


def parse_model_card(id: str, downloads: int, markdown: str) -> ModelCardRecord:
    if not id:
        raise ParseError("card id must be non-empty")
    if downloads < 0:
        raise ParseError(f"negative downloads for {id!r}")
    if not markdown or not markdown.strip():
        raise EmptyCard(f"card {id!r} has no extractable text")
    risk = tuple(extract_sections(markdown, RISK_KINDS))
    reco = tuple(extract_sections(markdown, {SectionKind.RECOMMENDATIONS}))
    return ModelCardRecord(
        id=id,
        description=_description_of(markdown),
        downloads=downloads,
        risk_sections=risk,
        recommendation_sections=reco,
        raw_markdown=markdown,
    )


def normalize_ws(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


def risk_fingerprint(record: ModelCardRecord) -> str:
    joined = " ".join(normalize_ws(s.text) for s in record.risk_sections)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()


def dedup_by_risk_text(records: list[ModelCardRecord]) -> DedupResult:
    """Keep one card per identical (whitespace-normalized) risk-text fingerprint:
    the most downloaded, ties broken by lexicographically smallest id."""
    groups: dict[str, list[ModelCardRecord]] = {}
    order: list[str] = []
    for r in records:
        fp = risk_fingerprint(r)
        if fp not in groups:
            groups[fp] = []
            order.append(fp)
        groups[fp].append(r)
    retained: list[ModelCardRecord] = []
    clusters: dict[str, tuple[str, ...]] = {}
    dropped = 0
    for fp in order:
        members = groups[fp]
        winner = min(members, key=lambda r: (-r.downloads, r.id))
        retained.append(winner)
        clusters[fp] = tuple(m.id for m in members)
        dropped += len(members) - 1
    return DedupResult(tuple(retained), clusters, dropped)


def corpus_stats(
    total_repos: int, with_cards: int, with_risk_sections: int, dedup: DedupResult | int
) -> CorpusStats:
    unique = dedup if isinstance(dedup, int) else len(dedup.retained)
    if not (unique <= with_risk_sections <= with_cards <= total_repos):
        raise InconsistentCounts(
            f"expected unique <= with_risk <= with_cards <= total, got "
            f"{unique} / {with_risk_sections} / {with_cards} / {total_repos}"
        )
    frac = 1.0 - unique / with_risk_sections if with_risk_sections > 0 else 0.0
    return CorpusStats(total_repos, with_cards, with_risk_sections, unique, frac)


def load_cards(path: str | Path) -> list[ModelCardRecord]:
    """Load raw cards from JSONL ({"id", "downloads", "card_markdown"}); cards whose
    markdown is empty are skipped (they carry nothing to parse)."""
    records: list[ModelCardRecord] = []
    seen: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        for key in ("id", "downloads", "card_markdown"):
            if key not in obj:
                raise ParseError(f"card object missing {key!r}", lineno)
        if obj["id"] in seen:
            raise DuplicateId(f"duplicate card id {obj['id']!r} at line {lineno}")
        seen.add(obj["id"])
        try:
            records.append(parse_model_card(obj["id"], obj["downloads"], obj["card_markdown"]))
        except EmptyCard:
            continue
    return records


def load_incidents(path: str | Path) -> list[IncidentRecord]:
    records: list[IncidentRecord] = []
    seen: set[int] = set()
    for lineno, obj in _iter_jsonl(path):
        for key in ("id", "description"):
            if key not in obj:
                raise ParseError(f"incident object missing {key!r}", lineno)
        if not str(obj["description"]).strip():
            raise ParseError("incident description is empty", lineno)
        if obj["id"] in seen:
            raise DuplicateId(f"duplicate incident id {obj['id']!r} at line {lineno}")
        seen.add(obj["id"])
        records.append(
            IncidentRecord(
                id=int(obj["id"]),
                description=obj["description"],
                report_count=int(obj.get("report_count", 0)),
                metadata=obj.get("metadata", {}),
            )
        )
    return records


def _iter_jsonl(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"malformed JSON: {e.msg}", lineno) from e
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object per line", lineno)
            yield lineno, obj
