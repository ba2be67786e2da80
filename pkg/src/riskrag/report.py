"""Prioritize risks and render the assembled report to JSON, Markdown, and HTML."""

from __future__ import annotations

import html as html_mod
import json
from dataclasses import dataclass, field, replace
from importlib import resources

import jsonschema

from .errors import InconsistentIndices
from .generation import MappedRisks, MitigationItem, RiskItem, UseCase

REPORT_SCHEMA_VERSION = 1

HARM_FLAG = "⚑"


@dataclass(frozen=True)
class Provenance:
    backend: str
    k: int
    embedding_model: str | None
    chat_model: str
    prompt_hashes: dict[str, str] = field(default_factory=dict)
    timestamp: str | None = None

    def to_dict(self) -> dict:
        return {
            "backend": self.backend,
            "k": self.k,
            "embedding_model": self.embedding_model,
            "chat_model": self.chat_model,
            "prompt_hashes": dict(self.prompt_hashes),
            "timestamp": self.timestamp,
        }

    @staticmethod
    def from_dict(d: dict) -> "Provenance":
        return Provenance(
            d["backend"], int(d["k"]), d.get("embedding_model"), d["chat_model"],
            dict(d.get("prompt_hashes", {})), d.get("timestamp"),
        )


@dataclass(frozen=True)
class RiskReport:
    model_id: str
    model_description: str
    uses: tuple[UseCase, ...]
    risks: tuple[RiskItem, ...]  # priority order
    mapping: tuple[tuple[bool, ...], ...]
    mitigations: tuple[MitigationItem, ...]
    provenance: Provenance
    dropped: tuple[tuple[str, str], ...] = ()
    schema_version: int = REPORT_SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "model_id": self.model_id,
            "model_description": self.model_description,
            "uses": [u.to_dict() for u in self.uses],
            "risks": [r.to_dict() for r in self.risks],
            "mapping": [list(row) for row in self.mapping],
            "dropped": [list(d) for d in self.dropped],
            "mitigations": [m.to_dict() for m in self.mitigations],
            "provenance": self.provenance.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "RiskReport":
        return RiskReport(
            model_id=d["model_id"],
            model_description=d["model_description"],
            uses=tuple(UseCase.from_dict(u) for u in d["uses"]),
            risks=tuple(RiskItem.from_dict(r) for r in d["risks"]),
            mapping=tuple(tuple(bool(x) for x in row) for row in d["mapping"]),
            mitigations=tuple(MitigationItem.from_dict(m) for m in d["mitigations"]),
            provenance=Provenance.from_dict(d["provenance"]),
            dropped=tuple((a, b) for a, b in d.get("dropped", [])),
            schema_version=int(d["schema_version"]),
        )


def _report_schema() -> dict:
    text = resources.files("riskrag.schemas").joinpath("report.schema.json").read_text("utf-8")
    return json.loads(text)


def validate_report(report: RiskReport) -> None:
    jsonschema.validate(report.to_dict(), _report_schema())
    n_risks, n_uses = len(report.risks), len(report.uses)
    if len(report.mapping) != n_risks or any(len(row) != n_uses for row in report.mapping):
        raise InconsistentIndices("mapping dimensions do not match risks x uses")
    for m in report.mitigations:
        if any(i >= n_risks for i in m.applies_to):
            raise InconsistentIndices(f"mitigation references risk index out of range: {m.applies_to}")


def priority_key(risk: RiskItem, row: tuple[bool, ...]) -> tuple[bool, int]:
    return (risk.from_incident, sum(row))


def prioritize_risks(
    risks: list[RiskItem] | tuple[RiskItem, ...],
    mapping: list[tuple[bool, ...]] | tuple[tuple[bool, ...], ...],
) -> tuple[tuple[RiskItem, ...], tuple[tuple[bool, ...], ...], list[int]]:
    """Stable sort by (harm flag desc, mapped-use count desc); returns the
    reordered risks, the correspondingly permuted mapping rows, and the
    permutation (new position -> old index) for remapping cross-references."""
    if len(risks) != len(mapping):
        raise InconsistentIndices("mapping rows must match risk count")
    perm = sorted(
        range(len(risks)),
        key=lambda i: (not risks[i].from_incident, -sum(mapping[i]), i),
    )
    return (
        tuple(risks[i] for i in perm),
        tuple(tuple(mapping[i]) for i in perm),
        perm,
    )


def assemble_report(
    model_id: str,
    description: str,
    uses: list[UseCase],
    mapped: MappedRisks,
    mitigations: list[MitigationItem],
    provenance: Provenance,
) -> RiskReport:
    n = len(mapped.risks)
    for m in mitigations:
        if any(i >= n for i in m.applies_to):
            raise InconsistentIndices(f"mitigation index out of range: {m.applies_to}")
    risks, mapping, perm = prioritize_risks(list(mapped.risks), list(mapped.mapping))
    new_of_old = {old: new for new, old in enumerate(perm)}
    remapped = tuple(
        replace(m, applies_to=tuple(sorted(new_of_old[i] for i in m.applies_to)))
        for m in mitigations
    )
    report = RiskReport(
        model_id=model_id,
        model_description=description,
        uses=tuple(uses),
        risks=risks,
        mapping=mapping,
        mitigations=remapped,
        provenance=provenance,
        dropped=mapped.dropped,
    )
    validate_report(report)
    return report


def render(report: RiskReport, format: str) -> bytes:
    if format == "json":
        return (json.dumps(report.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode("utf-8")
    if format == "markdown":
        return _render_markdown(report).encode("utf-8")
    if format == "html":
        return _render_html(report).encode("utf-8")
    raise ValueError(f"unknown format {format!r}")


def _taxonomy_label(value: str) -> str:
    return value.replace("_", " ")


def _render_markdown(report: RiskReport) -> str:
    lines = [f"# Risk Report: {report.model_id}", ""]
    if report.model_description.strip():
        lines += [report.model_description.strip(), ""]

    lines += ["## Example Uses", ""]
    for u in sorted(report.uses, key=lambda u: u.likelihood_rank):
        lines.append(
            f"{u.likelihood_rank}. **{u.domain}** — {u.purpose} "
            f"(capability: {u.capability}; deployer: {u.ai_deployer}; subject: {u.ai_subject})"
        )
    lines.append("")

    lines += ["## Risk Summary", ""]
    if not report.risks:
        lines += ["_No identified risks._", ""]
    else:
        use_headers = " | ".join(f"U{j + 1}" for j in range(len(report.uses)))
        lines.append(f"| # | Risk | Layer | Harm type | {HARM_FLAG} | {use_headers} |")
        lines.append("|---" * (5 + len(report.uses)) + "|")
        for i, (risk, row) in enumerate(zip(report.risks, report.mapping), start=1):
            marks = " | ".join("x" if cell else " " for cell in row)
            flag = HARM_FLAG if risk.from_incident else " "
            lines.append(
                f"| {i} | {risk.text} | {_taxonomy_label(risk.layer)} | "
                f"{_taxonomy_label(risk.harm_type)} | {flag} | {marks} |"
            )
        lines.append("")
        for j, u in enumerate(report.uses):
            lines.append(f"- U{j + 1}: {u.domain} — {u.purpose}")
        lines.append(f"- {HARM_FLAG}: resulted in a documented real-world incident")
        lines.append("")
        general = [i for i, row in enumerate(report.mapping) if not any(row)]
        if general:
            lines += ["### General risks (not tied to a specific use)", ""]
            for i in general:
                lines.append(f"- {report.risks[i].text}")
            lines.append("")

    if report.risks:
        lines += ["## Risks by Category", ""]
        by_harm: dict[str, list[RiskItem]] = {}
        for r in report.risks:
            by_harm.setdefault(r.harm_type, []).append(r)
        for harm in sorted(by_harm):
            lines.append(f"### {_taxonomy_label(harm).capitalize()}")
            lines.append("")
            for r in by_harm[harm]:
                lines.append(f"- {r.text} _({_taxonomy_label(r.layer)})_")
            lines.append("")

    lines += ["## Mitigations", ""]
    if not report.mitigations:
        lines += ["_No mitigations identified._", ""]
    else:
        for m in report.mitigations:
            if m.applies_to:
                refs = ", ".join(f"#{i + 1}" for i in m.applies_to)
                lines.append(f"- {m.text} (addresses risks {refs})")
            else:
                lines.append(f"- {m.text} (not mapped to a listed risk)")
        lines.append("")

    if report.dropped:
        lines += ["## Dropped During Adaptation", ""]
        for text, reason in report.dropped:
            lines.append(f"- {text} — {reason}")
        lines.append("")

    return "\n".join(lines).rstrip() + "\n"


_HTML_STYLE = """
body { font-family: Georgia, serif; max-width: 60em; margin: 2em auto; color: #222; }
h1, h2 { border-bottom: 1px solid #ccc; padding-bottom: 0.2em; }
table { border-collapse: collapse; width: 100%; margin: 1em 0; }
th, td { border: 1px solid #bbb; padding: 0.4em 0.6em; text-align: left; font-size: 0.9em; }
td.mark { text-align: center; }
.p-high td.mark.on { background: #b30000; color: #fff; }
.p-mid td.mark.on { background: #e06666; color: #fff; }
.p-low td.mark.on { background: #f4b6b6; }
.badge { display: inline-block; padding: 0 0.4em; border-radius: 0.6em; background: #eee; font-size: 0.8em; }
.flag { color: #b30000; font-weight: bold; }
.muted { color: #777; }
"""


def _tercile_class(position: int, total: int) -> str:
    if total <= 0:
        return "p-low"
    t = position / total
    if t < 1 / 3:
        return "p-high"
    if t < 2 / 3:
        return "p-mid"
    return "p-low"


def _render_html(report: RiskReport) -> str:
    esc = html_mod.escape
    parts = [
        "<!DOCTYPE html>",
        "<html lang=\"en\"><head><meta charset=\"utf-8\">",
        f"<title>Risk Report: {esc(report.model_id)}</title>",
        f"<style>{_HTML_STYLE}</style></head><body>",
        f"<h1>Risk Report: {esc(report.model_id)}</h1>",
    ]
    if report.model_description.strip():
        parts.append(f"<p>{esc(report.model_description.strip())}</p>")

    parts.append("<h2>Example Uses</h2><ol>")
    for u in sorted(report.uses, key=lambda u: u.likelihood_rank):
        parts.append(
            f"<li><strong>{esc(u.domain)}</strong> — {esc(u.purpose)} "
            f"<span class=\"muted\">(capability: {esc(u.capability)}; deployer: {esc(u.ai_deployer)}; "
            f"subject: {esc(u.ai_subject)})</span></li>"
        )
    parts.append("</ol>")

    parts.append("<h2>Risk Summary</h2>")
    if not report.risks:
        parts.append("<p><em>No identified risks.</em></p>")
    else:
        head_uses = "".join(f"<th>U{j + 1}</th>" for j in range(len(report.uses)))
        parts.append(
            f"<table><thead><tr><th>#</th><th>Risk</th><th>Layer</th><th>Harm type</th>"
            f"<th>{HARM_FLAG}</th>{head_uses}</tr></thead><tbody>"
        )
        for i, (risk, row) in enumerate(zip(report.risks, report.mapping)):
            cls = _tercile_class(i, len(report.risks))
            flag = f"<span class=\"flag\">{HARM_FLAG}</span>" if risk.from_incident else ""
            cells = "".join(
                f"<td class=\"mark on\">x</td>" if cell else "<td class=\"mark\"></td>"
                for cell in row
            )
            parts.append(
                f"<tr class=\"{cls}\"><td>{i + 1}</td><td>{esc(risk.text)}</td>"
                f"<td><span class=\"badge\">{esc(_taxonomy_label(risk.layer))}</span></td>"
                f"<td><span class=\"badge\">{esc(_taxonomy_label(risk.harm_type))}</span></td>"
                f"<td>{flag}</td>{cells}</tr>"
            )
        parts.append("</tbody></table><ul>")
        for j, u in enumerate(report.uses):
            parts.append(f"<li>U{j + 1}: {esc(u.domain)} — {esc(u.purpose)}</li>")
        parts.append(
            f"<li><span class=\"flag\">{HARM_FLAG}</span>: resulted in a documented real-world incident</li></ul>"
        )
        general = [i for i, row in enumerate(report.mapping) if not any(row)]
        if general:
            parts.append("<h3>General risks (not tied to a specific use)</h3><ul>")
            for i in general:
                parts.append(f"<li>{esc(report.risks[i].text)}</li>")
            parts.append("</ul>")

    parts.append("<h2>Mitigations</h2>")
    if not report.mitigations:
        parts.append("<p><em>No mitigations identified.</em></p>")
    else:
        parts.append("<ul>")
        for m in report.mitigations:
            if m.applies_to:
                refs = ", ".join(f"#{i + 1}" for i in m.applies_to)
                parts.append(f"<li>{esc(m.text)} <span class=\"muted\">(addresses risks {refs})</span></li>")
            else:
                parts.append(f"<li>{esc(m.text)} <span class=\"muted\">(not mapped to a listed risk)</span></li>")
        parts.append("</ul>")

    if report.dropped:
        parts.append("<h2>Dropped During Adaptation</h2><ul>")
        for text, reason in report.dropped:
            parts.append(f"<li>{esc(text)} <span class=\"muted\">— {esc(reason)}</span></li>")
        parts.append("</ul>")

    parts.append("</body></html>")
    return "\n".join(parts) + "\n"
