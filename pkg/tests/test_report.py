import json

import pytest

from riskrag.errors import InconsistentIndices
from riskrag.generation import MappedRisks, MitigationItem, RiskItem, RiskSource, UseCase
from riskrag.report import (
    HARM_FLAG,
    Provenance,
    RiskReport,
    assemble_report,
    prioritize_risks,
    render,
    validate_report,
)


def _risk(text, incident=False):
    return RiskItem(
        text,
        "capability",
        "information_and_safety",
        incident,
        (RiskSource("org/src", "risks", incident),),
    )


def _use(domain, rank):
    return UseCase(domain, "purpose", "text generation", "deployers", "subjects", rank)


PROV = Provenance("tfidf", 5, None, "offline-rules", {}, None)


def _report(risks, mapping, mitigations=(), uses=None, dropped=()):
    uses = uses if uses is not None else [_use("Healthcare", 1), _use("Education", 2)]
    return assemble_report(
        "org/model",
        "a model description",
        uses,
        MappedRisks(tuple(risks), tuple(mapping), tuple(dropped)),
        list(mitigations),
        PROV,
    )


class TestPrioritize:
    def test_incident_flag_dominates(self):
        risks = [_risk("a"), _risk("b", incident=True)]
        mapping = [(True, True), (False, False)]
        out, rows, perm = prioritize_risks(risks, mapping)
        assert [r.text for r in out] == ["b", "a"]
        assert perm == [1, 0]
        assert rows == ((False, False), (True, True))

    def test_use_count_breaks_ties(self):
        risks = [_risk("a"), _risk("b"), _risk("c")]
        mapping = [(False, True), (True, True), (False, False)]
        out, _, _ = prioritize_risks(risks, mapping)
        assert [r.text for r in out] == ["b", "a", "c"]

    def test_stable_within_key(self):
        risks = [_risk("first"), _risk("second")]
        mapping = [(True,), (True,)]
        out, _, _ = prioritize_risks(risks, mapping)
        assert [r.text for r in out] == ["first", "second"]

    def test_dim_mismatch(self):
        with pytest.raises(InconsistentIndices):
            prioritize_risks([_risk("a")], [])


class TestAssemble:
    def test_mitigation_indices_remapped(self):
        risks = [_risk("low priority"), _risk("incident one", incident=True)]
        mapping = [(False, False), (True, False)]
        mit = MitigationItem("fix it", (RiskSource("o", None, False),), applies_to=(0,))
        rep = _report(risks, mapping, [mit])
        # "incident one" moves to position 0; the mitigation pointed at old index 0.
        assert rep.risks[0].text == "incident one"
        assert rep.mitigations[0].applies_to == (1,)

    def test_out_of_range_mitigation_rejected(self):
        mit = MitigationItem("m", (), applies_to=(5,))
        with pytest.raises(InconsistentIndices):
            _report([_risk("a")], [(True, False)], [mit])

    def test_validates_schema(self):
        rep = _report([_risk("a")], [(True, False)])
        validate_report(rep)
        assert rep.schema_version == 1

    def test_validate_rejects_bad_mapping_width(self):
        rep = _report([_risk("a")], [(True, False)])
        bad = RiskReport(
            model_id=rep.model_id,
            model_description=rep.model_description,
            uses=rep.uses,
            risks=rep.risks,
            mapping=((True,),),
            mitigations=rep.mitigations,
            provenance=rep.provenance,
        )
        with pytest.raises(InconsistentIndices):
            validate_report(bad)


class TestRoundTrip:
    def test_dict_round_trip(self):
        rep = _report(
            [_risk("a"), _risk("b", incident=True)],
            [(True, False), (False, True)],
            [MitigationItem("m", (RiskSource("o", "risks", False),), applies_to=(0,))],
            dropped=(("old risk", "wrong modality"),),
        )
        back = RiskReport.from_dict(json.loads(json.dumps(rep.to_dict())))
        assert back == rep


class TestRender:
    def setup_method(self):
        self.rep = _report(
            [_risk("flagged risk", incident=True), _risk("plain risk"), _risk("general risk")],
            [(True, True), (True, False), (False, False)],
            [
                MitigationItem("mapped fix", (RiskSource("o", None, False),), applies_to=(0,)),
                MitigationItem("orphan fix", (RiskSource("o", None, False),)),
            ],
            dropped=(("dropped text", "a reason"),),
        )

    def test_json_deterministic_bytes(self):
        a, b = render(self.rep, "json"), render(self.rep, "json")
        assert a == b
        assert a.endswith(b"\n")
        assert json.loads(a.decode("utf-8"))["model_id"] == "org/model"

    def test_markdown_content(self):
        md = render(self.rep, "markdown").decode("utf-8")
        assert "# Risk Report: org/model" in md
        assert "## Risk Summary" in md
        assert HARM_FLAG in md
        assert "| U1 | U2 |" in md
        assert "General risks" in md
        assert "general risk" in md
        assert "orphan fix (not mapped to a listed risk)" in md
        assert "## Dropped During Adaptation" in md

    def test_markdown_empty_risks_notice(self):
        rep = _report([], [])
        md = render(rep, "markdown").decode("utf-8")
        assert "_No identified risks._" in md

    def test_html_self_contained(self):
        out = render(self.rep, "html").decode("utf-8")
        assert out.startswith("<!DOCTYPE html>")
        assert "<style>" in out
        assert "p-high" in out
        assert "flagged risk" in out
        assert "</html>" in out

    def test_html_escapes(self):
        rep = _report([_risk("uses <script> tags & entities")], [(True, False)])
        out = render(rep, "html").decode("utf-8")
        assert "<script>" not in out
        assert "&lt;script&gt;" in out

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            render(self.rep, "pdf")
