import pytest

from riskrag.errors import SchemaViolation
from riskrag.generation import (
    HARM_TYPES,
    LAYERS,
    RiskItem,
    RiskSource,
    MitigationItem,
    adapt_and_map_risks,
    extract_mitigation_items,
    extract_risk_items,
    generate_uses,
    map_mitigations,
    merge_duplicate_risks,
    prompt_hashes,
)
from riskrag.providers import ChatResponse


def _risk(text, layer="capability", harm="information_and_safety", incident=False, origin="o"):
    return RiskItem(text, layer, harm, incident, (RiskSource(origin, None, incident),))


class TestExtractRiskItems:
    def test_card_section(self, chat_provider):
        items = extract_risk_items(
            "The model may perpetuate harmful stereotypes about minority groups.",
            origin="org/m",
            model_description="a text generator",
            provider=chat_provider,
            section_kind="bias",
        )
        assert len(items) == 1
        assert items[0].text == "perpetuates harmful stereotypes about minority groups"
        assert items[0].harm_type == "representation_and_toxicity"
        assert items[0].from_incident is False
        assert items[0].sources[0].section == "bias"

    def test_incident(self, chat_provider):
        items = extract_risk_items(
            "The chatbot generates nonsensical outputs, undermining user trust.",
            origin="incident:3",
            model_description="a chatbot",
            provider=chat_provider,
            is_incident=True,
        )
        assert items[0].from_incident is True
        assert items[0].harm_type == "misinformation"
        assert items[0].layer == "human_interaction"

    def test_boilerplate_yields_nothing(self, chat_provider):
        assert (
            extract_risk_items(
                "More information needed.",
                origin="o",
                model_description="d",
                provider=chat_provider,
            )
            == []
        )

    def test_taxonomy_enforced(self):
        class BadProvider:
            model = "bad"

            def chat_complete(self, request):
                return ChatResponse(
                    raw_text="",
                    parsed={
                        "risks": [
                            {"text": "x", "layer": "cosmic", "harm_type": HARM_TYPES[0]}
                        ]
                    },
                )

        with pytest.raises(SchemaViolation):
            extract_risk_items("t", origin="o", model_description="d", provider=BadProvider())

    def test_taxonomy_constants(self):
        assert len(LAYERS) == 3
        assert len(HARM_TYPES) == 6


class TestExtractMitigations:
    def test_imperative_sentences(self, chat_provider):
        out = extract_mitigation_items(
            [("recommendations", "Filter the outputs before deployment. The sky is blue.")],
            origin="org/m",
            provider=chat_provider,
        )
        assert [m.text for m in out] == ["filter the outputs before deployment"]
        assert out[0].sources[0].origin == "org/m"

    def test_duplicates_merge_sources(self, chat_provider):
        out = extract_mitigation_items(
            [
                ("risks", "Filter the outputs before deployment."),
                ("recommendations", "Filter the outputs before deployment."),
            ],
            origin="org/m",
            provider=chat_provider,
        )
        assert len(out) == 1
        assert {s.section for s in out[0].sources} == {"risks", "recommendations"}


class TestGenerateUses:
    def test_anime_image_model(self, chat_provider):
        uses = generate_uses(
            "A text-to-image diffusion model that generates anime-style illustrations.",
            chat_provider,
            n_candidates=12,
            n_top=4,
        )
        assert len(uses) == 4
        assert sorted(u.likelihood_rank for u in uses) == [1, 2, 3, 4]
        assert uses[0].capability == "image generation"
        domains = {u.domain for u in uses}
        assert "Media & Entertainment" in domains or "Image Generation & Design" in domains

    def test_n_top_zero(self, chat_provider):
        assert generate_uses("anything", chat_provider, n_top=0) == []

    def test_n_top_exceeds_candidates(self, chat_provider):
        with pytest.raises(ValueError):
            generate_uses("d", chat_provider, n_candidates=3, n_top=5)

    def test_deterministic(self, chat_provider):
        a = generate_uses("a legal document summarizer", chat_provider)
        b = generate_uses("a legal document summarizer", chat_provider)
        assert a == b
        assert a[0].domain == "Legal Services"


class TestMergeDuplicateRisks:
    def test_identical_merge(self):
        a = _risk("produces toxic content", origin="a")
        b = _risk("produces toxic content", origin="b", incident=True)
        merged = merge_duplicate_risks([a, b], threshold=0.99)
        assert len(merged) == 1
        assert merged[0].from_incident is True
        assert {s.origin for s in merged[0].sources} == {"a", "b"}

    def test_distinct_survive(self):
        a = _risk("produces toxic content about minorities")
        b = _risk("consumes excessive electricity during training runs")
        merged = merge_duplicate_risks([a, b], threshold=0.9)
        assert len(merged) == 2

    def test_representative_is_earliest(self):
        a = _risk("generates violent imagery of people")
        b = _risk("generates violent imagery of people")
        merged = merge_duplicate_risks([b, a], threshold=0.99)
        assert merged[0].text == b.text

    def test_empty(self):
        assert merge_duplicate_risks([]) == []


class TestAdaptAndMap:
    def test_language_rewrite(self, chat_provider):
        uses = generate_uses("A Chinese language model for conversation.", chat_provider)
        items = [_risk("performs poorly on non-English text")]
        mapped = adapt_and_map_risks(
            items, uses, "A Chinese language model for conversation.", chat_provider
        )
        assert mapped.risks[0].text == "performs poorly on non-Chinese text"
        assert mapped.dropped == ()

    def test_modality_conflict_drop(self, chat_provider):
        desc = "A speech recognition model that transcribes audio recordings."
        uses = generate_uses(desc, chat_provider)
        items = [
            _risk("generates images depicting violence"),
            _risk("fails under distribution shift"),
        ]
        mapped = adapt_and_map_risks(items, uses, desc, chat_provider)
        assert len(mapped.risks) == 1
        assert len(mapped.dropped) == 1
        assert "image generation" in mapped.dropped[0][1]

    def test_generic_risk_maps_everywhere(self, chat_provider):
        desc = "A general purpose text generation language model."
        uses = generate_uses(desc, chat_provider)
        mapped = adapt_and_map_risks(
            [_risk("fails under distribution shift")], uses, desc, chat_provider
        )
        assert all(mapped.mapping[0])

    def test_targeted_risk_maps_narrowly(self, chat_provider):
        desc = (
            "A resume screening model for recruitment and hiring of job candidates, "
            "also usable for healthcare and education scenarios."
        )
        uses = generate_uses(desc, chat_provider)
        domains = [u.domain for u in uses]
        assert "Employment" in domains
        mapped = adapt_and_map_risks(
            [_risk("discriminates against candidates in recruitment decisions")],
            uses,
            desc,
            chat_provider,
        )
        row = mapped.mapping[0]
        assert row[domains.index("Employment")]
        for j, d in enumerate(domains):
            if d in ("Healthcare", "Education"):
                assert not row[j]

    def test_requires_uses(self, chat_provider):
        with pytest.raises(ValueError):
            adapt_and_map_risks([_risk("x")], [], "d", chat_provider)


class TestMapMitigations:
    def test_overlap_mapping(self, chat_provider):
        risks = [
            _risk("produces toxic outputs targeting minorities"),
            _risk("leaks private training records"),
        ]
        mits = [
            MitigationItem("filter toxic outputs before release", ()),
            MitigationItem("monitor the deployment environment", ()),
        ]
        out = map_mitigations(mits, risks, chat_provider)
        assert out[0].applies_to == (0,)
        assert out[1].applies_to == ()
        assert out[1].unmapped

    def test_empty_mitigations(self, chat_provider):
        assert map_mitigations([], [_risk("x y z w")], chat_provider) == []

    def test_requires_risks(self, chat_provider):
        with pytest.raises(ValueError):
            map_mitigations([MitigationItem("m", ())], [], chat_provider)


class TestPromptHashes:
    def test_five_stable_hashes(self):
        h1, h2 = prompt_hashes(), prompt_hashes()
        assert h1 == h2
        assert set(h1) == {
            "risk_extraction",
            "mitigation_extraction",
            "use_generation",
            "risk_mapping",
            "mitigation_mapping",
        }
        assert all(len(v) == 64 for v in h1.values())
