"""Deterministic rule-based stand-in for the chat generator.

Implements the offline side of every schema tag: sentence-level verb-lexicon
extraction for risks and mitigations, keyword-scored use generation over a
fixed 46-domain list, and token-overlap mapping rules. Everything here is a
pure function of its payload, so full pipeline runs are bit-reproducible.
"""

from __future__ import annotations

import re

_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+|\n+")
_BULLET_RE = re.compile(r"^[\s>*+•-]+")

# Verb stems that start a risk phrase; matched against the first plausible verb
# of a sentence after stripping subject/modal fluff.
RISK_VERB_STEMS = frozenset(
    """
    produce generate perpetuate reinforce amplify reflect exhibit replicate
    transfer violate undermine expose leak disclose mislead discriminate
    exclude memorize reduce degrade fail hallucinate fabricate promote enable
    facilitate create cause spread damage harm misclassify encourage
    erode stereotype marginalize misrepresent underrepresent overrepresent
    propagate distort deceive manipulate impersonate endanger threaten
    compromise infringe suppress censor contain
    """.split()
)

# Imperative verbs that start a mitigation phrase.
MITIGATION_VERBS = frozenset(
    """
    filter monitor limit restrict avoid use apply implement evaluate test
    review audit validate verify ensure consider consult inform disclose
    document moderate sanitize check assess warn curate retrain constrain
    flag report anonymize redact supervise
    """.split()
)

_RISK_SUBJECT_FLUFF = frozenset(
    """
    the this these those it they a an model models system may might can could
    will would should also often sometimes potentially additionally furthermore
    moreover however and or to be is are was were being used allegedly
    reportedly its their such
    """.split()
)

_MITIGATION_FLUFF = frozenset(
    """
    users developers deployers we you they it is are recommended recommend
    suggested suggest should must please that to strongly be advised
    """.split()
)

_BOILERPLATE_RE = re.compile(r"more information needed|^n/?a$|^tbd$|^todo$", re.I)

# (harm_type, keyword fragments); first matching row wins, so ordering is part
# of the rule definition.
_HARM_RULES: list[tuple[str, tuple[str, ...]]] = [
    (
        "malicious_use",
        (
            "malicious", "misuse", "abuse", "abusive", "weapon", "attack",
            "illegal", "explicit", "porno", "nsfw", "csam", "harass", "fraud",
            "scam", "deepfake", "impersonat", "violent", "rape", "exploit",
        ),
    ),
    (
        "representation_and_toxicity",
        (
            "bias", "stereotyp", "toxic", "offensive", "discriminat",
            "fairness", "underrepresent", "slur", "derogat", "demean",
            "racis", "sexis", "marginaliz",
        ),
    ),
    (
        "misinformation",
        (
            "misinformation", "disinformation", "false", "inaccurate",
            "halluc", "fabricat", "mislead", "incorrect", "nonsensical",
            "unreliable", "untrue",
        ),
    ),
    (
        "information_and_safety",
        (
            "privacy", "personal data", "sensitive", "confidential", "leak",
            "disclos", "unsafe", "safety", "security", "dangerous",
            "inappropriate", "harmful advice",
        ),
    ),
    (
        "human_autonomy",
        ("trust", "autonomy", "manipulat", "dependen", "persua", "consent", "deceiv"),
    ),
    (
        "socioeconomic_and_environmental",
        (
            "environment", "energy", "carbon", "labor", "job", "employment",
            "economic", "inequal", "displace", "market",
        ),
    ),
]
_DEFAULT_HARM = "information_and_safety"

_LAYER_RULES: list[tuple[str, tuple[str, ...]]] = [
    (
        "human_interaction",
        (
            "trust", "user", "interact", "suggest", "advice", "convers",
            "chatbot", "persua", "consent", "dependen", "companion",
        ),
    ),
    (
        "systemic",
        (
            "societ", "systemic", "environment", "economic", "labor",
            "employment", "recruitment", "inequal", "cultur", "communit",
            "democra", "market", "public",
        ),
    ),
]
_DEFAULT_LAYER = "capability"

_STOPWORDS = frozenset(
    """
    a an and are as at be by for from has have in into is it its may of on or
    that the their they this to was were will with when which while would
    should can could about against between through during before after above
    below such other than then there these those not no nor only own same so
    too very just also more most both each who whom what where why how all any
    being been does doing did do if because until
    """.split()
)

_GENERIC_TOKENS = frozenset(
    "model models system output outputs data content user users ai".split()
)

_LANGUAGES = (
    "english", "chinese", "spanish", "french", "german", "japanese", "korean",
    "arabic", "hindi", "russian", "portuguese", "italian", "dutch", "turkish",
)

# Capability detection: ordered (capability label, marker fragments).
_CAPABILITY_RULES: list[tuple[str, tuple[str, ...]]] = [
    ("image generation", ("text-to-image", "image generation", "generates images", "diffusion", "image synthesis")),
    ("image captioning", ("image-to-text", "image captioning", "captions images", "caption generation")),
    ("image classification", ("image classification", "vision classifier", "classifies images", "object detection")),
    ("speech recognition", ("speech recognition", "transcri", "speech-to-text", "audio")),
    ("machine translation", ("translation", "translate")),
    ("text classification", ("text classification", "classifier", "sentiment", "classification")),
    ("question answering", ("question answering", "answers questions")),
    ("text embedding", ("embedding",)),
    ("text generation", ("text generation", "language model", "chatbot", "conversational", "llm", "generates text", "dialogue")),
]
_DEFAULT_CAPABILITY = "general-purpose inference"

# The ExploreGen-style domain list: (name, keyword fragments, example purpose).
DOMAINS: list[tuple[str, tuple[str, ...], str]] = [
    ("Healthcare", ("health", "medical", "clinical", "patient", "diagnos", "hospital"), "assisting clinical decision making"),
    ("Education", ("education", "student", "learning", "tutor", "school", "teaching"), "personalizing learning materials"),
    ("Finance", ("financ", "banking", "credit", "loan", "investment", "trading"), "assessing creditworthiness"),
    ("Employment", ("employment", "recruitment", "hiring", "job", "resume", "candidate"), "enhancing job matching"),
    ("Media & Entertainment", ("entertainment", "media", "music", "film", "anime", "creative", "story", "art"), "producing entertainment content"),
    ("Journalism & News", ("news", "journalis", "article", "reporting"), "drafting news summaries"),
    ("Customer Service", ("customer", "support", "helpdesk", "assistant"), "answering customer inquiries"),
    ("Law Enforcement", ("police", "enforcement", "surveillance", "crime"), "supporting investigative analysis"),
    ("Legal Services", ("legal", "law", "contract", "court"), "reviewing legal documents"),
    ("Government & Public Services", ("government", "civic", "policy", "public service"), "streamlining public service delivery"),
    ("Social Media", ("social media", "post", "tweet", "comment", "platform"), "generating social media content"),
    ("Marketing & Advertising", ("marketing", "advertis", "brand", "campaign"), "creating marketing copy"),
    ("E-commerce & Retail", ("retail", "shopping", "commerce", "product listing", "store"), "writing product descriptions"),
    ("Transportation", ("transport", "driving", "vehicle", "traffic"), "optimizing route planning"),
    ("Agriculture", ("agricultur", "farming", "crop"), "monitoring crop health"),
    ("Energy & Utilities", ("energy", "power grid", "utility"), "forecasting energy demand"),
    ("Manufacturing", ("manufactur", "factory", "industrial", "assembly"), "detecting production defects"),
    ("Insurance", ("insurance", "claim", "underwriting"), "triaging insurance claims"),
    ("Real Estate", ("real estate", "property", "housing"), "drafting property listings"),
    ("Human Resources", ("workforce", "personnel", "performance review", "hr "), "summarizing employee feedback"),
    ("Scientific Research", ("research", "scientific", "experiment", "laboratory"), "summarizing research literature"),
    ("Software Development", ("code", "software", "programming", "developer"), "assisting code authoring"),
    ("Cybersecurity", ("security", "malware", "phishing", "intrusion"), "detecting malicious activity"),
    ("Defense & Military", ("defense", "military",), "analyzing situational reports"),
    ("Translation & Localization", ("translation", "multilingual", "translate", "localization"), "translating documents"),
    ("Accessibility", ("accessib", "assistive", "disability", "caption"), "making content accessible"),
    ("Content Moderation", ("moderation", "harmful content", "toxicity", "detecting harmful"), "detecting harmful content"),
    ("Creative Writing", ("writing", "fiction", "poetry", "storytelling"), "drafting creative fiction"),
    ("Image Generation & Design", ("image", "design", "illustration", "visual", "text-to-image"), "creating visual assets"),
    ("Photography & Editing", ("photo", "editing", "enhancement"), "enhancing photographs"),
    ("Gaming", ("game", "player", "npc"), "generating game dialogue"),
    ("Travel & Hospitality", ("travel", "hotel", "tourism", "booking"), "planning travel itineraries"),
    ("Food & Nutrition", ("food", "recipe", "nutrition"), "suggesting meal plans"),
    ("Sports & Fitness", ("sports", "fitness", "training plan"), "personalizing training programs"),
    ("Mental Health & Wellbeing", ("mental health", "therapy", "counsel", "wellbeing"), "supporting wellbeing check-ins"),
    ("Childcare & Parenting", ("child", "parenting", "minor"), "advising on parenting questions"),
    ("Elderly Care", ("elderly", "senior care", "caregiver"), "assisting elderly care routines"),
    ("Fraud Detection", ("fraud", "anomaly", "scam"), "flagging fraudulent activity"),
    ("Supply Chain & Logistics", ("logistics", "supply chain", "shipping", "warehouse"), "forecasting inventory needs"),
    ("Telecommunications", ("telecom", "network traffic", "call center"), "routing customer calls"),
    ("Environmental Monitoring", ("environment", "climate", "pollution", "wildlife"), "tracking environmental change"),
    ("Urban Planning", ("urban", "city planning", "infrastructure"), "modeling urban development"),
    ("Biometrics & Identity", ("biometric", "face", "identity", "recognition", "verification"), "verifying user identity"),
    ("Search & Information Retrieval", ("search", "retrieval", "ranking", "question answering", "information"), "answering information queries"),
    ("Personal Productivity", ("productivity", "summariz", "notes", "email", "scheduling"), "summarizing documents and email"),
    ("Companionship & Social Chat", ("companion", "roleplay", "conversation", "dating", "chat"), "holding open-ended conversations"),
]

assert len(DOMAINS) == 46


def _sentences(text: str) -> list[str]:
    out = []
    for raw in _SENTENCE_SPLIT_RE.split(text):
        s = _BULLET_RE.sub("", raw).strip().rstrip(".").strip()
        if s:
            out.append(s)
    return out


def _third_person(stem: str) -> str:
    if stem.endswith(("s", "sh", "ch", "x", "z", "o")):
        return stem + "es"
    return stem + "s"


def _stemmed(token: str) -> str:
    t = token.lower().strip(",;:()\"'")
    if t.endswith("es") and t[:-2] in RISK_VERB_STEMS:
        return t[:-2]
    if t.endswith("s") and t[:-1] in RISK_VERB_STEMS:
        return t[:-1]
    return t


def _risk_phrase(sentence: str) -> str | None:
    tokens = sentence.split()
    # Strip subject/modal fluff, then look for a lexicon verb near the front.
    start = 0
    while start < len(tokens) and tokens[start].lower().strip(",;:\"'") in _RISK_SUBJECT_FLUFF:
        start += 1
    scan_limit = min(len(tokens), start + 12)
    for i in range(start, scan_limit):
        stem = _stemmed(tokens[i])
        if stem in RISK_VERB_STEMS:
            rest = " ".join(tokens[i + 1 :]).strip()
            if not rest:
                return None
            return f"{_third_person(stem)} {rest}"
    return None


def classify_harm(text: str) -> str:
    low = text.lower()
    for harm, keys in _HARM_RULES:
        if any(k in low for k in keys):
            return harm
    return _DEFAULT_HARM


def classify_layer(text: str) -> str:
    low = text.lower()
    for layer, keys in _LAYER_RULES:
        if any(k in low for k in keys):
            return layer
    return _DEFAULT_LAYER


def risk_items(payload: dict) -> dict:
    text = payload.get("section_text", "")
    if _BOILERPLATE_RE.search(text.strip()) and len(text.strip()) < 80:
        return {"risks": []}
    items = []
    seen: set[str] = set()
    for sentence in _sentences(text):
        if _BOILERPLATE_RE.search(sentence):
            continue
        phrase = _risk_phrase(sentence)
        if phrase is None:
            continue
        key = re.sub(r"\s+", " ", phrase.lower())
        if key in seen:
            continue
        seen.add(key)
        items.append(
            {"text": phrase, "layer": classify_layer(phrase), "harm_type": classify_harm(phrase)}
        )
    return {"risks": items}


def _mitigation_phrase(sentence: str) -> str | None:
    tokens = sentence.split()
    start = 0
    while start < len(tokens) and tokens[start].lower().strip(",;:\"'") in _MITIGATION_FLUFF:
        start += 1
    if start >= len(tokens):
        return None
    head = tokens[start].lower().strip(",;:\"'")
    if head not in MITIGATION_VERBS:
        return None
    rest = " ".join(tokens[start + 1 :]).strip()
    if not rest:
        return None
    return f"{head} {rest}"


def mitigation_items(payload: dict) -> dict:
    text = payload.get("sections_text", "")
    items = []
    seen: set[str] = set()
    for sentence in _sentences(text):
        if _BOILERPLATE_RE.search(sentence):
            continue
        phrase = _mitigation_phrase(sentence)
        if phrase is None:
            continue
        key = re.sub(r"\s+", " ", phrase.lower())
        if key in seen:
            continue
        seen.add(key)
        items.append({"text": phrase})
    return {"mitigations": items}


def detect_capability(description: str) -> str:
    low = description.lower()
    for label, markers in _CAPABILITY_RULES:
        if any(m in low for m in markers):
            return label
    return _DEFAULT_CAPABILITY


def use_cases(payload: dict) -> dict:
    description = payload.get("model_description", "")
    n_candidates = int(payload.get("n_candidates", 12))
    n_top = int(payload.get("n_top", 4))
    low = description.lower()
    scored = []
    for idx, (name, keywords, purpose) in enumerate(DOMAINS):
        score = sum(low.count(k) for k in keywords)
        scored.append((-score, idx, name, purpose))
    scored.sort()
    capability = detect_capability(description)
    uses = []
    for rank, (_, _, name, purpose) in enumerate(scored[:n_candidates][:n_top], start=1):
        uses.append(
            {
                "domain": name,
                "purpose": purpose,
                "capability": capability,
                "ai_deployer": f"organizations providing {name.lower()} services",
                "ai_subject": f"people affected by {name.lower()} services",
                "likelihood_rank": rank,
            }
        )
    return {"uses": uses}


def content_tokens(text: str) -> set[str]:
    return {
        t
        for t in re.findall(r"\w+", text.lower())
        if len(t) >= 4 and t not in _STOPWORDS and t not in _GENERIC_TOKENS
    }


def _detect_language(description: str) -> str | None:
    low = description.lower()
    for lang in _LANGUAGES:
        if lang in low:
            return lang
    return None


def _risk_capability(risk_text: str) -> str | None:
    """Capability a risk explicitly concerns, when it names one."""
    low = risk_text.lower()
    for label, markers in _CAPABILITY_RULES:
        if label == "text classification":
            continue  # "classification" alone is too weak a marker in risk prose
        if any(m in low for m in markers):
            return label
    return None


def _use_overlap_tokens(use: dict) -> set[str]:
    toks = content_tokens(use["domain"] + " " + use["purpose"])
    for name, keywords, _ in DOMAINS:
        if name == use["domain"]:
            toks |= {k.strip() for k in keywords if " " not in k}
    return toks


def risk_mapping(payload: dict) -> dict:
    description = payload.get("model_description", "")
    uses = payload.get("uses", [])
    risks = payload.get("risks", [])
    model_cap = detect_capability(description)
    model_lang = _detect_language(description)
    use_tokens = [_use_overlap_tokens(u) for u in uses]
    out = []
    for i, risk_text in enumerate(risks):
        risk_cap = _risk_capability(risk_text)
        if risk_cap is not None and model_cap != _DEFAULT_CAPABILITY and risk_cap != model_cap:
            out.append(
                {
                    "index": i,
                    "action": "drop",
                    "reason": f"concerns {risk_cap}, target model does {model_cap}",
                }
            )
            continue
        adapted = risk_text
        if model_lang:
            m = re.search(r"non-([A-Za-z]+)", risk_text)
            if m and m.group(1).lower() in _LANGUAGES and m.group(1).lower() != model_lang:
                adapted = risk_text.replace(m.group(0), f"non-{model_lang.capitalize()}")
        r_toks = content_tokens(adapted)
        mapped = [j for j, toks in enumerate(use_tokens) if r_toks & toks]
        if not mapped:
            mapped = list(range(len(uses)))  # generic risk: applies everywhere
        entry = {"index": i, "action": "keep", "use_indices": mapped}
        if adapted != risk_text:
            entry["adapted_text"] = adapted
        out.append(entry)
    return {"risks": out}


def mitigation_mapping(payload: dict) -> dict:
    risks = payload.get("risks", [])
    mitigations = payload.get("mitigations", [])
    risk_tokens = [content_tokens(r) for r in risks]
    out = []
    for i, mit in enumerate(mitigations):
        m_toks = content_tokens(mit)
        out.append(
            {
                "index": i,
                "risk_indices": [j for j, toksin in enumerate(risk_tokens) if m_toks & toksin],
            }
        )
    return {"mitigations": out}
