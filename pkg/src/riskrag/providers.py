"""Embedding and chat-completion backends.

Two families: OpenAI-compatible HTTP clients for real runs, and deterministic
offline providers (signed-hash embeddings, rule-based extraction) used by tests
and the evaluation oracle. All embedding vectors leave this layer L2-normalized.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib
from importlib import resources

import jsonschema
import numpy as np

from .errors import AuthError, ProviderUnavailable, SchemaViolation

_TOKEN_RE = re.compile(r"\w+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def hash_embed(text: str, d: int = 512) -> np.ndarray:
    """Deterministic bag-of-1-2-grams embedding with signed hashing into d buckets.

    Stable across runs and platforms (blake2b, not the salted builtin hash).
    Empty text yields the zero vector.
    """
    if d < 8:
        raise ValueError(f"dimension too small: {d}")
    vec = np.zeros(d, dtype=np.float64)
    toks = tokenize(text)
    grams = toks + [f"{a} {b}" for a, b in zip(toks, toks[1:])]
    for g in grams:
        digest = hashlib.blake2b(g.encode("utf-8"), digest_size=9).digest()
        h = int.from_bytes(digest[:8], "big")
        sign = 1.0 if digest[8] & 1 else -1.0
        vec[h % d] += sign
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


def l2_normalize(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return matrix / norms


@dataclass(frozen=True)
class ProviderConfig:
    base_url: str = ""
    api_key_env: str = "RISKRAG_API_KEY"
    model: str = "offline"
    timeout_s: float = 30.0
    max_retries: int = 3
    backoff_ms: int = 250
    parallelism: int = 4

    def __post_init__(self):
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")

    @staticmethod
    def from_toml(path: str, section: str) -> "ProviderConfig":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        cfg = data.get(section, {})
        return ProviderConfig(
            base_url=cfg.get("url", ""),
            api_key_env=cfg.get("api_key_env", "RISKRAG_API_KEY"),
            model=cfg.get("model", "offline"),
            timeout_s=cfg.get("timeout_s", 30.0),
            max_retries=cfg.get("max_retries", 3),
            backoff_ms=cfg.get("backoff_ms", 250),
            parallelism=cfg.get("parallelism", 4),
        )


@dataclass(frozen=True)
class ChatRequest:
    system: str
    user: str
    schema_tag: str
    temperature: float = 0.0
    max_tokens: int = 2048
    # Structured inputs mirrored out of the prompt; the offline provider works
    # from these instead of parsing prose back out of the rendered prompt.
    payload: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ChatResponse:
    raw_text: str
    parsed: dict
    retry_count: int = 0


_SCHEMA_FILES = {
    "risk_items": ("risk_item.schema.json", None),
    "mitigation_items": ("mitigation_item.schema.json", None),
    "use_cases": ("use_case.schema.json", None),
    "risk_mapping": ("mapping.schema.json", "risk_mapping"),
    "mitigation_mapping": ("mapping.schema.json", "mitigation_mapping"),
}

_schema_cache: dict[str, dict] = {}


def schema_for(tag: str) -> dict:
    if tag not in _SCHEMA_FILES:
        raise SchemaViolation(f"unknown schema tag {tag!r}")
    if tag not in _schema_cache:
        fname, pointer = _SCHEMA_FILES[tag]
        text = resources.files("riskrag.schemas").joinpath(fname).read_text(encoding="utf-8")
        schema = json.loads(text)
        if pointer is not None:
            schema = schema["$defs"][pointer]
        _schema_cache[tag] = schema
    return _schema_cache[tag]


def validate_against_tag(parsed: dict, tag: str) -> None:
    try:
        jsonschema.validate(parsed, schema_for(tag))
    except jsonschema.ValidationError as e:
        raise SchemaViolation(f"response violates schema {tag!r}: {e.message}") from e


class OfflineEmbeddingProvider:
    """Hermetic embedding backend: signed-hash bag-of-ngram vectors."""

    def __init__(self, dim: int = 512):
        self.dim = dim
        self.model = f"offline-hash-{dim}"

    def embed(self, texts: list[str]) -> np.ndarray:
        if not texts:
            raise ValueError("texts must be non-empty")
        return np.stack([hash_embed(t, self.dim) for t in texts])


class OfflineChatProvider:
    """Hermetic chat backend dispatching each schema tag to a deterministic rule."""

    model = "offline-rules"

    def chat_complete(self, request: ChatRequest) -> ChatResponse:
        from . import offline_rules

        handlers = {
            "risk_items": offline_rules.risk_items,
            "mitigation_items": offline_rules.mitigation_items,
            "use_cases": offline_rules.use_cases,
            "risk_mapping": offline_rules.risk_mapping,
            "mitigation_mapping": offline_rules.mitigation_mapping,
        }
        if request.schema_tag not in handlers:
            raise SchemaViolation(f"unknown schema tag {request.schema_tag!r}")
        parsed = handlers[request.schema_tag](request.payload)
        validate_against_tag(parsed, request.schema_tag)
        return ChatResponse(raw_text=json.dumps(parsed), parsed=parsed)


class _HttpClient:
    def __init__(self, config: ProviderConfig):
        self.config = config
        self._gate = threading.BoundedSemaphore(config.parallelism)

    def _headers(self) -> dict:
        key = os.environ.get(self.config.api_key_env, "")
        return {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}

    def _post(self, path: str, body: dict) -> dict:
        import httpx

        url = self.config.base_url.rstrip("/") + path
        last_error: Exception | None = None
        with self._gate:
            for attempt in range(1 + self.config.max_retries):
                if attempt:
                    time.sleep(self.config.backoff_ms / 1000.0 * (2 ** (attempt - 1)))
                try:
                    resp = httpx.post(
                        url, json=body, headers=self._headers(), timeout=self.config.timeout_s
                    )
                except httpx.HTTPError as e:
                    last_error = e
                    continue
                if resp.status_code in (401, 403):
                    raise AuthError(f"{resp.status_code} from {url}")
                if resp.status_code >= 400:
                    last_error = ProviderUnavailable(f"{resp.status_code} from {url}")
                    continue
                return resp.json()
        raise ProviderUnavailable(f"giving up on {url} after {1 + self.config.max_retries} attempts") from last_error


class OpenAIEmbeddingProvider(_HttpClient):
    """POST {base}/embeddings per the OpenAI-compatible convention."""

    @property
    def model(self) -> str:
        return self.config.model

    def embed(self, texts: list[str]) -> np.ndarray:
        if not texts:
            raise ValueError("texts must be non-empty")
        data = self._post("/embeddings", {"model": self.config.model, "input": texts})
        vectors = [item["embedding"] for item in data["data"]]
        if len(vectors) != len(texts):
            raise ProviderUnavailable(
                f"expected {len(texts)} embeddings, got {len(vectors)}"
            )
        matrix = np.asarray(vectors, dtype=np.float64)
        if not np.all(np.isfinite(matrix)):
            raise ProviderUnavailable("non-finite embedding components in response")
        return l2_normalize(matrix)


class OpenAIChatProvider(_HttpClient):
    """POST {base}/chat/completions; re-asks with a repair instruction when the
    reply does not validate against the declared schema."""

    @property
    def model(self) -> str:
        return self.config.model

    def chat_complete(self, request: ChatRequest) -> ChatResponse:
        messages = [
            {"role": "system", "content": request.system},
            {"role": "user", "content": request.user},
        ]
        last_message = ""
        for repair in range(1 + self.config.max_retries):
            data = self._post(
                "/chat/completions",
                {
                    "model": self.config.model,
                    "messages": messages,
                    "temperature": request.temperature,
                    "max_tokens": request.max_tokens,
                },
            )
            text = data["choices"][0]["message"]["content"]
            try:
                parsed = _extract_json(text)
                validate_against_tag(parsed, request.schema_tag)
                return ChatResponse(raw_text=text, parsed=parsed, retry_count=repair)
            except SchemaViolation as e:
                last_message = str(e)
                messages.append({"role": "assistant", "content": text})
                messages.append(
                    {
                        "role": "user",
                        "content": "Your previous reply was invalid: "
                        f"{e}. Reply again with valid JSON only, matching the requested format.",
                    }
                )
        raise SchemaViolation(last_message)


def _extract_json(text: str) -> dict:
    """Parse a JSON object out of a chat reply, tolerating code fences."""
    stripped = text.strip()
    if stripped.startswith("```"):
        stripped = re.sub(r"^```[a-z]*\n?|\n?```$", "", stripped)
    try:
        obj = json.loads(stripped)
    except json.JSONDecodeError:
        m = re.search(r"\{.*\}", stripped, re.S)
        if not m:
            raise SchemaViolation("no JSON object in reply")
        try:
            obj = json.loads(m.group(0))
        except json.JSONDecodeError as e:
            raise SchemaViolation(f"unparseable JSON in reply: {e.msg}") from e
    if not isinstance(obj, dict):
        raise SchemaViolation("reply JSON is not an object")
    return obj
