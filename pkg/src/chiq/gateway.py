"""Uniform access to a chat-completion model over HTTP, with a
deterministic mock backend and a persistent on-disk response cache.

No other module performs network I/O for language-model calls except
through `LlmGateway.complete`.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .errors import GatewayError, TransportError

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.7
UNMATCHED_RESPONSE = "UNMATCHED"


@dataclass(frozen=True)
class GenerationConfig:
    temperature: float = DEFAULT_TEMPERATURE
    max_new_tokens: int = 64
    seed: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")


@dataclass(frozen=True)
class ChatRequest:
    system_instruction: str
    user_content: str
    config: GenerationConfig = field(default_factory=GenerationConfig)

    def __post_init__(self) -> None:
        if not self.user_content:
            raise ValueError("user_content must be non-empty")

    def combined_prompt(self) -> str:
        """Canonical single-string form, used for mock matching/hashing."""
        return f"{self.system_instruction}\n\n{self.user_content}"


@dataclass(frozen=True)
class ChatResponse:
    text: str
    backend_id: str
    cached: bool = False


def hash_prompt(request: ChatRequest) -> str:
    """Exact-hash key of a request's combined prompt, for mock rules."""
    return hashlib.sha256(request.combined_prompt().encode("utf-8")).hexdigest()


class _DiskCache:
    """Content-addressed directory of JSON files. Writes are atomic
    (temp file + rename) and serialized per key; reads take no locks."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._write_locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> str | None:
        path = self._path(key)
        try:
            with path.open("r", encoding="utf-8") as fh:
                return json.load(fh)["text"]
        except FileNotFoundError:
            return None
        except (json.JSONDecodeError, KeyError):
            logger.warning("discarding corrupt cache entry %s", path)
            return None

    def put(self, key: str, text: str, meta: dict | None = None) -> None:
        with self._registry_lock:
            lock = self._write_locks.setdefault(key, threading.Lock())
        with lock:
            payload = {"text": text}
            if meta:
                payload["meta"] = meta
            fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as fh:
                    json.dump(payload, fh, ensure_ascii=False)
                os.replace(tmp, self._path(key))
            finally:
                if os.path.exists(tmp):
                    os.unlink(tmp)


def cache_key(backend_id: str, request: ChatRequest) -> str:
    """Cryptographic cache key over every field that can change the output."""
    material = json.dumps(
        {
            "backend_id": backend_id,
            "system": request.system_instruction,
            "user": request.user_content,
            "temperature": request.config.temperature,
            "max_new_tokens": request.config.max_new_tokens,
            "seed": request.config.seed,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class MockRule:
    kind: str  # "substring" | "hash"
    match: str
    response: str

    def __post_init__(self) -> None:
        if self.kind not in ("substring", "hash"):
            raise ValueError(f"unknown mock rule kind {self.kind!r}")

    def matches(self, request: ChatRequest) -> bool:
        if self.kind == "substring":
            return self.match in request.combined_prompt()
        return self.match == hash_prompt(request)


class MockBackend:
    """Deterministic rule-based backend for tests and offline pipelines.

    Rules are checked newest-first, so later registrations shadow earlier
    ones when both match. Unmatched prompts get a fixed fallback text and
    a warning, never an error.
    """

    backend_id = "mock"

    def __init__(self, rules: list[MockRule] | None = None):
        self.rules: list[MockRule] = list(rules or [])
        self.unmatched_count = 0

    def register(self, kind: str, match: str, response: str) -> None:
        self.rules.append(MockRule(kind=kind, match=match, response=response))

    def generate(self, request: ChatRequest) -> str:
        for rule in reversed(self.rules):
            if rule.matches(request):
                return rule.response
        self.unmatched_count += 1
        logger.warning(
            "mock backend: no rule matched prompt starting %r",
            request.combined_prompt()[:80],
        )
        return UNMATCHED_RESPONSE


class HttpBackend:
    """Chat-completion wire protocol: POST a JSON body with system+user
    messages, read the first choice's message content.

    Transient transport failures (connection errors, HTTP 429/5xx) retry
    with exponential backoff up to `max_retries`; other protocol errors
    fail immediately.
    """

    def __init__(
        self,
        url: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 120.0,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        session: requests.Session | None = None,
    ):
        self.url = url
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.session = session or requests.Session()
        self.backend_id = f"http:{url}#{model}"

    def _payload(self, request: ChatRequest) -> dict:
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_instruction},
                {"role": "user", "content": request.user_content},
            ],
            "temperature": request.config.temperature,
            "max_tokens": request.config.max_new_tokens,
        }
        if request.config.seed is not None:
            payload["seed"] = request.config.seed
        return payload

    def generate(self, request: ChatRequest) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                response = self.session.post(
                    self.url,
                    json=self._payload(request),
                    headers=headers,
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last_error = exc
            else:
                if response.status_code == 429 or response.status_code >= 500:
                    last_error = TransportError(
                        f"HTTP {response.status_code} from {self.url}"
                    )
                elif response.status_code != 200:
                    raise GatewayError(
                        f"HTTP {response.status_code} from {self.url}: "
                        f"{response.text[:500]}"
                    )
                else:
                    return self._extract_text(response)
            if attempt < self.max_retries:
                time.sleep(self.backoff_base * (2**attempt))
        raise TransportError(
            f"request to {self.url} failed after {self.max_retries + 1} attempts: "
            f"{last_error}"
        )

    def _extract_text(self, response: requests.Response) -> str:
        try:
            body = response.json()
        except ValueError as exc:
            raise GatewayError(f"non-JSON response body from {self.url}") from exc
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed completion body: {body!r:.300}") from exc
        if text is None or text == "":
            raise GatewayError("empty response body")
        return str(text)


class LlmGateway:
    """Front door for completions: caching, bounded concurrency, call log."""

    def __init__(
        self,
        backend: MockBackend | HttpBackend,
        cache_dir: str | Path | None = None,
        max_concurrency: int = 4,
    ):
        if max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        self.backend = backend
        self.cache = _DiskCache(cache_dir) if cache_dir else None
        self._slots = threading.Semaphore(max_concurrency)
        self._log_lock = threading.Lock()
        self.call_log: list[ChatRequest] = []

    @property
    def backend_id(self) -> str:
        return self.backend.backend_id

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._log_lock:
            self.call_log.append(request)
        key = cache_key(self.backend_id, request)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return ChatResponse(text=hit, backend_id=self.backend_id, cached=True)
        with self._slots:
            text = self.backend.generate(request)
        if self.cache is not None:
            self.cache.put(key, text, meta={"backend_id": self.backend_id})
        return ChatResponse(text=text, backend_id=self.backend_id, cached=False)

    def register_mock(self, kind: str, match: str, response: str) -> None:
        if not isinstance(self.backend, MockBackend):
            raise GatewayError("register_mock requires the mock backend")
        self.backend.register(kind, match, response)


def load_mock_rules(path: str | Path) -> list[MockRule]:
    """Read a JSON rules file: {"rules": [{"match", "kind", "response"}]}."""
    with Path(path).open("r", encoding="utf-8") as fh:
        body = json.load(fh)
    rules = []
    for entry in body.get("rules", []):
        rules.append(
            MockRule(
                kind=entry.get("kind", "substring"),
                match=entry["match"],
                response=entry["response"],
            )
        )
    return rules


def gateway_from_env(
    url: str | None = None,
    model: str | None = None,
    api_key: str | None = None,
    cache_dir: str | Path | None = None,
    mock_rules: str | Path | None = None,
    max_retries: int = 3,
    max_concurrency: int = 4,
) -> LlmGateway:
    """Build a gateway from explicit values, falling back to the CHIQ_LLM_*
    environment variables. With no URL configured (or mock rules given),
    the deterministic mock backend is used."""
    url = url if url is not None else os.environ.get("CHIQ_LLM_URL")
    model = model if model is not None else os.environ.get("CHIQ_LLM_MODEL", "default-model")
    api_key = api_key if api_key is not None else os.environ.get("CHIQ_LLM_KEY")
    if cache_dir is None:
        cache_dir = os.environ.get("CHIQ_CACHE_DIR") or None
    backend: MockBackend | HttpBackend
    if mock_rules is not None or not url:
        backend = MockBackend(load_mock_rules(mock_rules) if mock_rules else [])
    else:
        backend = HttpBackend(url=url, model=model, api_key=api_key, max_retries=max_retries)
    return LlmGateway(backend, cache_dir=cache_dir, max_concurrency=max_concurrency)
