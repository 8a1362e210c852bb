"""Chat-completion access for candidate and judge models.

:class:`Gateway` sits in front of a backend (the OpenAI-compatible
:class:`HTTPBackend` or the in-process :class:`MockBackend`) and an
append-only JSON-lines :class:`ResponseCache`. A cache hit never reaches the
backend. Cache entries are scoped by namespace so a repeated "noise" run can
re-sample the judge without touching the primary results.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from collections.abc import Callable, Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import httpx

from .corpus import ChatMessage, Role
from .errors import MimicEvalError, ValidationError

logger = logging.getLogger(__name__)

__all__ = [
    "AuthError",
    "CompletionRequest",
    "CompletionResponse",
    "Endpoint",
    "Gateway",
    "GatewayError",
    "HTTPBackend",
    "MalformedResponse",
    "MockBackend",
    "RateLimitExhausted",
    "ResponseCache",
    "TransportError",
    "request_digest",
]

RETRYABLE_STATUS = frozenset({408, 409, 429, 500, 502, 503, 504})


class GatewayError(MimicEvalError):
    """A completion could not be obtained. ``digest`` names the request."""

    def __init__(self, message: str, digest: str | None = None) -> None:
        self.digest = digest
        suffix = f" [request {digest[:12]}]" if digest else ""
        super().__init__(message + suffix)


class AuthError(GatewayError):
    pass


class RateLimitExhausted(GatewayError):
    pass


class TransportError(GatewayError):
    pass


class MalformedResponse(GatewayError):
    pass


@dataclass(frozen=True)
class CompletionRequest:
    """One chat completion call.

    ``model`` names an endpoint from the project config. ``nonce`` only
    enters the digest: callers bump it to obtain a fresh sample for the same
    prompt (retries after an unparseable judge reply).
    """

    model: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    json_mode: bool = False
    max_tokens: int = 1024
    nonce: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("request needs at least one message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    @classmethod
    def single(cls, model: str, prompt: str, **kwargs) -> CompletionRequest:
        return cls(model, (ChatMessage(Role.USER, prompt.strip()),), **kwargs)

    def canonical(self) -> dict:
        return {
            "model": self.model,
            "messages": [m.to_dict() for m in self.messages],
            "temperature": float(self.temperature),
            "json_mode": bool(self.json_mode),
            "max_tokens": int(self.max_tokens),
            "nonce": int(self.nonce),
        }

    @classmethod
    def from_canonical(cls, data: Mapping) -> CompletionRequest:
        return cls(
            model=data["model"],
            messages=tuple(ChatMessage.from_dict(m) for m in data["messages"]),
            temperature=data["temperature"],
            json_mode=data["json_mode"],
            max_tokens=data["max_tokens"],
            nonce=data.get("nonce", 0),
        )


def _canonical_json(obj: object) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def request_digest(req: CompletionRequest) -> str:
    """SHA-256 over the key-sorted canonical JSON of the request."""
    return hashlib.sha256(_canonical_json(req.canonical()).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    cached: bool
    request_digest: str


class ResponseCache:
    """Append-only JSON-lines cache keyed by ``(namespace, digest)``.

    Each line is ``{"digest", "namespace", "request", "response", "timestamp"}``.
    A torn final line (crash mid-write) is skipped on load.
    """

    def __init__(self, path: Path | str | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self._entries: dict[tuple[str, str], str] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        assert self.path is not None
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    key = (rec.get("namespace", "default"), rec["digest"])
                    self._entries.setdefault(key, rec["response"])
                except (json.JSONDecodeError, KeyError):
                    logger.warning("cache %s: skipping unreadable line %d", self.path, lineno)

    def get(self, digest: str, namespace: str = "default") -> str | None:
        with self._lock:
            return self._entries.get((namespace, digest))

    def put(self, req: CompletionRequest, digest: str, response: str, namespace: str = "default") -> None:
        with self._lock:
            key = (namespace, digest)
            if key in self._entries:
                return
            self._entries[key] = response
            if self.path is None:
                return
            rec = {
                "digest": digest,
                "namespace": namespace,
                "request": req.canonical(),
                "response": response,
                "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            }
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
                fh.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")) + "\n")

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


Backend = Callable[[CompletionRequest], str]


class MockBackend:
    """Deterministic in-process backend: ``fn(request) -> text``.

    Every request it receives is recorded in :attr:`requests`.
    """

    def __init__(self, fn: Callable[[CompletionRequest], str]) -> None:
        self.fn = fn
        self.requests: list[CompletionRequest] = []
        self._lock = threading.Lock()

    def __call__(self, req: CompletionRequest) -> str:
        with self._lock:
            self.requests.append(req)
        return self.fn(req)


@dataclass(frozen=True)
class Endpoint:
    """OpenAI-compatible endpoint. The token is read from ``auth_env`` at call time."""

    base_url: str
    model: str
    auth_env: str | None = None


@dataclass
class HTTPBackend:
    """POSTs to ``{base_url}/chat/completions`` with bounded exponential backoff."""

    endpoints: Mapping[str, Endpoint]
    max_retries: int = 4
    backoff_base: float = 1.0
    backoff_cap: float = 30.0
    timeout: float = 120.0
    transport: httpx.BaseTransport | None = None
    sleep: Callable[[float], None] = time.sleep
    _client: httpx.Client | None = field(default=None, init=False, repr=False)

    def _http(self) -> httpx.Client:
        if self._client is None:
            self._client = httpx.Client(timeout=self.timeout, transport=self.transport)
        return self._client

    def _headers(self, endpoint: Endpoint, digest: str) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if endpoint.auth_env:
            token = os.environ.get(endpoint.auth_env)
            if not token:
                raise AuthError(f"environment variable {endpoint.auth_env} is not set", digest)
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def payload(self, req: CompletionRequest, endpoint: Endpoint) -> dict:
        body: dict = {
            "model": endpoint.model,
            "messages": [m.to_dict() for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        if req.json_mode:
            body["response_format"] = {"type": "json_object"}
        return body

    def __call__(self, req: CompletionRequest) -> str:
        digest = request_digest(req)
        try:
            endpoint = self.endpoints[req.model]
        except KeyError:
            raise ValidationError(f"no endpoint configured for model {req.model!r}") from None
        url = endpoint.base_url.rstrip("/") + "/chat/completions"
        headers = self._headers(endpoint, digest)
        body = self.payload(req, endpoint)

        last_status: int | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                delay = random.uniform(0, min(self.backoff_base * 2 ** (attempt - 1), self.backoff_cap))
                self.sleep(delay)
            try:
                resp = self._http().post(url, json=body, headers=headers)
            except httpx.TransportError as exc:
                logger.warning("transport error on %s (attempt %d): %s", url, attempt + 1, exc)
                last_status = None
                if attempt == self.max_retries:
                    raise TransportError(f"{url}: {exc}", digest) from exc
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"{url}: HTTP {resp.status_code}", digest)
            if resp.status_code in RETRYABLE_STATUS:
                last_status = resp.status_code
                retry_after = resp.headers.get("retry-after")
                if retry_after and attempt < self.max_retries:
                    try:
                        self.sleep(min(float(retry_after), self.backoff_cap))
                    except ValueError:
                        pass
                continue
            if resp.status_code >= 400:
                raise TransportError(f"{url}: HTTP {resp.status_code}: {resp.text[:200]}", digest)
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise MalformedResponse(f"{url}: unexpected response body", digest) from exc

        if last_status == 429:
            raise RateLimitExhausted(f"{url}: rate limited after {self.max_retries + 1} attempts", digest)
        raise TransportError(f"{url}: HTTP {last_status} after {self.max_retries + 1} attempts", digest)


class Gateway:
    """Cache-first completion handle, safe to share between threads.

    ``calls`` counts requests that reached the backend.
    """

    def __init__(
        self,
        backend: Backend,
        cache: ResponseCache | None = None,
        *,
        namespace: str = "default",
        concurrency: int = 4,
    ) -> None:
        if concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        self.backend = backend
        self.cache = cache if cache is not None else ResponseCache()
        self.namespace = namespace
        self.concurrency = concurrency
        self.calls = 0
        self._lock = threading.Lock()

    def with_namespace(self, namespace: str) -> Gateway:
        gw = Gateway(self.backend, self.cache, namespace=namespace, concurrency=self.concurrency)
        gw._lock = self._lock
        return gw

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        digest = request_digest(req)
        hit = self.cache.get(digest, self.namespace)
        if hit is not None:
            return CompletionResponse(hit, True, digest)
        with self._lock:
            self.calls += 1
        text = self.backend(req)
        if not isinstance(text, str):
            raise MalformedResponse("backend returned non-text content", digest)
        if req.json_mode:
            try:
                json.loads(text)
            except json.JSONDecodeError as exc:
                raise MalformedResponse(f"json_mode reply is not JSON: {exc}", digest) from None
        self.cache.put(req, digest, text, self.namespace)
        return CompletionResponse(text, False, digest)

    def map(
        self, fn: Callable[[object], object], items: Iterable[object]
    ) -> list[tuple[object, BaseException | None]]:
        """Run ``fn`` over ``items`` with at most ``concurrency`` in flight.

        Returns ``(result, error)`` pairs in input order; exceptions are
        captured per item rather than aborting the batch.
        """

        def guarded(item: object) -> tuple[object, BaseException | None]:
            try:
                return fn(item), None
            except MimicEvalError as exc:
                return None, exc

        items = list(items)
        if self.concurrency == 1 or len(items) <= 1:
            return [guarded(it) for it in items]
        with ThreadPoolExecutor(max_workers=self.concurrency) as pool:
            return list(pool.map(guarded, items))


def endpoints_from_config(raw: Mapping[str, Mapping]) -> dict[str, Endpoint]:
    return {
        name: Endpoint(cfg["base_url"], cfg.get("model", name), cfg.get("auth_env"))
        for name, cfg in raw.items()
    }


def complete_many(gateway: Gateway, requests: Sequence[CompletionRequest]) -> list[CompletionResponse]:
    """Convenience wrapper: fail on the first error, results in request order."""
    out = gateway.map(gateway.complete, requests)
    for _, err in out:
        if err is not None:
            raise err
    return [res for res, _ in out]  # type: ignore[misc]
