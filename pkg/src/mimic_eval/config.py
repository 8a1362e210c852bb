"""Project configuration (``mimic-eval.json``) and gateway construction.

Unknown keys are rejected with an error naming the key. Relative paths are
resolved against the directory holding the config file. API tokens are only
ever read from the environment variable named by an endpoint's ``auth_env``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ValidationError
from .gateway import CompletionRequest, Endpoint, Gateway, HTTPBackend, ResponseCache
from .mocks import build_mock

DEFAULT_CONFIG_NAME = "mimic-eval.json"


class ConfigError(ValidationError):
    pass


@dataclass
class Paths:
    data: str = "data"
    answers: str = "answers"
    judgements: str = "judgements"
    reports: str = "reports"
    cache: str = "cache"
    runs: str = "runs"


@dataclass
class EndpointConfig:
    kind: str = "openai"
    base_url: str | None = None
    model: str | None = None
    auth_env: str | None = None
    mock: str | None = None
    options: dict = field(default_factory=dict)

    def validate(self, name: str) -> None:
        if self.kind == "openai":
            if not self.base_url:
                raise ConfigError(f"endpoint {name!r}: base_url is required")
        elif self.kind == "mock":
            if not self.mock:
                raise ConfigError(f"endpoint {name!r}: mock name is required")
        else:
            raise ConfigError(f"endpoint {name!r}: unknown kind {self.kind!r}")


@dataclass
class JudgeSettings:
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.0
    retries: int = 3
    concurrency: int = 4
    fact_max_tokens: int = 1024


@dataclass
class DatasetSettings:
    manifest: str = "manifest.json"
    window: int = 4
    seed: int = 42
    style_prefix: str = "_"
    fact_substring: str = "2023"
    style_test_limit: int | None = None
    artifact_patterns: list[str] | None = None


@dataclass
class GenerationSettings:
    temperature: float = 0.0
    max_tokens: int = 512
    system_prompt: str | None = None


@dataclass
class FactSettings:
    extractor: str = "gpt-4o"
    retries: int = 3


def _default_endpoints() -> dict[str, EndpointConfig]:
    return {
        "gpt-3.5-turbo": EndpointConfig(
            base_url="https://api.openai.com/v1", model="gpt-3.5-turbo", auth_env="OPENAI_API_KEY"
        ),
        "gpt-4o": EndpointConfig(base_url="https://api.openai.com/v1", model="gpt-4o", auth_env="OPENAI_API_KEY"),
    }


@dataclass
class ProjectConfig:
    paths: Paths = field(default_factory=Paths)
    endpoints: dict[str, EndpointConfig] = field(default_factory=_default_endpoints)
    judge: JudgeSettings = field(default_factory=JudgeSettings)
    dataset: DatasetSettings = field(default_factory=DatasetSettings)
    generation: GenerationSettings = field(default_factory=GenerationSettings)
    facts: FactSettings = field(default_factory=FactSettings)
    confidence: float = 0.95
    base_dir: Path = field(default_factory=Path.cwd, compare=False, repr=False)

    # serialization ---------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in dataclasses.fields(self):
            if f.name == "base_dir":
                continue
            value = getattr(self, f.name)
            if f.name == "endpoints":
                out[f.name] = {k: dataclasses.asdict(v) for k, v in value.items()}
            elif dataclasses.is_dataclass(value):
                out[f.name] = dataclasses.asdict(value)
            else:
                out[f.name] = value
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()

    def save(self, path: Path | str) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | str = ".") -> ProjectConfig:
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        sections = {
            "paths": Paths,
            "judge": JudgeSettings,
            "dataset": DatasetSettings,
            "generation": GenerationSettings,
            "facts": FactSettings,
        }
        kwargs: dict[str, Any] = {"base_dir": Path(base_dir).resolve()}
        for key, value in data.items():
            if key in sections:
                kwargs[key] = _build(sections[key], value, key)
            elif key == "endpoints":
                if not isinstance(value, dict):
                    raise ConfigError("endpoints must be an object")
                eps = {name: _build(EndpointConfig, cfg, f"endpoints.{name}") for name, cfg in value.items()}
                for name, ep in eps.items():
                    ep.validate(name)
                kwargs[key] = eps
            elif key == "confidence":
                kwargs[key] = float(value)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        cfg = cls(**kwargs)
        if not 0 < cfg.confidence < 1:
            raise ConfigError("confidence must lie in (0, 1)")
        return cfg

    @classmethod
    def load(cls, path: Path | str) -> ProjectConfig:
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(data, path.parent)

    # helpers -----------------------------------------------------------------

    def path(self, name: str) -> Path:
        return self.resolve(getattr(self.paths, name))

    def resolve(self, p: str | Path) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def cache_file(self) -> Path:
        return self.path("cache") / "llm_cache.jsonl"


def _build(cls, value: Any, where: str):
    if not isinstance(value, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in value:
        if key not in names:
            raise ConfigError(f"unknown config key {where}.{key}")
    return cls(**value)


class RoutingBackend:
    """Dispatch each request to the backend of the endpoint it names."""

    def __init__(self, config: ProjectConfig, namespace: str = "default") -> None:
        self.config = config
        self.namespace = namespace
        self._backends: dict[str, Any] = {}
        self._lock = threading.Lock()
        self.http_calls = 0

    def _backend(self, name: str):
        with self._lock:
            if name in self._backends:
                return self._backends[name]
            try:
                ep = self.config.endpoints[name]
            except KeyError:
                raise ConfigError(f"no endpoint named {name!r} in config") from None
            if ep.kind == "mock":
                backend = build_mock(ep.mock, ep.options, self.namespace, self.config.base_dir)
            else:
                backend = HTTPBackend({name: Endpoint(ep.base_url, ep.model or name, ep.auth_env)})
            self._backends[name] = backend
            return backend

    def __call__(self, req: CompletionRequest) -> str:
        backend = self._backend(req.model)
        if isinstance(backend, HTTPBackend):
            with self._lock:
                self.http_calls += 1
        return backend(req)


def make_gateway(config: ProjectConfig, *, namespace: str = "default", concurrency: int | None = None) -> Gateway:
    cache = ResponseCache(config.cache_file())
    backend = RoutingBackend(config, namespace)
    return Gateway(backend, cache, namespace=namespace, concurrency=concurrency or config.judge.concurrency)
