"""Collect candidate-model answers for style samples and fact questions."""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import ChatMessage, Role
from .errors import MimicEvalError, ValidationError
from .factqa import FactRecord
from .fragmenter import Fragment
from .gateway import CompletionRequest, Gateway

logger = logging.getLogger(__name__)

__all__ = [
    "AnswerSet",
    "GenerationFailed",
    "Prompt",
    "StyleSample",
    "fact_prompts",
    "fact_sample_id",
    "generate_answers",
    "make_style_samples",
    "style_prompts",
]


class GenerationFailed(MimicEvalError):
    """Some items are still unanswered. ``partial`` holds what succeeded."""

    def __init__(self, message: str, partial: AnswerSet, errors: dict[str, BaseException]) -> None:
        super().__init__(message)
        self.partial = partial
        self.errors = errors


@dataclass(frozen=True)
class StyleSample:
    """A style-test fragment with its final persona answer hidden."""

    sample_id: str
    context: tuple[ChatMessage, ...]
    reference: str

    def __post_init__(self) -> None:
        if not self.context or self.context[-1].role is not Role.USER:
            raise ValueError("style sample context must end with a user message")
        if not self.reference.strip():
            raise ValueError("style sample reference must be non-empty")


@dataclass(frozen=True)
class Prompt:
    """What a candidate model is asked: ``messages`` keyed by ``item_id``."""

    item_id: str
    messages: tuple[ChatMessage, ...]


def style_sample_id(fragment: Fragment) -> str:
    return f"{fragment.source_id}:{fragment.window_index:04d}"


def fact_sample_id(record: FactRecord) -> str:
    return f"fact:{record.id:04d}"


def make_style_samples(fragments: Iterable[Fragment]) -> list[StyleSample]:
    samples = []
    for frag in fragments:
        samples.append(
            StyleSample(style_sample_id(frag), frag.messages[:-1], frag.messages[-1].content)
        )
    ids = [s.sample_id for s in samples]
    if len(set(ids)) != len(ids):
        raise ValidationError("style samples have duplicate ids")
    return samples


def style_prompts(samples: Iterable[StyleSample]) -> list[Prompt]:
    return [Prompt(s.sample_id, s.context) for s in samples]


def fact_prompts(records: Iterable[FactRecord]) -> list[Prompt]:
    return [Prompt(fact_sample_id(r), (ChatMessage(Role.USER, r.question.strip()),)) for r in records]


@dataclass
class AnswerSet:
    model_name: str
    answers: dict[str, str]
    params: dict = field(default_factory=dict)
    digests: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.answers)

    def covers(self, ids: Iterable[str]) -> list[str]:
        """Return the ids in ``ids`` that have no answer."""
        return [i for i in ids if i not in self.answers]

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(
                {"sample_id": sid, "answer": self.answers[sid], "request_digest": self.digests.get(sid)},
                ensure_ascii=False,
                separators=(",", ":"),
            )
            for sid in sorted(self.answers)
        ]
        return "".join(line + "\n" for line in lines)

    def save(self, path: Path | str) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_jsonl(), encoding="utf-8", newline="\n")
        meta = {"model": self.model_name, "params": self.params}
        path.with_suffix(".meta.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
        )

    @classmethod
    def load(cls, path: Path | str, model_name: str | None = None) -> AnswerSet:
        path = Path(path)
        if not path.is_file():
            raise ValidationError(f"answer file not found: {path}")
        meta_path = path.with_suffix(".meta.json")
        meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.is_file() else {}
        answers, digests = {}, {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                answers[rec["sample_id"]] = rec["answer"]
                if rec.get("request_digest"):
                    digests[rec["sample_id"]] = rec["request_digest"]
        name = model_name or meta.get("model") or path.parent.name
        return cls(name, answers, meta.get("params", {}), digests)


def generate_answers(
    prompts: Sequence[Prompt],
    model: str,
    gateway: Gateway,
    *,
    temperature: float = 0.0,
    max_tokens: int = 512,
    system_prompt: str | None = None,
    model_name: str | None = None,
) -> AnswerSet:
    """Ask ``model`` once per prompt; style contexts are sent verbatim as chat history.

    Answers already in the gateway cache cost no backend call, so an
    interrupted run simply resumes.

    Raises:
        GenerationFailed: at least one item failed; ``partial`` keeps the rest.
    """
    prefix: tuple[ChatMessage, ...] = ()
    if system_prompt:
        prefix = (ChatMessage(Role.SYSTEM, system_prompt.strip()),)

    def run(p: Prompt):
        req = CompletionRequest(model, prefix + p.messages, temperature=temperature, max_tokens=max_tokens)
        return gateway.complete(req)

    results = gateway.map(run, prompts)
    params = {"endpoint": model, "temperature": temperature, "max_tokens": max_tokens}
    if system_prompt:
        params["system_prompt"] = system_prompt
    answers = AnswerSet(model_name or model, {}, params, {})
    errors: dict[str, BaseException] = {}
    for p, (resp, err) in zip(prompts, results):
        if err is not None:
            errors[p.item_id] = err
            continue
        answers.answers[p.item_id] = resp.text.strip()
        answers.digests[p.item_id] = resp.request_digest
    if errors:
        first = next(iter(errors.values()))
        raise GenerationFailed(
            f"{len(errors)} of {len(prompts)} items unanswered for {model!r} (first error: {first})",
            answers,
            errors,
        )
    return answers
