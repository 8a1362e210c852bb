"""Pairwise judge protocols with order-swap repetition.

Every item is judged twice: once with model ``x`` shown as A and ``y`` as B
(ordering ``AB``), once swapped (``BA``). Replies that cannot be parsed are
retried with a fresh sample (``nonce`` bump) and, if still unusable,
recorded as invalid rather than coerced into a verdict.
"""

from __future__ import annotations

import enum
import json
import logging
import re
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .candidates import AnswerSet, StyleSample, fact_sample_id
from .errors import MimicEvalError, ValidationError
from .factqa import FactRecord
from .gateway import CompletionRequest, Gateway, GatewayError, MalformedResponse

logger = logging.getLogger(__name__)

STYLE_PROMPT_VERSION = "style-v1"
FACT_PROMPT_VERSION = "fact-v1"
PROMPT_VERSIONS = {"style": STYLE_PROMPT_VERSION, "facts": FACT_PROMPT_VERSION}

DEFAULT_JUDGE_MODEL = "gpt-3.5-turbo"
DEFAULT_RETRIES = 3

STYLE_PROMPT = """\
I'll give you the real message of some person in the interview and two fragments (A and B). \
Your task is to tell me, which fragment is closer to the original by style?

[real message]
{original}
[/real message]

[message A]
{message_a}
[/message A]

[message B]
{message_b}
[/message B]

Your answer should contain only one letter of the winner or sign '=' if both variants are \
nearly equal. And nothing else

Examples of the answer:

A

or

B

or

="""

FACT_FIELDS = ("original_facts", "matched_a", "extra_a", "matched_b", "extra_b")

FACT_PROMPT = """\
I'll give you the real answer of some person in the interview and two fragments (A and B) \
written by other authors in reply to the same question. Your task is to compare the facts \
they contain. Work step by step and fill the fields of a JSON object strictly in this order:

1. "original_facts": a list of the facts found in the real answer, one short statement each.
2. "matched_a": which facts from "original_facts" can be found in fragment A, given as a \
list of their 0-based indices in "original_facts".
3. "extra_a": a list of facts present in fragment A but absent in the real answer, as short \
statements.
4. "matched_b": which facts from "original_facts" can be found in fragment B, given as a \
list of their 0-based indices in "original_facts".
5. "extra_b": a list of facts present in fragment B but absent in the real answer, as short \
statements.

Count a fact as found only when the fragment states the same information; wording may \
differ. Do not decide which fragment is better.

[real message]
{original}
[/real message]

[message A]
{message_a}
[/message A]

[message B]
{message_b}
[/message B]

Reply with the JSON object only, with exactly the keys "original_facts", "matched_a", \
"extra_a", "matched_b", "extra_b" in this order."""

_PLACEHOLDER = re.compile(r"\{(original|message_a|message_b)\}")


class InvalidVerdict(MimicEvalError):
    pass


class InvalidExtraction(MimicEvalError):
    pass


class StyleVerdict(str, enum.Enum):
    A = "A"
    B = "B"
    EQUAL = "="


class Ordering(str, enum.Enum):
    AB = "AB"  # x shown as A
    BA = "BA"  # y shown as A


def _fill(template: str, original: str, message_a: str, message_b: str) -> str:
    # single pass: substituted text is never re-scanned for placeholders
    values = {"original": original, "message_a": message_a, "message_b": message_b}
    for name, value in values.items():
        if not value or not value.strip():
            raise ValueError(f"{name} must be non-empty")
    return _PLACEHOLDER.sub(lambda m: values[m.group(1)], template)


def build_style_prompt(original: str, message_a: str, message_b: str) -> str:
    return _fill(STYLE_PROMPT, original, message_a, message_b)


def build_fact_prompt(original: str, fragment_a: str, fragment_b: str) -> str:
    return _fill(FACT_PROMPT, original, fragment_a, fragment_b)


def parse_style_verdict(raw: str) -> StyleVerdict:
    token = raw.strip().upper()
    try:
        return StyleVerdict(token)
    except ValueError:
        raise InvalidVerdict(f"unexpected style verdict {raw[:60]!r}") from None


@dataclass(frozen=True)
class FactExtraction:
    original_facts: tuple[str, ...]
    matched_a: tuple[int, ...]
    extra_a: tuple[str, ...]
    matched_b: tuple[int, ...]
    extra_b: tuple[str, ...]

    def to_dict(self) -> dict:
        return {k: list(getattr(self, k)) for k in FACT_FIELDS}

    @classmethod
    def from_dict(cls, data: dict) -> FactExtraction:
        return cls(*(tuple(data[k]) for k in FACT_FIELDS))

    def swapped(self) -> FactExtraction:
        return FactExtraction(self.original_facts, self.matched_b, self.extra_b, self.matched_a, self.extra_a)


def _sanitize_indices(values: list, n: int) -> tuple[tuple[int, ...], int]:
    kept: list[int] = []
    dropped = 0
    for v in values:
        if isinstance(v, bool) or not isinstance(v, int) or not 0 <= v < n or v in kept:
            dropped += 1
        else:
            kept.append(v)
    return tuple(kept), dropped


def _sanitize_extras(values: list, originals: set[str]) -> tuple[tuple[str, ...], int]:
    kept = []
    dropped = 0
    for v in values:
        if not isinstance(v, str) or not v.strip() or v.strip().casefold() in originals:
            dropped += 1
        else:
            kept.append(v.strip())
    return tuple(kept), dropped


def parse_fact_extraction(raw: str) -> tuple[FactExtraction, int]:
    """Parse and sanitize a fact-judge JSON reply.

    Out-of-range, duplicate or non-integer match indices, and extras that
    repeat an original fact, are dropped; the number dropped is returned as
    the warning count.

    Raises:
        InvalidExtraction: not JSON, or a field is missing or of the wrong type.
    """
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise InvalidExtraction(f"fact judge reply is not JSON: {exc}") from None
    if not isinstance(data, dict):
        raise InvalidExtraction("fact judge reply must be a JSON object")
    for key in FACT_FIELDS:
        if not isinstance(data.get(key), list):
            raise InvalidExtraction(f"fact judge reply: field {key!r} missing or not a list")
    originals = data["original_facts"]
    if not all(isinstance(f, str) for f in originals):
        raise InvalidExtraction("original_facts must be strings")
    originals = [f.strip() for f in originals]
    folded = {f.casefold() for f in originals}
    n = len(originals)
    matched_a, w1 = _sanitize_indices(data["matched_a"], n)
    matched_b, w2 = _sanitize_indices(data["matched_b"], n)
    extra_a, w3 = _sanitize_extras(data["extra_a"], folded)
    extra_b, w4 = _sanitize_extras(data["extra_b"], folded)
    warnings = w1 + w2 + w3 + w4
    return FactExtraction(tuple(originals), matched_a, extra_a, matched_b, extra_b), warnings


# judgement records ---------------------------------------------------------


@dataclass(frozen=True)
class StyleJudgement:
    """One judge call. ``verdict`` is ``None`` when the reply stayed invalid."""

    sample_id: str
    ordering: Ordering
    verdict: StyleVerdict | None
    raw: str
    request_digest: str | None = None
    attempts: int = 1

    @property
    def valid(self) -> bool:
        return self.verdict is not None


@dataclass(frozen=True)
class FactJudgement:
    sample_id: str
    ordering: Ordering
    extraction: FactExtraction | None
    raw: str
    request_digest: str | None = None
    attempts: int = 1
    warnings: int = 0

    @property
    def valid(self) -> bool:
        return self.extraction is not None


@dataclass
class JudgeRun:
    """Judgements for one (x, y) pair, plus what is needed to reproduce them."""

    task: str
    model_x: str
    model_y: str
    judge_model: str
    judgements: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)

    @property
    def prompt_version(self) -> str:
        return PROMPT_VERSIONS[self.task]

    def sorted(self) -> list:
        return sorted(self.judgements, key=lambda j: (j.sample_id, j.ordering.value))

    def to_jsonl(self) -> str:
        lines = []
        for j in self.sorted():
            rec = {
                "task": self.task,
                "sample_id": j.sample_id,
                "ordering": j.ordering.value,
                "model_a": self.model_x if j.ordering is Ordering.AB else self.model_y,
                "model_b": self.model_y if j.ordering is Ordering.AB else self.model_x,
            }
            if self.task == "style":
                rec["verdict"] = j.verdict.value if j.verdict else None
            else:
                rec["extraction"] = j.extraction.to_dict() if j.extraction else None
                rec["warnings"] = j.warnings
            rec.update(
                raw=j.raw,
                attempts=j.attempts,
                request_digest=j.request_digest,
                judge_model=self.judge_model,
                prompt_version=self.prompt_version,
            )
            lines.append(json.dumps(rec, ensure_ascii=False, separators=(",", ":")))
        return "".join(line + "\n" for line in lines)

    def save(self, path: Path | str) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_jsonl(), encoding="utf-8", newline="\n")

    @classmethod
    def load(cls, path: Path | str, model_x: str, model_y: str) -> JudgeRun:
        path = Path(path)
        if not path.is_file():
            raise ValidationError(f"judgement file not found: {path}")
        judgements = []
        task = judge_model = None
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                task = rec["task"]
                judge_model = rec.get("judge_model", DEFAULT_JUDGE_MODEL)
                ordering = Ordering(rec["ordering"])
                expected_a = model_x if ordering is Ordering.AB else model_y
                if rec["model_a"] != expected_a:
                    raise ValidationError(f"{path}: model_a {rec['model_a']!r} does not match {expected_a!r}")
                common = dict(
                    sample_id=rec["sample_id"],
                    ordering=ordering,
                    raw=rec["raw"],
                    request_digest=rec.get("request_digest"),
                    attempts=rec.get("attempts", 1),
                )
                if task == "style":
                    v = rec["verdict"]
                    judgements.append(StyleJudgement(verdict=StyleVerdict(v) if v else None, **common))
                else:
                    ex = rec["extraction"]
                    judgements.append(
                        FactJudgement(
                            extraction=FactExtraction.from_dict(ex) if ex else None,
                            warnings=rec.get("warnings", 0),
                            **common,
                        )
                    )
        if task is None:
            raise ValidationError(f"{path}: no judgements")
        return cls(task, model_x, model_y, judge_model or DEFAULT_JUDGE_MODEL, judgements)


# running the protocols -------------------------------------------------------


def _check_coverage(ids: Sequence[str], answers: AnswerSet) -> None:
    missing = answers.covers(ids)
    if missing:
        raise ValidationError(f"answers of {answers.model_name!r} miss {len(missing)} item(s), e.g. {missing[0]}")


def _orderings(x_text: str, y_text: str):
    yield Ordering.AB, x_text, y_text
    yield Ordering.BA, y_text, x_text


def judge_style_pair(
    samples: Sequence[StyleSample],
    answers_x: AnswerSet,
    answers_y: AnswerSet,
    gateway: Gateway,
    *,
    judge_model: str = DEFAULT_JUDGE_MODEL,
    temperature: float = 0.0,
    retries: int = DEFAULT_RETRIES,
) -> JudgeRun:
    """Judge every sample in both orderings; the real answer fills ``{original}``."""
    ids = [s.sample_id for s in samples]
    _check_coverage(ids, answers_x)
    _check_coverage(ids, answers_y)
    jobs = [
        (s.sample_id, ordering, build_style_prompt(s.reference, a, b))
        for s in samples
        for ordering, a, b in _orderings(answers_x.answers[s.sample_id], answers_y.answers[s.sample_id])
    ]

    def run(job):
        sample_id, ordering, prompt = job
        raw, digest = "", None
        for attempt in range(retries + 1):
            req = CompletionRequest.single(
                judge_model, prompt, temperature=temperature, max_tokens=5, nonce=attempt
            )
            resp = gateway.complete(req)
            raw, digest = resp.text, resp.request_digest
            try:
                verdict = parse_style_verdict(raw)
            except InvalidVerdict:
                continue
            return StyleJudgement(sample_id, ordering, verdict, raw, digest, attempt + 1)
        logger.warning("style judge: %s/%s invalid after %d attempts", sample_id, ordering.value, retries + 1)
        return StyleJudgement(sample_id, ordering, None, raw, digest, retries + 1)

    out = JudgeRun("style", answers_x.model_name, answers_y.model_name, judge_model)
    for job, (res, err) in zip(jobs, gateway.map(run, jobs)):
        if err is not None:
            out.errors[(job[0], job[1].value)] = err
        else:
            out.judgements.append(res)
    return out


def judge_fact_pair(
    facts: Sequence[FactRecord],
    answers_x: AnswerSet,
    answers_y: AnswerSet,
    gateway: Gateway,
    *,
    judge_model: str = DEFAULT_JUDGE_MODEL,
    temperature: float = 0.0,
    retries: int = DEFAULT_RETRIES,
    max_tokens: int = 1024,
) -> JudgeRun:
    """Structured fact extraction for every fact record in both orderings.

    The reference is the record's ``answer`` field.
    """
    ids = [fact_sample_id(r) for r in facts]
    _check_coverage(ids, answers_x)
    _check_coverage(ids, answers_y)
    jobs = [
        (sid, ordering, build_fact_prompt(rec.answer, a, b))
        for sid, rec in zip(ids, facts)
        for ordering, a, b in _orderings(answers_x.answers[sid], answers_y.answers[sid])
    ]

    def run(job):
        sample_id, ordering, prompt = job
        raw, digest = "", None
        for attempt in range(retries + 1):
            req = CompletionRequest.single(
                judge_model, prompt, temperature=temperature, json_mode=True, max_tokens=max_tokens, nonce=attempt
            )
            try:
                resp = gateway.complete(req)
            except MalformedResponse as exc:
                raw, digest = str(exc), exc.digest
                continue
            raw, digest = resp.text, resp.request_digest
            try:
                extraction, warnings = parse_fact_extraction(raw)
            except InvalidExtraction:
                continue
            if warnings:
                logger.info("fact judge: %s/%s dropped %d bad entries", sample_id, ordering.value, warnings)
            return FactJudgement(sample_id, ordering, extraction, raw, digest, attempt + 1, warnings)
        logger.warning("fact judge: %s/%s invalid after %d attempts", sample_id, ordering.value, retries + 1)
        return FactJudgement(sample_id, ordering, None, raw, digest, retries + 1)

    out = JudgeRun("facts", answers_x.model_name, answers_y.model_name, judge_model)
    for job, (res, err) in zip(jobs, gateway.map(run, jobs)):
        if err is not None:
            out.errors[(job[0], job[1].value)] = err
        else:
            out.judgements.append(res)
    return out


def raise_for_errors(run: JudgeRun) -> None:
    if not run.errors:
        return
    first = next(iter(run.errors.values()))
    cls = GatewayError if isinstance(first, GatewayError) else MimicEvalError
    raise cls(f"{len(run.errors)} judge call(s) failed for {run.model_x} vs {run.model_y}: {first}")
