"""Fact questionnaire: extraction from fact-source interviews, storage, validation.

The dataset is a CSV with header ``id,fact,src,question,answer`` (RFC 4180
quoting, CRLF row ends) or an equivalent JSON array. ``src`` must be a
verbatim excerpt of one of the source interviews; whitespace runs are
collapsed on both sides before the substring check.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import re
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .corpus import Dialog, Tag
from .errors import ValidationError
from .gateway import CompletionRequest, Gateway, MalformedResponse

logger = logging.getLogger(__name__)

FIELDS = ("id", "fact", "src", "question", "answer")
TEXT_FIELDS = FIELDS[1:]

EXTRACTION_PROMPT_VERSION = "fact-extract-v1"

EXTRACTION_PROMPT = """\
Below is the transcript of an interview. The interviewee's turns are marked [assistant], \
everyone else is marked [user].

Find facts stated by the interviewee. Prefer facts that are specific to this person and \
are not publicly known; skip common knowledge.

For every fact return an object with exactly these four fields:
- "fact": a short declarative description of the fact.
- "src": the original fragment the fact was taken from, copied verbatim from the transcript.
- "question": a question to the interviewee that can only be answered correctly by someone \
who knows the fact.
- "answer": the fact phrased as the interviewee's direct answer to that question.

Reply with a JSON object of the form {{"facts": [{{"fact": ..., "src": ..., "question": ..., \
"answer": ...}}, ...]}} and nothing else.

[transcript]
{transcript}
[/transcript]"""


class ExtractionFormatError(ValidationError):
    """The extraction model kept returning unusable JSON."""


@dataclass(frozen=True)
class FactRecord:
    id: int
    fact: str
    src: str
    question: str
    answer: str

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FactDataset:
    records: tuple[FactRecord, ...]
    source_dialog_ids: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.records)


# validation issues --------------------------------------------------------


@dataclass(frozen=True)
class EmptyField:
    field: str


@dataclass(frozen=True)
class DuplicateId:
    id: int


@dataclass(frozen=True)
class IdGap:
    expected: int
    found: int


@dataclass(frozen=True)
class SrcNotFound:
    id: int


@dataclass(frozen=True)
class SourceNotTagged:
    dialog_id: str


@dataclass
class RecordReport:
    id: int
    issues: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues


@dataclass
class ValidationReport:
    records: list[RecordReport]
    dataset_issues: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.dataset_issues and all(r.ok for r in self.records)

    def failures(self) -> list[tuple[int | None, object]]:
        out: list[tuple[int | None, object]] = [(None, i) for i in self.dataset_issues]
        out += [(r.id, i) for r in self.records for i in r.issues]
        return out


_WS = re.compile(r"\s+")


def _squash(text: str) -> str:
    return _WS.sub(" ", text).strip()


def src_in_text(src: str, text: str) -> bool:
    needle = _squash(src)
    return bool(needle) and needle in _squash(text)


def validate_dataset(ds: FactDataset, dialogs: Iterable[Dialog] = ()) -> ValidationReport:
    """Check non-empty fields, dense unique ids from 1, and ``src`` provenance.

    The ``src`` check runs only when ``dialogs`` are supplied; a record passes
    if its ``src`` occurs in any of them. Dialogs named in
    ``ds.source_dialog_ids`` must be tagged ``fact_source``.
    """
    dialogs = list(dialogs)
    texts = [d.text() for d in dialogs]
    by_id = {d.id: d for d in dialogs}
    dataset_issues: list = []
    for sid in ds.source_dialog_ids:
        d = by_id.get(sid)
        if d is not None and Tag.FACT_SOURCE not in d.tags:
            dataset_issues.append(SourceNotTagged(sid))

    seen: set[int] = set()
    reports = []
    for pos, rec in enumerate(ds.records, 1):
        rep = RecordReport(rec.id)
        for name in TEXT_FIELDS:
            value = getattr(rec, name)
            if not isinstance(value, str) or not value.strip():
                rep.issues.append(EmptyField(name))
        if rec.id in seen:
            rep.issues.append(DuplicateId(rec.id))
        elif rec.id != pos:
            rep.issues.append(IdGap(pos, rec.id))
        seen.add(rec.id)
        if texts and rec.src.strip() and not any(src_in_text(rec.src, t) for t in texts):
            rep.issues.append(SrcNotFound(rec.id))
        reports.append(rep)
    return ValidationReport(reports, dataset_issues)


# storage ------------------------------------------------------------------


def dumps_csv(records: Iterable[FactRecord]) -> str:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(FIELDS)
    for rec in records:
        writer.writerow([rec.id, rec.fact, rec.src, rec.question, rec.answer])
    return buf.getvalue()


def loads_csv(text: str) -> list[FactRecord]:
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError("fact CSV is empty") from None
    if tuple(h.strip() for h in header) != FIELDS:
        raise ValidationError(f"fact CSV header must be {','.join(FIELDS)}, got {','.join(header)}")
    records = []
    for lineno, row in enumerate(reader, 2):
        if not row:
            continue
        if len(row) != len(FIELDS):
            raise ValidationError(f"fact CSV row {lineno}: expected {len(FIELDS)} columns")
        try:
            rid = int(row[0])
        except ValueError:
            raise ValidationError(f"fact CSV row {lineno}: id {row[0]!r} is not an integer") from None
        records.append(FactRecord(rid, *row[1:]))
    return records


def save_csv(path: Path | str, records: Iterable[FactRecord]) -> None:
    Path(path).write_bytes(dumps_csv(records).encode("utf-8"))


def load_csv(path: Path | str) -> list[FactRecord]:
    return loads_csv(Path(path).read_bytes().decode("utf-8"))


def dumps_json(records: Iterable[FactRecord]) -> str:
    return json.dumps([r.to_dict() for r in records], ensure_ascii=False, indent=2) + "\n"


def loads_json(text: str) -> list[FactRecord]:
    data = json.loads(text)
    try:
        return [FactRecord(int(d["id"]), *(d[k] for k in TEXT_FIELDS)) for d in data]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"fact JSON: bad record ({exc})") from None


def load_facts(path: Path | str) -> list[FactRecord]:
    path = Path(path)
    if path.suffix.lower() == ".json":
        return loads_json(path.read_text(encoding="utf-8"))
    return load_csv(path)


def save_facts(path: Path | str, records: Iterable[FactRecord]) -> None:
    path = Path(path)
    if path.suffix.lower() == ".json":
        path.write_text(dumps_json(records), encoding="utf-8")
    else:
        save_csv(path, records)


# extraction ---------------------------------------------------------------


@dataclass(frozen=True)
class CandidateFact:
    """A raw extraction result awaiting review."""

    record: FactRecord
    source_id: str
    issues: tuple = ()

    @property
    def accepted(self) -> bool:
        return not self.issues


def build_extraction_prompt(dialog: Dialog) -> str:
    transcript = "\n".join(f"[{m.role.value}] {m.content}" for m in dialog.messages)
    return EXTRACTION_PROMPT.format(transcript=transcript)


def _parse_extraction(text: str) -> list[dict]:
    data = json.loads(text)
    if isinstance(data, dict):
        data = data.get("facts")
    if not isinstance(data, list):
        raise ValueError("expected a list of fact objects")
    for item in data:
        if not isinstance(item, dict) or not all(isinstance(item.get(k), str) for k in TEXT_FIELDS):
            raise ValueError(f"fact object must carry string fields {TEXT_FIELDS}")
    return data


def extract_facts(
    dialog: Dialog,
    gateway: Gateway,
    model: str,
    *,
    retries: int = 3,
    temperature: float = 0.0,
    max_tokens: int = 4096,
) -> list[CandidateFact]:
    """Ask ``model`` for candidate facts from one fact-source dialog.

    Candidates whose ``src`` is not found in the dialog, or that have empty
    fields, are returned with their issues attached instead of being dropped.

    Raises:
        ExtractionFormatError: no usable JSON after ``retries`` extra attempts.
    """
    if Tag.FACT_SOURCE not in dialog.tags:
        raise ValidationError(f"dialog {dialog.id!r} is not tagged fact_source")
    prompt = build_extraction_prompt(dialog)
    text = dialog.text()
    last_error: Exception | None = None
    for attempt in range(retries + 1):
        req = CompletionRequest.single(
            model, prompt, temperature=temperature, json_mode=True, max_tokens=max_tokens, nonce=attempt
        )
        try:
            items = _parse_extraction(gateway.complete(req).text)
        except (MalformedResponse, ValueError) as exc:
            logger.warning("fact extraction for %s: attempt %d unusable (%s)", dialog.id, attempt + 1, exc)
            last_error = exc
            continue
        out = []
        for i, item in enumerate(items, 1):
            rec = FactRecord(i, *(item[k].strip() for k in TEXT_FIELDS))
            issues = [EmptyField(k) for k in TEXT_FIELDS if not getattr(rec, k)]
            if rec.src and not src_in_text(rec.src, text):
                issues.append(SrcNotFound(rec.id))
            out.append(CandidateFact(rec, dialog.id, tuple(issues)))
        return out
    raise ExtractionFormatError(f"fact extraction for {dialog.id!r} failed: {last_error}")


def assemble_dataset(candidates: Sequence[CandidateFact], *, accepted_only: bool = True) -> FactDataset:
    """Renumber candidates densely from 1, in the given order."""
    kept = [c for c in candidates if c.accepted or not accepted_only]
    records = tuple(
        FactRecord(i, c.record.fact, c.record.src, c.record.question, c.record.answer)
        for i, c in enumerate(kept, 1)
    )
    sources = tuple(dict.fromkeys(c.source_id for c in kept))
    return FactDataset(records, sources)


def dumps_review_csv(candidates: Sequence[CandidateFact]) -> str:
    """All candidates, with their source dialog and issues, for manual review."""
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(("source_id", "status", "issues", *TEXT_FIELDS))
    for c in candidates:
        status = "accepted" if c.accepted else "flagged"
        issues = "; ".join(type(i).__name__ for i in c.issues)
        writer.writerow((c.source_id, status, issues, *(getattr(c.record, k) for k in TEXT_FIELDS)))
    return buf.getvalue()
