"""Parse raw interview transcripts into role-alternating chat dialogs.

Transcripts use ``Speaker: utterance`` lines. A line without a speaker prefix
continues the previous utterance. The persona's lines become ``assistant``
messages, every other speaker becomes ``user``.
"""

from __future__ import annotations

import enum
import json
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError

__all__ = [
    "ChatMessage",
    "DEFAULT_ARTIFACT_PATTERNS",
    "Dialog",
    "EmptyTranscript",
    "ManifestEntry",
    "RejectedDialog",
    "Role",
    "Tag",
    "TranscriptManifest",
    "UnknownPersona",
    "default_tags",
    "load_corpus",
    "merge_consecutive",
    "normalize_messages",
    "parse_transcript",
    "strip_artifacts",
]


class EmptyTranscript(ValidationError):
    """No ``Speaker: text`` line could be parsed."""


class UnknownPersona(ValidationError):
    """The requested persona never speaks in the transcript."""


class RejectedDialog(ValidationError):
    """Normalization left no user/assistant exchange."""


class Role(str, enum.Enum):
    USER = "user"
    ASSISTANT = "assistant"
    SYSTEM = "system"


class Tag(str, enum.Enum):
    TRAIN = "train"
    STYLE_TEST = "style_test"
    FACT_SOURCE = "fact_source"


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "role", Role(self.role))
        if not isinstance(self.content, str) or not self.content.strip():
            raise ValueError("message content must be non-empty text")
        if self.content != self.content.strip():
            raise ValueError("message content must not carry leading/trailing whitespace")

    def to_dict(self) -> dict[str, str]:
        return {"role": self.role.value, "content": self.content}

    @classmethod
    def from_dict(cls, data: dict) -> ChatMessage:
        return cls(Role(data["role"]), data["content"])


@dataclass(frozen=True)
class Dialog:
    """A normalized interview: user first, assistant last, strictly alternating."""

    id: str
    messages: tuple[ChatMessage, ...]
    tags: frozenset[Tag] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        msgs = tuple(self.messages)
        object.__setattr__(self, "messages", msgs)
        object.__setattr__(self, "tags", frozenset(Tag(t) for t in self.tags))
        if not msgs:
            raise RejectedDialog(f"dialog {self.id!r} has no messages")
        if msgs[0].role is not Role.USER or msgs[-1].role is not Role.ASSISTANT:
            raise RejectedDialog(f"dialog {self.id!r} must start with user and end with assistant")
        for prev, cur in zip(msgs, msgs[1:]):
            if prev.role is cur.role:
                raise RejectedDialog(f"dialog {self.id!r} has consecutive {cur.role.value} messages")
        if any(m.role is Role.SYSTEM for m in msgs):
            raise RejectedDialog(f"dialog {self.id!r} contains a system message")

    def text(self) -> str:
        return "\n".join(m.content for m in self.messages)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "tags": sorted(t.value for t in self.tags),
            "messages": [m.to_dict() for m in self.messages],
        }

    @classmethod
    def from_dict(cls, data: dict) -> Dialog:
        return cls(
            id=data["id"],
            messages=tuple(ChatMessage.from_dict(m) for m in data["messages"]),
            tags=frozenset(Tag(t) for t in data.get("tags", ())),
        )


# Best-effort defaults; transcripts in the wild use many more conventions.
DEFAULT_ARTIFACT_PATTERNS: tuple[str, ...] = (
    # [laughs], [inaudible 00:12], [CROSSTALK]
    r"\[[^\[\]\n]{1,60}\]",
    # (applause), (laughter), (crosstalk) ... only known stage words in parentheses
    r"\((?i:laugh(?:s|ing|ter)?|applause|crosstalk|inaudible|unintelligible|indistinct"
    r"|music|silence|pause|cheers?|cheering|sighs?|coughs?|chuckles?|audience laughs?)"
    r"[^()\n]{0,40}\)",
    # line-start timestamps: 12:03 or 01:12:03, optionally bracketed
    r"(?m)^[ \t]*[\[(]?\d{1,2}:\d{2}(?::\d{2})?[\])]?",
)

_LINE_TIMESTAMP = re.compile(r"^\s*[\[(]?\d{1,2}:\d{2}(?::\d{2})?[\])]?\s*")
_SPEAKER_LINE = re.compile(r"^(?P<name>[^\W\d_][\w.'\- ]{0,39}?)\s*:(?:\s+(?P<text>.*)|\s*)$")
_HSPACE = re.compile(r"[ \t\f\v]+")


def _compile(patterns: Iterable[str]) -> list[re.Pattern[str]]:
    return [re.compile(p) for p in patterns]


_DEFAULT_COMPILED = _compile(DEFAULT_ARTIFACT_PATTERNS)


def strip_artifacts(utterance: str, patterns: Sequence[str] | None = None) -> str:
    """Remove stage directions and timestamps, then collapse whitespace runs.

    Lines that become empty are dropped; the remaining lines keep their
    order and are stripped at both ends.
    """
    compiled = _DEFAULT_COMPILED if patterns is None else _compile(patterns)
    text = utterance
    for pat in compiled:
        text = pat.sub(" ", text)
    lines = (_HSPACE.sub(" ", line).strip() for line in text.splitlines())
    return "\n".join(line for line in lines if line)


def merge_consecutive(messages: Iterable[ChatMessage]) -> list[ChatMessage]:
    """Join adjacent same-role messages with a single newline."""
    merged: list[ChatMessage] = []
    for msg in messages:
        if merged and merged[-1].role is msg.role:
            merged[-1] = ChatMessage(msg.role, merged[-1].content + "\n" + msg.content)
        else:
            merged.append(msg)
    return merged


def normalize_messages(messages: Iterable[ChatMessage]) -> list[ChatMessage]:
    """Merge roles, then drop a leading assistant and a trailing user message."""
    msgs = merge_consecutive(messages)
    if msgs and msgs[0].role is Role.ASSISTANT:
        msgs = msgs[1:]
    if msgs and msgs[-1].role is Role.USER:
        msgs = msgs[:-1]
    return msgs


def _speaker_blocks(text: str) -> list[tuple[str, str]]:
    blocks: list[tuple[str, list[str]]] = []
    for raw in text.splitlines():
        line = _LINE_TIMESTAMP.sub("", raw, count=1) if _LINE_TIMESTAMP.match(raw) else raw
        m = _SPEAKER_LINE.match(line.strip())
        if m:
            blocks.append((m.group("name").strip(), [m.group("text") or ""]))
        elif blocks:
            blocks[-1][1].append(raw)
        # text before the first speaker label is a title/header and is ignored
    return [(name, "\n".join(parts)) for name, parts in blocks]


def parse_transcript(
    text: str,
    persona: str,
    *,
    dialog_id: str = "transcript",
    tags: Iterable[Tag | str] = (),
    artifact_patterns: Sequence[str] | None = None,
) -> Dialog:
    """Parse a speaker-labelled transcript into a normalized :class:`Dialog`.

    Speaker names are compared to ``persona`` case-insensitively and exactly.

    Raises:
        EmptyTranscript: no speaker line was found.
        UnknownPersona: ``persona`` never speaks.
        RejectedDialog: nothing is left after boundary trimming.
    """
    if not persona or not persona.strip():
        raise ValueError("persona name must be non-empty")
    blocks = _speaker_blocks(text)
    if not blocks:
        raise EmptyTranscript(f"{dialog_id}: no 'Speaker: text' lines found")
    key = persona.strip().casefold()
    if not any(name.casefold() == key for name, _ in blocks):
        raise UnknownPersona(f"{dialog_id}: persona {persona!r} never speaks")

    messages = []
    for name, body in blocks:
        content = strip_artifacts(body, artifact_patterns)
        if not content:
            continue
        role = Role.ASSISTANT if name.casefold() == key else Role.USER
        messages.append(ChatMessage(role, content))

    msgs = normalize_messages(messages)
    if not msgs:
        raise RejectedDialog(f"{dialog_id}: no user/assistant exchange survives normalization")
    return Dialog(dialog_id, tuple(msgs), frozenset(Tag(t) for t in tags))


def default_tags(
    filename: str, *, style_prefix: str = "_", fact_substring: str = "2023"
) -> frozenset[Tag]:
    """Tag a transcript by filename convention.

    Underscore-prefixed files are held out for style testing, files whose
    name contains ``fact_substring`` feed the fact questionnaire, everything
    else is training data.
    """
    name = Path(filename).name
    if style_prefix and name.startswith(style_prefix):
        return frozenset({Tag.STYLE_TEST})
    if fact_substring and fact_substring in name:
        return frozenset({Tag.FACT_SOURCE})
    return frozenset({Tag.TRAIN})


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    persona: str
    tags: frozenset[Tag] | None = None


@dataclass(frozen=True)
class TranscriptManifest:
    """List of transcripts to load, with per-file persona and optional tags.

    JSON form::

        {"default_persona": "Ada Vance",
         "entries": [{"path": "a.txt"},
                     {"path": "b.txt", "persona": "Ada", "tags": ["train"]}]}

    Relative paths resolve against the manifest's directory. An entry may
    also be a bare path string.
    """

    entries: tuple[ManifestEntry, ...]
    default_persona: str

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | str = ".") -> TranscriptManifest:
        unknown = set(data) - {"default_persona", "entries"}
        if unknown:
            raise ValidationError(f"manifest: unknown key(s) {sorted(unknown)}")
        default_persona = data.get("default_persona", "")
        base = Path(base_dir)
        entries = []
        for raw in data.get("entries", []):
            if isinstance(raw, str):
                raw = {"path": raw}
            extra = set(raw) - {"path", "persona", "tags"}
            if extra:
                raise ValidationError(f"manifest entry: unknown key(s) {sorted(extra)}")
            path = Path(raw["path"])
            if not path.is_absolute():
                path = base / path
            if not path.is_file():
                raise ValidationError(f"manifest entry {raw['path']!r}: file not found")
            persona = raw.get("persona") or default_persona
            if not persona or not persona.strip():
                raise ValidationError(f"manifest entry {raw['path']!r}: no persona name")
            tags = raw.get("tags")
            try:
                tag_set = None if tags is None else frozenset(Tag(t) for t in tags)
            except ValueError as exc:
                raise ValidationError(f"manifest entry {raw['path']!r}: {exc}") from None
            entries.append(ManifestEntry(path, persona.strip(), tag_set))
        if not entries:
            raise ValidationError("manifest lists no transcripts")
        return cls(tuple(entries), default_persona)

    @classmethod
    def load(cls, path: Path | str) -> TranscriptManifest:
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read manifest {path}: {exc}") from None
        return cls.from_dict(data, path.parent)


def load_corpus(
    manifest: TranscriptManifest,
    *,
    style_prefix: str = "_",
    fact_substring: str = "2023",
    artifact_patterns: Sequence[str] | None = None,
) -> list[Dialog]:
    """Parse every manifest entry, in manifest order."""
    dialogs = []
    for entry in manifest.entries:
        tags = entry.tags
        if tags is None:
            tags = default_tags(
                entry.path.name, style_prefix=style_prefix, fact_substring=fact_substring
            )
        text = entry.path.read_text(encoding="utf-8")
        dialogs.append(
            parse_transcript(
                text,
                entry.persona,
                dialog_id=entry.path.stem,
                tags=tags,
                artifact_patterns=artifact_patterns,
            )
        )
    return dialogs
