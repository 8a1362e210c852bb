"""Sliding-window fragments over normalized dialogs, and their JSON forms.

A sub-dialog is one (user, assistant) message pair. For a dialog of ``M``
sub-dialogs and a window of ``N``, the window slides one sub-dialog at a time,
giving ``M - N + 1`` windows (one whole-dialog window when ``M < N``). Each
window is then head-trimmed to ``k`` sub-dialogs, ``k`` drawn uniformly from
``[1, min(N, M)]``, keeping the last ``k`` so the final answer survives.

Randomness: each dialog gets its own ``random.Random`` (MT19937) seeded with
the first 8 bytes (big-endian) of ``sha256(f"{seed}:{dialog.id}")``; the
trim length for window ``i`` is the ``i``-th ``randint(1, min(N, M))`` draw.
Results therefore do not depend on dialog order or on parallel processing.
"""

from __future__ import annotations

import hashlib
import json
import random
import warnings
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

from .corpus import ChatMessage, Dialog, Role, Tag
from .errors import ValidationError

__all__ = [
    "CorpusSplit",
    "DEFAULT_WINDOW",
    "EmptyDialog",
    "EmptySplitWarning",
    "Fragment",
    "SubDialog",
    "build_fragments",
    "dialog_rng",
    "enumerate_subdialogs",
    "parse_chat",
    "read_fragments",
    "serialize_chat",
    "split_corpus",
    "write_fragments",
]

DEFAULT_WINDOW = 4


class EmptyDialog(ValidationError):
    """A dialog without any sub-dialog cannot be fragmented."""


class EmptySplitWarning(UserWarning):
    """A split bucket ended up empty."""


@dataclass(frozen=True)
class SubDialog:
    user_msg: ChatMessage
    assistant_msg: ChatMessage

    def __post_init__(self) -> None:
        if self.user_msg.role is not Role.USER or self.assistant_msg.role is not Role.ASSISTANT:
            raise ValueError("sub-dialog must be (user, assistant)")


@dataclass(frozen=True)
class Fragment:
    source_id: str
    window_index: int
    messages: tuple[ChatMessage, ...]

    def __post_init__(self) -> None:
        msgs = tuple(self.messages)
        object.__setattr__(self, "messages", msgs)
        if self.window_index < 0:
            raise ValueError("window_index must be >= 0")
        if not msgs or len(msgs) % 2:
            raise ValueError("fragment must hold whole sub-dialogs")
        for i, m in enumerate(msgs):
            expected = Role.USER if i % 2 == 0 else Role.ASSISTANT
            if m.role is not expected:
                raise ValueError(f"fragment message {i} should be {expected.value}")

    @property
    def n_subdialogs(self) -> int:
        return len(self.messages) // 2

    def to_record(self) -> dict:
        return {
            "source_id": self.source_id,
            "window_index": self.window_index,
            "messages": [m.to_dict() for m in self.messages],
        }

    @classmethod
    def from_record(cls, data: dict) -> Fragment:
        return cls(
            data["source_id"],
            int(data["window_index"]),
            tuple(ChatMessage.from_dict(m) for m in data["messages"]),
        )


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple[Fragment, ...]
    style_test: tuple[Fragment, ...]
    fact_source: tuple[Dialog, ...]


def enumerate_subdialogs(dialog: Dialog) -> list[SubDialog]:
    msgs = dialog.messages
    return [SubDialog(msgs[i], msgs[i + 1]) for i in range(0, len(msgs) - 1, 2)]


def dialog_rng(seed: int, dialog_id: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{dialog_id}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def build_fragments(dialog: Dialog, window: int = DEFAULT_WINDOW, seed: int = 0) -> list[Fragment]:
    """Cut ``dialog`` into head-trimmed sliding-window fragments.

    Raises:
        EmptyDialog: the dialog has no sub-dialogs.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    subs = enumerate_subdialogs(dialog)
    m = len(subs)
    if m == 0:
        raise EmptyDialog(f"dialog {dialog.id!r} has no sub-dialogs")
    width = min(window, m)
    rng = dialog_rng(seed, dialog.id)
    fragments = []
    for start in range(m - width + 1):
        k = rng.randint(1, width)
        kept = subs[start + width - k : start + width]
        msgs = tuple(msg for sd in kept for msg in (sd.user_msg, sd.assistant_msg))
        fragments.append(Fragment(dialog.id, start, msgs))
    return fragments


def serialize_chat(fragment: Fragment | Sequence[ChatMessage]) -> str:
    """Chat-template JSON array: ``[{"role": ..., "content": ...}, ...]``."""
    msgs = fragment.messages if isinstance(fragment, Fragment) else fragment
    return json.dumps([m.to_dict() for m in msgs], ensure_ascii=False, separators=(",", ":"))


def parse_chat(text: str) -> tuple[ChatMessage, ...]:
    data = json.loads(text)
    if not isinstance(data, list):
        raise ValidationError("chat JSON must be an array of messages")
    return tuple(ChatMessage.from_dict(m) for m in data)


def _bucket(dialog: Dialog) -> Tag | None:
    tags = dialog.tags
    if Tag.TRAIN in tags and Tag.STYLE_TEST in tags:
        raise ValidationError(f"dialog {dialog.id!r} is tagged both train and style_test")
    for tag in (Tag.STYLE_TEST, Tag.TRAIN):
        if tag in tags:
            return tag
    return None


def split_corpus(
    dialogs: Iterable[Dialog],
    window: int = DEFAULT_WINDOW,
    seed: int = 0,
    *,
    style_test_limit: int | None = None,
) -> CorpusSplit:
    """Route dialogs by tag: train and style_test are fragmented, fact_source passes through.

    ``style_test_limit`` caps the number of style-test fragments (first ones
    in dialog order). Empty buckets raise :class:`EmptySplitWarning`.
    """
    train: list[Fragment] = []
    style: list[Fragment] = []
    facts: list[Dialog] = []
    for dialog in dialogs:
        bucket = _bucket(dialog)
        if bucket is Tag.TRAIN:
            train.extend(build_fragments(dialog, window, seed))
        elif bucket is Tag.STYLE_TEST:
            style.extend(build_fragments(dialog, window, seed))
        if Tag.FACT_SOURCE in dialog.tags:
            facts.append(dialog)
    if style_test_limit is not None:
        style = style[:style_test_limit]
    for name, bucket_items in (("train", train), ("style_test", style), ("fact_source", facts)):
        if not bucket_items:
            warnings.warn(f"split bucket {name!r} is empty", EmptySplitWarning, stacklevel=2)
    return CorpusSplit(tuple(train), tuple(style), tuple(facts))


def write_fragments(path: Path | str, fragments: Iterable[Fragment]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for frag in fragments:
            fh.write(json.dumps(frag.to_record(), ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")


def read_fragments(path: Path | str) -> list[Fragment]:
    with open(path, encoding="utf-8") as fh:
        return [Fragment.from_record(json.loads(line)) for line in fh if line.strip()]
