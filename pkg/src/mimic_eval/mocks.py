"""Offline stand-ins for candidate and judge models.

Selected in the project config with ``{"kind": "mock", "mock": <name>}``.
All of them are deterministic functions of the request (and, for judges
with ``noise`` set, of the cache namespace), so a pipeline run against them
is reproducible byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections.abc import Callable, Mapping
from pathlib import Path

from .corpus import Role
from .errors import ValidationError
from .factqa import load_facts
from .fragmenter import read_fragments
from .gateway import CompletionRequest

__all__ = ["MOCKS", "build_mock", "lexical_judge", "words"]

_WORD = re.compile(r"[\w']+")
_SENTENCE = re.compile(r"[^.!?\n]+[.!?]?")
_BLOCK = re.compile(r"\[(real message|message A|message B)\]\n(.*?)\n\[/\1\]", re.S)


def words(text: str) -> set[str]:
    return {w.lower() for w in _WORD.findall(text)}


def _overlap(a: set[str], b: set[str]) -> float:
    return len(a & b) / len(a | b) if a | b else 0.0


def _last_user(req: CompletionRequest) -> str:
    for m in reversed(req.messages):
        if m.role is Role.USER:
            return m.content
    return req.messages[-1].content


def _unit(*parts: object) -> float:
    h = hashlib.sha256("\x1f".join(map(str, parts)).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big") / 2**64


def echo(options: Mapping, namespace: str) -> Callable[[CompletionRequest], str]:
    """Repeat the last user message."""
    return _last_user


def constant(options: Mapping, namespace: str) -> Callable[[CompletionRequest], str]:
    text = options.get("text", "I don't know.")
    return lambda req: text


def recall(options: Mapping, namespace: str) -> Callable[[CompletionRequest], str]:
    """A stand-in for a fine-tuned model: answer with the remembered reply
    whose question overlaps most with the last user message.

    ``corpus``: a path or list of paths, each a fragments JSONL file or a
    facts file (question/answer columns); ``fraction``: use only that
    leading share of the question/answer pairs.
    """
    paths = options.get("corpus")
    if not paths:
        raise ValidationError("mock 'recall' needs options.corpus")
    if isinstance(paths, str):
        paths = [paths]
    pairs = []
    for path in paths:
        if Path(path).suffix in (".csv", ".json"):
            pairs += [(words(r.question), r.answer) for r in load_facts(path)]
            continue
        for frag in read_fragments(path):
            msgs = frag.messages
            for i in range(0, len(msgs), 2):
                pairs.append((words(msgs[i].content), msgs[i + 1].content))
    pairs = list(dict.fromkeys((frozenset(q), a) for q, a in pairs))
    fraction = float(options.get("fraction", 1.0))
    pairs = pairs[: max(1, round(len(pairs) * fraction))] if pairs else []
    fallback = options.get("fallback", "I don't know.")

    def fn(req: CompletionRequest) -> str:
        q = words(_last_user(req))
        best, best_score = fallback, 0.0
        for qw, answer in pairs:
            score = _overlap(q, set(qw))
            if score > best_score:
                best, best_score = answer, score
        return best

    return fn


def _blocks(prompt: str) -> dict[str, str]:
    return {name: body for name, body in _BLOCK.findall(prompt)}


def _sentences(text: str) -> list[str]:
    return [s.strip() for s in _SENTENCE.findall(text) if len(words(s)) >= 2]


def _covered(sentence: str, text_words: set[str], cutoff: float) -> bool:
    w = words(sentence)
    return bool(w) and len(w & text_words) / len(w) >= cutoff


def lexical_judge(options: Mapping, namespace: str) -> Callable[[CompletionRequest], str]:
    """Judge by word overlap with the real message.

    Style prompts: the fragment with the higher word-set Jaccard overlap
    wins, ``=`` within ``tie_margin``. Fact prompts (json_mode): sentences of
    the real message are the facts, a fact matches a fragment when at least
    ``cutoff`` of its words occur there, and fragment sentences covering no
    fact are extras. ``noise`` is the probability of perturbing a reply,
    drawn from a hash of the prompt and the cache namespace.
    """
    tie_margin = float(options.get("tie_margin", 0.02))
    cutoff = float(options.get("cutoff", 0.6))
    noise = float(options.get("noise", 0.0))

    def style(req: CompletionRequest, blocks: dict[str, str]) -> str:
        orig = words(blocks["real message"])
        sa = _overlap(orig, words(blocks["message A"]))
        sb = _overlap(orig, words(blocks["message B"]))
        verdict = "=" if abs(sa - sb) <= tie_margin else ("A" if sa > sb else "B")
        if noise and _unit(namespace, req.messages[-1].content, req.nonce) < noise:
            verdict = {"A": "B", "B": "=", "=": "A"}[verdict]
        return verdict

    def facts(req: CompletionRequest, blocks: dict[str, str]) -> str:
        originals = _sentences(blocks["real message"])
        result: dict[str, list] = {"original_facts": originals}
        for side in ("a", "b"):
            frag = blocks[f"message {side.upper()}"]
            fw = words(frag)
            matched = [i for i, s in enumerate(originals) if _covered(s, fw, cutoff)]
            if noise and matched and _unit(namespace, req.messages[-1].content, side) < noise:
                matched = matched[:-1]
            orig_words = [words(s) for s in originals]
            extras = [
                s for s in _sentences(frag)
                if not any(len(words(s) & ow) / len(words(s)) >= cutoff for ow in orig_words)
            ]
            result[f"matched_{side}"] = matched
            result[f"extra_{side}"] = extras
        ordered = {k: result[k] for k in ("original_facts", "matched_a", "extra_a", "matched_b", "extra_b")}
        return json.dumps(ordered, ensure_ascii=False)

    def fn(req: CompletionRequest) -> str:
        prompt = req.messages[-1].content
        blocks = _blocks(prompt)
        if not {"real message", "message A", "message B"} <= set(blocks):
            raise ValidationError("lexical-judge mock received a prompt without judge blocks")
        return facts(req, blocks) if req.json_mode else style(req, blocks)

    return fn


def fact_extractor(options: Mapping, namespace: str) -> Callable[[CompletionRequest], str]:
    """Turn every persona sentence of a transcript into a fact record."""
    limit = int(options.get("limit", 0)) or None

    def fn(req: CompletionRequest) -> str:
        prompt = req.messages[-1].content
        body = prompt.split("[transcript]\n", 1)[-1].rsplit("\n[/transcript]", 1)[0]
        facts = []
        question = None
        for line in body.splitlines():
            if line.startswith("[user] "):
                question = line[len("[user] "):]
            elif line.startswith("[assistant] ") and question:
                for s in _sentences(line[len("[assistant] "):]):
                    facts.append({"fact": s, "src": s, "question": question, "answer": s})
        return json.dumps({"facts": facts[:limit]}, ensure_ascii=False)

    return fn


MOCKS: dict[str, Callable[[Mapping, str], Callable[[CompletionRequest], str]]] = {
    "echo": echo,
    "constant": constant,
    "recall": recall,
    "lexical-judge": lexical_judge,
    "fact-extractor": fact_extractor,
}


def build_mock(name: str, options: Mapping, namespace: str = "default", base_dir: Path | None = None):
    try:
        factory = MOCKS[name]
    except KeyError:
        raise ValidationError(f"unknown mock {name!r}; choose from {sorted(MOCKS)}") from None
    opts = dict(options)
    if base_dir is not None and "corpus" in opts:
        paths = opts["corpus"] if isinstance(opts["corpus"], list) else [opts["corpus"]]
        resolved = [p if Path(p).is_absolute() else str(base_dir / p) for p in paths]
        opts["corpus"] = resolved if isinstance(opts["corpus"], list) else resolved[0]
    return factory(opts, namespace)
