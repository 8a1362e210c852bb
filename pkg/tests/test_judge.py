from __future__ import annotations

import json

import pytest

from mimic_eval.candidates import AnswerSet, StyleSample, fact_sample_id
from mimic_eval.corpus import ChatMessage, Role
from mimic_eval.factqa import FactRecord
from mimic_eval.gateway import Gateway, MockBackend, TransportError
from mimic_eval.judge import (
    FACT_FIELDS,
    FactExtraction,
    InvalidExtraction,
    InvalidVerdict,
    JudgeRun,
    Ordering,
    StyleVerdict,
    build_fact_prompt,
    build_style_prompt,
    judge_fact_pair,
    judge_style_pair,
    parse_fact_extraction,
    parse_style_verdict,
    raise_for_errors,
)
from mimic_eval.errors import MimicEvalError, ValidationError
from mimic_eval.mocks import lexical_judge
from mimic_eval.scoreboard import aggregate_style, counts_from_extractions


def samples(n):
    return [StyleSample(f"s:{i:04d}", (ChatMessage(Role.USER, f"q{i}"),), f"real answer {i}") for i in range(n)]


def answers(name, ids, fn):
    return AnswerSet(name, {i: fn(i) for i in ids})


class TestStylePrompt:
    def test_blocks(self):
        p = build_style_prompt("o", "x", "y")
        assert "[real message]\no\n[/real message]" in p
        assert "[message A]\nx\n[/message A]" in p
        assert "[message B]\ny\n[/message B]" in p
        assert "which fragment is closer to the original by style?" in p

    def test_ends_with_answer_format(self):
        p = build_style_prompt("o", "x", "y")
        assert p.endswith("Examples of the answer:\n\nA\n\nor\n\nB\n\nor\n\n=")

    def test_literal_substitution(self):
        p = build_style_prompt("{message_b} {x}", "a {original}", "b}")
        assert "[real message]\n{message_b} {x}\n[/real message]" in p
        assert "[message A]\na {original}\n[/message A]" in p

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            build_style_prompt("o", " ", "y")


class TestVerdict:
    @pytest.mark.parametrize("raw,expected", [(" B\n", StyleVerdict.B), ("=", StyleVerdict.EQUAL), ("a", StyleVerdict.A)])
    def test_accepted(self, raw, expected):
        assert parse_style_verdict(raw) is expected

    @pytest.mark.parametrize("raw", ["Fragment A is better", "", "AB", "A."])
    def test_rejected(self, raw):
        with pytest.raises(InvalidVerdict):
            parse_style_verdict(raw)


class TestStylePair:
    def test_two_judgements_per_sample(self):
        ss = samples(169)
        ids = [s.sample_id for s in ss]
        run = judge_style_pair(ss, answers("x", ids, str), answers("y", ids, str), Gateway(MockBackend(lambda r: "A")))
        assert len(run.judgements) == 338
        assert {(j.ordering) for j in run.judgements} == {Ordering.AB, Ordering.BA}

    def test_always_a_is_a_tie(self):
        ss = samples(10)
        ids = [s.sample_id for s in ss]
        run = judge_style_pair(ss, answers("x", ids, str), answers("y", ids, str), Gateway(MockBackend(lambda r: "A")))
        score = aggregate_style(run)
        assert (score.a_wins, score.b_wins) == (10, 10)

    def test_relabeling_swaps_tallies(self):
        ss = samples(20)
        ids = [s.sample_id for s in ss]
        ax = answers("x", ids, lambda i: "word " * (int(i[-2:]) % 7 + 1))
        ay = answers("y", ids, lambda i: "word " * (int(i[-2:]) % 5 + 1))

        def longer(req):
            p = req.messages[0].content
            a = p.split("[message A]\n")[1].split("\n[/message A]")[0]
            b = p.split("[message B]\n")[1].split("\n[/message B]")[0]
            return "=" if len(a) == len(b) else ("A" if len(a) > len(b) else "B")

        s1 = aggregate_style(judge_style_pair(ss, ax, ay, Gateway(MockBackend(longer))))
        s2 = aggregate_style(judge_style_pair(ss, ay, ax, Gateway(MockBackend(longer))))
        assert (s1.a_wins, s1.b_wins, s1.equals) == (s2.b_wins, s2.a_wins, s2.equals)

    def test_retry_then_invalid(self):
        ss = samples(2)
        ids = [s.sample_id for s in ss]
        backend = MockBackend(lambda r: "B" if r.nonce == 2 and "real answer 0" in r.messages[0].content else "maybe")
        run = judge_style_pair(ss, answers("x", ids, str), answers("y", ids, str), Gateway(backend), retries=3)
        by = {(j.sample_id, j.ordering): j for j in run.judgements}
        assert by[("s:0000", Ordering.AB)].verdict is StyleVerdict.B
        assert by[("s:0000", Ordering.AB)].attempts == 3
        bad = by[("s:0001", Ordering.AB)]
        assert bad.verdict is None and bad.attempts == 4
        score = aggregate_style(run)
        assert score.invalids == 2 and score.n_samples == 2

    def test_prompt_holds_reference(self):
        ss = samples(1)
        backend = MockBackend(lambda r: "=")
        judge_style_pair(ss, answers("x", ["s:0000"], lambda i: "xx"), answers("y", ["s:0000"], lambda i: "yy"),
                         Gateway(backend))
        prompts = [r.messages[0].content for r in backend.requests]
        assert all("[real message]\nreal answer 0\n" in p for p in prompts)
        assert "[message A]\nxx\n" in prompts[0] or "[message A]\nxx\n" in prompts[1]

    def test_coverage_required(self):
        ss = samples(2)
        with pytest.raises(ValidationError):
            judge_style_pair(ss, answers("x", ["s:0000"], str), answers("y", ["s:0000", "s:0001"], str),
                             Gateway(MockBackend(lambda r: "A")))

    def test_gateway_error_collected(self):
        def fail(req):
            raise TransportError("down")

        ss = samples(1)
        ids = [s.sample_id for s in ss]
        run = judge_style_pair(ss, answers("x", ids, str), answers("y", ids, str), Gateway(MockBackend(fail)))
        assert len(run.errors) == 2 and not run.judgements
        with pytest.raises(MimicEvalError):
            raise_for_errors(run)


class TestFactPrompt:
    def test_field_order(self):
        p = build_fact_prompt("orig", "fa", "fb")
        positions = [p.index(f'"{f}"') for f in FACT_FIELDS]
        assert positions == sorted(positions)
        assert "[real message]\norig\n[/real message]" in p
        assert "indices" in p

    def test_parse_valid(self):
        raw = json.dumps({"original_facts": ["f1", "f2"], "matched_a": [0], "extra_a": ["g"], "matched_b": [0, 1], "extra_b": []})
        ex, warnings = parse_fact_extraction(raw)
        assert ex == FactExtraction(("f1", "f2"), (0,), ("g",), (0, 1), ())
        assert warnings == 0

    def test_sanitize(self):
        raw = json.dumps({"original_facts": ["f1", "f2"], "matched_a": [0, 0, 5], "extra_a": [], "matched_b": [], "extra_b": ["F1"]})
        ex, warnings = parse_fact_extraction(raw)
        assert ex.matched_a == (0,) and ex.extra_b == ()
        assert warnings == 3

    def test_sanitize_indices_only(self):
        raw = json.dumps({"original_facts": ["f1", "f2"], "matched_a": [0, 0, 5], "extra_a": [], "matched_b": [], "extra_b": []})
        assert parse_fact_extraction(raw)[1] == 2

    @pytest.mark.parametrize("raw", ["not json", "[]", '{"original_facts": []}', '{"original_facts": [1], "matched_a": [], "extra_a": [], "matched_b": [], "extra_b": []}'])
    def test_invalid(self, raw):
        with pytest.raises(InvalidExtraction):
            parse_fact_extraction(raw)


def fact_setup(n=3):
    recs = [FactRecord(i, f"fact {i}", "src", f"q{i}?", f"Answer {i} is here. Another point {i} too.") for i in range(1, n + 1)]
    ids = [fact_sample_id(r) for r in recs]
    return recs, ids


class TestFactPair:
    def test_two_per_fact(self):
        recs, ids = fact_setup(62)
        backend = MockBackend(lexical_judge({}, "default"))
        run = judge_fact_pair(recs, answers("x", ids, lambda i: "Answer 1 is here."), answers("y", ids, lambda i: "Nothing."), Gateway(backend))
        assert len(run.judgements) == 124 and all(j.valid for j in run.judgements)
        assert all(r.json_mode for r in backend.requests)

    def test_symmetric_mock_swaps_counts(self):
        recs, ids = fact_setup()
        ax = answers("x", ids, lambda i: f"Answer {int(i[-1])} is here. Also a made up claim.")
        ay = answers("y", ids, lambda i: "Another point 2 too.")
        judge = lexical_judge({}, "default")
        cx, cy = counts_from_extractions(judge_fact_pair(recs, ax, ay, Gateway(MockBackend(judge))))
        dx, dy = counts_from_extractions(judge_fact_pair(recs, ay, ax, Gateway(MockBackend(judge))))
        assert (cx, cy) == (dy, dx)
        assert cx.tp + cx.fn == cy.tp + cy.fn == 2 * 2 * 3

    def test_non_json_retries_then_invalid(self):
        recs, ids = fact_setup(1)
        backend = MockBackend(lambda r: "sorry")
        run = judge_fact_pair(recs, answers("x", ids, str), answers("y", ids, str), Gateway(backend), retries=3)
        assert len(backend.requests) == 8
        assert all(not j.valid and j.attempts == 4 for j in run.judgements)

    def test_save_load(self, tmp_path):
        recs, ids = fact_setup(2)
        run = judge_fact_pair(recs, answers("x", ids, lambda i: "Answer 1 is here."), answers("y", ids, lambda i: "x y z."),
                              Gateway(MockBackend(lexical_judge({}, "default"))))
        run.save(tmp_path / "r.jsonl")
        back = JudgeRun.load(tmp_path / "r.jsonl", "x", "y")
        assert back.sorted() == run.sorted()
        assert back.to_jsonl() == run.to_jsonl()
        with pytest.raises(ValidationError):
            JudgeRun.load(tmp_path / "r.jsonl", "y", "x")


def test_style_run_persisted_sorted(tmp_path):
    ss = samples(5)
    ids = [s.sample_id for s in ss]
    run = judge_style_pair(ss, answers("x", ids, str), answers("y", ids, str), Gateway(MockBackend(lambda r: "B"), concurrency=3))
    run.save(tmp_path / "s.jsonl")
    lines = [json.loads(l) for l in (tmp_path / "s.jsonl").read_text().splitlines()]
    assert [(l["sample_id"], l["ordering"]) for l in lines] == sorted((l["sample_id"], l["ordering"]) for l in lines)
    assert lines[0]["prompt_version"] == "style-v1" and lines[1]["model_a"] == "y"
    assert JudgeRun.load(tmp_path / "s.jsonl", "x", "y").to_jsonl() == run.to_jsonl()
