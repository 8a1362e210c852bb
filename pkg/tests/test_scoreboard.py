from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from builders import style_run
from mimic_eval.judge import FactExtraction, Ordering, StyleJudgement, StyleVerdict
from mimic_eval.scoreboard import (
    FactCounts,
    IncompleteJudgements,
    KeyMismatch,
    Metrics,
    MissingPair,
    NoiseEstimate,
    PairOutcome,
    PairScore,
    aggregate_style,
    counts_from_extractions,
    estimate_noise,
    f1_diff,
    noise_from_tallies,
    prf1,
    significance,
    tally_difference,
    tournament,
    verdict_map,
    z_value,
)
from published_tables import STYLE_RUN_DIFFS, STYLE_RUNS


class TestAggregate:
    def test_base_vs_half(self):
        (r1, r2) = STYLE_RUNS[("base", "0.5")]
        s = aggregate_style(style_run("base", "0.5", *r1)) + aggregate_style(style_run("base", "0.5", *r2))
        assert (s.a_wins, s.b_wins, s.equals, s.win_b) == (290, 386, 0, 96)
        assert round(100 * s.win_b_fraction, 2) == 14.20

    def test_all_equal(self):
        s = aggregate_style(style_run("x", "y", 0, 0, 676))
        assert (s.a_wins, s.b_wins, s.equals) == (0, 0, 676)

    def test_missing_ordering(self):
        run = style_run("x", "y", 2, 2, 0)
        run.judgements.pop()
        with pytest.raises(IncompleteJudgements):
            aggregate_style(run)

    def test_expected_ids(self):
        with pytest.raises(IncompleteJudgements):
            aggregate_style(style_run("x", "y", 1, 1, 0), sample_ids=["s0000", "s0001"])

    def test_invariant(self):
        with pytest.raises(ValueError):
            PairScore("a", "b", 1, 1, 0, 0, n_samples=2)

    def test_run_differences(self):
        for pair, (r1, r2) in STYLE_RUNS.items():
            d = tally_difference(PairScore(*pair, *r1), PairScore(*pair, *r2))
            assert d == sum(STYLE_RUN_DIFFS[pair])


class TestMetrics:
    def test_table_rows(self):
        # printed values are truncated to one decimal, hence the 0.1 pp tolerance
        for counts, printed in [((98, 283, 98), (25.7, 50.0, 33.9)), ((96, 548, 100), (14.9, 48.9, 22.8))]:
            m = prf1(FactCounts(*counts))
            assert [100 * m.precision, 100 * m.recall, 100 * m.f1] == pytest.approx(printed, abs=0.1)

    def test_degenerate(self):
        assert prf1(FactCounts()) == Metrics(0.0, 0.0, 0.0)
        assert prf1(FactCounts(0, 5, 5)).f1 == 0

    @given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 500))
    def test_monotone_in_tp(self, tp, fp, fn):
        a, b = prf1(FactCounts(tp, fp, fn)), prf1(FactCounts(tp + 1, fp, fn))
        assert b.precision >= a.precision and b.recall >= a.recall and b.f1 >= a.f1 - 1e-12

    @given(st.integers(1, 500), st.integers(0, 500), st.integers(0, 500))
    def test_harmonic_mean(self, tp, fp, fn):
        m = prf1(FactCounts(tp, fp, fn))
        assert m.f1 == pytest.approx(2 * m.precision * m.recall / (m.precision + m.recall))
        assert 0 <= m.f1 <= 1


class TestCounts:
    def test_single_extraction(self):
        ex = FactExtraction(("f0", "f1", "f2", "f3"), (0, 1, 2), ("e1", "e2"), (3,), ())
        x, y = counts_from_extractions([(ex, Ordering.AB)])
        assert x == FactCounts(3, 2, 1) and y == FactCounts(1, 0, 3)
        x2, y2 = counts_from_extractions([(ex, Ordering.BA)])
        assert (x2, y2) == (y, x)

    def test_empty(self):
        assert counts_from_extractions([]) == (FactCounts(), FactCounts())


class TestNoise:
    def test_published_counts(self):
        n = NoiseEstimate(94, 6760)
        assert round(100 * n.rate, 2) == 1.39

    def test_identical_runs(self):
        run = style_run("x", "y", 5, 3, 2)
        assert estimate_noise(verdict_map(run), verdict_map(run)).rate == 0

    def test_flip_every_fiftieth(self):
        # 500 keys, 10 flipped -> 10/500 = 2.0%
        run1 = {("p", i): "A" for i in range(500)}
        run2 = {k: ("B" if k[1] % 50 == 49 else v) for k, v in run1.items()}
        n = estimate_noise(run1, run2)
        assert (n.differing, n.total) == (10, 500) and n.rate == pytest.approx(0.02)

    def test_key_mismatch(self):
        with pytest.raises(KeyMismatch):
            estimate_noise({1: "A"}, {2: "A"})

    def test_tallies_match_keyed_without_cancellation(self):
        j = [StyleJudgement(f"s{i}", o, StyleVerdict.A, "A") for i in range(50) for o in Ordering]
        flipped = [StyleJudgement(x.sample_id, x.ordering, StyleVerdict.B if x.sample_id == "s7" and x.ordering is Ordering.AB else x.verdict, "") for x in j]
        s1 = aggregate_style(j, "x", "y")
        s2 = aggregate_style(flipped, "x", "y")
        assert noise_from_tallies([(s1, s2)]) == NoiseEstimate(2, 200)
        assert estimate_noise({(x.sample_id, x.ordering): x.verdict for x in j},
                              {(x.sample_id, x.ordering): x.verdict for x in flipped}) == NoiseEstimate(1, 100)

    def test_published_tallies(self):
        pairs = [(PairScore(*p, *r1), PairScore(*p, *r2)) for p, (r1, r2) in STYLE_RUNS.items()]
        assert noise_from_tallies(pairs) == NoiseEstimate(94, 6760)


class TestSignificance:
    def test_thresholds(self):
        # the published thresholds multiply the rounded rate 1.39% by z
        s = PairScore("a", "b", 1, 1)
        assert round(100 * significance(s, 0.0139, 0.99).threshold_fraction, 2) == 3.58
        assert round(100 * significance(s, 0.0139, 0.95).threshold_fraction, 2) == 2.72
        n = NoiseEstimate(94, 6760)
        assert 100 * significance(s, n, 0.99).threshold_fraction == pytest.approx(3.58, abs=0.005)
        assert 100 * significance(s, n, 0.95).threshold_fraction == pytest.approx(2.72, abs=0.01)

    def test_verdicts(self):
        n = NoiseEstimate(94, 6760)
        assert significance(PairScore("base", "0.5", 290, 386), n).winner == "0.5"
        assert significance(PairScore("1.0", "1.5", 337, 326, 13), n).winner is None

    def test_z(self):
        assert (z_value(0.95), z_value(0.99), z_value(0.90)) == (1.96, 2.576, 1.645)
        assert z_value(0.98) == pytest.approx(2.326, abs=1e-3)

    @given(st.integers(0, 400), st.integers(0, 400), st.integers(0, 50), st.floats(0, 0.2))
    def test_relabel_and_confidence(self, a, b, eq, rate):
        if (a + b + eq) % 2 or a + b + eq == 0:
            eq += 1 if (a + b + eq) % 2 else 2
        s = PairScore("x", "y", a, b, eq)
        v = significance(s, rate, 0.95)
        w = significance(s.swapped(), rate, 0.95)
        assert v.winner == w.winner and v.margin_fraction == w.margin_fraction
        assert (s.swapped().win_b_fraction == -s.win_b_fraction)
        if significance(s, rate, 0.99).winner is not None:
            assert v.winner == significance(s, rate, 0.99).winner
        assert (v.winner is None) == (v.margin_fraction <= v.threshold_fraction)


class TestF1Diff:
    def test_base_vs_old(self):
        c = f1_diff("base", prf1(FactCounts(96, 548, 100)), "old", prf1(FactCounts(98, 283, 98)))
        assert round(c.diff_pp, 2) == 11.11 and c.winner == "old" and c.significant is None

    def test_identical(self):
        m = prf1(FactCounts(5, 5, 5))
        c = f1_diff("a", m, "b", m, noise=0.01)
        assert c.diff == 0 and c.winner is None and c.significant_winner is None

    def test_threshold(self):
        c = f1_diff("old", prf1(FactCounts(102, 243, 102)), "new_old", prf1(FactCounts(110, 261, 94)), noise=0.0139)
        assert c.winner == "new_old" and c.significant is False


class TestTournament:
    def test_acyclic(self):
        r = tournament([PairOutcome("a", "b", "a"), PairOutcome("b", "c", "b"), PairOutcome("a", "c", "a")])
        assert r.transitive and r.tiers == [["a"], ["b"], ["c"]]

    def test_cycle(self):
        r = tournament([PairOutcome("a", "b", "a"), PairOutcome("b", "c", "b"), PairOutcome("c", "a", "c")])
        assert not r.transitive and r.cycles == [["a", "b", "c"]]
        assert r.tiers == [["a", "b", "c"]] and r.to_dict()["method"] == "copeland"

    def test_missing_pair(self):
        with pytest.raises(MissingPair, match="b vs c|c vs b"):
            tournament([PairOutcome("a", "b", None), PairOutcome("a", "c", None)], models=["a", "b", "c"])

    def test_ties_share_tier(self):
        r = tournament([PairOutcome("a", "b", None), PairOutcome("a", "c", "a"), PairOutcome("b", "c", "b")])
        assert r.tiers == [["a", "b"], ["c"]]

    @given(st.lists(st.sampled_from([0, 1, 2]), min_size=10, max_size=10))
    def test_copeland_sums_to_zero(self, picks):
        import itertools

        models = ["m1", "m2", "m3", "m4", "m5"]
        outs = []
        for (a, b), p in zip(itertools.combinations(models, 2), picks):
            outs.append(PairOutcome(a, b, [None, a, b][p]))
        r = tournament(outs)
        assert sum(r.copeland.values()) == 0
        assert sorted(r.ranking) == models


def _published_outcomes(confidence):
    noise = NoiseEstimate(94, 6760)
    outs = []
    for (x, y), (r1, r2) in STYLE_RUNS.items():
        v = significance(PairScore(x, y, *r1) + PairScore(x, y, *r2), noise, confidence)
        outs.append(PairOutcome(x, y, v.winner))
    return outs


def test_published_style_ranking_at_099():
    r = tournament(_published_outcomes(0.99))
    assert r.transitive
    assert r.tiers == [["1.0", "1.5", "2.0"], ["0.5"], ["base"]]


def test_published_style_ranking_at_095():
    # 1.5 vs 2.0 differs by 3.40%, above the 2.72% threshold
    r = tournament(_published_outcomes(0.95))
    assert r.transitive
    assert r.tiers == [["1.0", "2.0"], ["1.5"], ["0.5"], ["base"]]
