"""Judgements to numbers: verdict tallies, TP/FP/FN and P/R/F1, judge noise,
noise-calibrated significance, and round-robin ranking with a transitivity audit.

Significance rule: a pair has a winner iff

    |b_wins - a_wins| / (a_wins + b_wins + equals)  >  noise_rate * z(confidence)

where ``noise_rate`` is the fraction of verdicts that change when the same
judging run is repeated, and ``z`` is the two-sided standard normal quantile.
"""

from __future__ import annotations

import itertools
from collections.abc import Hashable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from statistics import NormalDist

import networkx as nx

from .errors import ValidationError
from .judge import FactJudgement, JudgeRun, Ordering, StyleJudgement, StyleVerdict

__all__ = [
    "F1Comparison",
    "FactCounts",
    "IncompleteJudgements",
    "KeyMismatch",
    "Metrics",
    "MissingPair",
    "NoiseEstimate",
    "PairOutcome",
    "PairScore",
    "SignificanceVerdict",
    "TournamentResult",
    "Z_VALUES",
    "aggregate_style",
    "counts_from_extractions",
    "estimate_noise",
    "fact_invalids",
    "f1_diff",
    "noise_from_counts",
    "noise_from_tallies",
    "prf1",
    "significance",
    "style_outcomes",
    "tally_difference",
    "tournament",
    "verdict_map",
    "z_value",
]

Z_VALUES = {0.90: 1.645, 0.95: 1.96, 0.99: 2.576}


class IncompleteJudgements(ValidationError):
    pass


class KeyMismatch(ValidationError):
    pass


class MissingPair(ValidationError):
    pass


def z_value(confidence: float) -> float:
    """Two-sided critical value; tabulated for 0.90/0.95/0.99, exact otherwise."""
    if not 0 < confidence < 1:
        raise ValueError(f"confidence must be in (0, 1), got {confidence}")
    for level, z in Z_VALUES.items():
        if abs(confidence - level) < 1e-12:
            return z
    return NormalDist().inv_cdf(0.5 + confidence / 2)


# style ---------------------------------------------------------------------


@dataclass(frozen=True)
class PairScore:
    """Verdict tally for ``model_a`` vs ``model_b``; credits follow models, not positions.

    ``n_samples`` counts judged items per ordering (summed over combined
    runs), so the four counts add up to ``2 * n_samples``.
    """

    model_a: str
    model_b: str
    a_wins: int
    b_wins: int
    equals: int = 0
    invalids: int = 0
    n_samples: int | None = None

    def __post_init__(self) -> None:
        counts = (self.a_wins, self.b_wins, self.equals, self.invalids)
        if any(c < 0 for c in counts):
            raise ValueError("counts must be non-negative")
        judged = sum(counts)
        if self.n_samples is None:
            if judged % 2:
                raise ValueError(f"{judged} judgements cannot cover two orderings")
            object.__setattr__(self, "n_samples", judged // 2)
        elif judged != 2 * self.n_samples:
            raise ValueError(f"counts sum to {judged}, expected 2 x {self.n_samples}")

    @property
    def total(self) -> int:
        """Valid comparisons: wins plus ties."""
        return self.a_wins + self.b_wins + self.equals

    @property
    def win_b(self) -> int:
        return self.b_wins - self.a_wins

    @property
    def win_b_fraction(self) -> float:
        return self.win_b / self.total if self.total else 0.0

    def swapped(self) -> PairScore:
        return PairScore(self.model_b, self.model_a, self.b_wins, self.a_wins, self.equals, self.invalids, self.n_samples)

    def __add__(self, other: PairScore) -> PairScore:
        if (self.model_a, self.model_b) != (other.model_a, other.model_b):
            if (self.model_a, self.model_b) == (other.model_b, other.model_a):
                other = other.swapped()
            else:
                raise ValueError("cannot add scores of different model pairs")
        return PairScore(
            self.model_a,
            self.model_b,
            self.a_wins + other.a_wins,
            self.b_wins + other.b_wins,
            self.equals + other.equals,
            self.invalids + other.invalids,
            self.n_samples + other.n_samples,
        )


def aggregate_style(
    judgements: JudgeRun | Iterable[StyleJudgement],
    model_x: str | None = None,
    model_y: str | None = None,
    *,
    sample_ids: Iterable[str] | None = None,
) -> PairScore:
    """Tally style judgements into a :class:`PairScore` for ``model_x`` vs ``model_y``.

    Raises:
        IncompleteJudgements: some (sample, ordering) is missing or doubled.
    """
    if isinstance(judgements, JudgeRun):
        model_x = model_x or judgements.model_x
        model_y = model_y or judgements.model_y
        judgements = judgements.judgements
    if model_x is None or model_y is None:
        raise ValueError("model names are required")
    seen: dict[str, set[Ordering]] = {}
    x = y = eq = inv = 0
    for j in judgements:
        orders = seen.setdefault(j.sample_id, set())
        if j.ordering in orders:
            raise IncompleteJudgements(f"sample {j.sample_id} judged twice in ordering {j.ordering.value}")
        orders.add(j.ordering)
        if j.verdict is None:
            inv += 1
        elif j.verdict is StyleVerdict.EQUAL:
            eq += 1
        elif (j.verdict is StyleVerdict.A) == (j.ordering is Ordering.AB):
            x += 1
        else:
            y += 1
    expected = set(sample_ids) if sample_ids is not None else set(seen)
    for sid in sorted(expected):
        missing = {Ordering.AB, Ordering.BA} - seen.get(sid, set())
        if missing:
            raise IncompleteJudgements(
                f"sample {sid} lacks ordering {', '.join(sorted(o.value for o in missing))}"
            )
    if set(seen) - expected:
        raise IncompleteJudgements("judgements include samples outside the expected set")
    return PairScore(model_x, model_y, x, y, eq, inv, len(expected))


# facts ---------------------------------------------------------------------


@dataclass(frozen=True)
class FactCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("counts must be non-negative")

    @property
    def original_total(self) -> int:
        return self.tp + self.fn

    def __add__(self, other: FactCounts) -> FactCounts:
        return FactCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def prf1(counts: FactCounts) -> Metrics:
    """Precision, recall and F1; every 0/0 is taken as 0."""
    p = _ratio(counts.tp, counts.tp + counts.fp)
    r = _ratio(counts.tp, counts.tp + counts.fn)
    f1 = _ratio(2 * p * r, p + r)
    return Metrics(p, r, f1)


def counts_from_extractions(extractions: JudgeRun | Iterable) -> tuple[FactCounts, FactCounts]:
    """Sum TP/FP/FN per model over all valid extractions.

    Items are :class:`FactJudgement` or ``(FactExtraction, Ordering)`` pairs.
    For each side TP = matched, FP = extras, FN = originals not matched.
    """
    if isinstance(extractions, JudgeRun):
        extractions = extractions.judgements
    x = y = FactCounts()
    for item in extractions:
        if isinstance(item, FactJudgement):
            ex, ordering = item.extraction, item.ordering
        else:
            ex, ordering = item
        if ex is None:
            continue
        n = len(ex.original_facts)
        side_a = FactCounts(len(ex.matched_a), len(ex.extra_a), n - len(ex.matched_a))
        side_b = FactCounts(len(ex.matched_b), len(ex.extra_b), n - len(ex.matched_b))
        if Ordering(ordering) is Ordering.AB:
            x, y = x + side_a, y + side_b
        else:
            x, y = x + side_b, y + side_a
    return x, y


def fact_invalids(run: JudgeRun) -> int:
    return sum(1 for j in run.judgements if j.extraction is None)


# noise ---------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseEstimate:
    differing: int
    total: int

    def __post_init__(self) -> None:
        if self.total <= 0 or not 0 <= self.differing <= self.total:
            raise ValueError(f"need 0 <= differing <= total and total > 0, got {self.differing}/{self.total}")

    @property
    def rate(self) -> float:
        return self.differing / self.total


def noise_from_counts(differing: int, total: int) -> NoiseEstimate:
    return NoiseEstimate(differing, total)


def estimate_noise(run1: Mapping[Hashable, object], run2: Mapping[Hashable, object]) -> NoiseEstimate:
    """Share of keys whose verdict differs between two runs over the same keys.

    Raises:
        KeyMismatch: the runs cover different keys.
    """
    if set(run1) != set(run2):
        only1 = len(set(run1) - set(run2))
        only2 = len(set(run2) - set(run1))
        raise KeyMismatch(f"runs cover different keys ({only1} only in first, {only2} only in second)")
    differing = sum(1 for k in run1 if run1[k] != run2[k])
    return NoiseEstimate(differing, len(run1))


def verdict_map(run: JudgeRun, prefix: tuple = ()) -> dict[tuple, object]:
    """Key every judgement by ``(*prefix, sample_id, ordering)``.

    Style values are verdict letters (``None`` if invalid); fact values are
    the per-side (TP, FP, FN) tuples.
    """
    out: dict[tuple, object] = {}
    for j in run.judgements:
        key = (*prefix, j.sample_id, j.ordering.value)
        if isinstance(j, StyleJudgement):
            out[key] = j.verdict.value if j.verdict else None
        else:
            ex = j.extraction
            out[key] = None if ex is None else (
                len(ex.original_facts), len(ex.matched_a), len(ex.extra_a), len(ex.matched_b), len(ex.extra_b)
            )
    return out


def tally_difference(first: PairScore, second: PairScore) -> int:
    """Sum of absolute count differences between two runs of the same pair."""
    if first.model_a != second.model_a or first.model_b != second.model_b:
        second = second.swapped()
    return (
        abs(first.a_wins - second.a_wins)
        + abs(first.b_wins - second.b_wins)
        + abs(first.equals - second.equals)
    )


def noise_from_tallies(pairs: Iterable[tuple[PairScore, PairScore]]) -> NoiseEstimate:
    """Noise from aggregate counts alone, when per-sample verdicts are gone.

    Each flipped verdict moves two counts by one, and both runs' totals enter
    the denominator, so without cancellations this equals the per-key rate.
    """
    differing = total = 0
    for first, second in pairs:
        differing += tally_difference(first, second)
        total += first.total + second.total
    return NoiseEstimate(differing, total)


# significance ----------------------------------------------------------------


@dataclass(frozen=True)
class SignificanceVerdict:
    model_a: str
    model_b: str
    winner: str | None
    margin_fraction: float
    threshold_fraction: float
    confidence: float
    z: float

    @property
    def significant(self) -> bool:
        return self.winner is not None


def significance(score: PairScore, noise: NoiseEstimate | float, confidence: float = 0.95) -> SignificanceVerdict:
    rate = noise.rate if isinstance(noise, NoiseEstimate) else float(noise)
    if score.total <= 0:
        raise ValueError("no valid comparisons to test")
    z = z_value(confidence)
    threshold = rate * z
    margin = abs(score.b_wins - score.a_wins) / score.total
    winner = None
    if margin > threshold:
        winner = score.model_b if score.b_wins > score.a_wins else score.model_a
    return SignificanceVerdict(score.model_a, score.model_b, winner, margin, threshold, confidence, z)


@dataclass(frozen=True)
class F1Comparison:
    """Pseudo-F1 difference, meaningful only inside this one pairwise run."""

    model_x: str
    model_y: str
    f1_x: float
    f1_y: float
    winner: str | None
    threshold_fraction: float | None = None

    @property
    def diff(self) -> float:
        return abs(self.f1_x - self.f1_y)

    @property
    def diff_pp(self) -> float:
        return 100 * self.diff

    @property
    def significant(self) -> bool | None:
        if self.threshold_fraction is None:
            return None
        return self.winner is not None and self.diff > self.threshold_fraction

    @property
    def significant_winner(self) -> str | None:
        return self.winner if self.significant else None


def f1_diff(
    model_x: str,
    metrics_x: Metrics,
    model_y: str,
    metrics_y: Metrics,
    *,
    noise: NoiseEstimate | float | None = None,
    confidence: float = 0.95,
) -> F1Comparison:
    """Compare two F1 values from the same judge run.

    With ``noise`` given, the difference counts as significant only above
    ``noise_rate * z(confidence)``.
    """
    winner = None
    if metrics_x.f1 > metrics_y.f1:
        winner = model_x
    elif metrics_y.f1 > metrics_x.f1:
        winner = model_y
    threshold = None
    if noise is not None:
        rate = noise.rate if isinstance(noise, NoiseEstimate) else float(noise)
        threshold = rate * z_value(confidence)
    return F1Comparison(model_x, model_y, metrics_x.f1, metrics_y.f1, winner, threshold)


# tournament ------------------------------------------------------------------


@dataclass(frozen=True)
class PairOutcome:
    model_a: str
    model_b: str
    winner: str | None

    def __post_init__(self) -> None:
        if self.model_a == self.model_b:
            raise ValueError("a model cannot play itself")
        if self.winner is not None and self.winner not in (self.model_a, self.model_b):
            raise ValueError(f"winner {self.winner!r} is not part of the pair")


@dataclass
class TournamentResult:
    models: list[str]
    tiers: list[list[str]]
    copeland: dict[str, int]
    cycles: list[list[str]] = field(default_factory=list)
    edges: list[tuple[str, str]] = field(default_factory=list)

    @property
    def transitive(self) -> bool:
        return not self.cycles

    @property
    def ranking(self) -> list[str]:
        return [m for tier in self.tiers for m in tier]

    def to_dict(self) -> dict:
        return {
            "models": self.models,
            "tiers": self.tiers,
            "copeland": self.copeland,
            "transitive": self.transitive,
            "cycles": self.cycles,
            "method": "topological" if self.transitive else "copeland",
            "edges": [list(e) for e in self.edges],
        }


def _rotate(cycle: list[str]) -> list[str]:
    i = cycle.index(min(cycle))
    return cycle[i:] + cycle[:i]


def tournament(outcomes: Iterable[PairOutcome], models: Sequence[str] | None = None) -> TournamentResult:
    """Rank models from significant pairwise wins.

    Builds a digraph with an edge winner -> loser per significant outcome.
    Acyclic: tiers are topological generations (tier 0 is unbeaten).
    Cyclic: every elementary cycle is reported and tiers group models by
    Copeland score (wins - losses), best first.

    Raises:
        MissingPair: some unordered pair of ``models`` has no outcome.
    """
    outcomes = list(outcomes)
    if models is None:
        models = sorted({m for o in outcomes for m in (o.model_a, o.model_b)})
    models = list(models)
    by_pair = {}
    for o in outcomes:
        key = frozenset((o.model_a, o.model_b))
        if key in by_pair:
            raise ValidationError(f"duplicate outcome for {o.model_a} vs {o.model_b}")
        by_pair[key] = o
    for a, b in itertools.combinations(models, 2):
        if frozenset((a, b)) not in by_pair:
            raise MissingPair(f"no result for pair {a} vs {b}")

    graph = nx.DiGraph()
    graph.add_nodes_from(models)
    copeland = dict.fromkeys(models, 0)
    edges = []
    for o in outcomes:
        if o.winner is None:
            continue
        loser = o.model_b if o.winner == o.model_a else o.model_a
        graph.add_edge(o.winner, loser)
        edges.append((o.winner, loser))
        copeland[o.winner] += 1
        copeland[loser] -= 1
    edges.sort()

    cycles = sorted(_rotate(list(c)) for c in nx.simple_cycles(graph))
    if not cycles:
        tiers = [sorted(gen) for gen in nx.topological_generations(graph)]
    else:
        scores = sorted(set(copeland.values()), reverse=True)
        tiers = [sorted(m for m in models if copeland[m] == s) for s in scores]
    return TournamentResult(models, tiers, copeland, cycles, edges)


def style_outcomes(
    scores: Iterable[PairScore], noise: NoiseEstimate | float, confidence: float
) -> list[tuple[PairScore, SignificanceVerdict]]:
    return [(s, significance(s, noise, confidence)) for s in scores]

