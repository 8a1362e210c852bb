"""Build and render tournament reports as Markdown, CSV and JSON.

Reports are pure functions of the persisted judgement files and the noise
estimate, so regenerating them from the same inputs is byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .judge import PROMPT_VERSIONS, JudgeRun
from .scoreboard import (
    FactCounts,
    NoiseEstimate,
    PairOutcome,
    PairScore,
    aggregate_style,
    counts_from_extractions,
    f1_diff,
    fact_invalids,
    prf1,
    significance,
    tally_difference,
    tournament,
)


@dataclass
class PairRuns:
    """All judge runs of one pair, keyed by run label (``""`` is the primary run)."""

    model_x: str
    model_y: str
    runs: dict[str, JudgeRun]

    def labels(self) -> list[str]:
        return sorted(self.runs)

    @property
    def judge_models(self) -> list[str]:
        return sorted({r.judge_model for r in self.runs.values()})


def _pct(x: float) -> str:
    return f"{100 * x:.2f}%"


def _noise_dict(noise: NoiseEstimate | None) -> dict | None:
    if noise is None:
        return None
    return {"differing": noise.differing, "total": noise.total, "rate": round(noise.rate, 10)}


def style_report(pairs: Sequence[PairRuns], noise: NoiseEstimate | None, confidence: float) -> dict:
    rows = []
    outcomes = []
    for p in pairs:
        run_scores = [(label, aggregate_style(p.runs[label], p.model_x, p.model_y)) for label in p.labels()]
        combined = run_scores[0][1]
        for _, s in run_scores[1:]:
            combined = combined + s
        row: dict = {
            "model_a": p.model_x,
            "model_b": p.model_y,
            "runs": [
                {"label": label or "primary", "a": s.a_wins, "b": s.b_wins, "equal": s.equals, "invalid": s.invalids}
                for label, s in run_scores
            ],
            "a_wins": combined.a_wins,
            "b_wins": combined.b_wins,
            "equals": combined.equals,
            "invalids": combined.invalids,
            "n_samples": combined.n_samples,
            "win_b": combined.win_b,
            "win_b_fraction": round(combined.win_b_fraction, 10),
            "judge_models": p.judge_models,
        }
        if len(run_scores) >= 2:
            row["run_difference"] = tally_difference(run_scores[0][1], run_scores[1][1])
        winner = None
        if noise is not None and combined.total:
            sig = significance(combined, noise, confidence)
            row["margin_fraction"] = round(sig.margin_fraction, 10)
            row["threshold_fraction"] = round(sig.threshold_fraction, 10)
            winner = sig.winner
        row["winner"] = winner
        rows.append(row)
        outcomes.append(PairOutcome(p.model_x, p.model_y, winner))
    result = tournament(outcomes) if noise is not None else None
    return {
        "task": "style",
        "tool_version": __version__,
        "prompt_version": PROMPT_VERSIONS["style"],
        "judge_models": sorted({m for p in pairs for m in p.judge_models}),
        "confidence": confidence,
        "noise": _noise_dict(noise),
        "pairs": rows,
        "tournament": result.to_dict() if result else None,
    }


def facts_report(pairs: Sequence[PairRuns], noise: NoiseEstimate | None, confidence: float) -> dict:
    rows = []
    outcomes = []
    for p in pairs:
        cx = cy = FactCounts()
        invalid = 0
        for label in p.labels():
            x, y = counts_from_extractions(p.runs[label])
            cx, cy = cx + x, cy + y
            invalid += fact_invalids(p.runs[label])
        mx, my = prf1(cx), prf1(cy)
        cmp = f1_diff(p.model_x, mx, p.model_y, my, noise=noise, confidence=confidence)
        winner = cmp.significant_winner if noise is not None else cmp.winner
        rows.append(
            {
                "model_a": p.model_x,
                "model_b": p.model_y,
                "runs": [label or "primary" for label in p.labels()],
                "counts_a": {"tp": cx.tp, "fp": cx.fp, "fn": cx.fn},
                "counts_b": {"tp": cy.tp, "fp": cy.fp, "fn": cy.fn},
                "metrics_a": {"precision": round(mx.precision, 10), "recall": round(mx.recall, 10), "f1": round(mx.f1, 10)},
                "metrics_b": {"precision": round(my.precision, 10), "recall": round(my.recall, 10), "f1": round(my.f1, 10)},
                "invalids": invalid,
                "f1_diff": round(cmp.diff, 10),
                "f1_leader": cmp.winner,
                "threshold_fraction": None if cmp.threshold_fraction is None else round(cmp.threshold_fraction, 10),
                "winner": winner,
                "judge_models": p.judge_models,
            }
        )
        outcomes.append(PairOutcome(p.model_x, p.model_y, winner))
    return {
        "task": "facts",
        "tool_version": __version__,
        "prompt_version": PROMPT_VERSIONS["facts"],
        "judge_models": sorted({m for p in pairs for m in p.judge_models}),
        "confidence": confidence,
        "noise": _noise_dict(noise),
        "note": "pseudo-F1: comparable only within one pairwise comparison",
        "pairs": rows,
        "tournament": tournament(outcomes).to_dict() if pairs else None,
    }


# rendering -------------------------------------------------------------------


def _header(data: dict, title: str) -> list[str]:
    noise = data["noise"]
    noise_txt = "none" if noise is None else f"{noise['differing']}/{noise['total']} = {_pct(noise['rate'])}"
    return [
        f"# {title}",
        "",
        f"- prompt version: `{data['prompt_version']}`",
        f"- judge model(s): {', '.join(data['judge_models']) or 'n/a'}",
        f"- judge noise: {noise_txt}",
        f"- confidence: {data['confidence']}",
        f"- mimic-eval {data['tool_version']}",
        "",
    ]


def _table(header: Sequence[str], rows: Sequence[Sequence[object]]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(str(c) for c in r) + " |" for r in rows]
    return lines


def _tournament_md(t: dict | None) -> list[str]:
    if t is None:
        return ["## Ranking", "", "No noise estimate: significance and ranking not computed.", ""]
    lines = ["## Ranking", ""]
    method = "topological order of significant wins" if t["transitive"] else "Copeland score (wins - losses)"
    lines.append(f"Method: {method}.")
    lines.append("")
    for i, tier in enumerate(t["tiers"], 1):
        lines.append(f"{i}. {', '.join(tier)}")
    lines.append("")
    lines.append("Copeland scores: " + ", ".join(f"{m} {s:+d}" for m, s in sorted(t["copeland"].items())))
    lines.append("")
    if t["cycles"]:
        lines.append("**Transitivity violated.** Cycles:")
        lines.append("")
        lines += [f"- {' > '.join(c + c[:1])}" for c in t["cycles"]]
    else:
        lines.append("Transitivity holds: no dominance cycles.")
    lines.append("")
    return lines


def render_style_markdown(data: dict) -> str:
    lines = _header(data, "Style tournament")
    lines += ["## Raw verdicts per run", ""]
    raw_rows = [
        (r["model_a"], r["model_b"], run["label"], run["a"], run["b"], run["equal"], run["invalid"])
        for r in data["pairs"]
        for run in r["runs"]
    ]
    lines += _table(("A", "B", "run", "A wins", "B wins", "=", "invalid"), raw_rows)
    lines.append("")
    diffs = [(r["model_a"], r["model_b"], r["run_difference"]) for r in data["pairs"] if "run_difference" in r]
    if diffs:
        lines += ["## Differences between repeated runs", ""]
        lines += _table(("A", "B", "sum of absolute count differences"), diffs)
        lines.append("")
    lines += ["## Pairwise totals", ""]
    rows = []
    for r in data["pairs"]:
        thr = _pct(r["threshold_fraction"]) if "threshold_fraction" in r else "n/a"
        rows.append(
            (r["model_a"], r["model_b"], r["a_wins"], r["b_wins"], r["equals"], r["win_b"],
             _pct(r["win_b_fraction"]), thr, r["winner"] or "-")
        )
    lines += _table(("A", "B", "A", "B", "=", "WinB", "WinB %", "threshold", "winner"), rows)
    lines.append("")
    lines += _tournament_md(data["tournament"])
    return "\n".join(lines)


def render_facts_markdown(data: dict) -> str:
    lines = _header(data, "Fact memorization tournament")
    lines += [f"_{data['note']}_", "", "## Counts and metrics", ""]
    rows = []
    for r in data["pairs"]:
        for side in ("a", "b"):
            c, m = r[f"counts_{side}"], r[f"metrics_{side}"]
            rows.append(
                (r["model_a"] + " vs " + r["model_b"], r[f"model_{side}"], c["tp"], c["fp"], c["fn"],
                 _pct(m["precision"]), _pct(m["recall"]), _pct(m["f1"]))
            )
    lines += _table(("comparison", "model", "TP", "FP", "FN", "Pr", "Rec", "F1"), rows)
    lines += ["", "## F1 differences", ""]
    rows = []
    for r in data["pairs"]:
        thr = "n/a" if r["threshold_fraction"] is None else _pct(r["threshold_fraction"])
        rows.append(
            (r["model_a"], r["model_b"], _pct(r["f1_diff"]), r["f1_leader"] or "-", thr, r["winner"] or "-", r["invalids"])
        )
    lines += _table(("A", "B", "F1 diff", "higher F1", "threshold", "winner", "invalid"), rows)
    lines.append("")
    lines += _tournament_md(data["tournament"])
    return "\n".join(lines)


def render_style_csv(data: dict) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("model_a", "model_b", "a_wins", "b_wins", "equals", "invalids", "win_b", "win_b_pct",
                "threshold_pct", "winner"))
    for r in data["pairs"]:
        thr = f"{100 * r['threshold_fraction']:.2f}" if "threshold_fraction" in r else ""
        w.writerow((r["model_a"], r["model_b"], r["a_wins"], r["b_wins"], r["equals"], r["invalids"], r["win_b"],
                    f"{100 * r['win_b_fraction']:.2f}", thr, r["winner"] or ""))
    return buf.getvalue()


def render_facts_csv(data: dict) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("model_a", "model_b", "tp_a", "fp_a", "fn_a", "f1_a", "tp_b", "fp_b", "fn_b", "f1_b",
                "f1_diff_pp", "f1_leader", "threshold_pct", "winner"))
    for r in data["pairs"]:
        ca, cb = r["counts_a"], r["counts_b"]
        thr = "" if r["threshold_fraction"] is None else f"{100 * r['threshold_fraction']:.2f}"
        w.writerow((r["model_a"], r["model_b"], ca["tp"], ca["fp"], ca["fn"], f"{100 * r['metrics_a']['f1']:.2f}",
                    cb["tp"], cb["fp"], cb["fn"], f"{100 * r['metrics_b']['f1']:.2f}",
                    f"{100 * r['f1_diff']:.2f}", r["f1_leader"] or "", thr, r["winner"] or ""))
    return buf.getvalue()


def write_report(out_dir: Path | str, data: dict) -> list[Path]:
    """Write ``<stem>.md``, ``<stem>.csv`` and ``<stem>.json``; return the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if data["task"] == "style":
        stem, md, table = "style_tournament", render_style_markdown(data), render_style_csv(data)
    else:
        stem, md, table = "facts", render_facts_markdown(data), render_facts_csv(data)
    paths = [out / f"{stem}.md", out / f"{stem}.csv", out / f"{stem}.json"]
    paths[0].write_text(md, encoding="utf-8", newline="\n")
    paths[1].write_text(table, encoding="utf-8", newline="\n")
    paths[2].write_text(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8", newline="\n")
    return paths
