"""``mimic-eval`` command line.

Exit status: 0 success, 1 validation failure, 2 gateway failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import warnings
from pathlib import Path

from . import __version__
from .candidates import AnswerSet, GenerationFailed, fact_prompts, generate_answers, make_style_samples, style_prompts
from .config import DEFAULT_CONFIG_NAME, ConfigError, ProjectConfig, make_gateway
from .corpus import Dialog, TranscriptManifest, load_corpus
from .errors import MimicEvalError, ValidationError
from .factqa import (
    assemble_dataset,
    dumps_review_csv,
    extract_facts,
    load_facts,
    save_facts,
    validate_dataset,
)
from .fragmenter import read_fragments, split_corpus, write_fragments
from .gateway import CompletionRequest, GatewayError, request_digest
from .judge import PROMPT_VERSIONS, JudgeRun, judge_fact_pair, judge_style_pair, raise_for_errors
from .report import PairRuns, facts_report, style_report, write_report
from .scoreboard import NoiseEstimate, estimate_noise, noise_from_counts, verdict_map

logger = logging.getLogger("mimic_eval")

TASKS = ("style", "facts")


# helpers -------------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(cfg: ProjectConfig, command: str, args: dict, inputs: list[Path], outputs: list[Path]) -> Path:
    """Record what a run read and wrote, so its tables can be audited later."""

    def rel(p: Path) -> str:
        try:
            return str(p.resolve().relative_to(cfg.base_dir))
        except ValueError:
            return str(p)

    clean_args = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(args.items()) if k != "func"}
    record = {
        "command": command,
        "args": clean_args,
        "config_sha256": cfg.digest(),
        "prompt_versions": PROMPT_VERSIONS,
        "tool_version": __version__,
        "inputs": {rel(p): _sha256(p) for p in sorted(set(inputs)) if p.is_file()},
        "outputs": {rel(p): _sha256(p) for p in sorted(set(outputs)) if p.is_file()},
    }
    key = hashlib.sha256(json.dumps(clean_args, sort_keys=True).encode()).hexdigest()[:10]
    path = cfg.path("runs") / f"{command}-{key}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
    return path


def _load_config(args) -> ProjectConfig:
    if args.config is not None:
        return ProjectConfig.load(args.config)
    default = Path.cwd() / DEFAULT_CONFIG_NAME
    if default.is_file():
        return ProjectConfig.load(default)
    return ProjectConfig(base_dir=Path.cwd().resolve())


def _gateway(cfg: ProjectConfig, args, namespace: str = "default"):
    return make_gateway(cfg, namespace=namespace, concurrency=args.concurrency)


def _answer_file(path: Path, task: str) -> Path:
    return path / f"{task}.jsonl" if path.is_dir() else path


def _judgement_path(cfg: ProjectConfig, task: str, x: str, y: str, label: str | None) -> Path:
    stem = f"{x}_vs_{y}" + (f"@{label}" if label else "")
    return cfg.path("judgements") / task / f"{stem}.jsonl"


def _pair_names(path: Path) -> tuple[str, str]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                if rec["ordering"] == "AB":
                    return rec["model_a"], rec["model_b"]
                return rec["model_b"], rec["model_a"]
    raise ValidationError(f"{path}: empty judgement file")


def _collect_pairs(cfg: ProjectConfig, task: str) -> list[PairRuns]:
    folder = cfg.path("judgements") / task
    pairs: dict[tuple[str, str], PairRuns] = {}
    for path in sorted(folder.glob("*.jsonl")) if folder.is_dir() else []:
        x, y = _pair_names(path)
        label = path.stem.split("@", 1)[1] if "@" in path.stem else ""
        key = (x, y)
        if (y, x) in pairs:
            raise ValidationError(f"pair {x} vs {y} judged in both orientations; keep one")
        pr = pairs.setdefault(key, PairRuns(x, y, {}))
        pr.runs[label] = JudgeRun.load(path, x, y)
    return [pairs[k] for k in sorted(pairs)]


def _noise_file(cfg: ProjectConfig, task: str) -> Path:
    return cfg.path("reports") / f"noise_{task}.json"


def _load_noise(cfg: ProjectConfig, task: str, rate: float | None) -> NoiseEstimate | float | None:
    if rate is not None:
        return rate
    path = _noise_file(cfg, task)
    if not path.is_file():
        return None
    data = json.loads(path.read_text(encoding="utf-8"))
    return NoiseEstimate(data["differing"], data["total"])


def _as_estimate(noise) -> NoiseEstimate | None:
    if noise is None or isinstance(noise, NoiseEstimate):
        return noise
    # an explicit rate: express it over a nominal 10^6 comparisons
    return NoiseEstimate(round(noise * 1_000_000), 1_000_000)


# commands ------------------------------------------------------------------


def cmd_prepare_chat(args, cfg: ProjectConfig) -> int:
    ds = cfg.dataset
    manifest_path = args.manifest or cfg.resolve(ds.manifest)
    manifest = TranscriptManifest.load(manifest_path)
    dialogs = load_corpus(
        manifest,
        style_prefix=ds.style_prefix,
        fact_substring=ds.fact_substring,
        artifact_patterns=ds.artifact_patterns,
    )
    window = args.window if args.window is not None else ds.window
    seed = args.seed if args.seed is not None else ds.seed
    limit = args.style_test_limit if args.style_test_limit is not None else ds.style_test_limit
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        split = split_corpus(dialogs, window, seed, style_test_limit=limit)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = args.out or cfg.path("data")
    out.mkdir(parents=True, exist_ok=True)
    write_fragments(out / "train.jsonl", split.train)
    write_fragments(out / "style_test.jsonl", split.style_test)
    fact_dir = out / "fact_source"
    fact_dir.mkdir(exist_ok=True)
    outputs = [out / "train.jsonl", out / "style_test.jsonl"]
    for d in split.fact_source:
        p = fact_dir / f"{d.id}.json"
        p.write_text(json.dumps(d.to_dict(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8", newline="\n")
        outputs.append(p)
    print(
        f"train: {len(split.train)} fragments, style_test: {len(split.style_test)} fragments, "
        f"fact_source: {len(split.fact_source)} dialogs -> {out}"
    )
    _write_manifest(cfg, "prepare-chat", vars(args), [Path(manifest_path)] + [e.path for e in manifest.entries], outputs)
    return 0


def _read_dialogs(folder: Path) -> list[Dialog]:
    if not folder.is_dir():
        raise ValidationError(f"fact source directory not found: {folder}")
    files = sorted(folder.glob("*.json"))
    if not files:
        raise ValidationError(f"no dialog JSON files in {folder}")
    return [Dialog.from_dict(json.loads(p.read_text(encoding="utf-8"))) for p in files]


def cmd_prepare_facts(args, cfg: ProjectConfig) -> int:
    source = args.source or cfg.path("data") / "fact_source"
    dialogs = _read_dialogs(source)
    out = args.out or cfg.path("data") / "facts.csv"
    model = args.model or cfg.facts.extractor
    gateway = _gateway(cfg, args)
    candidates = []
    for dialog in dialogs:
        candidates.extend(extract_facts(dialog, gateway, model, retries=cfg.facts.retries))
    ds = assemble_dataset(candidates)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_facts(out, ds.records)
    review = out.with_name(out.stem + ".review.csv")
    review.write_bytes(dumps_review_csv(candidates).encode("utf-8"))
    flagged = sum(1 for c in candidates if not c.accepted)
    print(f"{len(ds)} facts accepted, {flagged} flagged -> {out} (review file: {review})")
    print("Review the facts file by hand before judging.")
    _write_manifest(cfg, "prepare-facts", vars(args), sorted(source.glob("*.json")), [out, review])
    return 0


def cmd_generate(args, cfg: ProjectConfig) -> int:
    data = cfg.path("data")
    if args.task == "style":
        samples = make_style_samples(read_fragments(args.style_test or data / "style_test.jsonl"))
        prompts = style_prompts(samples)
        source = args.style_test or data / "style_test.jsonl"
    else:
        source = args.facts or data / "facts.csv"
        prompts = fact_prompts(load_facts(source))
    endpoint = args.endpoint or args.model
    gen = cfg.generation
    if args.dry_run:
        gateway = _gateway(cfg, args)
        cached = 0
        for p in prompts:
            req = CompletionRequest(endpoint, p.messages, temperature=gen.temperature, max_tokens=gen.max_tokens)
            cached += gateway.cache.get(request_digest(req), gateway.namespace) is not None
        print(f"generate {args.task} for {args.model}: {len(prompts)} requests planned, {cached} cached, "
              f"{len(prompts) - cached} to send")
        return 0
    gateway = _gateway(cfg, args)
    answers = generate_answers(
        prompts,
        endpoint,
        gateway,
        temperature=gen.temperature,
        max_tokens=gen.max_tokens,
        system_prompt=gen.system_prompt,
        model_name=args.model,
    )
    out = (args.out or cfg.path("answers")) / args.model / f"{args.run or args.task}.jsonl"
    answers.save(out)
    print(f"{len(answers)} answers from {args.model} -> {out} ({gateway.calls} new calls)")
    _write_manifest(cfg, "generate", vars(args), [Path(source)], [out, out.with_suffix(".meta.json")])
    return 0


def _judge(args, cfg: ProjectConfig, task: str) -> int:
    ax = AnswerSet.load(_answer_file(args.a, task))
    ay = AnswerSet.load(_answer_file(args.b, task))
    if ax.model_name == ay.model_name:
        raise ValidationError("both answer sets belong to the same model")
    judge = cfg.judge
    judge_model = args.judge_model or judge.model
    namespace = f"judge-{args.label}" if args.label else "default"
    data = cfg.path("data")
    if task == "style":
        source = args.samples or data / "style_test.jsonl"
        items = make_style_samples(read_fragments(source))
    else:
        source = args.facts or data / "facts.csv"
        items = load_facts(source)
    if args.dry_run:
        print(f"judge-{task} {ax.model_name} vs {ay.model_name}: {2 * len(items)} judge requests planned")
        return 0
    gateway = _gateway(cfg, args, namespace)
    if task == "style":
        run = judge_style_pair(items, ax, ay, gateway, judge_model=judge_model,
                               temperature=judge.temperature, retries=judge.retries)
    else:
        run = judge_fact_pair(items, ax, ay, gateway, judge_model=judge_model, temperature=judge.temperature,
                              retries=judge.retries, max_tokens=judge.fact_max_tokens)
    out = _judgement_path(cfg, task, ax.model_name, ay.model_name, args.label)
    run.save(out)
    invalid = sum(1 for j in run.judgements if not j.valid)
    print(f"{len(run.judgements)} {task} judgements ({invalid} invalid) -> {out} ({gateway.calls} new calls)")
    _write_manifest(cfg, f"judge-{task}", vars(args),
                    [Path(source), _answer_file(args.a, task), _answer_file(args.b, task)], [out])
    raise_for_errors(run)
    return 0


def cmd_judge_style(args, cfg):
    return _judge(args, cfg, "style")


def cmd_judge_facts(args, cfg):
    return _judge(args, cfg, "facts")


def cmd_noise(args, cfg: ProjectConfig) -> int:
    if (args.differing is None) != (args.total is None):
        raise ValidationError("--differing and --total go together")
    details = []
    if args.differing is not None:
        noise = noise_from_counts(args.differing, args.total)
        inputs: list[Path] = []
    else:
        run1: dict = {}
        run2: dict = {}
        inputs = []
        wanted = set(args.pairs or [])
        for pr in _collect_pairs(cfg, args.task):
            name = f"{pr.model_x}:{pr.model_y}"
            if wanted and name not in wanted:
                continue
            labels = pr.labels()
            if len(labels) < 2:
                continue
            first, second = labels[0], labels[1]
            a = verdict_map(pr.runs[first], (pr.model_x, pr.model_y))
            b = verdict_map(pr.runs[second], (pr.model_x, pr.model_y))
            pair_noise = estimate_noise(a, b)
            details.append({"pair": [pr.model_x, pr.model_y], "runs": [first or "primary", second],
                            "differing": pair_noise.differing, "total": pair_noise.total})
            run1.update(a)
            run2.update(b)
            for label in (first, second):
                inputs.append(_judgement_path(cfg, args.task, pr.model_x, pr.model_y, label or None))
        if not run1:
            raise ValidationError(f"no {args.task} pair has two judge runs; rerun judge-{args.task} with --label")
        noise = estimate_noise(run1, run2)
    out = _noise_file(cfg, args.task)
    out.parent.mkdir(parents=True, exist_ok=True)
    record = {"task": args.task, "differing": noise.differing, "total": noise.total,
              "rate": round(noise.rate, 10), "pairs": details}
    out.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
    print(f"{args.task} judge noise: {noise.differing}/{noise.total} = {100 * noise.rate:.2f}% -> {out}")
    _write_manifest(cfg, "noise", vars(args), inputs, [out])
    return 0


def _task_report(cfg: ProjectConfig, task: str, confidence: float, noise_rate: float | None) -> tuple[dict, list[Path]]:
    pairs = _collect_pairs(cfg, task)
    if not pairs:
        raise ValidationError(f"no {task} judgements under {cfg.path('judgements') / task}")
    noise = _as_estimate(_load_noise(cfg, task, noise_rate))
    if task == "style":
        if noise is None:
            raise ValidationError("no style noise estimate: run `mimic-eval noise --task style` or pass --noise-rate")
        data = style_report(pairs, noise, confidence)
    else:
        data = facts_report(pairs, noise, confidence)
    paths = write_report(cfg.path("reports"), data)
    return data, paths


def _print_ranking(data: dict) -> None:
    t = data["tournament"]
    if t is None:
        return
    label = "ranking" if t["transitive"] else "ranking (Copeland fallback, cycle detected)"
    print(f"{data['task']} {label}: " + " > ".join("{" + ", ".join(tier) + "}" for tier in t["tiers"]))
    for c in t["cycles"]:
        print("  cycle: " + " > ".join(c + c[:1]))


def cmd_tournament(args, cfg: ProjectConfig) -> int:
    confidence = args.confidence or cfg.confidence
    data, paths = _task_report(cfg, args.task, confidence, args.noise_rate)
    _print_ranking(data)
    _write_manifest(cfg, "tournament", vars(args), sorted((cfg.path("judgements") / args.task).glob("*.jsonl")), paths)
    return 0


def cmd_report(args, cfg: ProjectConfig) -> int:
    confidence = args.confidence or cfg.confidence
    written = []
    for task in TASKS:
        if not any((cfg.path("judgements") / task).glob("*.jsonl")):
            continue
        data, paths = _task_report(cfg, task, confidence, None)
        written += paths
        _print_ranking(data)
    if not written:
        raise ValidationError("nothing to report: no judgement files found")
    for p in written:
        print(f"wrote {p}")
    return 0


# parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mimic-eval", description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path, help=f"project config (default ./{DEFAULT_CONFIG_NAME})")
    parser.add_argument("--concurrency", type=int, help="max in-flight model requests")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=f"mimic-eval {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-chat", help="parse transcripts into train/style-test fragments")
    p.add_argument("--manifest", type=Path)
    p.add_argument("--window", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--style-test-limit", type=int)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_prepare_chat)

    p = sub.add_parser("prepare-facts", help="extract the fact questionnaire from fact-source dialogs")
    p.add_argument("--source", type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--model", help="extractor endpoint")
    p.set_defaults(func=cmd_prepare_facts)

    p = sub.add_parser("generate", help="collect one candidate model's answers")
    p.add_argument("--model", required=True, help="model name (answer folder); also the endpoint unless --endpoint")
    p.add_argument("--endpoint")
    p.add_argument("--task", choices=TASKS, required=True)
    p.add_argument("--out", type=Path)
    p.add_argument("--run", help="answer file stem (default: the task name)")
    p.add_argument("--style-test", type=Path)
    p.add_argument("--facts", type=Path)
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_generate)

    for task in TASKS:
        p = sub.add_parser(f"judge-{task}", help=f"pairwise {task} judging with order swap")
        p.add_argument("--a", type=Path, required=True, help="answers of model x (folder or file)")
        p.add_argument("--b", type=Path, required=True, help="answers of model y (folder or file)")
        p.add_argument("--label", help="repeat-run label; uses a separate cache namespace")
        p.add_argument("--judge-model")
        if task == "style":
            p.add_argument("--samples", type=Path)
        else:
            p.add_argument("--facts", type=Path)
        p.add_argument("--dry-run", action="store_true")
        p.set_defaults(func=cmd_judge_style if task == "style" else cmd_judge_facts)

    p = sub.add_parser("noise", help="estimate judge noise from repeated runs")
    p.add_argument("--task", choices=TASKS, default="style")
    p.add_argument("--pairs", nargs="*", help="restrict to pairs given as x:y")
    p.add_argument("--differing", type=int, help="record a known noise count instead")
    p.add_argument("--total", type=int)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("tournament", help="significance, ranking and transitivity audit")
    p.add_argument("--task", choices=TASKS, default="style")
    p.add_argument("--confidence", type=float)
    p.add_argument("--noise-rate", type=float)
    p.set_defaults(func=cmd_tournament)

    p = sub.add_parser("report", help="regenerate all reports from persisted judgements")
    p.add_argument("--confidence", type=float)
    p.set_defaults(func=cmd_report)
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        return args.func(args, cfg)
    except GenerationFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("partial answers are cached; rerun the same command to resume", file=sys.stderr)
        return 2 if any(isinstance(e, GatewayError) for e in exc.errors.values()) else 1
    except GatewayError as exc:
        print(f"error: model gateway: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 1
    except (MimicEvalError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
