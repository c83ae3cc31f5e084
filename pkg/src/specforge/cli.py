"""Command-line entry point.

Subcommands: generate, decontaminate, export, eval, stats, cost,
throughput, report. Every output-producing run gets a run directory with
a manifest recording the config hash and artifact paths. Exit codes:
0 success, 1 operational error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
import threading
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from decimal import Decimal
from pathlib import Path

from . import __version__
from .bench import BenchConfig, run_bench
from .client import ClientError
from .config import AppConfig, ConfigError, load_config
from .corpus import ChunkPolicy, CorpusError, load_corpus
from .costs import CostScenario, Pricing, builtin_scenarios, scenario_csv, scenario_table
from .decontam import DecontamPolicy, decontaminate, load_eval_set
from .export import ChatTemplate, ExportError, export_jsonl
from .harness import (
    EvalRunConfig,
    TaskFormatError,
    load_run,
    load_task,
    run_eval,
    save_run,
)
from .pipeline import (
    PipelineConfig,
    PipelineError,
    PipelineInterrupted,
    PipelinePrompts,
    load_dataset_jsonl,
    run_pipeline,
    write_dataset_jsonl,
)
from .stats import DegenerateReference, InsufficientData, ReportEntry, classify, write_report

_OPERATIONAL_ERRORS = (
    ConfigError,
    CorpusError,
    PipelineError,
    ClientError,
    TaskFormatError,
    ExportError,
    DegenerateReference,
    InsufficientData,
    FileNotFoundError,
    NotADirectoryError,
    ValueError,
    OSError,
)


@dataclass
class RunManifest:
    run_id: str
    subcommand: str
    config_hash: str
    tool_version: str
    inputs: dict
    outputs: dict
    status: str
    created_at: str

    def write(self, run_dir: Path) -> None:
        path = run_dir / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2) + "\n", encoding="utf-8")


def _new_run(runs_root: Path, subcommand: str, config_hash: str) -> tuple[Path, RunManifest]:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
    base = f"{stamp}-{subcommand}-{config_hash[:8] or 'noconfig'}"
    run_dir = runs_root / base
    n = 1
    while run_dir.exists():
        n += 1
        run_dir = runs_root / f"{base}-{n}"
    run_dir.mkdir(parents=True)
    manifest = RunManifest(
        run_id=run_dir.name,
        subcommand=subcommand,
        config_hash=config_hash,
        tool_version=__version__,
        inputs={},
        outputs={},
        status="running",
        created_at=datetime.now(timezone.utc).isoformat(),
    )
    manifest.write(run_dir)
    return run_dir, manifest


def _finish(manifest: RunManifest, run_dir: Path, status: str) -> None:
    manifest.status = status
    manifest.write(run_dir)


def _pricing_from(cfg: AppConfig | None) -> Pricing:
    if cfg is None:
        return Pricing(Decimal("1.25"), Decimal("10"))
    section = cfg.section("pricing")
    return Pricing(
        Decimal(str(section["input_usd_per_mtok"])),
        Decimal(str(section["output_usd_per_mtok"])),
    )


def _prompts_from(cfg: AppConfig) -> PipelinePrompts:
    prompts_dir = cfg.section("pipeline")["prompts_dir"]
    if not prompts_dir:
        return PipelinePrompts()
    root = Path(prompts_dir)
    kwargs = {}
    for name in ("summarize", "generate_qa", "quality_check", "fix_qa"):
        path = root / f"{name}.txt"
        if path.exists():
            kwargs[name] = path.read_text(encoding="utf-8")
    return PipelinePrompts(**kwargs)


def _cmd_generate(args) -> int:
    cfg = load_config(args.config)
    for key in ("summary_endpoint", "generator_endpoint", "qc_endpoint"):
        if not cfg.section("pipeline")[key]:
            print(f"error: pipeline.{key} is not configured", file=sys.stderr)
            return 1
    runs_root = Path(args.run_dir) if args.run_dir else Path(cfg.section("runs")["dir"])
    resume = args.resume is not None
    if resume:
        run_dir = Path(args.resume)
        if not run_dir.is_dir():
            print(f"error: resume directory {run_dir} does not exist", file=sys.stderr)
            return 1
        manifest = RunManifest(
            run_id=run_dir.name,
            subcommand="generate",
            config_hash=cfg.config_hash,
            tool_version=__version__,
            inputs={},
            outputs={},
            status="running",
            created_at=datetime.now(timezone.utc).isoformat(),
        )
    else:
        run_dir, manifest = _new_run(runs_root, "generate", cfg.config_hash)
    corpus_cfg = cfg.section("corpus")
    chunk_cfg = cfg.section("chunking")
    pipe_cfg = cfg.section("pipeline")
    load = load_corpus(corpus_cfg["root"], corpus_cfg["include"])
    load.write_report(run_dir / "load_report.jsonl")
    pconf = PipelineConfig(
        summary_endpoint=cfg.endpoint(pipe_cfg["summary_endpoint"]),
        generator_endpoint=cfg.endpoint(pipe_cfg["generator_endpoint"]),
        qc_endpoint=cfg.endpoint(pipe_cfg["qc_endpoint"]),
        chunk_policy=ChunkPolicy(
            max_chars=chunk_cfg["max_chars"],
            overlap_chars=chunk_cfg["overlap_chars"],
            split_boundary=chunk_cfg["split_boundary"],
        ),
        prompts=_prompts_from(cfg),
        n_pairs=pipe_cfg["n_pairs"],
        concurrency=pipe_cfg["concurrency"],
        temperature=pipe_cfg["temperature"],
        qc_temperature=pipe_cfg["qc_temperature"],
        max_output_tokens=pipe_cfg["max_output_tokens"],
        qc_max_output_tokens=pipe_cfg["qc_max_output_tokens"],
        summary_input_max_chars=pipe_cfg["summary_input_max_chars"],
        checkpoint_dir=run_dir / "checkpoints",
    )
    manifest.inputs = {"corpus_root": corpus_cfg["root"], "config": str(args.config)}
    stop = threading.Event()
    previous_handler = None
    try:
        previous_handler = signal.signal(signal.SIGINT, lambda *_: stop.set())
    except ValueError:
        pass  # not the main thread (e.g. under a test harness)
    try:
        records, report = run_pipeline(load.documents, pconf, should_stop=stop.is_set)
    except PipelineInterrupted:
        _finish(manifest, run_dir, "failed")
        print(f"interrupted; checkpoints flushed under {run_dir}", file=sys.stderr)
        return 1
    finally:
        if previous_handler is not None:
            signal.signal(signal.SIGINT, previous_handler)
    dataset_path = run_dir / "dataset.jsonl"
    write_dataset_jsonl(records, dataset_path)
    (run_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    manifest.outputs = {
        "dataset": str(dataset_path),
        "report": str(run_dir / "report.json"),
        "load_report": str(run_dir / "load_report.jsonl"),
    }
    _finish(manifest, run_dir, "complete")
    print(
        f"{report.records_out} records from {report.documents} documents "
        f"(pass={report.n_pass} fixed={report.fix_success} fail={report.n_fail}) -> {dataset_path}"
    )
    return 0


def _cmd_decontaminate(args) -> int:
    cfg = load_config(args.config) if args.config else None
    if cfg is not None:
        section = cfg.section("decontamination")
        policy = DecontamPolicy(
            fuzzy_threshold=section["fuzzy_threshold"],
            normalize=tuple(section["normalize"]),
            action=section["action"],
        )
    else:
        policy = DecontamPolicy()
    if args.report_only:
        policy = DecontamPolicy(
            fuzzy_threshold=policy.fuzzy_threshold,
            normalize=policy.normalize,
            action="report_only",
        )
    train = load_dataset_jsonl(args.train)
    eval_sets = {}
    for item in args.eval_set:
        name, _, path = item.partition("=")
        if not path:
            print(f"error: --eval-set expects NAME=PATH, got {item!r}", file=sys.stderr)
            return 1
        eval_sets[name] = load_eval_set(path)
    runs_root = Path(args.out_dir) if args.out_dir else Path("runs")
    run_dir, manifest = _new_run(runs_root, "decontaminate", cfg.config_hash if cfg else "")
    cleaned, report = decontaminate(train, eval_sets, policy)
    cleaned_path = run_dir / "train_cleaned.jsonl"
    if cleaned:
        write_dataset_jsonl(cleaned, cleaned_path)
    else:
        cleaned_path.write_text("")
    report.write_hits_jsonl(run_dir / "hits.jsonl")
    manifest.inputs = {"train": str(args.train), "eval_sets": {k: len(v) for k, v in eval_sets.items()}}
    manifest.outputs = {"cleaned": str(cleaned_path), "hits": str(run_dir / "hits.jsonl")}
    _finish(manifest, run_dir, "complete")
    print(
        f"{report.n_train_before} -> {report.n_train_after} records "
        f"({len(report.removed_record_ids)} removed, {len(report.hits)} hits) -> {cleaned_path}"
    )
    return 0


def _cmd_export(args) -> int:
    records = load_dataset_jsonl(args.records)
    template = ChatTemplate(name=args.template)
    manifest = export_jsonl(records, template, args.out)
    print(f"{manifest['count']} records -> {args.out} (sha256 {manifest['sha256'][:12]})")
    return 0


def _cmd_eval(args) -> int:
    cfg = load_config(args.config)
    section = cfg.section("eval")
    for key in ("candidate_endpoint", "judge_endpoint"):
        if not section[key]:
            print(f"error: eval.{key} is not configured", file=sys.stderr)
            return 1
    epochs_override = args.epochs or (section["epochs"] or None)
    task = load_task(args.task, epochs_override=epochs_override, name=args.name)
    run_config = EvalRunConfig(
        reasoning_effort=args.reasoning_effort or section["reasoning_effort"],
        epochs=task.epochs,
        reduction=section["reduction"],
        seed_base=section["seed_base"],
        concurrency=section["concurrency"],
        temperature=None if section["temperature"] < 0 else section["temperature"],
        max_output_tokens=section["max_output_tokens"],
        lenient_grades=section["lenient_grades"],
    )
    runs_root = Path(args.out_dir) if args.out_dir else Path(cfg.section("runs")["dir"])
    run_dir, manifest = _new_run(runs_root, "eval", cfg.config_hash)
    # transcripts stream to disk (flushed per sample) so Ctrl-C loses nothing
    partial_path = run_dir / "samples.partial.jsonl"
    with open(partial_path, "w", encoding="utf-8") as partial:

        def flush_sample(sample):
            partial.write(json.dumps(asdict(sample), ensure_ascii=False) + "\n")
            partial.flush()

        try:
            run = run_eval(
                task,
                cfg.endpoint(section["candidate_endpoint"]),
                cfg.endpoint(section["judge_endpoint"]),
                run_config,
                on_sample=flush_sample,
            )
        except KeyboardInterrupt:
            _finish(manifest, run_dir, "failed")
            print(f"interrupted; partial transcripts flushed to {partial_path}", file=sys.stderr)
            return 1
    save_run(run, run_dir)
    partial_path.unlink()
    manifest.inputs = {"task": str(args.task), "epochs": task.epochs}
    manifest.outputs = {"run": str(run_dir)}
    _finish(manifest, run_dir, "complete")
    print(
        f"task {task.name}: accuracy {run.accuracy:.4f} over {len(run.reduced_scores)} samples "
        f"x {task.epochs} epochs ({run.errored_fraction:.1%} errored) -> {run_dir}"
    )
    return 0


def _comparison_entries(candidate_dirs, reference_dir, alpha):
    reference = load_run(reference_dir)
    entries = []
    for cand_dir in candidate_dirs:
        candidate = load_run(cand_dir)
        for run, label in ((candidate, "candidate"), (reference, "reference")):
            if not run.valid_for_stats:
                print(
                    f"warning: {label} run {run.task_name}/{run.candidate_model} has "
                    f"{run.errored_fraction:.1%} errored samples; stats may be unreliable",
                    file=sys.stderr,
                )
        stats = classify(candidate.reduced_scores, reference.reduced_scores, alpha=alpha)
        entries.append(
            ReportEntry(
                task=candidate.task_name,
                candidate=candidate.candidate_model,
                reference=reference.candidate_model,
                reasoning_effort=candidate.reasoning_effort,
                stats=stats,
            )
        )
    return entries


def _print_comparison(entries) -> None:
    header = (
        "task",
        "candidate",
        "reference",
        "effort",
        "acc_c",
        "acc_r",
        "rel_err%",
        "±",
        "p",
        "verdict",
    )
    rows = [header]
    for e in entries:
        s = e.stats
        rows.append(
            (
                e.task,
                e.candidate,
                e.reference,
                e.reasoning_effort,
                f"{s.candidate_accuracy:.4f}",
                f"{s.reference_accuracy:.4f}",
                f"{s.relative_error_pct:+.2f}",
                f"{s.rel_se_pct:.2f}",
                f"{s.p_value:.4f}",
                s.verdict,
            )
        )
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    for row in rows:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())


def _cmd_stats(args) -> int:
    entries = _comparison_entries([args.candidate], args.reference, args.alpha)
    _print_comparison(entries)
    if args.out_dir:
        paths = write_report(entries, args.out_dir)
        print(f"report written to {paths['json'].parent}")
    return 0


def _cmd_report(args) -> int:
    entries = _comparison_entries(args.candidate, args.reference, args.alpha)
    out_dir = Path(args.out_dir) if args.out_dir else Path("runs") / "report"
    paths = write_report(entries, out_dir)
    _print_comparison(entries)
    print(f"report written to {out_dir} ({', '.join(p.name for p in paths.values())})")
    return 0


def _cmd_cost(args) -> int:
    cfg = load_config(args.config) if args.config else None
    pricing = _pricing_from(cfg)
    scenarios = None
    if not args.builtin and cfg is not None:
        section_rows = cfg.section("cost")["scenarios"]
        if section_rows:
            scenarios = [
                CostScenario(
                    name=row["name"],
                    kind=row["kind"],
                    monthly_usd=Decimal(str(row.get("monthly_usd", 0))),
                    input_tokens=row.get("input_tokens", 0),
                    output_tokens=row.get("output_tokens", 0),
                    events_per_workday=Decimal(str(row.get("events_per_workday", 0))),
                    workdays_per_year=row.get("workdays_per_year", 250),
                    calls_per_event=row.get("calls_per_event", 1),
                    assumptions=row.get("assumptions", ""),
                )
                for row in section_rows
            ]
    scenarios = scenarios or builtin_scenarios()
    print(scenario_table(scenarios, pricing))
    if args.csv:
        Path(args.csv).write_text(scenario_csv(scenarios, pricing), encoding="utf-8")
        print(f"csv written to {args.csv}")
    return 0


def _cmd_throughput(args) -> int:
    cfg = load_config(args.config)
    section = cfg.section("bench")
    if not section["endpoint"]:
        print("error: bench.endpoint is not configured", file=sys.stderr)
        return 1
    bench_cfg = BenchConfig(
        prompt_tokens=section["prompt_tokens"],
        gen_tokens=section["gen_tokens"],
        trials=section["trials"],
        warmup_trials=section["warmup_trials"],
    )
    runs_root = Path(args.out_dir) if args.out_dir else Path(cfg.section("runs")["dir"])
    run_dir, manifest = _new_run(runs_root, "throughput", cfg.config_hash)
    report = run_bench(cfg.endpoint(section["endpoint"]), bench_cfg, section["hardware_label"])
    (run_dir / "throughput.json").write_text(report.to_json(), encoding="utf-8")
    manifest.outputs = {"report": str(run_dir / "throughput.json")}
    _finish(manifest, run_dir, "complete")
    print(report.text_table())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specforge",
        description="Instruction-tuning dataset generation, decontamination, "
        "LLM-judge evaluation, and cost/throughput analysis.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("generate", help="run the three-stage QA pipeline over a corpus")
    p.add_argument("--config", required=True)
    p.add_argument("--run-dir", help="runs root (default from config)")
    p.add_argument("--resume", help="existing run directory to resume")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("decontaminate", help="remove train records overlapping eval sets")
    p.add_argument("--train", required=True)
    p.add_argument("--eval-set", action="append", default=[], metavar="NAME=PATH", required=True)
    p.add_argument("--config")
    p.add_argument("--out-dir")
    p.add_argument("--report-only", action="store_true")
    p.set_defaults(func=_cmd_decontaminate)

    p = sub.add_parser("export", help="render a dataset with a chat template")
    p.add_argument("--records", required=True)
    p.add_argument("--template", choices=("alpaca", "role_json"), default="alpaca")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("eval", help="evaluate a candidate model on a JSONL task")
    p.add_argument("--config", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--name", help="task name override (default: file stem)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--reasoning-effort", choices=("low", "medium", "high", "none"))
    p.add_argument("--out-dir")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("stats", help="compare a candidate eval run against a reference")
    p.add_argument("--candidate", required=True, help="candidate run directory")
    p.add_argument("--reference", required=True, help="reference run directory")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out-dir")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("cost", help="annual cloud-cost scenarios")
    p.add_argument("--builtin", action="store_true", help="use the five built-in scenarios")
    p.add_argument("--config")
    p.add_argument("--csv", help="also write CSV to this path")
    p.set_defaults(func=_cmd_cost)

    p = sub.add_parser("throughput", help="benchmark a local server's token throughput")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir")
    p.set_defaults(func=_cmd_throughput)

    p = sub.add_parser("report", help="render comparison tables and SVG charts from eval runs")
    p.add_argument("--reference", required=True)
    p.add_argument("--candidate", action="append", default=[], required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out-dir")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 1
    except _OPERATIONAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
