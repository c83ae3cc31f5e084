"""specforge: turn document corpora into decontaminated instruction-tuning
datasets and evaluate models with an LLM-judge harness, plus cost and
throughput analysis for locally hosted inference."""

__version__ = "0.1.0"

from .bench import BenchConfig, ThroughputReport, bench_generation, bench_prompt_processing, run_bench
from .client import (
    BackoffPolicy,
    BatchItem,
    ChatRequest,
    ChatResponse,
    ClientError,
    EndpointUnavailable,
    ModelEndpoint,
    ProtocolError,
    RequestRejected,
    complete,
    estimate_tokens,
    run_batch,
    stream_complete,
)
from .corpus import (
    Chunk,
    ChunkPolicy,
    CorpusError,
    Document,
    EmptyCorpusError,
    chunk_document,
    load_corpus,
    reconstruct_text,
)
from .costs import (
    CostScenario,
    Pricing,
    annual_cost,
    builtin_scenarios,
    fleet_cost,
    round_dollars,
    scenario_table,
)
from .decontam import (
    DecontamPolicy,
    OverlapHit,
    decontaminate,
    find_overlaps,
    normalize_text,
    similarity,
)
from .export import ChatTemplate, BatchStats, batch_token_stats, export_jsonl, render_alpaca
from .harness import (
    EvalRun,
    EvalRunConfig,
    EvalSample,
    EvalTask,
    Grade,
    GradeParseError,
    ScoredSample,
    generate_candidate,
    judge_grade,
    load_run,
    load_task,
    parse_grade,
    reduce_epochs,
    replay_scores,
    run_eval,
    save_run,
)
from .mock_server import MockInferenceServer, RuleResponder
from .pipeline import (
    DocumentSummary,
    PipelineConfig,
    PipelineError,
    PipelineReport,
    QaCandidate,
    QaRecord,
    QcVerdict,
    generate_qa,
    parse_qa_output,
    quality_check,
    run_pipeline,
    summarize_document,
)
from .stats import (
    ComparisonStats,
    DegenerateReference,
    InsufficientData,
    accuracy_se,
    classify,
    p_value,
    relative_error,
)
