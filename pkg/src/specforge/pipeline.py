"""Three-stage synthetic Q&A generation.

Stage 1 summarizes each document (hierarchically for long ones), stage 2
generates question-answer pairs per chunk with the summary as context, and
stage 3 runs PASS/FIX/FAIL quality control with automated rewrites for FIX.
The final dataset keeps PASS records plus successfully fixed ones.

Stage outputs checkpoint to JSONL as they complete, so an interrupted run
resumes to a byte-identical dataset under deterministic endpoints.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .client import ChatRequest, ChatResponse, ClientError, ModelEndpoint, complete
from .corpus import Chunk, ChunkPolicy, Document, chunk_document

log = logging.getLogger(__name__)

QC_STATUSES = ("Pass", "Fix", "Fail")
_VERDICT_RE = re.compile(r"VERDICT:\s*(PASS|FIX|FAIL)")
_REASON_RE = re.compile(r"REASON:\s*(.*)")

#: Answers starting with these (after lowercasing and whitespace collapse)
#: are treated as refusals and filtered out.
REFUSAL_PREFIXES = (
    "n/a",
    "not applicable",
    "i cannot",
    "i can't",
    "i am unable",
    "i'm unable",
    "i am sorry",
    "i'm sorry",
    "as an ai",
    "no answer",
    "i don't know",
    "i do not know",
)

MIN_ANSWER_CHARS = 10  # non-whitespace characters


class PipelineError(RuntimeError):
    pass


class PipelineInterrupted(PipelineError):
    """Cooperative stop: checkpoints are flushed, the run can be resumed."""


def default_prompt(name: str) -> str:
    return resources.files("specforge.prompts").joinpath(f"{name}.txt").read_text("utf-8")


@dataclass(frozen=True)
class PipelinePrompts:
    summarize: str = ""
    generate_qa: str = ""
    quality_check: str = ""
    fix_qa: str = ""

    def __post_init__(self):
        for name in ("summarize", "generate_qa", "quality_check", "fix_qa"):
            if not getattr(self, name):
                object.__setattr__(self, name, default_prompt(name))


@dataclass(frozen=True)
class DocumentSummary:
    doc_id: str
    summary_text: str
    model_name: str


@dataclass(frozen=True)
class QaCandidate:
    candidate_id: str
    doc_id: str
    chunk_id: str
    question: str
    answer: str
    gen_model: str


@dataclass(frozen=True)
class QcVerdict:
    status: str  # Pass | Fix | Fail
    fixed_question: str | None = None
    fixed_answer: str | None = None
    reason: str = ""
    fix_failed: bool = False  # FIX verdict whose rewrite was unusable

    def __post_init__(self):
        if self.status not in QC_STATUSES:
            raise ValueError(f"invalid QC status {self.status!r}")
        has_fix = self.fixed_question is not None or self.fixed_answer is not None
        if self.status == "Fix" and not self.fix_failed:
            if self.fixed_question is None or self.fixed_answer is None:
                raise ValueError("Fix verdict requires both fixed fields")
        elif self.status != "Fix" and has_fix:
            raise ValueError("fixed fields only allowed on Fix verdicts")


@dataclass(frozen=True)
class QaRecord:
    record_id: str
    question: str
    answer: str
    doc_id: str
    chunk_id: str
    qc_status: str  # Pass | Fixed


@dataclass
class UsageCounter:
    """Thread-safe token accounting across pipeline calls."""

    prompt_tokens: int = 0
    completion_tokens: int = 0
    any_estimated: bool = False
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def add(self, response: ChatResponse) -> None:
        with self._lock:
            self.prompt_tokens += response.prompt_tokens
            self.completion_tokens += response.completion_tokens
            self.any_estimated = self.any_estimated or response.estimated


@dataclass
class PipelineReport:
    documents: int = 0
    chunks: int = 0
    candidates: int = 0
    n_pass: int = 0
    n_fix: int = 0
    n_fail: int = 0
    fix_failures: int = 0
    records_out: int = 0
    skipped_docs: int = 0
    parse_failures: int = 0
    summary_model: str = ""
    generator_model: str = ""
    qc_model: str = ""
    wall_time_s: float = 0.0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    tokens_estimated: bool = False
    resumed: bool = False

    @property
    def fix_success(self) -> int:
        return self.n_fix - self.fix_failures

    def to_json(self) -> str:
        data = asdict(self)
        data["fix_success"] = self.fix_success
        return json.dumps(data, indent=2) + "\n"


@dataclass
class PipelineConfig:
    summary_endpoint: ModelEndpoint
    generator_endpoint: ModelEndpoint
    qc_endpoint: ModelEndpoint
    chunk_policy: ChunkPolicy = field(default_factory=ChunkPolicy)
    prompts: PipelinePrompts = field(default_factory=PipelinePrompts)
    n_pairs: int = 5
    concurrency: int = 4
    temperature: float = 0.7
    qc_temperature: float = 0.0
    max_output_tokens: int = 2048
    qc_max_output_tokens: int = 1024
    summary_input_max_chars: int = 24_000
    checkpoint_dir: Path | None = None


def parse_qa_output(raw: str) -> list[dict]:
    """Extract Q:/A: blocks and drop uninformative pairs.

    A pair is dropped when the answer has fewer than 10 non-whitespace
    characters, starts with a refusal phrase, or equals the question.
    """
    pairs: list[dict] = []
    question_lines: list[str] | None = None
    answer_lines: list[str] | None = None

    def flush():
        nonlocal question_lines, answer_lines
        if question_lines is not None and answer_lines is not None:
            q = "\n".join(question_lines).strip()
            a = "\n".join(answer_lines).strip()
            if q and a:
                pairs.append({"question": q, "answer": a})
        question_lines = None
        answer_lines = None

    for line in raw.split("\n"):
        if line.startswith("Q:"):
            flush()
            question_lines = [line[2:].strip()]
            answer_lines = None
        elif line.startswith("A:") and question_lines is not None and answer_lines is None:
            answer_lines = [line[2:].strip()]
        elif not line.strip():
            if answer_lines is not None:
                flush()
        elif answer_lines is not None:
            answer_lines.append(line)
        elif question_lines is not None:
            question_lines.append(line)
    flush()
    return [p for p in pairs if _informative(p["question"], p["answer"])]


def _informative(question: str, answer: str) -> bool:
    if sum(1 for c in answer if not c.isspace()) < MIN_ANSWER_CHARS:
        return False
    lowered = " ".join(answer.lower().split())
    if any(lowered.startswith(prefix) for prefix in REFUSAL_PREFIXES):
        return False
    if question.strip() == answer.strip():
        return False
    return True


def _call(
    endpoint: ModelEndpoint,
    prompt: str,
    temperature: float,
    max_output_tokens: int,
    usage: UsageCounter | None,
) -> str:
    response = complete(
        endpoint,
        ChatRequest(
            messages=({"role": "user", "content": prompt},),
            temperature=temperature,
            max_output_tokens=max_output_tokens,
        ),
    )
    if usage is not None:
        usage.add(response)
    return response.text


def summarize_document(
    doc: Document,
    endpoint: ModelEndpoint,
    prompt: str,
    max_input_chars: int = 24_000,
    temperature: float = 0.7,
    max_output_tokens: int = 2048,
    usage: UsageCounter | None = None,
) -> DocumentSummary | None:
    """Stage 1: summarize one document; None when the model produced nothing.

    Documents over ``max_input_chars`` are summarized hierarchically: each
    part is summarized on its own, then the concatenated part summaries are
    summarized by a final call through the same template.
    """
    if len(doc.text) <= max_input_chars:
        source = doc.text
    else:
        parts_policy = ChunkPolicy(
            max_chars=max_input_chars, overlap_chars=0, split_boundary="sentence"
        )
        part_summaries = []
        for part in chunk_document(doc, parts_policy):
            text = _call(
                endpoint, prompt.format(document=part.text), temperature, max_output_tokens, usage
            )
            if not text.strip():
                text = _call(
                    endpoint,
                    prompt.format(document=part.text),
                    temperature,
                    max_output_tokens,
                    usage,
                )
            if not text.strip():
                return None
            part_summaries.append(text.strip())
        source = "\n\n".join(part_summaries)
    text = _call(endpoint, prompt.format(document=source), temperature, max_output_tokens, usage)
    if not text.strip():
        text = _call(
            endpoint, prompt.format(document=source), temperature, max_output_tokens, usage
        )
    if not text.strip():
        return None
    return DocumentSummary(doc_id=doc.doc_id, summary_text=text.strip(), model_name=endpoint.model_name)


def generate_qa(
    chunk: Chunk,
    summary: DocumentSummary,
    endpoint: ModelEndpoint,
    prompt: str,
    n_pairs: int,
    temperature: float = 0.7,
    max_output_tokens: int = 2048,
    usage: UsageCounter | None = None,
) -> list[QaCandidate]:
    """Stage 2: parsed candidates for one chunk, at most ``n_pairs``."""
    if n_pairs <= 0:
        raise ValueError("n_pairs must be positive")
    text = _call(
        endpoint,
        prompt.format(summary=summary.summary_text, chunk=chunk.text, n=n_pairs),
        temperature,
        max_output_tokens,
        usage,
    )
    pairs = parse_qa_output(text)
    if len(pairs) > n_pairs:
        log.info("chunk %s: %d pairs over the requested %d dropped",
                 chunk.chunk_id, len(pairs) - n_pairs, n_pairs)
        pairs = pairs[:n_pairs]
    return [
        QaCandidate(
            candidate_id=f"{chunk.chunk_id}/q{i}",
            doc_id=chunk.doc_id,
            chunk_id=chunk.chunk_id,
            question=p["question"],
            answer=p["answer"],
            gen_model=endpoint.model_name,
        )
        for i, p in enumerate(pairs)
    ]


def _parse_verdict(text: str) -> tuple[str, str] | None:
    match = _VERDICT_RE.search(text)
    if not match:
        return None
    reason_match = _REASON_RE.search(text)
    return match.group(1), (reason_match.group(1).strip() if reason_match else "")


def quality_check(
    candidate: QaCandidate,
    endpoint: ModelEndpoint,
    prompt: str,
    fix_prompt: str | None = None,
    temperature: float = 0.0,
    max_output_tokens: int = 1024,
    usage: UsageCounter | None = None,
) -> QcVerdict:
    """Stage 3: PASS/FIX/FAIL verdict; FIX triggers a rewrite call.

    An unparseable verdict is retried once, then treated as Fail. A rewrite
    that fails to parse (or changes nothing) is marked fix_failed.
    """
    fix_prompt = fix_prompt or default_prompt("fix_qa")
    qc_text = prompt.format(question=candidate.question, answer=candidate.answer)
    parsed = _parse_verdict(_call(endpoint, qc_text, temperature, max_output_tokens, usage))
    if parsed is None:
        parsed = _parse_verdict(_call(endpoint, qc_text, temperature, max_output_tokens, usage))
    if parsed is None:
        return QcVerdict(status="Fail", reason="unparseable verdict")
    verdict, reason = parsed
    if verdict == "PASS":
        return QcVerdict(status="Pass", reason=reason)
    if verdict == "FAIL":
        return QcVerdict(status="Fail", reason=reason)
    rewrite = _call(
        endpoint,
        fix_prompt.format(
            question=candidate.question, answer=candidate.answer, reason=reason or "unspecified"
        ),
        temperature,
        max_output_tokens,
        usage,
    )
    pairs = parse_qa_output(rewrite)
    if not pairs:
        return QcVerdict(status="Fix", reason=reason or "rewrite unparseable", fix_failed=True)
    fixed = pairs[0]
    if fixed["question"] == candidate.question and fixed["answer"] == candidate.answer:
        return QcVerdict(status="Fix", reason=reason or "rewrite unchanged", fix_failed=True)
    return QcVerdict(
        status="Fix",
        fixed_question=fixed["question"],
        fixed_answer=fixed["answer"],
        reason=reason,
    )


class _Checkpoint:
    """Append-only JSONL store per stage; every line is flushed on write."""

    def __init__(self, directory: Path | None):
        self.dir = directory
        self.summaries: dict[str, dict] = {}
        self.candidates: dict[str, list[dict]] = {}
        self.verdicts: dict[str, dict] = {}
        self._lock = threading.Lock()
        self.loaded_any = False
        if directory is not None:
            directory.mkdir(parents=True, exist_ok=True)
            self.summaries = self._load("summaries.jsonl", "doc_id")
            self.candidates = {
                row["chunk_id"]: row["candidates"]
                for row in self._load("candidates.jsonl", "chunk_id").values()
            }
            self.verdicts = self._load("verdicts.jsonl", "candidate_id")
            self.loaded_any = bool(self.summaries or self.candidates or self.verdicts)

    def _load(self, name: str, key: str) -> dict[str, dict]:
        path = self.dir / name
        out: dict[str, dict] = {}
        if path.exists():
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        row = json.loads(line)
                        out[row[key]] = row
        return out

    def _append(self, name: str, row: dict) -> None:
        if self.dir is None:
            return
        with self._lock:
            with open(self.dir / name, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
                fh.flush()

    def put_summary(self, summary: DocumentSummary) -> None:
        row = asdict(summary)
        self.summaries[summary.doc_id] = row
        self._append("summaries.jsonl", row)

    def put_candidates(self, chunk_id: str, candidates: list[QaCandidate]) -> None:
        rows = [asdict(c) for c in candidates]
        self.candidates[chunk_id] = rows
        self._append("candidates.jsonl", {"chunk_id": chunk_id, "candidates": rows})

    def put_verdict(self, candidate_id: str, verdict: QcVerdict) -> None:
        row = {"candidate_id": candidate_id, **asdict(verdict)}
        self.verdicts[candidate_id] = row
        self._append("verdicts.jsonl", row)


def record_id_for(chunk_id: str, candidate_id: str, question: str, answer: str) -> str:
    digest = hashlib.sha256(f"{chunk_id}|{candidate_id}|{question}|{answer}".encode()).hexdigest()
    return digest[:16]


def _check_stop(should_stop: Callable[[], bool] | None) -> None:
    if should_stop is not None and should_stop():
        raise PipelineInterrupted("stop requested; checkpoints flushed")


def _run_stage(
    items: Sequence,
    worker: Callable,
    concurrency: int,
    should_stop: Callable[[], bool] | None,
) -> None:
    """Fan ``worker`` out over ``items`` with bounded parallelism.

    Client errors are swallowed by workers themselves; a stop request
    cancels remaining work after in-flight items finish.
    """
    if not items:
        return
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        futures = [pool.submit(worker, item) for item in items]
        for fut in as_completed(futures):
            fut.result()
            if should_stop is not None and should_stop():
                for pending in futures:
                    pending.cancel()
                break
    _check_stop(should_stop)


def run_pipeline(
    corpus: Sequence[Document],
    config: PipelineConfig,
    should_stop: Callable[[], bool] | None = None,
) -> tuple[list[QaRecord], PipelineReport]:
    """Run all three stages over the corpus.

    Output records are canonically ordered (doc, chunk ordinal, candidate
    index), so bounded-parallel execution and checkpoint resume cannot
    change the dataset. Raises PipelineError when nothing survives QC.
    """
    started = time.perf_counter()
    usage = UsageCounter()
    ckpt = _Checkpoint(config.checkpoint_dir)
    report = PipelineReport(
        summary_model=config.summary_endpoint.model_name,
        generator_model=config.generator_endpoint.model_name,
        qc_model=config.qc_endpoint.model_name,
        resumed=ckpt.loaded_any,
    )
    _warn_shared_endpoints(config)

    docs = sorted(corpus, key=lambda d: d.doc_id)
    report.documents = len(docs)
    chunks_by_doc = {doc.doc_id: chunk_document(doc, config.chunk_policy) for doc in docs}
    report.chunks = sum(len(c) for c in chunks_by_doc.values())

    # stage 1: summaries
    skipped_docs: set[str] = set()

    def summarize_worker(doc: Document) -> None:
        try:
            summary = summarize_document(
                doc,
                config.summary_endpoint,
                config.prompts.summarize,
                max_input_chars=config.summary_input_max_chars,
                temperature=config.temperature,
                max_output_tokens=config.max_output_tokens,
                usage=usage,
            )
        except ClientError as exc:
            log.warning("summary failed for %s: %s", doc.doc_id, exc)
            summary = None
        if summary is None:
            skipped_docs.add(doc.doc_id)
        else:
            ckpt.put_summary(summary)

    todo = [doc for doc in docs if doc.doc_id not in ckpt.summaries]
    _run_stage(todo, summarize_worker, config.concurrency, should_stop)
    report.skipped_docs = len(skipped_docs)

    # stage 2: QA generation per chunk (only for summarized documents)
    def qa_worker(chunk: Chunk) -> None:
        summary_row = ckpt.summaries[chunk.doc_id]
        summary = DocumentSummary(**summary_row)
        try:
            candidates = generate_qa(
                chunk,
                summary,
                config.generator_endpoint,
                config.prompts.generate_qa,
                config.n_pairs,
                temperature=config.temperature,
                max_output_tokens=config.max_output_tokens,
                usage=usage,
            )
        except ClientError as exc:
            log.warning("qa generation failed for %s: %s", chunk.chunk_id, exc)
            candidates = []
        ckpt.put_candidates(chunk.chunk_id, candidates)

    qa_todo = [
        chunk
        for doc in docs
        if doc.doc_id in ckpt.summaries
        for chunk in chunks_by_doc[doc.doc_id]
        if chunk.chunk_id not in ckpt.candidates
    ]
    _run_stage(qa_todo, qa_worker, config.concurrency, should_stop)

    # stage 3: quality control per candidate
    all_candidates: list[QaCandidate] = []
    for doc in docs:
        for chunk in chunks_by_doc.get(doc.doc_id, []):
            for row in ckpt.candidates.get(chunk.chunk_id, []):
                all_candidates.append(QaCandidate(**row))

    def qc_worker(candidate: QaCandidate) -> None:
        try:
            verdict = quality_check(
                candidate,
                config.qc_endpoint,
                config.prompts.quality_check,
                fix_prompt=config.prompts.fix_qa,
                temperature=config.qc_temperature,
                max_output_tokens=config.qc_max_output_tokens,
                usage=usage,
            )
        except ClientError as exc:
            log.warning("qc failed for %s: %s", candidate.candidate_id, exc)
            verdict = QcVerdict(status="Fail", reason=f"qc endpoint failure: {exc}")
        ckpt.put_verdict(candidate.candidate_id, verdict)

    qc_todo = [c for c in all_candidates if c.candidate_id not in ckpt.verdicts]
    _run_stage(qc_todo, qc_worker, config.concurrency, should_stop)

    # assembly in canonical order
    records: list[QaRecord] = []
    report.candidates = len(all_candidates)
    report.parse_failures = sum(
        1
        for doc in docs
        if doc.doc_id in ckpt.summaries
        for chunk in chunks_by_doc.get(doc.doc_id, [])
        if ckpt.candidates.get(chunk.chunk_id) == []
    )
    for candidate in all_candidates:
        row = ckpt.verdicts.get(candidate.candidate_id)
        if row is None:
            continue
        row = {k: v for k, v in row.items() if k != "candidate_id"}
        verdict = QcVerdict(**row)
        if verdict.status == "Pass":
            report.n_pass += 1
            question, answer, status = candidate.question, candidate.answer, "Pass"
        elif verdict.status == "Fix":
            report.n_fix += 1
            if verdict.fix_failed:
                report.fix_failures += 1
                continue
            question, answer, status = verdict.fixed_question, verdict.fixed_answer, "Fixed"
        else:
            report.n_fail += 1
            continue
        records.append(
            QaRecord(
                record_id=record_id_for(candidate.chunk_id, candidate.candidate_id, question, answer),
                question=question,
                answer=answer,
                doc_id=candidate.doc_id,
                chunk_id=candidate.chunk_id,
                qc_status=status,
            )
        )
    report.records_out = len(records)
    report.prompt_tokens = usage.prompt_tokens
    report.completion_tokens = usage.completion_tokens
    report.tokens_estimated = usage.any_estimated
    report.wall_time_s = time.perf_counter() - started
    if not records:
        raise PipelineError("pipeline produced zero records")
    return records, report


def _warn_shared_endpoints(config: PipelineConfig) -> None:
    seen: dict[tuple[str, str], str] = {}
    for stage, ep in (
        ("summary", config.summary_endpoint),
        ("generator", config.generator_endpoint),
        ("qc", config.qc_endpoint),
    ):
        key = (ep.base_url, ep.model_name)
        if key in seen:
            log.warning(
                "stage %r shares endpoint %s/%s with stage %r; "
                "independent models per stage are recommended",
                stage, ep.base_url, ep.model_name, seen[key],
            )
        else:
            seen[key] = stage


def write_dataset_jsonl(records: Iterable[QaRecord], path: str | Path) -> None:
    """Dataset output: one record per line, UTF-8, LF line endings."""
    lines = [
        json.dumps(
            {
                "record_id": r.record_id,
                "question": r.question,
                "answer": r.answer,
                "doc_id": r.doc_id,
                "chunk_id": r.chunk_id,
                "qc_status": r.qc_status,
            },
            ensure_ascii=False,
        )
        for r in records
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_dataset_jsonl(path: str | Path) -> list[QaRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            try:
                records.append(
                    QaRecord(
                        record_id=obj["record_id"],
                        question=obj["question"],
                        answer=obj["answer"],
                        doc_id=obj.get("doc_id", ""),
                        chunk_id=obj.get("chunk_id", ""),
                        qc_status=obj.get("qc_status", "Pass"),
                    )
                )
            except KeyError as exc:
                raise ValueError(f"{path}:{lineno}: missing field {exc}") from exc
    return records
