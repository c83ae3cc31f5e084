"""Q&A evaluation with per-sample epoch repetition and LLM-judge grading.

Candidates answer each question with no system prompt; the judge grades the
submission against the gold-answer criterion and must end its reply with
``GRADE: C``, ``GRADE: P``, or ``GRADE: I`` (partial credit: C=1, P=0.5,
I=0). Every transcript is persisted so a run can be re-scored offline.
"""

from __future__ import annotations

import hashlib
import json
import re
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

from .client import ChatRequest, ModelEndpoint

GRADE_SCORES = {"C": 1.0, "P": 0.5, "I": 0.0}
_GRADE_RE = re.compile(r"GRADE:\s*([CPI])\b")
_GRADE_RE_LENIENT = re.compile(r"GRADE:\s*([CPI])\b", re.IGNORECASE)

#: Default epoch counts for the four in-house task names.
DEFAULT_TASK_EPOCHS = {"combat-arms": 3, "combat-medic": 2, "cyber": 3, "mil-bench-5k": 1}

METADATA_KEYS = ("category", "difficulty", "reference")
REDUCTIONS = ("mean", "median", "max")


class TaskFormatError(ValueError):
    pass


class GradeParseError(ValueError):
    pass


def default_judge_prompt() -> str:
    text = resources.files("specforge.prompts").joinpath("judge_default.txt").read_text("utf-8")
    return text.rstrip("\n")


@dataclass(frozen=True)
class EvalSample:
    question: str
    answer: str  # the grading criterion
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EvalTask:
    name: str
    samples: tuple[EvalSample, ...]
    epochs: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise TaskFormatError("epochs must be >= 1")


@dataclass(frozen=True)
class Grade:
    letter: str
    score: float
    judge_raw: str
    ungraded: bool = False


@dataclass(frozen=True)
class ScoredSample:
    sample_index: int
    epoch: int
    seed: int
    candidate_output: str
    grade: Grade
    errored: bool = False


@dataclass
class EvalRunConfig:
    reasoning_effort: str = "medium"
    epochs: int = 1
    reduction: str = "mean"
    seed_base: int = 0
    concurrency: int = 4
    temperature: float | None = None  # None: 1.0 when epochs > 1 else 0.0
    max_output_tokens: int = 1024
    judge_max_output_tokens: int = 1024
    judge_prompt: str = ""
    lenient_grades: bool = False

    def __post_init__(self):
        if not self.judge_prompt:
            self.judge_prompt = default_judge_prompt()
        if self.reduction not in REDUCTIONS:
            raise ValueError(f"reduction must be one of {REDUCTIONS}")

    def effective_temperature(self) -> float:
        if self.temperature is not None:
            return self.temperature
        return 1.0 if self.epochs > 1 else 0.0


@dataclass
class EvalRun:
    task_name: str
    candidate_model: str
    judge_model: str
    reasoning_effort: str
    epochs: int
    reduction: str
    samples: list[ScoredSample]
    reduced_scores: list[float]
    config_hash: str
    created_at: str

    @property
    def accuracy(self) -> float:
        return sum(self.reduced_scores) / len(self.reduced_scores)

    @property
    def errored_fraction(self) -> float:
        if not self.samples:
            return 0.0
        return sum(1 for s in self.samples if s.errored) / len(self.samples)

    @property
    def valid_for_stats(self) -> bool:
        # above 2% errored samples the score distribution is not trustworthy
        return self.errored_fraction <= 0.02


def load_task(
    path: str | Path,
    epochs_override: int | None = None,
    name: str | None = None,
) -> EvalTask:
    """Load a task from JSONL of {"question", "answer", <metadata>}.

    Missing metadata fields become None; a missing question or answer is
    fatal and names the offending line. Default epochs come from
    DEFAULT_TASK_EPOCHS when the task name is known, else 1.
    """
    path = Path(path)
    task_name = name or path.stem
    samples: list[EvalSample] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except ValueError as exc:
                raise TaskFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            for fld in ("question", "answer"):
                if fld not in obj or not isinstance(obj[fld], str):
                    raise TaskFormatError(f"{path}:{lineno}: missing {fld!r} field")
            samples.append(
                EvalSample(
                    question=obj["question"],
                    answer=obj["answer"],
                    metadata={k: obj.get(k) for k in METADATA_KEYS},
                )
            )
    if not samples:
        raise TaskFormatError(f"{path}: task has no samples")
    epochs = epochs_override or DEFAULT_TASK_EPOCHS.get(task_name, 1)
    return EvalTask(name=task_name, samples=tuple(samples), epochs=epochs)


def parse_grade(judge_text: str, lenient: bool = False) -> str:
    """Letter from the last 'GRADE: <L>' occurrence (reasoning comes first).

    Strict mode requires uppercase; raises GradeParseError on no match.
    """
    pattern = _GRADE_RE_LENIENT if lenient else _GRADE_RE
    matches = pattern.findall(judge_text)
    if not matches:
        raise GradeParseError("no GRADE: marker found")
    return matches[-1].upper()


def render_grade_line(letter: str) -> str:
    """The reply format the judge prompt instructs."""
    if letter not in GRADE_SCORES:
        raise ValueError(f"letter must be one of {tuple(GRADE_SCORES)}")
    return f"GRADE: {letter}"


def grade_from_judge_text(judge_text: str, lenient: bool = False) -> Grade:
    try:
        letter = parse_grade(judge_text, lenient=lenient)
    except GradeParseError:
        return Grade(letter="I", score=0.0, judge_raw=judge_text, ungraded=True)
    return Grade(letter=letter, score=GRADE_SCORES[letter], judge_raw=judge_text)


def candidate_request(
    sample: EvalSample,
    reasoning_effort: str,
    seed: int,
    temperature: float,
    max_output_tokens: int,
) -> ChatRequest:
    # no system or developer prompt: the question is the whole conversation
    return ChatRequest(
        messages=({"role": "user", "content": sample.question},),
        temperature=temperature,
        max_output_tokens=max_output_tokens,
        reasoning_effort=reasoning_effort,
        seed=seed,
    )


def judge_request(
    question: str,
    submission: str,
    criterion: str,
    prompt_template: str,
    max_output_tokens: int = 1024,
) -> ChatRequest:
    prompt = prompt_template.format(question=question, answer=submission, criterion=criterion)
    return ChatRequest(
        messages=({"role": "user", "content": prompt},),
        temperature=0.0,
        max_output_tokens=max_output_tokens,
    )


def generate_candidate(
    sample: EvalSample,
    endpoint: ModelEndpoint,
    reasoning_effort: str,
    seed: int,
    temperature: float = 0.0,
    max_output_tokens: int = 1024,
) -> str:
    from .client import complete

    request = candidate_request(sample, reasoning_effort, seed, temperature, max_output_tokens)
    return complete(endpoint, request).text


def judge_grade(
    question: str,
    submission: str,
    criterion: str,
    judge_endpoint: ModelEndpoint,
    prompt_template: str | None = None,
    lenient: bool = False,
    max_output_tokens: int = 1024,
) -> Grade:
    """Grade one submission; one retry on parse failure, then ungraded I."""
    from .client import complete

    template = prompt_template or default_judge_prompt()
    request = judge_request(question, submission, criterion, template, max_output_tokens)
    text = complete(judge_endpoint, request).text
    try:
        letter = parse_grade(text, lenient=lenient)
    except GradeParseError:
        text = complete(judge_endpoint, request).text
        return grade_from_judge_text(text, lenient=lenient)
    return Grade(letter=letter, score=GRADE_SCORES[letter], judge_raw=text)


def reduce_epochs(scores: Sequence[float], method: str = "mean") -> float:
    if not scores:
        raise ValueError("cannot reduce an empty score list")
    if method == "mean":
        return sum(scores) / len(scores)
    if method == "median":
        ordered = sorted(scores)
        mid = len(ordered) // 2
        if len(ordered) % 2:
            return ordered[mid]
        return (ordered[mid - 1] + ordered[mid]) / 2
    if method == "max":
        return max(scores)
    raise ValueError(f"unknown reduction {method!r}")


def _score_unit(
    task: EvalTask,
    sample_index: int,
    epoch: int,
    candidate_endpoint: ModelEndpoint,
    judge_endpoint: ModelEndpoint,
    config: EvalRunConfig,
    temperature: float,
) -> ScoredSample:
    """Candidate call then judge call for one (sample, epoch) unit."""
    from .client import ClientError, complete

    sample = task.samples[sample_index]
    seed = config.seed_base + epoch
    try:
        candidate_text = complete(
            candidate_endpoint,
            candidate_request(
                sample, config.reasoning_effort, seed, temperature, config.max_output_tokens
            ),
        ).text
    except ClientError:
        return ScoredSample(
            sample_index=sample_index,
            epoch=epoch,
            seed=seed,
            candidate_output="",
            grade=Grade(letter="I", score=0.0, judge_raw="", ungraded=True),
            errored=True,
        )
    request = judge_request(
        sample.question, candidate_text, sample.answer,
        config.judge_prompt, config.judge_max_output_tokens,
    )
    try:
        judge_text = complete(judge_endpoint, request).text
        try:
            parse_grade(judge_text, lenient=config.lenient_grades)
        except GradeParseError:
            judge_text = complete(judge_endpoint, request).text
        grade = grade_from_judge_text(judge_text, lenient=config.lenient_grades)
        errored = False
    except ClientError:
        grade = Grade(letter="I", score=0.0, judge_raw="", ungraded=True)
        errored = True
    return ScoredSample(
        sample_index=sample_index,
        epoch=epoch,
        seed=seed,
        candidate_output=candidate_text,
        grade=grade,
        errored=errored,
    )


def run_eval(
    task: EvalTask,
    candidate_endpoint: ModelEndpoint,
    judge_endpoint: ModelEndpoint,
    config: EvalRunConfig | None = None,
    on_sample: "Callable[[ScoredSample], None] | None" = None,
) -> EvalRun:
    """Evaluate every sample for ``task.epochs`` repetitions.

    Units fan out with bounded parallelism, pipelining each candidate call
    into its judge call. Candidate failures mark the sample errored with
    score 0; the run always contains exactly epochs x samples ScoredSamples.
    The judge never sees the candidate model's name. ``on_sample`` fires as
    each unit finishes (completion order), letting callers stream
    transcripts to disk.
    """
    config = config or EvalRunConfig()
    config.epochs = task.epochs
    temperature = config.effective_temperature()
    units = [(i, e) for i in range(len(task.samples)) for e in range(task.epochs)]

    scored: list[ScoredSample] = []
    with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
        futures = [
            pool.submit(
                _score_unit, task, i, epoch, candidate_endpoint, judge_endpoint, config, temperature
            )
            for i, epoch in units
        ]
        for fut in as_completed(futures):
            result = fut.result()
            scored.append(result)
            if on_sample is not None:
                on_sample(result)
    scored.sort(key=lambda s: (s.sample_index, s.epoch))
    reduced = reduce_scores(scored, len(task.samples), config.reduction)
    config_dict = {
        "task": task.name,
        "epochs": task.epochs,
        "reasoning_effort": config.reasoning_effort,
        "reduction": config.reduction,
        "seed_base": config.seed_base,
        "temperature": temperature,
        "max_output_tokens": config.max_output_tokens,
        "lenient_grades": config.lenient_grades,
        "judge_prompt_sha256": hashlib.sha256(config.judge_prompt.encode()).hexdigest(),
    }
    return EvalRun(
        task_name=task.name,
        candidate_model=candidate_endpoint.model_name,
        judge_model=judge_endpoint.model_name,
        reasoning_effort=config.reasoning_effort,
        epochs=task.epochs,
        reduction=config.reduction,
        samples=scored,
        reduced_scores=reduced,
        config_hash=hashlib.sha256(
            json.dumps(config_dict, sort_keys=True).encode()
        ).hexdigest()[:16],
        created_at=datetime.now(timezone.utc).isoformat(),
    )


def reduce_scores(
    samples: Sequence[ScoredSample], n_samples: int, method: str = "mean"
) -> list[float]:
    """Per-sample reduction across epochs, in sample order."""
    by_sample: dict[int, list[float]] = {i: [] for i in range(n_samples)}
    for s in samples:
        by_sample[s.sample_index].append(s.grade.score)
    return [reduce_epochs(by_sample[i], method) for i in range(n_samples)]


def save_run(run: EvalRun, run_dir: str | Path) -> Path:
    """Persist run.json, samples.jsonl (transcripts), and scores.jsonl."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "task_name": run.task_name,
        "candidate_model": run.candidate_model,
        "judge_model": run.judge_model,
        "reasoning_effort": run.reasoning_effort,
        "epochs": run.epochs,
        "reduction": run.reduction,
        "config_hash": run.config_hash,
        "created_at": run.created_at,
        "n_samples": len(run.reduced_scores),
        "accuracy": run.accuracy,
        "errored_fraction": run.errored_fraction,
        "valid_for_stats": run.valid_for_stats,
    }
    (run_dir / "run.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    with open(run_dir / "samples.jsonl", "w", encoding="utf-8") as fh:
        for s in run.samples:
            fh.write(json.dumps(asdict(s), ensure_ascii=False) + "\n")
    with open(run_dir / "scores.jsonl", "w", encoding="utf-8") as fh:
        for i, score in enumerate(run.reduced_scores):
            fh.write(json.dumps({"sample_index": i, "score": score}) + "\n")
    return run_dir


def load_run(run_dir: str | Path) -> EvalRun:
    run_dir = Path(run_dir)
    meta = json.loads((run_dir / "run.json").read_text(encoding="utf-8"))
    samples: list[ScoredSample] = []
    with open(run_dir / "samples.jsonl", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                row["grade"] = Grade(**row["grade"])
                samples.append(ScoredSample(**row))
    scores: list[float] = []
    with open(run_dir / "scores.jsonl", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                scores.append(json.loads(line)["score"])
    return EvalRun(
        task_name=meta["task_name"],
        candidate_model=meta["candidate_model"],
        judge_model=meta["judge_model"],
        reasoning_effort=meta["reasoning_effort"],
        epochs=meta["epochs"],
        reduction=meta["reduction"],
        samples=samples,
        reduced_scores=scores,
        config_hash=meta["config_hash"],
        created_at=meta["created_at"],
    )


def replay_scores(run: EvalRun, lenient: bool = False) -> list[float]:
    """Re-score a run from its stored judge transcripts.

    Grades are re-parsed from judge_raw, so statistics recomputed from a
    saved run reproduce the originals exactly.
    """
    n_samples = max(s.sample_index for s in run.samples) + 1
    regraded = [
        ScoredSample(
            sample_index=s.sample_index,
            epoch=s.epoch,
            seed=s.seed,
            candidate_output=s.candidate_output,
            grade=grade_from_judge_text(s.grade.judge_raw, lenient=lenient),
            errored=s.errored,
        )
        for s in run.samples
    ]
    return reduce_scores(regraded, n_samples, run.reduction)
