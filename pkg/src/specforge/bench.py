"""Prompt-processing and token-generation throughput measurement.

Trials run strictly serially against a streamed endpoint. Generation speed
is tokens over the first-to-last-token interval; prompt-processing speed is
prompt tokens over time-to-first-token. Warmup trials never enter the
reported statistics.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import asdict, dataclass, field

from .client import (
    ChatRequest,
    ModelEndpoint,
    RequestRejected,
    complete,
    stream_complete,
)


class BenchError(RuntimeError):
    pass


@dataclass(frozen=True)
class BenchConfig:
    prompt_tokens: int = 512
    gen_tokens: int = 128
    trials: int = 5
    warmup_trials: int = 1
    gen_prompt_tokens: int = 100  # comparable-conditions input for generation runs

    def __post_init__(self):
        if self.trials < 1:
            raise BenchError("trials must be >= 1")
        if self.warmup_trials < 0:
            raise BenchError("warmup_trials must be >= 0")
        if self.prompt_tokens < 1 or self.gen_tokens < 1 or self.gen_prompt_tokens < 1:
            raise BenchError("token counts must be positive")


@dataclass
class TrialStats:
    mean: float
    sd: float
    values: list[float]
    flags: list[str] = field(default_factory=list)


def make_token_prompt(n_tokens: int) -> str:
    # "tok " is 4 bytes, so the heuristic estimate is exactly n_tokens
    return "tok " * n_tokens


def _summarize(values: list[float], flags: list[str]) -> TrialStats:
    if len(values) == 1:
        flags = flags + ["single_trial"]
        return TrialStats(mean=values[0], sd=0.0, values=values, flags=flags)
    return TrialStats(
        mean=statistics.mean(values), sd=statistics.stdev(values), values=values, flags=flags
    )


def _gen_request(cfg: BenchConfig) -> ChatRequest:
    return ChatRequest(
        messages=({"role": "user", "content": make_token_prompt(cfg.gen_prompt_tokens)},),
        temperature=0.0,
        max_output_tokens=cfg.gen_tokens,
    )


def bench_generation(endpoint: ModelEndpoint, cfg: BenchConfig) -> TrialStats:
    """Generation tok/s over post-warmup trials.

    Falls back to whole-request timing when the server refuses streaming,
    flagged "includes prompt phase".
    """
    request = _gen_request(cfg)
    flags: list[str] = []
    values: list[float] = []
    for trial in range(cfg.warmup_trials + cfg.trials):
        try:
            result = stream_complete(endpoint, request)
        except RequestRejected:
            response = complete(endpoint, request)
            rate = response.completion_tokens / max(response.latency_s, 1e-9)
            if "includes prompt phase" not in flags:
                flags.append("includes prompt phase")
            if response.estimated and "estimated_tokens" not in flags:
                flags.append("estimated_tokens")
            if trial >= cfg.warmup_trials:
                values.append(rate)
            continue
        n_tokens = result.completion_tokens
        if result.estimated and "estimated_tokens" not in flags:
            flags.append("estimated_tokens")
        if result.t_first is None or result.t_last is None or result.t_last <= result.t_first:
            if "degenerate_timing" not in flags:
                flags.append("degenerate_timing")
            gen_time = max((result.t_last or 0.0) - result.t_request, 1e-9)
        else:
            gen_time = result.t_last - result.t_first
        if trial >= cfg.warmup_trials:
            values.append(n_tokens / gen_time)
    return _summarize(values, flags)


def bench_prompt_processing(endpoint: ModelEndpoint, cfg: BenchConfig) -> TrialStats:
    """Prompt tok/s = prompt tokens / time to first generated token."""
    request = ChatRequest(
        messages=({"role": "user", "content": make_token_prompt(cfg.prompt_tokens)},),
        temperature=0.0,
        max_output_tokens=1,
    )
    flags: list[str] = []
    values: list[float] = []
    for trial in range(cfg.warmup_trials + cfg.trials):
        try:
            result = stream_complete(endpoint, request)
        except RequestRejected:
            response = complete(endpoint, request)
            rate = response.prompt_tokens / max(response.latency_s, 1e-9)
            if "includes generation phase" not in flags:
                flags.append("includes generation phase")
            if response.estimated and "estimated_prompt_tokens" not in flags:
                flags.append("estimated_prompt_tokens")
            if trial >= cfg.warmup_trials:
                values.append(rate)
            continue
        if result.t_first is None:
            raise BenchError("server streamed no tokens; cannot time prompt processing")
        if result.estimated and "estimated_prompt_tokens" not in flags:
            flags.append("estimated_prompt_tokens")
        ttft = max(result.t_first - result.t_request, 1e-9)
        if trial >= cfg.warmup_trials:
            values.append(result.prompt_tokens / ttft)
    return _summarize(values, flags)


@dataclass
class ThroughputReport:
    server_id: str
    hardware_label: str
    prompt: TrialStats
    generation: TrialStats
    config: BenchConfig

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"

    def text_table(self) -> str:
        header = ("Model", "Hardware", "Prompt tok/s", "Gen tok/s")
        row = (
            self.server_id,
            self.hardware_label,
            f"{self.prompt.mean:,.1f} ± {self.prompt.sd:,.1f}",
            f"{self.generation.mean:,.1f} ± {self.generation.sd:,.1f}",
        )
        widths = [max(len(header[i]), len(row[i])) for i in range(4)]
        lines = [
            "  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip(),
            "  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip(),
        ]
        footnotes = sorted(set(self.prompt.flags + self.generation.flags))
        if footnotes:
            lines.append("flags: " + ", ".join(footnotes))
        return "\n".join(lines)


def run_bench(endpoint: ModelEndpoint, cfg: BenchConfig, hardware_label: str = "") -> ThroughputReport:
    """Both benchmarks, serially, on an otherwise idle endpoint."""
    prompt_stats = bench_prompt_processing(endpoint, cfg)
    gen_stats = bench_generation(endpoint, cfg)
    return ThroughputReport(
        server_id=f"{endpoint.model_name} @ {endpoint.base_url}",
        hardware_label=hardware_label,
        prompt=prompt_stats,
        generation=gen_stats,
        config=cfg,
    )
