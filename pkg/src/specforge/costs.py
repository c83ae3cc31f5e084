"""Annual cloud-inference cost model.

Costs are computed in exact decimal arithmetic so fleet-scale products
do not accumulate float drift; rounding to whole dollars happens only
at display time (round half up).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

MINUTES_PER_YEAR = 60 * 24 * 365  # per-minute scenarios assume a 365-day year

_KINDS = ("flat_monthly", "per_interaction", "per_minute")


class ScenarioError(ValueError):
    """Raised for an ill-formed CostScenario."""


@dataclass(frozen=True)
class Pricing:
    """Per-million-token rates in USD."""

    input_usd_per_mtok: Decimal
    output_usd_per_mtok: Decimal

    def __post_init__(self):
        object.__setattr__(self, "input_usd_per_mtok", Decimal(str(self.input_usd_per_mtok)))
        object.__setattr__(self, "output_usd_per_mtok", Decimal(str(self.output_usd_per_mtok)))
        if self.input_usd_per_mtok < 0 or self.output_usd_per_mtok < 0:
            raise ScenarioError("pricing rates must be >= 0")

    @property
    def input_usd_per_token(self) -> Decimal:
        return self.input_usd_per_mtok / Decimal(1_000_000)

    @property
    def output_usd_per_token(self) -> Decimal:
        return self.output_usd_per_mtok / Decimal(1_000_000)


#: Default rates used for all token-based scenarios.
DEFAULT_PRICING = Pricing(Decimal("1.25"), Decimal("10"))


@dataclass(frozen=True)
class CostScenario:
    """One parameterized usage pattern.

    ``kind`` selects the formula; fields irrelevant to the kind are ignored.
    ``calls_per_event`` and ``input_breakdown`` are informational annotations.
    """

    name: str
    kind: str
    monthly_usd: Decimal = Decimal(0)
    input_tokens: int = 0
    output_tokens: int = 0
    events_per_workday: Decimal = Decimal(0)
    workdays_per_year: int = 250
    calls_per_event: int = 1
    assumptions: str = ""
    input_breakdown: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "monthly_usd", Decimal(str(self.monthly_usd)))
        object.__setattr__(self, "events_per_workday", Decimal(str(self.events_per_workday)))
        if self.kind not in _KINDS:
            raise ScenarioError(f"unknown scenario kind {self.kind!r} (expected one of {_KINDS})")
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ScenarioError("token counts must be >= 0")
        if self.monthly_usd < 0:
            raise ScenarioError("monthly_usd must be >= 0")
        if self.events_per_workday < 0:
            raise ScenarioError("events_per_workday must be >= 0")
        if self.workdays_per_year < 0:
            raise ScenarioError("workdays_per_year must be >= 0")
        if self.input_breakdown and sum(self.input_breakdown.values()) != self.input_tokens:
            raise ScenarioError("input_breakdown must sum to input_tokens")


def annual_cost(scenario: CostScenario, pricing: Pricing = DEFAULT_PRICING) -> Decimal:
    """Annual USD cost per user (unrounded).

    flat_monthly: 12 x monthly rate. per_interaction: per-event token cost
    x events/workday x workdays/year. per_minute: per-event token cost x
    525,600 minutes/year.
    """
    if scenario.kind == "flat_monthly":
        return Decimal(12) * scenario.monthly_usd
    per_event = (
        Decimal(scenario.input_tokens) * pricing.input_usd_per_token
        + Decimal(scenario.output_tokens) * pricing.output_usd_per_token
    )
    if scenario.kind == "per_interaction":
        return per_event * scenario.events_per_workday * Decimal(scenario.workdays_per_year)
    return per_event * Decimal(MINUTES_PER_YEAR)


def fleet_cost(scenario: CostScenario, pricing: Pricing, n_users: int) -> Decimal:
    """Annual cost for ``n_users`` users, from the unrounded per-user figure.

    For per_minute scenarios ``n_users`` counts deployed monitors.
    """
    if n_users < 0:
        raise ScenarioError("n_users must be >= 0")
    return annual_cost(scenario, pricing) * Decimal(n_users)


def round_dollars(amount: Decimal) -> int:
    """Round half up to whole dollars, the display convention."""
    return int(amount.quantize(Decimal("1"), rounding=ROUND_HALF_UP))


def builtin_scenarios() -> list[CostScenario]:
    """The five built-in cloud usage scenarios."""
    return [
        CostScenario(
            name="Web interface flat rate (message/token limits)",
            kind="flat_monthly",
            monthly_usd=Decimal(20),
            assumptions="$20/month",
        ),
        CostScenario(
            name="Web interface flat rate (no limits)",
            kind="flat_monthly",
            monthly_usd=Decimal(200),
            assumptions="$200/month",
        ),
        CostScenario(
            name="Token-based Q&A",
            kind="per_interaction",
            input_tokens=10_890,
            output_tokens=2_625,
            events_per_workday=Decimal(25),
            workdays_per_year=250,
            assumptions="2k RAG, 1k system prompt",
            input_breakdown={"rag": 2_000, "system_prompt": 1_000, "conversation_context": 7_890},
        ),
        CostScenario(
            name="Agentic",
            kind="per_interaction",
            input_tokens=627_660,
            output_tokens=21_910,
            events_per_workday=Decimal(25),
            workdays_per_year=250,
            calls_per_event=15,
            assumptions="15 LLM calls per user input",
        ),
        CostScenario(
            name="Proactive monitoring",
            kind="per_minute",
            input_tokens=10_000,
            output_tokens=1_500,
            assumptions="runs every minute, 24/7",
        ),
    ]


def scenario_table(
    scenarios: list[CostScenario] | None = None,
    pricing: Pricing = DEFAULT_PRICING,
) -> str:
    """Plain-text cost table, one row per scenario."""
    scenarios = builtin_scenarios() if scenarios is None else scenarios
    header = (
        "Use Case",
        "Assumptions",
        "Avg Input Tok",
        "Avg Output Tok",
        "User Inputs per Workday",
        "Annual Cost per User",
    )
    rows = [header]
    for s in scenarios:
        token_based = s.kind != "flat_monthly"
        rows.append(
            (
                s.name,
                s.assumptions,
                f"{s.input_tokens:,}" if token_based else "-",
                f"{s.output_tokens:,}" if token_based else "-",
                f"{s.events_per_workday:,}" if s.kind == "per_interaction" else "-",
                f"${round_dollars(annual_cost(s, pricing)):,}",
            )
        )
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines)


def scenario_csv(
    scenarios: list[CostScenario] | None = None,
    pricing: Pricing = DEFAULT_PRICING,
) -> str:
    """CSV mirror of :func:`scenario_table`, with the unrounded cost added."""
    scenarios = builtin_scenarios() if scenarios is None else scenarios
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "use_case",
            "assumptions",
            "avg_input_tok",
            "avg_output_tok",
            "user_inputs_per_workday",
            "annual_cost_per_user_usd",
            "annual_cost_per_user_usd_unrounded",
        ]
    )
    for s in scenarios:
        cost = annual_cost(s, pricing)
        writer.writerow(
            [
                s.name,
                s.assumptions,
                s.input_tokens if s.kind != "flat_monthly" else "",
                s.output_tokens if s.kind != "flat_monthly" else "",
                s.events_per_workday if s.kind == "per_interaction" else "",
                round_dollars(cost),
                str(cost),
            ]
        )
    return buf.getvalue()
