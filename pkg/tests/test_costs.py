from decimal import Decimal

import pytest

from specforge.costs import (
    DEFAULT_PRICING,
    CostScenario,
    Pricing,
    ScenarioError,
    annual_cost,
    builtin_scenarios,
    fleet_cost,
    round_dollars,
    scenario_csv,
    scenario_table,
)


def by_name(name):
    return next(s for s in builtin_scenarios() if s.name == name)


class TestAnnualCost:
    def test_flat_rate_20_per_month(self):
        assert annual_cost(by_name("Web interface flat rate (message/token limits)")) == Decimal(240)

    def test_flat_rate_200_per_month(self):
        assert annual_cost(by_name("Web interface flat rate (no limits)")) == Decimal(2400)

    def test_token_based_qa_unrounded(self):
        cost = annual_cost(by_name("Token-based Q&A"))
        assert cost == Decimal("249.140625")
        assert round_dollars(cost) == 249

    def test_agentic_unrounded(self):
        cost = annual_cost(by_name("Agentic"))
        assert cost == Decimal("6272.96875")
        assert round_dollars(cost) == 6273

    def test_proactive_monitoring(self):
        cost = annual_cost(by_name("Proactive monitoring"))
        assert cost == Decimal("14454.00")
        assert round_dollars(cost) == 14454

    def test_zero_everything_costs_zero(self):
        s = CostScenario(name="zero", kind="per_interaction", events_per_workday=Decimal(0))
        assert annual_cost(s) == 0

    def test_flat_ignores_token_fields(self):
        a = CostScenario(name="a", kind="flat_monthly", monthly_usd=Decimal(7))
        b = CostScenario(
            name="b", kind="flat_monthly", monthly_usd=Decimal(7), input_tokens=10**9
        )
        assert annual_cost(a) == annual_cost(b)

    def test_linearity_in_tokens(self):
        base = CostScenario(
            name="x",
            kind="per_interaction",
            input_tokens=100,
            output_tokens=10,
            events_per_workday=Decimal(1),
            workdays_per_year=1,
        )
        doubled = CostScenario(
            name="x2",
            kind="per_interaction",
            input_tokens=200,
            output_tokens=20,
            events_per_workday=Decimal(1),
            workdays_per_year=1,
        )
        assert annual_cost(doubled) == 2 * annual_cost(base)

    def test_negative_inputs_rejected(self):
        with pytest.raises(ScenarioError):
            CostScenario(name="bad", kind="per_interaction", input_tokens=-1)
        with pytest.raises(ScenarioError):
            Pricing(Decimal(-1), Decimal(1))
        with pytest.raises(ScenarioError):
            CostScenario(name="bad", kind="nope")


class TestBuiltinScenarios:
    def test_five_rows(self):
        assert len(builtin_scenarios()) == 5

    def test_agentic_annotations(self):
        agentic = by_name("Agentic")
        assert agentic.calls_per_event == 15
        assert agentic.input_tokens == 627_660
        assert agentic.output_tokens == 21_910

    def test_qa_input_breakdown_sums(self):
        qa = by_name("Token-based Q&A")
        assert qa.input_breakdown == {
            "rag": 2_000,
            "system_prompt": 1_000,
            "conversation_context": 7_890,
        }
        assert sum(qa.input_breakdown.values()) == qa.input_tokens

    def test_breakdown_mismatch_rejected(self):
        with pytest.raises(ScenarioError):
            CostScenario(
                name="bad",
                kind="per_interaction",
                input_tokens=10,
                input_breakdown={"a": 5},
            )

    def test_table_reproduces_all_five_dollar_figures(self):
        table = scenario_table()
        for figure in ("$240", "$2,400", "$249", "$6,273", "$14,454"):
            assert figure in table

    def test_csv_contains_unrounded_values(self):
        csv_text = scenario_csv()
        assert "249.140625" in csv_text
        assert "6272.96875" in csv_text


class TestFleetCost:
    def test_zero_users(self):
        assert fleet_cost(by_name("Agentic"), DEFAULT_PRICING, 0) == 0

    def test_million_users_token_qa_exact(self):
        cost = fleet_cost(by_name("Token-based Q&A"), DEFAULT_PRICING, 1_000_000)
        assert cost == Decimal(249_140_625)

    def test_linearity_in_users(self):
        s = by_name("Proactive monitoring")
        assert fleet_cost(s, DEFAULT_PRICING, 2) == 2 * fleet_cost(s, DEFAULT_PRICING, 1)

    def test_negative_users_rejected(self):
        with pytest.raises(ScenarioError):
            fleet_cost(by_name("Agentic"), DEFAULT_PRICING, -1)
