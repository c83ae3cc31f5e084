# Walkthrough: what cloud inference costs per user per year.
#
# The five built-in scenarios parameterize common usage patterns; edge
# deployment pays none of these incremental costs.

from decimal import Decimal

from specforge import CostScenario, Pricing, annual_cost, builtin_scenarios, fleet_cost
from specforge.costs import DEFAULT_PRICING, round_dollars, scenario_table

print(scenario_table())
print()

# the arithmetic is exact decimal, so fleet-scale products don't drift
qa = next(s for s in builtin_scenarios() if s.name == "Token-based Q&A")
per_user = annual_cost(qa)
print(f"Token-based Q&A, unrounded per user: ${per_user.normalize()}")
print(f"Across 1,000,000 users: ${fleet_cost(qa, DEFAULT_PRICING, 1_000_000):,.2f}")

# custom scenario: a retrieval-heavy assistant polled hourly
hourly_monitor = CostScenario(
    name="Hourly summarizer",
    kind="per_interaction",
    input_tokens=30_000,
    output_tokens=800,
    events_per_workday=Decimal(24),
    workdays_per_year=365,
    assumptions="30k context, hourly, every day",
)
print(f"\n{hourly_monitor.name}: ${round_dollars(annual_cost(hourly_monitor)):,} per year")

# cheaper pricing changes token-based rows only
budget_pricing = Pricing(Decimal("0.25"), Decimal("2"))
for scenario in builtin_scenarios():
    print(f"  {scenario.name:<46} ${round_dollars(annual_cost(scenario, budget_pricing)):>8,}")
