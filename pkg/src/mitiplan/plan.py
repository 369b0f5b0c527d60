"""Final mitigation plan: knapsack over reconstructed-path candidates."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Mapping, Sequence, Tuple

from .beam import Candidate
from .costs import EPISODE_BUDGET
from .knapsack import Item, solve

log = logging.getLogger(__name__)

DEFAULT_WEIGHTS = (0.5, 0.3, 0.2)


def item_value(likelihood: float, contribution: float, occurrences: int, weights=DEFAULT_WEIGHTS) -> float:
    w1, w2, w3 = weights
    return w1 * likelihood + w2 * contribution + w3 * math.log1p(occurrences)


@dataclass(frozen=True)
class PlanItem:
    mitigation: str
    value: float
    cost: float
    countered: Tuple[Tuple[str, str], ...]
    paths: Tuple[Tuple[str, int], ...]

    def __post_init__(self):
        if self.value < 0:
            raise ValueError(f"{self.mitigation}: negative value")
        if self.cost <= 0:
            raise ValueError(f"{self.mitigation}: cost must be positive")


@dataclass
class Plan:
    items: List[PlanItem]
    selected: List[PlanItem]
    budget: float
    advisory: str = ""

    @property
    def total_cost(self) -> float:
        return math.fsum(i.cost for i in self.selected)

    @property
    def total_value(self) -> float:
        return math.fsum(i.value for i in self.selected)

    @property
    def residual(self) -> float:
        return self.budget - self.total_cost

    def to_dict(self) -> dict:
        return {
            "budget": self.budget,
            "total_cost": self.total_cost,
            "total_value": self.total_value,
            "residual_budget": self.residual,
            "advisory": self.advisory,
            "selected": [
                {
                    "mitigation": i.mitigation,
                    "cost": i.cost,
                    "value": i.value,
                    "countered": [{"adversary": a, "technique": t} for a, t in i.countered],
                    "paths": [{"adversary": a, "rank": r} for a, r in i.paths],
                }
                for i in self.selected
            ],
            "rejected": [i.mitigation for i in self.items if i not in self.selected],
        }

    def text_table(self, names: Mapping[str, str] = None) -> str:
        names = names or {}
        rows = [f"{'mitigation':<10} {'name':<34} {'cost':>7} {'value':>7}  countered"]
        for i in self.selected:
            techs = sorted({t for _, t in i.countered})
            advs = sorted({a for a, _ in i.countered})
            rows.append(
                f"{i.mitigation:<10} {names.get(i.mitigation, '')[:34]:<34} {i.cost:7.2f} {i.value:7.4f}  "
                f"{len(techs)} techniques / {len(advs)} adversaries"
            )
        rows.append(f"total cost {self.total_cost:.2f} of {self.budget:.2f}, residual {self.residual:.2f}")
        if self.advisory:
            rows.append(f"note: {self.advisory}")
        return "\n".join(rows)


def plan_items(candidates: Sequence[Candidate], costs: Mapping[str, float], weights=DEFAULT_WEIGHTS) -> List[PlanItem]:
    return [
        PlanItem(
            c.mitigation,
            item_value(c.max_likelihood, c.score_contribution, c.occurrences, weights),
            costs[c.mitigation],
            c.countered,
            c.paths,
        )
        for c in candidates
    ]


def knapsack(items: Sequence[PlanItem], budget: float = EPISODE_BUDGET) -> Tuple[List[PlanItem], float]:
    by_id = {i.mitigation: i for i in items}
    sol = solve([Item(i.mitigation, i.value, i.cost) for i in items], budget)
    return [by_id[m] for m in sol.selected], sol.value


def build_plan(
    candidates: Sequence[Candidate],
    costs: Mapping[str, float],
    budget: float = EPISODE_BUDGET,
    weights=DEFAULT_WEIGHTS,
) -> Plan:
    items = plan_items(candidates, costs, weights)
    selected, _ = knapsack(items, budget) if budget > 0 else ([], 0.0)
    advisory = ""
    if not items:
        advisory = "no reconstructed step was countered by a mitigation meeting the success threshold"
    elif not selected:
        advisory = f"every candidate costs more than the budget {budget:g}"
    if advisory:
        log.warning("empty plan: %s", advisory)
    return Plan(items, selected, budget, advisory)
