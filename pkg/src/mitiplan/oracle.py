"""Non-learning baseline: maximize a deterministic expected-protection proxy under the budget."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence

from .adversary import AdversaryProfile, EffectivenessTable, remediation_probability
from .env import PortfolioAction, World
from .knapsack import Item, solve
from .vomm import VommModel


@dataclass(frozen=True)
class BenefitScore:
    mitigation: str
    benefit: float
    cost: float


def importance_weights(
    vomm: VommModel, adversary: AdversaryProfile, frequencies: Optional[Mapping[str, float]] = None
) -> Dict[str, float]:
    """w(a, t) over the adversary's observed techniques, normalized to sum to 1."""
    techs = sorted(adversary.observed_techniques)
    if frequencies:
        total = math.fsum(frequencies.get(t, 0.0) for t in techs)
        prior = {t: frequencies.get(t, 0.0) / total for t in techs} if total > 0 else None
    else:
        prior = None
    if prior is None:
        prior = {t: 1.0 / len(techs) for t in techs}
    raw = {t: (vomm.prob(t, ()) if t in vomm.index else 0.0) * prior[t] for t in techs}
    z = math.fsum(raw.values())
    if z == 0:
        return {t: 1.0 / len(techs) for t in techs}
    return {t: v / z for t, v in raw.items()}


def importance_weight(vomm: VommModel, adversary: AdversaryProfile, technique: str) -> float:
    return importance_weights(vomm, adversary).get(technique, 0.0)


def benefits(
    vomm: VommModel,
    adversaries: Sequence[AdversaryProfile],
    table: EffectivenessTable,
    mitigations: Sequence[str],
) -> Dict[str, float]:
    out = {m: 0.0 for m in mitigations}
    for adv in adversaries:
        for tech, w in importance_weights(vomm, adv).items():
            for m in table.coverage.get(tech, ()):
                if m in out:
                    out[m] += w * remediation_probability(table.resolve(adv, tech, m)[1])
    return out


def candidates(
    adversaries: Sequence[AdversaryProfile], table: EffectivenessTable, costs: Mapping[str, float], budget: float
) -> List[str]:
    """Mitigations covering at least one observed technique and affordable on their own."""
    found = set()
    for adv in adversaries:
        for tech in adv.observed_techniques:
            found |= set(table.coverage.get(tech, ()))
    return sorted(m for m in found if m in costs and costs[m] <= budget)


def benefit_scores(
    world: World, adversaries: Sequence[AdversaryProfile], maturity: Sequence[float], budget: Optional[float] = None
) -> List[BenefitScore]:
    budget = world.config.defender_budget if budget is None else budget
    costs = world.mitigation_costs(maturity)
    cands = candidates(adversaries, world.effectiveness, costs, budget)
    ben = benefits(world.vomm, adversaries, world.effectiveness, cands)
    return [BenefitScore(m, ben[m], costs[m]) for m in cands]


def oracle_select(
    world: World,
    adversaries: Sequence[AdversaryProfile],
    maturity: Sequence[float],
    budget: Optional[float] = None,
) -> PortfolioAction:
    budget = world.config.defender_budget if budget is None else budget
    scores = benefit_scores(world, adversaries, maturity, budget)
    sol = solve([Item(s.mitigation, s.benefit, s.cost) for s in scores], budget)
    return PortfolioAction(sol.selected, sol.cost)
