"""Adversary profiles, the effectiveness matching hierarchy and attacker-side budgets."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Set, Tuple, Union

from .costs import EPISODE_BUDGET, SOPHISTICATION_MULTIPLIER, AttackerCostTable
from .errors import ConfigError, DomainError, ParseError, ValidationError
from .tokens import validate_token

log = logging.getLogger(__name__)

EFFECTIVENESS_FLOOR = 1.0
SOPHISTICATION = ("Low", "Medium", "High")


@dataclass(frozen=True)
class AdversaryProfile:
    adversary_id: str
    adv_type: str
    resource_level: str
    sophistication: str
    observed_techniques: FrozenSet[str]
    technique_effort: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.observed_techniques:
            raise ValidationError(f"adversary {self.adversary_id}: no observed techniques")
        if self.sophistication not in SOPHISTICATION:
            raise ValidationError(f"adversary {self.adversary_id}: sophistication {self.sophistication!r}")
        extra = set(self.technique_effort) - set(self.observed_techniques)
        if extra:
            raise ValidationError(f"adversary {self.adversary_id}: effort for unobserved {sorted(extra)}")
        for tok, e in self.technique_effort.items():
            if not 1 <= int(e) <= 5:
                raise ValidationError(f"adversary {self.adversary_id}: effort {e} for {tok} not in 1..5")

    @classmethod
    def from_dict(cls, doc: Mapping) -> "AdversaryProfile":
        try:
            return cls(
                str(doc["adversary_id"]),
                str(doc["adv_type"]),
                str(doc["resource_level"]),
                str(doc["sophistication"]),
                frozenset(validate_token(t) for t in doc["observed_techniques"]),
                {validate_token(t): int(e) for t, e in doc.get("technique_effort", {}).items()},
            )
        except KeyError as exc:
            raise ParseError(f"adversary profile missing {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "adversary_id": self.adversary_id,
            "adv_type": self.adv_type,
            "resource_level": self.resource_level,
            "sophistication": self.sophistication,
            "observed_techniques": sorted(self.observed_techniques),
            "technique_effort": dict(sorted(self.technique_effort.items())),
        }


@dataclass
class EffectivenessTable:
    coverage: Dict[str, FrozenSet[str]]
    exact: Dict[Tuple[str, str, str], float] = field(default_factory=dict)
    by_class: Dict[Tuple[str, str, str, str], float] = field(default_factory=dict)
    global_avg: Dict[Tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        for (_, tech, mit) in self.exact:
            if mit not in self.coverage.get(tech, ()):
                raise ValidationError(f"exact entry ({tech}, {mit}) not in coverage")
        for key, v in self.global_avg.items():
            if not 1.0 <= v <= 5.0:
                raise ValidationError(f"global effectiveness {key} = {v} outside [1, 5]")
        self._covering: Dict[str, Set[str]] = {}
        for tech, mits in self.coverage.items():
            for m in mits:
                self._covering.setdefault(m, set()).add(tech)

    def covers(self, technique: str, mitigation: str) -> bool:
        return mitigation in self.coverage.get(technique, ())

    def covered_by(self, mitigation: str) -> Set[str]:
        return self._covering.get(mitigation, set())

    def resolve(self, adversary: AdversaryProfile, technique: str, mitigation: str) -> Tuple[str, float]:
        """(tier name, value) with tiers exact -> class -> global -> floor."""
        if not self.covers(technique, mitigation):
            raise DomainError(f"{mitigation} does not cover {technique}")
        key = (adversary.adversary_id, technique, mitigation)
        if key in self.exact:
            return "exact", self.exact[key]
        ckey = (adversary.adv_type, adversary.sophistication, technique, mitigation)
        if ckey in self.by_class:
            return "class", self.by_class[ckey]
        if (technique, mitigation) in self.global_avg:
            return "global", self.global_avg[(technique, mitigation)]
        return "floor", EFFECTIVENESS_FLOOR

    @classmethod
    def from_dict(cls, doc: Mapping) -> "EffectivenessTable":
        cov = {validate_token(t): frozenset(ms) for t, ms in doc["coverage"].items()}
        exact = {(r["adversary_id"], r["technique"], r["mitigation"]): float(r["value"]) for r in doc.get("exact", [])}
        klass = {
            (r["adv_type"], r["sophistication"], r["technique"], r["mitigation"]): float(r["value"])
            for r in doc.get("by_class", [])
        }
        glob = {(r["technique"], r["mitigation"]): float(r["value"]) for r in doc.get("global", [])}
        return cls(cov, exact, klass, glob)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "EffectivenessTable":
        return cls.from_dict(json.loads(Path(path).read_text()))


def effectiveness(table: EffectivenessTable, adversary: AdversaryProfile, technique: str, mitigation: str) -> float:
    return table.resolve(adversary, technique, mitigation)[1]


def remediation_probability(eff: float) -> float:
    """Likert effectiveness -> protection probability at full maturity (1 -> 0, 5 -> 1)."""
    return (eff - 1.0) / 4.0


@dataclass(frozen=True)
class SpreadTable:
    """operators / targets-per-period for each (adversary type, resource level)."""

    rows: Mapping[Tuple[str, str], Tuple[float, float]]
    resource_levels: Tuple[str, ...] = ("low", "medium", "high")

    def spread(self, adv_type: str, resource_level: str) -> float:
        try:
            operators, targets = self.rows[(adv_type, resource_level)]
        except KeyError:
            raise ConfigError(f"no spread entry for ({adv_type}, {resource_level})") from None
        return operators / targets

    def check_monotone(self) -> None:
        types = {t for t, _ in self.rows}
        for t in types:
            vals = [self.spread(t, r) for r in self.resource_levels if (t, r) in self.rows]
            if any(b < a for a, b in zip(vals, vals[1:])):
                raise ValidationError(f"spread for type {t} decreases with resource level")

    @classmethod
    def load(cls, path: Union[str, Path], resource_levels: Sequence[str] = ("low", "medium", "high")) -> "SpreadTable":
        doc = json.loads(Path(path).read_text())
        rows = {(r["adv_type"], r["resource_level"]): (float(r["operators"]), float(r["targets"])) for r in doc["rows"]}
        table = cls(rows, tuple(resource_levels))
        table.check_monotone()
        return table


def adv_technique_cost(profile: AdversaryProfile, technique: str, table: AttackerCostTable) -> float:
    base = table.base_cost(technique, profile.technique_effort.get(technique))
    return EPISODE_BUDGET * base * SOPHISTICATION_MULTIPLIER[profile.sophistication]


def adv_budget(profile: AdversaryProfile, spread: SpreadTable) -> float:
    return EPISODE_BUDGET * spread.spread(profile.adv_type, profile.resource_level)


def load_adversaries(path: Union[str, Path]) -> List[AdversaryProfile]:
    doc = json.loads(Path(path).read_text())
    rows = doc["adversaries"] if isinstance(doc, Mapping) else doc
    return [AdversaryProfile.from_dict(r) for r in rows]
