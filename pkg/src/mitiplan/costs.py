"""Budget arithmetic for defenders and attackers, in percentage units of a 100-unit budget."""

from __future__ import annotations

import bisect
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

from .errors import DomainError, ValidationError
from .tokens import tactic_of

log = logging.getLogger(__name__)

EPISODE_BUDGET = 100.0
BUDGET_TOL = 1e-9
LEVELS = ("VeryLow", "Low", "Medium", "High", "VeryHigh")

# full-budget anchor per maturity level: (cost, complexity) ordinals and multiplier
ANCHORS = {1: ((3, 3), 5.0), 2: ((3, 4), 3.6), 3: ((4, 4), 2.8), 4: ((5, 5), 2.0)}
SOPHISTICATION_MULTIPLIER = {"Low": 5.0, "Medium": 3.6, "High": 2.0}


@dataclass(frozen=True)
class PctCostTable:
    cells: Dict[Tuple[int, int], float]

    def __post_init__(self):
        if set(self.cells) != {(c, k) for c in range(1, 6) for k in range(1, 6)}:
            raise ValidationError("PctCost table must define all 25 (cost, complexity) cells")
        for (c, k), v in self.cells.items():
            if not 0 < v <= 0.5:
                raise ValidationError(f"PctCost({c},{k})={v} outside (0, 0.5]")
            if c < 5 and self.cells[(c + 1, k)] < v:
                raise ValidationError(f"PctCost not monotone in cost at ({c},{k})")
            if k < 5 and self.cells[(c, k + 1)] < v:
                raise ValidationError(f"PctCost not monotone in complexity at ({c},{k})")

    def __call__(self, cost: int, complexity: int) -> float:
        try:
            return self.cells[(int(cost), int(complexity))]
        except KeyError:
            raise DomainError(f"ordinals ({cost}, {complexity}) outside 1..5") from None

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PctCostTable":
        doc = json.loads(Path(path).read_text())
        return cls({(row["cost"], row["complexity"]): float(row["fraction"]) for row in doc["cells"]})


@dataclass(frozen=True)
class MaturityScaler:
    """Piecewise-linear multiplier over continuous maturity, clamped below the first anchor."""

    xs: Tuple[float, ...] = (0.25, 0.50, 0.75, 1.0)
    ys: Tuple[float, ...] = (5.0, 3.6, 2.8, 2.0)

    def __post_init__(self):
        if len(self.xs) != len(self.ys) or len(self.xs) < 2:
            raise ValidationError("scaler needs matching anchor lists of length >= 2")
        if any(b <= a for a, b in zip(self.xs, self.xs[1:])):
            raise ValidationError("anchor positions must be strictly increasing")
        if any(b >= a for a, b in zip(self.ys, self.ys[1:])):
            raise ValidationError("multipliers must strictly decrease with maturity")

    def level(self, level: int) -> float:
        return self.ys[level - 1]

    def __call__(self, maturity: float) -> float:
        if not 0.0 <= maturity <= 1.0:
            raise DomainError(f"maturity {maturity} outside [0, 1]")
        if maturity <= self.xs[0]:
            return self.ys[0]
        if maturity >= self.xs[-1]:
            return self.ys[-1]
        j = bisect.bisect_right(self.xs, maturity)
        x0, x1, y0, y1 = self.xs[j - 1], self.xs[j], self.ys[j - 1], self.ys[j]
        return y0 + (maturity - x0) / (x1 - x0) * (y1 - y0)

    def resampled(self, step: float = 0.1) -> "MaturityScaler":
        """The same curve carried on a regular grid from the first anchor upward."""
        n = int(round((self.xs[-1] - 0.0) / step))
        grid = [round(i * step, 12) for i in range(n + 1)]
        grid = [x for x in grid if x > self.xs[0]]
        xs = (self.xs[0],) + tuple(grid)
        ys = tuple(self(x) for x in xs)
        return MaturityScaler(xs, ys)


def mitigation_cost(
    cost: int, complexity: int, maturity: float, table: PctCostTable, scaler: MaturityScaler = MaturityScaler()
) -> float:
    return EPISODE_BUDGET * table(cost, complexity) * scaler(maturity)


def feasible(portfolio: Iterable[str], costs: Mapping[str, float], budget: float = EPISODE_BUDGET) -> bool:
    return sum(costs[m] for m in portfolio) <= budget + BUDGET_TOL


@dataclass
class AttackerCostTable:
    """Base technique cost fractions keyed by tactic and adversary effort (Likert 1..5)."""

    default: Dict[int, float]
    by_tactic: Dict[str, Dict[int, float]] = field(default_factory=dict)
    default_effort: int = 3

    def __post_init__(self):
        self._warned: set = set()

    def base_cost(self, token: str, effort: Optional[int]) -> float:
        if effort is None:
            # techniques outside an adversary's observed set have no rating
            log.debug("no effort rating for %s; using default effort %d", token, self.default_effort)
            effort = self.default_effort
        row = self.by_tactic.get(tactic_of(token))
        if row is None:
            key = (tactic_of(token), "tactic")
            if key not in self._warned:
                self._warned.add(key)
                log.warning("no attacker cost row for tactic %s; using default row", tactic_of(token))
            row = self.default
        return row[int(effort)]

    @classmethod
    def load(cls, path: Union[str, Path]) -> "AttackerCostTable":
        doc = json.loads(Path(path).read_text())
        return cls(
            {int(k): float(v) for k, v in doc["default"].items()},
            {t: {int(k): float(v) for k, v in row.items()} for t, row in doc.get("by_tactic", {}).items()},
            int(doc.get("default_effort", 3)),
        )
