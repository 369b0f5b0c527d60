"""Synthetic defender populations from a latent-maturity ordered-logit model."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, ValidationError
from .maturity import OrgProfile

DEFAULT_CLASS_PROBS = (0.40, 0.30, 0.20, 0.10)
DEFAULT_NOISE_SD = 0.25
BASE_CUTPOINTS = (1.5, 2.5, 3.5)
LATENT_RANGE = (1.0, 4.0)


@dataclass(frozen=True)
class MaturityPrior:
    class_probs: Tuple[float, float, float, float] = DEFAULT_CLASS_PROBS
    noise_sd: float = DEFAULT_NOISE_SD
    rng_seed: int = 0

    def __post_init__(self):
        if len(self.class_probs) != 4 or any(p < 0 for p in self.class_probs):
            raise ValidationError("class_probs must be four non-negative numbers")
        if abs(sum(self.class_probs) - 1.0) > 1e-9:
            raise ValidationError(f"class_probs sum to {sum(self.class_probs)}, expected 1")
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be >= 0")


@dataclass(frozen=True)
class PracticeDifficulty:
    practice: str
    cost: int
    complexity: int
    cutpoints: Tuple[float, float, float]

    @classmethod
    def from_ordinals(cls, practice: str, cost: int, complexity: int) -> "PracticeDifficulty":
        shift = difficulty_shift(cost, complexity)
        return cls(practice, cost, complexity, tuple(b + shift for b in BASE_CUTPOINTS))


def difficulty_shift(cost: int, complexity: int) -> float:
    for v in (cost, complexity):
        if not 1 <= v <= 5:
            raise ValidationError(f"ordinal {v} outside 1..5")
    return 0.3 * ((cost + complexity) / 2 - 2.5)


def _logistic(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def tier_probabilities(latent: float, cutpoints: Sequence[float]) -> Tuple[float, float, float, float]:
    b1, b2, b3 = cutpoints
    if not b1 < b2 < b3:
        raise ValidationError(f"cutpoints must be strictly increasing: {cutpoints}")
    f1, f2, f3 = (_logistic(b - latent) for b in (b1, b2, b3))
    return (f1, f2 - f1, f3 - f2, 1.0 - f3)


def _inverse_cdf(probs: Sequence[float], u: float) -> int:
    """Index i such that cdf[i-1] <= u < cdf[i]; the last index absorbs rounding slack."""
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            return i
    return len(probs) - 1


def polar_normal(rng: np.random.Generator) -> float:
    """Standard normal draw by the Marsaglia polar method on uniform doubles."""
    while True:
        u = 2.0 * rng.random() - 1.0
        v = 2.0 * rng.random() - 1.0
        s = u * u + v * v
        if 0.0 < s < 1.0:
            return u * math.sqrt(-2.0 * math.log(s) / s)


def sample_population_with_latents(
    prior: MaturityPrior,
    difficulties: Sequence[PracticeDifficulty],
    n: int,
    id_prefix: str = "org",
) -> List[Tuple[OrgProfile, int, float]]:
    """Like :func:`sample_population` but also returns each org's class and clipped latent."""
    if not difficulties:
        raise ConfigError("practice difficulty list is empty")
    if n < 1:
        raise ConfigError(f"population size must be >= 1, got {n}")
    rng = np.random.default_rng(prior.rng_seed)
    lo, hi = LATENT_RANGE
    width = len(str(n - 1))
    out = []
    for i in range(n):
        latent_class = _inverse_cdf(prior.class_probs, rng.random()) + 1
        latent = float(latent_class)
        if prior.noise_sd > 0:
            latent += prior.noise_sd * polar_normal(rng)
        latent = min(hi, max(lo, latent))
        tiers = {}
        for d in difficulties:
            tiers[d.practice] = _inverse_cdf(tier_probabilities(latent, d.cutpoints), rng.random()) + 1
        out.append((OrgProfile(f"{id_prefix}-{i:0{width}d}", tiers), latent_class, latent))
    return out


def sample_population(
    prior: MaturityPrior,
    difficulties: Sequence[PracticeDifficulty],
    n: int,
    id_prefix: str = "org",
) -> List[OrgProfile]:
    return [org for org, _, _ in sample_population_with_latents(prior, difficulties, n, id_prefix)]


def load_difficulties(source: Union[str, Path]) -> List[PracticeDifficulty]:
    doc = json.loads(Path(source).read_text())
    return [
        PracticeDifficulty.from_ordinals(row["practice"], int(row["cost"]), int(row["complexity"]))
        for row in doc["practices"]
    ]


def write_population(orgs: Iterable[OrgProfile], path: Union[str, Path]) -> None:
    with open(path, "w") as fh:
        for org in orgs:
            fh.write(json.dumps(org.to_dict(), sort_keys=True) + "\n")


def read_population(path: Union[str, Path]) -> List[OrgProfile]:
    with open(path) as fh:
        return [OrgProfile.from_dict(json.loads(line)) for line in fh if line.strip()]
