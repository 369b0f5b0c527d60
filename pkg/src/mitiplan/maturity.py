"""CSF practice tiers -> ATT&CK mitigation maturity via a weighted power mean."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple, Union

from .errors import ParseError, UndefinedMaturityError, ValidationError

MITIGATION_RE = re.compile(r"^M\d{4}$")
MAX_TIER = 4
MAX_STRENGTH = 5
DEFAULT_Q = 2.0


@dataclass(frozen=True)
class StrengthMatrix:
    practices: Tuple[str, ...]
    mitigations: Tuple[str, ...]
    entries: Dict[Tuple[str, str], int]

    def supporting(self, mitigation: str) -> List[Tuple[str, int]]:
        """(practice, strength) pairs touching ``mitigation`` in practice order."""
        return [
            (p, self.entries[(p, mitigation)])
            for p in self.practices
            if (p, mitigation) in self.entries
        ]


@dataclass(frozen=True)
class OrgProfile:
    org_id: str
    tiers: Dict[str, int]

    def to_dict(self) -> dict:
        return {"org_id": self.org_id, "tiers": dict(self.tiers)}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "OrgProfile":
        try:
            tiers = {str(k): int(v) for k, v in doc["tiers"].items()}
            org_id = str(doc["org_id"])
        except (KeyError, AttributeError, TypeError, ValueError) as exc:
            raise ParseError(f"org profile: {exc!r}") from exc
        bad = {p: t for p, t in tiers.items() if not 1 <= t <= MAX_TIER}
        if bad:
            raise ValidationError(f"org {org_id}: tiers outside 1..4: {bad}")
        return cls(org_id, tiers)


@dataclass(frozen=True)
class MaturityVector:
    mitigations: Tuple[str, ...]
    values: Tuple[float, ...]
    exponent_q: float = DEFAULT_Q

    def __post_init__(self):
        if len(self.values) != len(self.mitigations):
            raise ValidationError("maturity vector length does not match mitigation count")

    def as_dict(self) -> Dict[str, float]:
        return dict(zip(self.mitigations, self.values))

    def __getitem__(self, mitigation: str) -> float:
        return self.values[self.mitigations.index(mitigation)]


def _read_doc(source: Union[str, Path, Mapping]) -> Mapping:
    if isinstance(source, Mapping):
        return source
    path = Path(source)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def load_strength_matrix(source: Union[str, Path, Mapping]) -> StrengthMatrix:
    """Load and validate a practice/mitigation strength document.

    Expected keys: ``practices`` (list), ``mitigations`` (list) and ``entries``,
    a list of ``{practice, mitigation, strength}`` objects.
    """
    doc = _read_doc(source)
    for key in ("practices", "mitigations", "entries"):
        if key not in doc:
            raise ParseError(f"strength matrix: missing required key '{key}'")
    practices = tuple(str(p) for p in doc["practices"])
    mitigations = tuple(str(m) for m in doc["mitigations"])
    if len(set(practices)) != len(practices) or not all(practices):
        raise ValidationError("strength matrix: practice ids must be non-empty and unique")
    if len(set(mitigations)) != len(mitigations):
        raise ValidationError("strength matrix: duplicate mitigation id")
    for m in mitigations:
        if not MITIGATION_RE.match(m):
            raise ValidationError(f"strength matrix: bad mitigation id {m!r}")
    known_p, known_m = set(practices), set(mitigations)
    entries: Dict[Tuple[str, str], int] = {}
    for i, row in enumerate(doc["entries"]):
        try:
            p, m, s = str(row["practice"]), str(row["mitigation"]), row["strength"]
        except (KeyError, TypeError) as exc:
            raise ParseError(f"strength matrix: entries[{i}]: missing field {exc}") from exc
        if isinstance(s, bool) or not isinstance(s, int) or not 1 <= s <= MAX_STRENGTH:
            raise ValidationError(f"strength matrix: entries[{i}]: strength {s!r} not in 1..5")
        if p not in known_p or m not in known_m:
            raise ValidationError(f"strength matrix: entries[{i}]: unknown practice/mitigation ({p}, {m})")
        if (p, m) in entries:
            raise ValidationError(f"strength matrix: entries[{i}]: duplicate triple for ({p}, {m})")
        entries[(p, m)] = s
    matrix = StrengthMatrix(practices, mitigations, entries)
    for m in mitigations:
        if not any(s >= 2 for _, s in matrix.supporting(m)):
            raise ValidationError(f"strength matrix: mitigation {m} has no entry with strength >= 2")
    return matrix


def load_org_profile(source: Union[str, Path, Mapping]) -> OrgProfile:
    return OrgProfile.from_dict(_read_doc(source))


def power_mean_score(tiers: Sequence[float], weights: Sequence[float], q: float) -> float:
    """((sum w (p w)^q) / sum w) ** (1/q), on the raw tier scale [0, 4]."""
    total_w = sum(weights)
    if total_w <= 0:
        raise UndefinedMaturityError("all relation weights are zero")
    acc = sum(w * (p * w) ** q for p, w in zip(tiers, weights))
    return (acc / total_w) ** (1.0 / q)


def mitigation_maturity(profile: OrgProfile, matrix: StrengthMatrix, q: float = DEFAULT_Q) -> MaturityVector:
    if not q > 1:
        raise ValueError(f"q must be > 1, got {q}")
    missing = [p for p in matrix.practices if p not in profile.tiers]
    if missing:
        raise ValidationError(f"org {profile.org_id}: no tier for practices {missing[:5]}")
    values = []
    for m in matrix.mitigations:
        support = matrix.supporting(m)
        if not support:
            raise UndefinedMaturityError(f"mitigation {m} has no supporting practices")
        tiers = [profile.tiers[p] for p, _ in support]
        weights = [s / MAX_STRENGTH for _, s in support]
        raw = power_mean_score(tiers, weights, q)
        # fixed theoretical range keeps scores comparable across organizations
        values.append(min(1.0, max(0.0, raw / MAX_TIER)))
    return MaturityVector(matrix.mitigations, tuple(values), q)
