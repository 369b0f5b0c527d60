"""ATT&CK technique tokens of the form ``TAxxxx:Tyyyy[.zzz]``."""

from __future__ import annotations

import re
from typing import NamedTuple

from .errors import ParseError

TACTIC_RE = re.compile(r"^TA\d{4}$")
TECHNIQUE_RE = re.compile(r"^T\d{4}(\.\d{3})?$")
IMPACT_TACTIC = "TA0040"


class TechniqueToken(NamedTuple):
    tactic: str
    technique: str

    def __str__(self) -> str:
        return f"{self.tactic}:{self.technique}"

    @classmethod
    def parse(cls, text: str) -> "TechniqueToken":
        tactic, sep, technique = str(text).partition(":")
        if not sep:
            raise ParseError(f"token {text!r} lacks the 'TAxxxx:Tyyyy' separator")
        return cls.make(tactic, technique)

    @classmethod
    def make(cls, tactic: str, technique: str) -> "TechniqueToken":
        if not TACTIC_RE.match(tactic or ""):
            raise ParseError(f"bad tactic id {tactic!r}")
        if not TECHNIQUE_RE.match(technique or ""):
            raise ParseError(f"bad technique id {technique!r}")
        return cls(tactic, technique)


def validate_token(text: str) -> str:
    return str(TechniqueToken.parse(text))


def tactic_of(token: str) -> str:
    return token.split(":", 1)[0]


def is_impact(token: str) -> bool:
    return tactic_of(token) == IMPACT_TACTIC
