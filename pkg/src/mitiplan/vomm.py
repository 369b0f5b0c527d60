"""Variable-order Markov model over technique tokens.

Weighted context counts, add-alpha smoothing and hard back-off to the longest
suffix context whose total weight reaches ``min_support``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, CorpusError, ParseError
from .flows import WeightedSequence

SCHEMA = "mitiplan/vomm@1"
Context = Tuple[str, ...]


class VommModel:
    def __init__(
        self,
        vocab: Iterable[str],
        counts: Mapping[Context, Mapping[str, float]],
        max_order: int = 3,
        alpha: float = 1.0,
        min_support: float = 1.0,
    ):
        if max_order < 1:
            raise ConfigError(f"max_order must be >= 1, got {max_order}")
        if alpha <= 0:
            raise ConfigError(f"alpha must be > 0, got {alpha}")
        if min_support < 0:
            raise ConfigError("min_support must be >= 0")
        self.vocab: Tuple[str, ...] = tuple(sorted(set(vocab)))
        if not self.vocab:
            raise CorpusError("empty vocabulary")
        self.index = {tok: i for i, tok in enumerate(self.vocab)}
        self.max_order = max_order
        self.alpha = float(alpha)
        self.min_support = float(min_support)
        self.counts: Dict[Context, Dict[str, float]] = {}
        self.context_totals: Dict[Context, float] = {}
        for ctx, row in counts.items():
            ctx = tuple(ctx)
            if not 1 <= len(ctx) <= max_order:
                raise ConfigError(f"context length {len(ctx)} outside 1..{max_order}")
            for tok in list(ctx) + list(row):
                if tok not in self.index:
                    raise ConfigError(f"token {tok} not in vocabulary")
            self.counts[ctx] = dict(row)
            self.context_totals[ctx] = math.fsum(row.values())
        self._cache: Dict[Context, Tuple[np.ndarray, np.ndarray]] = {}
        self._uniform = np.full(len(self.vocab), 1.0 / len(self.vocab))

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def resolve_context(self, history: Sequence[str]) -> Context:
        """Longest suffix of ``history`` (length <= K) with enough support; () when none."""
        for k in range(min(self.max_order, len(history)), 0, -1):
            ctx = tuple(history[-k:])
            if self.context_totals.get(ctx, 0.0) >= self.min_support and ctx in self.counts:
                return ctx
        return ()

    def _dist(self, ctx: Context) -> Tuple[np.ndarray, np.ndarray]:
        hit = self._cache.get(ctx)
        if hit is not None:
            return hit
        if not ctx:
            probs = self._uniform
        else:
            probs = np.full(len(self.vocab), self.alpha)
            for tok, c in self.counts[ctx].items():
                probs[self.index[tok]] += c
            probs = probs / (self.context_totals[ctx] + self.alpha * len(self.vocab))
        cdf = np.cumsum(probs)
        self._cache[ctx] = (probs, cdf)
        return probs, cdf

    def next_probs(self, history: Sequence[str]) -> np.ndarray:
        """Next-token probabilities as an array aligned with ``self.vocab``."""
        return self._dist(self.resolve_context(history))[0]

    def next_distribution(self, history: Sequence[str]) -> Dict[str, float]:
        return dict(zip(self.vocab, self.next_probs(history).tolist()))

    def prob(self, token: str, history: Sequence[str]) -> float:
        return float(self.next_probs(history)[self.index[token]])

    def sample_next(self, history: Sequence[str], rng: np.random.Generator) -> str:
        _, cdf = self._dist(self.resolve_context(history))
        i = int(np.searchsorted(cdf, rng.random(), side="right"))
        return self.vocab[min(i, len(self.vocab) - 1)]

    def sequence_loglik(self, sequence: Sequence[str], history: Sequence[str] = ()) -> float:
        if not sequence:
            raise ValueError("sequence must be non-empty")
        hist = list(history)
        total = 0.0
        for tok in sequence:
            total += math.log(self.prob(tok, hist))
            hist.append(tok)
        return total

    def entropy(self, history: Sequence[str]) -> float:
        p = self.next_probs(history)
        return float(-np.sum(p * np.log(p)))

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "max_order": self.max_order,
            "alpha": self.alpha,
            "min_support": self.min_support,
            "vocab": list(self.vocab),
            "counts": [
                {"context": list(ctx), "next": dict(sorted(row.items()))}
                for ctx, row in sorted(self.counts.items())
            ],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "VommModel":
        if doc.get("schema") != SCHEMA:
            raise ParseError(f"unsupported VOMM document schema {doc.get('schema')!r}")
        counts = {tuple(row["context"]): row["next"] for row in doc["counts"]}
        return cls(doc["vocab"], counts, doc["max_order"], doc["alpha"], doc["min_support"])

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "VommModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def weighted_counts(corpus: Iterable[WeightedSequence], max_order: int) -> Dict[Context, Dict[str, float]]:
    counts: Dict[Context, Dict[str, float]] = {}
    for seq in corpus:
        toks = seq.tokens
        for i, tok in enumerate(toks):
            for k in range(1, min(max_order, i) + 1):
                row = counts.setdefault(tuple(toks[i - k : i]), {})
                row[tok] = row.get(tok, 0.0) + seq.weight
    return counts


def fit(
    corpus: Sequence[WeightedSequence],
    max_order: int = 3,
    alpha: float = 1.0,
    min_support: float = 1.0,
    extra_vocab: Iterable[str] = (),
) -> VommModel:
    if max_order < 1:
        raise ConfigError(f"max_order must be >= 1, got {max_order}")
    if not corpus:
        raise CorpusError("cannot fit a VOMM on an empty corpus")
    vocab = {tok for seq in corpus for tok in seq.tokens} | set(extra_vocab)
    return VommModel(vocab, weighted_counts(corpus, max_order), max_order, alpha, min_support)
