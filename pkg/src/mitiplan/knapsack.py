"""Exact 0-1 knapsack over costs scaled to integer ticks.

Costs are rounded up to the tick resolution (0.1 units by default), so any
subset the solver accepts is feasible in real units as well. Ties are broken
toward fewer items, then toward the lexicographically smaller sorted id tuple.
"""

from __future__ import annotations

import math
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np

from .costs import BUDGET_TOL

COST_SCALE = 10
VALUE_TOL = 1e-9


class Item(NamedTuple):
    item_id: str
    value: float
    cost: float


class Solution(NamedTuple):
    selected: Tuple[str, ...]
    value: float
    cost: float


def ticks(cost: float, scale: int = COST_SCALE) -> int:
    return max(0, math.ceil(cost * scale - 1e-9))


def capacity(budget: float, scale: int = COST_SCALE) -> int:
    return math.floor(budget * scale + 1e-9)


def better(a: Tuple[float, Sequence[str]], b: Tuple[float, Sequence[str]], tol: float = VALUE_TOL) -> bool:
    """Ordering used by every solver here: value, then fewer items, then sorted ids."""
    (va, ia), (vb, ib) = a, b
    if va > vb + tol:
        return True
    if va < vb - tol:
        return False
    if len(ia) != len(ib):
        return len(ia) < len(ib)
    return tuple(sorted(ia)) < tuple(sorted(ib))


def solve(items: Sequence[Item], budget: float, scale: int = COST_SCALE) -> Solution:
    if len({it.item_id for it in items}) != len(items):
        raise ValueError("duplicate item ids")
    items = sorted(items, key=lambda it: it.item_id)
    if len(items) > 62:
        raise ValueError("solver supports at most 62 items")
    cap = capacity(budget, scale)
    if cap < 0:
        return Solution((), 0.0, 0.0)
    vals = np.zeros(cap + 1)
    cnt = np.zeros(cap + 1, dtype=np.int64)
    mask = np.zeros(cap + 1, dtype=np.int64)
    for i, it in enumerate(items):
        if it.value < 0:
            raise ValueError(f"negative value for {it.item_id}")
        w = ticks(it.cost, scale)
        if w > cap:
            continue
        n = cap + 1 - w
        cv, cn, cm = vals[:n] + it.value, cnt[:n] + 1, mask[:n] | np.int64(1 << i)
        ov, on, om = vals[w:], cnt[w:], mask[w:]
        up = cv > ov + VALUE_TOL
        tie = ~up & (cv >= ov - VALUE_TOL)
        diff = cm ^ om
        low = diff & -diff
        up |= tie & ((cn < on) | ((cn == on) & ((cm & low) != 0)))
        vals[w:], cnt[w:], mask[w:] = np.where(up, cv, ov), np.where(up, cn, on), np.where(up, cm, om)
    best = int(mask[cap])
    chosen = [it for i, it in enumerate(items) if best >> i & 1]
    return Solution(
        tuple(it.item_id for it in chosen),
        math.fsum(it.value for it in chosen),
        math.fsum(it.cost for it in chosen),
    )


def brute_force(items: Sequence[Item], budget: float, scale: int = COST_SCALE) -> Solution:
    """Exhaustive reference solver under the same tick rounding and tie-break."""
    cap = capacity(budget, scale)
    best: Tuple[float, List[Item]] = (0.0, [])
    n = len(items)
    for bits in range(1 << n):
        subset = [items[i] for i in range(n) if bits >> i & 1]
        if sum(ticks(it.cost, scale) for it in subset) > cap:
            continue
        value = math.fsum(it.value for it in subset)
        if better((value, [it.item_id for it in subset]), (best[0], [it.item_id for it in best[1]])):
            best = (value, subset)
    chosen = sorted(best[1], key=lambda it: it.item_id)
    return Solution(tuple(it.item_id for it in chosen), best[0], math.fsum(it.cost for it in chosen))


def within_budget(solution: Solution, budget: float) -> bool:
    return solution.cost <= budget + BUDGET_TOL
