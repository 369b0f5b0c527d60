"""Independent reference computations used to check the package's fast paths."""

import itertools
import math

import numpy as np


def power_mean_direct(tiers, strengths, q):
    """Weighted power mean straight from its definition, normalized to [0, 1]."""
    num, den = 0.0, 0.0
    for p, s in zip(tiers, strengths):
        w = s / 5.0
        num += w * math.exp(q * math.log(p * w))
        den += w
    return math.exp(math.log(num / den) / q) / 4.0


def best_subset(values, costs, budget, ids=None):
    """Exhaustive 0-1 knapsack: max value, then fewer items, then smaller sorted ids."""
    n = len(values)
    ids = ids or [f"i{k:02d}" for k in range(n)]
    best_key, best = None, ()
    for r in range(n + 1):
        for combo in itertools.combinations(range(n), r):
            if math.fsum(costs[i] for i in combo) > budget + 1e-9:
                continue
            v = math.fsum(values[i] for i in combo)
            key = (-round(v, 9), r, tuple(sorted(ids[i] for i in combo)))
            if best_key is None or key < best_key:
                best_key, best = key, tuple(sorted(ids[i] for i in combo))
    return best, -best_key[0]


def finite_difference(loss, params, eps=1e-6):
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = p[idx]
            p[idx] = old + eps
            up = loss()
            p[idx] = old - eps
            down = loss()
            p[idx] = old
            g[idx] = (up - down) / (2 * eps)
        grads.append(g)
    return grads


def max_relative_error(a, b, floor=1e-8):
    worst = 0.0
    for x, y in zip(a, b):
        denom = np.maximum(np.maximum(np.abs(x), np.abs(y)), floor)
        worst = max(worst, float(np.max(np.abs(x - y) / denom)))
    return worst


def fold_annotations(paths):
    """Per-mitigation (occurrences, countered pairs) from raw path trails."""
    out = {}
    for p in paths:
        for step in p.trail:
            if step.mitigation is None or not step.success:
                continue
            occ, pairs = out.get(step.mitigation, (0, set()))
            out[step.mitigation] = (occ + 1, pairs | {(p.adversary_id, step.technique)})
    return out


def enumerate_best_ticks(values, cost_ticks, cap):
    """Vectorized exhaustive knapsack over integer tick costs with the shared tie-break."""
    n = len(values)
    masks = np.arange(1 << n, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(float)
    totals = bits @ np.asarray(values, float)
    weights = bits @ np.asarray(cost_ticks, float)
    feasible = weights <= cap
    best = totals[feasible].max()
    tied = np.flatnonzero(feasible & (totals >= best - 1e-9))
    sizes = bits[tied].sum(axis=1)
    tied = tied[sizes == sizes.min()]
    subsets = sorted(tuple(np.flatnonzero(bits[i]).tolist()) for i in tied)
    return subsets[0], float(best)


def ceil_ticks(cost, scale=10):
    return max(0, math.ceil(cost * scale - 1e-9))
