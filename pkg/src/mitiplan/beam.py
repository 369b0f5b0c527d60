"""Beam search over environment snapshots to reconstruct likely attack/defense paths.

Each node owns a serialized episode state. Expansion restores a private copy
per candidate technique, so parents and siblings are never touched.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .adversary import AdversaryProfile, remediation_probability
from .costs import BUDGET_TOL
from .dqn import greedy_fill, greedy_order
from .env import BLOCK_REWARD, WIN_BONUS, MitigationEnv, PortfolioAction, RUNNING, World

RECON_BUDGET = 150.0


@dataclass(frozen=True)
class BeamConfig:
    width: int = 5  # k
    depth: int = 15  # d
    candidates: int = 5  # width_c
    boost: float = 3.0
    diversity: float = 0.5  # lambda
    threshold: float = 0.5
    entropy_scale: float = 0.1
    # -1 rewards confident (low-entropy) trails, +1 rewards uncertain ones
    entropy_sign: float = -1.0
    budget: float = RECON_BUDGET

    def __post_init__(self):
        if self.width < 1 or self.depth < 1 or self.candidates < 1:
            raise ValueError("beam width, depth and candidate width must be >= 1")


@dataclass(frozen=True)
class TrailStep:
    technique: str
    mitigation: Optional[str]
    result: str  # advanced | blocked | stalled
    success: bool  # mitigation met the reconstruction threshold
    likelihood: float  # maturity-weighted remediation probability of the mitigation
    logprob: float
    entropy: float

    def to_dict(self) -> dict:
        return {
            "technique": self.technique,
            "mitigation": self.mitigation,
            "result": self.result,
            "success": self.success,
            "likelihood": self.likelihood,
            "logprob": self.logprob,
            "entropy": self.entropy,
        }


@dataclass
class BeamNode:
    snapshot: bytes
    cum_reward: float = 0.0
    cum_loglik: float = 0.0
    trail: Tuple[TrailStep, ...] = ()
    outcome: str = RUNNING
    components: Dict[str, float] = field(default_factory=dict)
    score: float = 0.0

    @property
    def depth(self) -> int:
        return len(self.trail)

    @property
    def terminal(self) -> bool:
        return self.outcome != RUNNING

    def techniques(self) -> frozenset:
        return frozenset(s.technique for s in self.trail)


@dataclass(frozen=True)
class RootPortfolio:
    mitigations: Tuple[str, ...]
    costs: Tuple[float, ...]

    @property
    def total_cost(self) -> float:
        return math.fsum(self.costs)


def build_root_portfolio(
    q_values: Sequence[float], mitigations: Sequence[str], costs: Mapping[str, float], budget: float = RECON_BUDGET
) -> RootPortfolio:
    """Greedy descending-Q fill; members keep their Q order."""
    action = greedy_fill(greedy_order(q_values, mitigations), costs, budget)
    return RootPortfolio(action.selected, tuple(costs[m] for m in action.selected))


def boosted_distribution(
    probs: Sequence[float], vocab: Sequence[str], observed: frozenset, boost: float = 3.0
) -> np.ndarray:
    p = np.asarray(probs, float).copy()
    for i, tok in enumerate(vocab):
        if tok in observed:
            p[i] *= boost
    return p / p.sum()


def candidate_techniques(
    world: World,
    history: Sequence[str],
    adversary: AdversaryProfile,
    width: int = 5,
    boost: float = 3.0,
    budget: Optional[float] = None,
) -> List[str]:
    """Top ``width`` techniques by boosted probability, ties by token.

    With ``budget`` given, techniques the adversary cannot pay for are skipped
    since expanding them would only produce stalled steps.
    """
    vocab = world.vomm.vocab
    p = boosted_distribution(world.vomm.next_probs(history), vocab, adversary.observed_techniques, boost)
    order = sorted(range(len(vocab)), key=lambda i: (-p[i], vocab[i]))
    if budget is not None:
        order = [i for i in order if world.technique_cost(adversary, vocab[i]) <= budget + BUDGET_TOL]
    return [vocab[i] for i in order[:width]]


def select_best_mitigation(
    portfolio: Sequence[str], technique: str, adversary: AdversaryProfile, world: World
) -> Optional[str]:
    """Covering member with an exact adversary-level rating first, then highest effectiveness, then id."""
    table = world.effectiveness
    best, best_key = None, None
    for m in portfolio:
        if not table.covers(technique, m):
            continue
        tier, eff = table.resolve(adversary, technique, m)
        key = (tier != "exact", -eff, m)
        if best_key is None or key < best_key:
            best, best_key = m, key
    return best


def jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def base_components(node: BeamNode, config: BeamConfig) -> Dict[str, float]:
    """R, P, U, I for a node; D depends on the beam and is added at retention time."""
    n = node.depth
    if n == 0:
        return {"R": 0.0, "P": 0.0, "U": 0.0, "I": 0.0}
    mean_entropy = math.fsum(s.entropy for s in node.trail) / n
    return {
        "R": node.cum_reward / ((BLOCK_REWARD + WIN_BONUS) * n),
        "P": node.cum_loglik / n,
        "U": config.entropy_sign * config.entropy_scale * mean_entropy,
        "I": sum(s.result != "advanced" for s in node.trail) / n,
    }


def score(components: Mapping[str, float], diversity: float) -> float:
    return components["R"] + components["P"] + components["U"] + components["I"] - diversity * components.get("D", 0.0)


def retain(candidates: Sequence[BeamNode], config: BeamConfig) -> List[BeamNode]:
    """Greedy diversity-penalized selection of up to k nodes.

    Each round takes the candidate with the best score given the nodes already
    kept; the first pick has no penalty. Returned scores are non-increasing.
    """
    pool = []
    for node in candidates:
        comps = base_components(node, config)
        pool.append((node, comps, score(comps, 0.0) if node.depth else 0.0))
    kept: List[BeamNode] = []
    while pool and len(kept) < config.width:
        best_i, best_s, best_d = -1, -math.inf, 0.0
        for i, (node, comps, base) in enumerate(pool):
            d = max((jaccard(node.techniques(), k.techniques()) for k in kept), default=0.0)
            s = base - config.diversity * d if node.depth else 0.0
            if s > best_s:
                best_i, best_s, best_d = i, s, d
        node, comps, _ = pool.pop(best_i)
        node.components = {**comps, "D": best_d}
        node.score = best_s
        kept.append(node)
    return kept


def expand(
    env: MitigationEnv, node: BeamNode, adversary: AdversaryProfile, portfolio: RootPortfolio, config: BeamConfig
) -> List[BeamNode]:
    world = env.world
    parent = env.restore(node.snapshot)
    history = list(parent.histories[0])
    raw = world.vomm.next_probs(history)
    entropy = float(-np.sum(raw * np.log(raw)))
    maturity = dict(zip(world.mitigation_ids, parent.maturity))
    children = []
    techs = candidate_techniques(world, history, adversary, config.candidates, config.boost, parent.budgets[0])
    for tech in techs:
        state = env.restore(node.snapshot)
        mit = select_best_mitigation(portfolio.mitigations, tech, adversary, world)
        likelihood = 0.0
        if mit is not None:
            likelihood = maturity[mit] * remediation_probability(world.effectiveness.resolve(adversary, tech, mit)[1])
        _, r, _, event = env.step_forced(state, 0, tech, mit)
        logp = math.log(raw[world.vomm.index[tech]])
        step = TrailStep(tech, mit, event.result, mit is not None and likelihood >= config.threshold,
                         likelihood, logp, entropy)
        children.append(
            BeamNode(env.snapshot(state), node.cum_reward + r, node.cum_loglik + logp, node.trail + (step,),
                     state.outcome)
        )
    return children


@dataclass
class ReconstructedPath:
    adversary_id: str
    trail: Tuple[TrailStep, ...]
    score: float
    components: Dict[str, float]
    outcome: str
    rank: int

    def to_dict(self) -> dict:
        return {
            "adversary_id": self.adversary_id,
            "rank": self.rank,
            "score": self.score,
            "components": dict(self.components),
            "outcome": self.outcome,
            "trail": [s.to_dict() for s in self.trail],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ReconstructedPath":
        trail = tuple(TrailStep(**s) for s in doc["trail"])
        return cls(doc["adversary_id"], trail, doc["score"], dict(doc["components"]), doc["outcome"], doc["rank"])


def beam_search(
    env: MitigationEnv,
    root: BeamNode,
    adversary: AdversaryProfile,
    portfolio: RootPortfolio,
    config: BeamConfig = BeamConfig(),
    on_depth=None,
) -> List[BeamNode]:
    beam = [root]
    for depth in range(config.depth):
        if all(n.terminal for n in beam):
            break
        pool: List[BeamNode] = []
        for node in beam:
            pool.extend([node] if node.terminal else expand(env, node, adversary, portfolio, config))
        beam = retain(pool, config)
        if on_depth is not None:
            on_depth(depth, pool, beam)
    return sorted(beam, key=lambda n: -n.score)


def reconstruct(
    world: World,
    maturity: Sequence[float],
    adversary: AdversaryProfile,
    q_values: Sequence[float],
    config: BeamConfig = BeamConfig(),
    seed: int = 0,
    org_id: str = "org",
) -> Tuple[RootPortfolio, List[ReconstructedPath]]:
    env = MitigationEnv(world.with_config(defender_budget=config.budget))
    state, _ = env.reset_with_maturity(org_id, maturity, [adversary], seed)
    portfolio = build_root_portfolio(q_values, world.mitigation_ids, env.costs(state), config.budget)
    env.apply_action(state, PortfolioAction(portfolio.mitigations, portfolio.total_cost))
    beam = beam_search(env, BeamNode(env.snapshot(state)), adversary, portfolio, config)
    paths = [
        ReconstructedPath(adversary.adversary_id, n.trail, n.score, n.components, n.outcome, rank)
        for rank, n in enumerate(beam)
    ]
    return portfolio, paths


def _reconstruct_job(args):
    world, maturity, adversary, q_values, config, seed, org_id = args
    return reconstruct(world, maturity, adversary, q_values, config, seed, org_id)


def reconstruct_all(
    world: World,
    maturity: Sequence[float],
    adversaries: Sequence[AdversaryProfile],
    q_values: Sequence[float],
    config: BeamConfig = BeamConfig(),
    seed: int = 0,
    org_id: str = "org",
    workers: int = 1,
) -> Tuple[RootPortfolio, List[ReconstructedPath]]:
    """Independent searches per adversary; results are ordered as ``adversaries`` regardless of workers."""
    jobs = [(world, tuple(maturity), adv, tuple(q_values), config, seed + i, org_id) for i, adv in enumerate(adversaries)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_reconstruct_job, jobs))
    else:
        results = [_reconstruct_job(j) for j in jobs]
    portfolio = results[0][0] if results else RootPortfolio((), ())
    return portfolio, [p for _, paths in results for p in paths]


@dataclass
class Candidate:
    mitigation: str
    countered: Tuple[Tuple[str, str], ...]
    occurrences: int
    score_contribution: float
    max_likelihood: float
    paths: Tuple[Tuple[str, int], ...]

    def to_dict(self) -> dict:
        return {
            "mitigation": self.mitigation,
            "countered": [list(p) for p in self.countered],
            "occurrences": self.occurrences,
            "score_contribution": self.score_contribution,
            "max_likelihood": self.max_likelihood,
            "paths": [list(p) for p in self.paths],
        }


def normalized_path_scores(paths: Sequence[ReconstructedPath]) -> List[float]:
    """Min-max over all paths; all-equal scores map to 1."""
    scores = [p.score for p in paths]
    lo, hi = min(scores), max(scores)
    if hi - lo <= 1e-12:
        return [1.0] * len(scores)
    return [(s - lo) / (hi - lo) for s in scores]


def aggregate_candidates(paths: Sequence[ReconstructedPath]) -> List[Candidate]:
    """Fold successful trail mitigations into annotated candidates.

    ``score_contribution`` sums each path's normalized score once per path the
    mitigation succeeds in, then is divided by the largest such sum so it
    lies in [0, 1].
    """
    if not paths:
        return []
    norm = normalized_path_scores(paths)
    acc: Dict[str, dict] = {}
    for path, ns in zip(paths, norm):
        used = set()
        for step in path.trail:
            if not step.success:
                continue
            a = acc.setdefault(step.mitigation, {"countered": set(), "occ": 0, "contrib": 0.0, "lik": 0.0, "paths": set()})
            a["countered"].add((path.adversary_id, step.technique))
            a["occ"] += 1
            a["lik"] = max(a["lik"], step.likelihood)
            a["paths"].add((path.adversary_id, path.rank))
            if step.mitigation not in used:
                used.add(step.mitigation)
                a["contrib"] += ns
    top = max((a["contrib"] for a in acc.values()), default=0.0)
    return [
        Candidate(
            m,
            tuple(sorted(a["countered"])),
            a["occ"],
            a["contrib"] / top if top > 0 else 0.0,
            a["lik"],
            tuple(sorted(a["paths"])),
        )
        for m, a in sorted(acc.items())
    ]


def format_path(path: ReconstructedPath) -> str:
    lines = [f"{path.adversary_id} #{path.rank}  score={path.score:.4f}  outcome={path.outcome}"]
    for i, s in enumerate(path.trail, 1):
        mit = s.mitigation or "-"
        flag = "*" if s.success else " "
        lines.append(f"  {i:2d}. {s.technique:<18} {mit:<6}{flag} {s.result}")
    return "\n".join(lines)
