"""Paired Monte Carlo evaluation, regret against the oracle, and the ablation grid.

Every policy in a comparison starts each episode from the same restored
snapshot, so differences in outcome come from the portfolio alone.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .adversary import AdversaryProfile
from .dqn import DQNAgent, TrainConfig, greedy_fill, make_episode_sampler
from .env import LOSS, TRUNCATED, WIN, EnvConfig, EpisodeState, MitigationEnv, Observation, PortfolioAction, World, rollout
from .errors import EvaluationError
from .maturity import OrgProfile
from .oracle import oracle_select

log = logging.getLogger(__name__)

ALPHA = 1.0
BETA = 0.01


# -- episode corpus -------------------------------------------------------------


@dataclass(frozen=True)
class EpisodeSpec:
    episode_id: int
    org: OrgProfile
    adversaries: Tuple[AdversaryProfile, ...]
    seed: int


@dataclass(frozen=True)
class EpisodeCorpus:
    seed: int
    episodes: Tuple[EpisodeSpec, ...]

    def __len__(self) -> int:
        return len(self.episodes)

    def fingerprint(self) -> str:
        h = hashlib.sha256(str(self.seed).encode())
        for e in self.episodes:
            h.update(f"|{e.episode_id}:{e.org.org_id}:{e.seed}:".encode())
            h.update(",".join(a.adversary_id for a in e.adversaries).encode())
        return h.hexdigest()[:16]


def make_corpus(
    orgs: Sequence[OrgProfile], adversaries: Sequence[AdversaryProfile], n_adversaries: int, n: int, seed: int
) -> EpisodeCorpus:
    sample = make_episode_sampler(orgs, adversaries, n_adversaries, seed)
    eps = []
    for i in range(n):
        org, advs, s = sample(i)
        eps.append(EpisodeSpec(i, org, tuple(advs), s))
    return EpisodeCorpus(seed, tuple(eps))


# -- policies ---------------------------------------------------------------------


class Policy:
    name = "policy"

    def act(self, env: MitigationEnv, state: EpisodeState, obs: Observation, episode_id: int) -> PortfolioAction:
        raise NotImplementedError


class EmptyPolicy(Policy):
    name = "none"

    def act(self, env, state, obs, episode_id):
        return PortfolioAction((), 0.0)


class RandomPolicy(Policy):
    """Uniformly shuffled greedy fill, seeded per episode."""

    name = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def act(self, env, state, obs, episode_id):
        rng = np.random.default_rng([self.seed, episode_id])
        order = list(env.world.mitigation_ids)
        rng.shuffle(order)
        return greedy_fill(order, env.costs(state), env.config.defender_budget)


class OraclePolicy(Policy):
    name = "oracle"

    def act(self, env, state, obs, episode_id):
        return oracle_select(env.world, state.adversaries, state.maturity, env.config.defender_budget)


class DQNPolicy(Policy):
    name = "dqn"

    def __init__(self, agent: DQNAgent, name: str = "dqn"):
        self.agent = agent
        self.name = name

    def act(self, env, state, obs, episode_id):
        return self.agent.greedy_action(state, obs)


class ReplayPolicy(Policy):
    """Replays recorded portfolios by episode id."""

    def __init__(self, portfolios: Mapping[int, Sequence[str]], name: str = "replay"):
        self.portfolios = {k: tuple(v) for k, v in portfolios.items()}
        self.name = name

    @classmethod
    def from_records(cls, records: Iterable["EvalRecord"], policy: str, name: str = "replay") -> "ReplayPolicy":
        return cls({r.episode_id: r.portfolio for r in records if r.policy == policy}, name)

    def act(self, env, state, obs, episode_id):
        try:
            chosen = self.portfolios[episode_id]
        except KeyError:
            raise EvaluationError(f"no recorded portfolio for episode {episode_id}") from None
        return env.make_action(state, chosen)


# -- records ---------------------------------------------------------------------


@dataclass(frozen=True)
class EvalRecord:
    episode_id: int
    policy: str
    outcome: str
    cost: float
    portfolio_size: int
    path_length: int
    loss: int
    j: float
    portfolio: Tuple[str, ...] = ()


def j_contribution(loss: int, cost: float, alpha: float = ALPHA, beta: float = BETA) -> float:
    return -alpha * loss - beta * (cost / 100.0)


def run_episode(
    env: MitigationEnv, policy: Policy, blob: bytes, episode_id: int, alpha: float = ALPHA, beta: float = BETA
) -> EvalRecord:
    state = env.restore(blob)
    if env.snapshot(state) != blob:
        raise EvaluationError(f"episode {episode_id}: restored state differs from snapshot")
    obs = env.observe(state)
    action = policy.act(env, state, obs, episode_id)
    env.apply_action(state, action)
    result = rollout(env, state)
    loss = int(result.outcome in (LOSS, TRUNCATED))
    cost = state.portfolio.total_cost
    return EvalRecord(
        episode_id, policy.name, result.outcome, cost, len(action.selected), result.steps, loss,
        j_contribution(loss, cost, alpha, beta), tuple(action.selected),
    )


def _episode_job(args) -> List[EvalRecord]:
    env, policies, spec, alpha, beta = args
    state, _ = env.reset(spec.org, list(spec.adversaries), spec.seed)
    blob = env.snapshot(state)
    return [run_episode(env, p, blob, spec.episode_id, alpha, beta) for p in policies]


@dataclass
class PolicySummary:
    policy: str
    n: int
    win: float
    loss: float
    truncated: float
    cost: float
    cost_pct: float
    avg_mitigations: float
    path_length: float
    j: float
    j_se: float
    regret: Optional[float] = None

    def row(self) -> dict:
        return asdict(self)


def summarize(records: Sequence[EvalRecord], budget: float) -> PolicySummary:
    n = len(records)
    js = [r.j for r in records]
    mean_j = math.fsum(js) / n
    se = math.sqrt(math.fsum((x - mean_j) ** 2 for x in js) / (n - 1) / n) if n > 1 else 0.0
    cost = math.fsum(r.cost for r in records) / n
    return PolicySummary(
        records[0].policy,
        n,
        sum(r.outcome == WIN for r in records) / n,
        sum(r.outcome == LOSS for r in records) / n,
        sum(r.outcome == TRUNCATED for r in records) / n,
        cost,
        100.0 * cost / budget if budget > 0 else 0.0,
        sum(r.portfolio_size for r in records) / n,
        sum(r.path_length for r in records) / n,
        mean_j,
        se,
    )


@dataclass
class EvalResult:
    records: List[EvalRecord]
    summaries: Dict[str, PolicySummary]
    corpus_fingerprint: str
    reference: Optional[str] = None

    def table(self) -> List[dict]:
        return [s.row() for s in self.summaries.values()]

    def to_csv(self) -> str:
        buf = io.StringIO()
        rows = self.table()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"corpus": self.corpus_fingerprint, "reference": self.reference, "summaries": self.table()}


def paired_evaluate(
    env: MitigationEnv,
    policies: Sequence[Policy],
    corpus: EpisodeCorpus,
    n: Optional[int] = None,
    alpha: float = ALPHA,
    beta: float = BETA,
    reference: Optional[str] = "oracle",
    expected_seed: Optional[int] = None,
    workers: int = 1,
) -> EvalResult:
    if expected_seed is not None and corpus.seed != expected_seed:
        raise EvaluationError(f"corpus seed {corpus.seed} does not match expected {expected_seed}")
    names = [p.name for p in policies]
    if len(set(names)) != len(names):
        raise EvaluationError(f"duplicate policy names {names}")
    episodes = corpus.episodes if n is None else corpus.episodes[:n]
    if not episodes:
        raise EvaluationError("empty episode corpus")
    if n is not None and n > len(corpus):
        raise EvaluationError(f"requested {n} episodes, corpus has {len(corpus)}")
    want = env.config.n_adversaries
    for spec in episodes:
        if want is not None and len(spec.adversaries) != want:
            raise EvaluationError(f"episode {spec.episode_id} has {len(spec.adversaries)} adversaries, env expects {want}")
    jobs = [(env, list(policies), spec, alpha, beta) for spec in episodes]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_episode_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        chunks = [_episode_job(j) for j in jobs]
    records = sorted((r for chunk in chunks for r in chunk), key=lambda r: (r.episode_id, names.index(r.policy)))
    budget = env.config.defender_budget
    summaries = {name: summarize([r for r in records if r.policy == name], budget) for name in names}
    if reference is not None and reference in summaries:
        ref = summaries[reference].j
        for s in summaries.values():
            s.regret = ref - s.j
    return EvalResult(records, summaries, corpus.fingerprint(), reference)


# -- ablations -----------------------------------------------------------------------

DEFAULT_ABLATIONS: Dict[str, Dict[str, object]] = {
    "base": {},
    "adv-budget-50": {"adversary_budget": 50.0},
    "adv-budget-150": {"adversary_budget": 150.0},
    "def-budget-50": {"defender_budget": 50.0},
    "def-budget-150": {"defender_budget": 150.0},
    "batch-32": {"batch_size": 32},
    "batch-128": {"batch_size": 128},
    "simple-reward": {"simple_reward": True},
    "orgs-50": {"org_count": 50},
    "orgs-100": {"org_count": 100},
    "decay-1000": {"decay_steps": 1000},
}

ENV_KEYS = {f.name for f in fields(EnvConfig)}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)}


def split_overrides(overrides: Mapping[str, object]) -> Tuple[dict, dict, Optional[int]]:
    env, train, orgs = {}, {}, None
    for k, v in overrides.items():
        if k == "org_count":
            orgs = int(v)
        elif k in ENV_KEYS:
            env[k] = v
        elif k in TRAIN_KEYS:
            train[k] = v
        else:
            raise EvaluationError(f"unknown ablation override {k!r}")
    return env, train, orgs


def ablation_grid(
    world: World,
    orgs: Sequence[OrgProfile],
    adversaries: Sequence[AdversaryProfile],
    base: TrainConfig,
    corpus: EpisodeCorpus,
    overrides: Mapping[str, Mapping[str, object]] = DEFAULT_ABLATIONS,
    seed: int = 0,
    alpha: float = ALPHA,
    beta: float = BETA,
    workers: int = 1,
    progress: Optional[Callable[[str, PolicySummary], None]] = None,
) -> List[dict]:
    """Train one greedy DQN per variant on identical seeds; evaluate all on ``corpus``."""
    rows = []
    n_adv = world.config.n_adversaries
    for name, ov in overrides.items():
        env_ov, train_ov, org_count = split_overrides(ov)
        variant = world.with_config(**env_ov)
        env = MitigationEnv(variant)
        cfg = replace(base, **train_ov)
        pool = list(orgs[:org_count]) if org_count else list(orgs)
        agent = DQNAgent(env, cfg)
        logs = agent.train(make_episode_sampler(pool, adversaries, n_adv, seed))
        res = paired_evaluate(env, [DQNPolicy(agent), OraclePolicy()], corpus, alpha=alpha, beta=beta, workers=workers)
        summary = res.summaries["dqn"]
        if progress is not None:
            progress(name, summary)
        tail = logs[-min(100, len(logs)):]
        rows.append(
            {
                "variant": name,
                "overrides": dict(ov),
                **summary.row(),
                "train_tail_return": float(np.mean([l["return"] for l in tail])) if tail else 0.0,
            }
        )
    rows.sort(key=lambda r: -r["j"])
    return rows
