"""Episodic mitigation-planning simulator.

The defender commits one portfolio at the start of an episode ("shields up");
afterwards every step lets each live adversary propose a technique from the
VOMM, pay for it and either advance or be blocked. States are plain data and
can be snapshotted to bytes and restored exactly, RNG included.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from . import DATA_DIR
from .adversary import (
    AdversaryProfile,
    EffectivenessTable,
    SpreadTable,
    adv_budget,
    adv_technique_cost,
    load_adversaries,
    remediation_probability,
)
from .costs import EPISODE_BUDGET, BUDGET_TOL, AttackerCostTable, MaturityScaler, PctCostTable
from .errors import ConfigError, FeasibilityError, RestoreError, StateError
from .maturity import MaturityVector, OrgProfile, StrengthMatrix, load_strength_matrix, mitigation_maturity
from .tokens import is_impact
from .vomm import VommModel

log = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1
RUNNING, WIN, LOSS, TRUNCATED = "running", "win", "loss", "truncated"
BLOCK_REWARD = 100.0
WIN_BONUS = 1000.0


@dataclass(frozen=True)
class MitigationInfo:
    mitigation_id: str
    name: str
    cost: int
    complexity: int


@dataclass(frozen=True)
class EnvConfig:
    n_adversaries: Optional[int] = 10
    max_steps: int = 100
    defender_budget: float = EPISODE_BUDGET
    # None -> per-adversary budget from the spread table
    adversary_budget: Optional[float] = EPISODE_BUDGET
    # blocked attempts still consume the attacker's effort
    charge_blocked: bool = True
    simple_reward: bool = False
    q: float = 2.0


@dataclass(frozen=True)
class PortfolioAction:
    selected: Tuple[str, ...]
    total_cost: float

    def __len__(self) -> int:
        return len(self.selected)

    def multi_hot(self, mitigations: Sequence[str]) -> np.ndarray:
        chosen = set(self.selected)
        return np.array([1.0 if m in chosen else 0.0 for m in mitigations])


EMPTY_ACTION = PortfolioAction((), 0.0)


@dataclass
class Observation:
    maturity: np.ndarray
    technique_matrix: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.maturity, self.technique_matrix.ravel()])


@dataclass
class EpisodeState:
    org_id: str
    maturity: Tuple[float, ...]
    adversaries: List[AdversaryProfile]
    histories: List[List[str]]
    budgets: List[float]
    alive: List[bool]
    rng: np.random.Generator
    seed: int
    portfolio: Optional[PortfolioAction] = None
    step_index: int = 0
    outcome: str = RUNNING
    attempted: Dict[str, List[int]] = field(default_factory=dict)
    _eff_cache: Dict[Tuple[int, str], float] = field(default_factory=dict, repr=False, compare=False)

    @property
    def done(self) -> bool:
        return self.outcome != RUNNING


@dataclass
class StepEvent:
    adversary: str
    technique: str
    result: str  # advanced | blocked | stalled
    mitigation: Optional[str] = None


class World:
    """Static inputs shared by every episode: models, tables and configuration."""

    def __init__(
        self,
        vomm: VommModel,
        matrix: StrengthMatrix,
        mitigations: Mapping[str, MitigationInfo],
        pct_cost: PctCostTable,
        attacker_costs: AttackerCostTable,
        effectiveness: EffectivenessTable,
        spread: Optional[SpreadTable] = None,
        config: EnvConfig = EnvConfig(),
        scaler: MaturityScaler = MaturityScaler(),
    ):
        missing = [m for m in matrix.mitigations if m not in mitigations]
        if missing:
            raise ConfigError(f"no cost/complexity ratings for mitigations {missing}")
        if config.adversary_budget is None and spread is None:
            raise ConfigError("spread table required when adversary_budget is not fixed")
        self.vomm = vomm
        self.matrix = matrix
        self.mitigation_ids: Tuple[str, ...] = matrix.mitigations
        self.mitigations = dict(mitigations)
        self.pct_cost = pct_cost
        self.attacker_costs = attacker_costs
        self.effectiveness = effectiveness
        self.spread = spread
        self.config = config
        self.scaler = scaler
        self.techniques: Tuple[str, ...] = vomm.vocab
        self.technique_index = {t: i for i, t in enumerate(self.techniques)}
        self._tech_cost: Dict[Tuple[str, str], float] = {}
        self._min_cost: Dict[str, float] = {}

    def with_config(self, **changes) -> "World":
        return World(
            self.vomm, self.matrix, self.mitigations, self.pct_cost, self.attacker_costs,
            self.effectiveness, self.spread, replace(self.config, **changes), self.scaler,
        )

    # -- derived quantities ----------------------------------------------

    def maturity_of(self, org: OrgProfile) -> MaturityVector:
        return mitigation_maturity(org, self.matrix, self.config.q)

    def mitigation_costs(self, maturity: Sequence[float]) -> Dict[str, float]:
        out = {}
        for m, level in zip(self.mitigation_ids, maturity):
            info = self.mitigations[m]
            out[m] = EPISODE_BUDGET * self.pct_cost(info.cost, info.complexity) * self.scaler(level)
        return out

    def technique_cost(self, adversary: AdversaryProfile, technique: str) -> float:
        key = (adversary.adversary_id, technique)
        hit = self._tech_cost.get(key)
        if hit is None:
            hit = self._tech_cost[key] = adv_technique_cost(adversary, technique, self.attacker_costs)
        return hit

    def min_technique_cost(self, adversary: AdversaryProfile) -> float:
        hit = self._min_cost.get(adversary.adversary_id)
        if hit is None:
            hit = min(self.technique_cost(adversary, t) for t in self.techniques)
            self._min_cost[adversary.adversary_id] = hit
        return hit

    def initial_budget(self, adversary: AdversaryProfile) -> float:
        if self.config.adversary_budget is not None:
            return float(self.config.adversary_budget)
        return adv_budget(adversary, self.spread)


def load_world(
    vomm: VommModel,
    config: EnvConfig = EnvConfig(),
    data_dir: Union[str, Path, None] = None,
) -> World:
    """World backed by the JSON tables in ``data_dir`` (bundled data by default)."""
    root = Path(data_dir) if data_dir is not None else Path(str(DATA_DIR))
    matrix = load_strength_matrix(root / "strength_matrix.json")
    mit_doc = json.loads((root / "mitigations.json").read_text())
    mitigations = {
        r["id"]: MitigationInfo(r["id"], r.get("name", r["id"]), int(r["cost"]), int(r["complexity"]))
        for r in mit_doc["mitigations"]
    }
    adv_doc = json.loads((root / "adversaries.json").read_text())
    levels = adv_doc.get("resource_levels", ["low", "medium", "high"])
    return World(
        vomm,
        matrix,
        mitigations,
        PctCostTable.load(root / "pctcost.json"),
        AttackerCostTable.load(root / "pctcost_adv.json"),
        EffectivenessTable.load(root / "effectiveness.json"),
        SpreadTable.load(root / "spread.json", levels),
        config,
    )


# -- pure scoring pieces ----------------------------------------------------


def eff_cov(
    technique: str,
    selected: Iterable[str],
    maturity: Mapping[str, float],
    table: EffectivenessTable,
    adversary: AdversaryProfile,
) -> float:
    """Best maturity-weighted protection among selected mitigations covering ``technique``."""
    best = 0.0
    for m in selected:
        if table.covers(technique, m):
            eff = table.resolve(adversary, technique, m)[1]
            best = max(best, maturity[m] * remediation_probability(eff))
    return best


def cover_eff(
    selected: Sequence[str],
    attempted: Mapping[str, Sequence[AdversaryProfile]],
    table: EffectivenessTable,
) -> float:
    """+1 per covered-but-unattempted technique, (maxEff + 1) * 5 per covered attempted one."""
    covered = set()
    for m in selected:
        covered |= table.covered_by(m)
    total = 0.0
    for tech in sorted(covered):
        who = attempted.get(tech)
        if not who:
            total += 1.0
            continue
        max_eff = max(
            table.resolve(adv, tech, m)[1] for m in selected if table.covers(tech, m) for adv in who
        )
        total += (max_eff + 1.0) * 5.0
    return total


def reward(blocked: int, cover_score: float, n_selected: int, win: bool, simple: bool = False) -> float:
    r = BLOCK_REWARD * blocked
    if not simple:
        r += cover_score / (n_selected + 1)
    if win:
        r += WIN_BONUS
    return r


# -- simulator ----------------------------------------------------------------


class MitigationEnv:
    def __init__(self, world: World):
        self.world = world

    @property
    def config(self) -> EnvConfig:
        return self.world.config

    def reset(
        self, org: OrgProfile, adversaries: Sequence[AdversaryProfile], seed: int
    ) -> Tuple[EpisodeState, Observation]:
        n = self.config.n_adversaries
        if n is not None and len(adversaries) != n:
            raise ConfigError(f"expected {n} adversaries, got {len(adversaries)}")
        return self.reset_with_maturity(org.org_id, self.world.maturity_of(org).values, adversaries, seed)

    def reset_with_maturity(
        self, org_id: str, maturity: Sequence[float], adversaries: Sequence[AdversaryProfile], seed: int
    ) -> Tuple[EpisodeState, Observation]:
        budgets, alive = [], []
        for adv in adversaries:
            b = self.world.initial_budget(adv)
            budgets.append(b)
            if b <= 0:
                log.warning("adversary %s starts with zero budget; marked exhausted", adv.adversary_id)
            alive.append(b > 0 and b + BUDGET_TOL >= self.world.min_technique_cost(adv))
        state = EpisodeState(
            org_id=org_id,
            maturity=tuple(float(v) for v in maturity),
            adversaries=list(adversaries),
            histories=[[] for _ in adversaries],
            budgets=budgets,
            alive=alive,
            rng=np.random.default_rng(seed),
            seed=int(seed),
        )
        return state, self.observe(state)

    def observe(self, state: EpisodeState) -> Observation:
        n_slots = self.config.n_adversaries or len(state.adversaries)
        z = np.zeros((n_slots, len(self.world.techniques)))
        for j, adv in enumerate(state.adversaries[:n_slots]):
            for tok in adv.observed_techniques:
                i = self.world.technique_index.get(tok)
                if i is not None:
                    z[j, i] = 1.0
        return Observation(np.array(state.maturity), z)

    def costs(self, state: EpisodeState) -> Dict[str, float]:
        return self.world.mitigation_costs(state.maturity)

    def make_action(self, state: EpisodeState, selected: Iterable[str]) -> PortfolioAction:
        costs = self.costs(state)
        selected = tuple(selected)
        return PortfolioAction(selected, sum(costs[m] for m in selected))

    def apply_action(self, state: EpisodeState, action: PortfolioAction) -> EpisodeState:
        """Commit the episode's portfolio. Mutates and returns ``state``."""
        if state.outcome != RUNNING or state.step_index != 0 or state.portfolio is not None:
            raise StateError("portfolio can only be set once, before the first step")
        unknown = [m for m in action.selected if m not in self.world.mitigations]
        if unknown:
            raise ConfigError(f"unknown mitigations {unknown}")
        costs = self.costs(state)
        total = sum(costs[m] for m in action.selected)
        if total > self.config.defender_budget + BUDGET_TOL:
            raise FeasibilityError(total, self.config.defender_budget)
        state.portfolio = PortfolioAction(tuple(action.selected), total)
        state._eff_cache.clear()
        return state

    def _maturity_map(self, state: EpisodeState) -> Dict[str, float]:
        return dict(zip(self.world.mitigation_ids, state.maturity))

    def technique_protection(self, state: EpisodeState, j: int, technique: str) -> float:
        key = (j, technique)
        hit = state._eff_cache.get(key)
        if hit is None:
            selected = state.portfolio.selected if state.portfolio else ()
            hit = eff_cov(technique, selected, self._maturity_map(state), self.world.effectiveness, state.adversaries[j])
            state._eff_cache[key] = hit
        return hit

    def _attempt(
        self, state: EpisodeState, j: int, technique: str, protection: float
    ) -> Tuple[str, bool]:
        """One adversary attempt; returns (result, reached_impact)."""
        adv = state.adversaries[j]
        cost = self.world.technique_cost(adv, technique)
        if state.budgets[j] + BUDGET_TOL < cost:
            return "stalled", False
        succeeded = state.rng.random() < 1.0 - protection
        state.attempted.setdefault(technique, [])
        if j not in state.attempted[technique]:
            state.attempted[technique].append(j)
        if succeeded or self.config.charge_blocked:
            state.budgets[j] = max(0.0, state.budgets[j] - cost)
        if succeeded:
            state.histories[j].append(technique)
            return "advanced", is_impact(technique)
        return "blocked", False

    def _finish_step(self, state: EpisodeState, blocked: int, impact: bool) -> Tuple[float, bool]:
        for j, adv in enumerate(state.adversaries):
            if state.alive[j] and state.budgets[j] + BUDGET_TOL < self.world.min_technique_cost(adv):
                state.alive[j] = False
        state.step_index += 1
        win = False
        if impact:
            state.outcome = LOSS
        elif not any(state.alive):
            state.outcome = WIN
            win = True
        elif state.step_index >= self.config.max_steps:
            state.outcome = TRUNCATED
        selected = state.portfolio.selected if state.portfolio else ()
        cover = 0.0
        if not self.config.simple_reward and selected:
            attempted = {t: [state.adversaries[j] for j in js] for t, js in state.attempted.items()}
            cover = cover_eff(selected, attempted, self.world.effectiveness)
        r = reward(blocked, cover, len(selected), win, self.config.simple_reward)
        return r, state.done

    def step(self, state: EpisodeState) -> Tuple[EpisodeState, Observation, float, bool, List[StepEvent]]:
        if state.done:
            raise StateError(f"episode already terminated ({state.outcome})")
        if state.portfolio is None:
            state.portfolio = EMPTY_ACTION
        blocked, impact, events = 0, False, []
        for j, adv in enumerate(state.adversaries):
            if not state.alive[j]:
                continue
            proposal = self.world.vomm.sample_next(state.histories[j], state.rng)
            result, hit = self._attempt(state, j, proposal, self.technique_protection(state, j, proposal))
            if result != "advanced":
                blocked += 1
            impact |= hit
            events.append(StepEvent(adv.adversary_id, proposal, result))
        r, done = self._finish_step(state, blocked, impact)
        return state, self.observe(state), r, done, events

    def step_forced(
        self, state: EpisodeState, j: int, technique: str, mitigation: Optional[str]
    ) -> Tuple[EpisodeState, float, bool, StepEvent]:
        """Advance only adversary ``j`` with a chosen technique, defended by one chosen mitigation."""
        if state.done:
            raise StateError(f"episode already terminated ({state.outcome})")
        if state.portfolio is None:
            state.portfolio = EMPTY_ACTION
        adv = state.adversaries[j]
        protection = 0.0
        if mitigation is not None:
            protection = eff_cov(
                technique, (mitigation,), self._maturity_map(state), self.world.effectiveness, adv
            )
        result, hit = self._attempt(state, j, technique, protection)
        r, done = self._finish_step(state, 0 if result == "advanced" else 1, hit)
        return state, r, done, StepEvent(adv.adversary_id, technique, result, mitigation)

    # -- snapshots ----------------------------------------------------------

    @staticmethod
    def snapshot(state: EpisodeState) -> bytes:
        doc = {
            "version": SNAPSHOT_VERSION,
            "org_id": state.org_id,
            "maturity": list(state.maturity),
            "adversaries": [a.to_dict() for a in state.adversaries],
            "histories": state.histories,
            "budgets": state.budgets,
            "alive": state.alive,
            "rng": state.rng.bit_generator.state,
            "seed": state.seed,
            "portfolio": None
            if state.portfolio is None
            else {"selected": list(state.portfolio.selected), "total_cost": state.portfolio.total_cost},
            "step_index": state.step_index,
            "outcome": state.outcome,
            "attempted": {t: sorted(js) for t, js in state.attempted.items()},
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()

    @staticmethod
    def restore(blob: bytes) -> EpisodeState:
        try:
            doc = json.loads(blob)
        except (ValueError, TypeError) as exc:
            raise RestoreError(f"unreadable snapshot: {exc}") from exc
        if doc.get("version") != SNAPSHOT_VERSION:
            raise RestoreError(f"snapshot version {doc.get('version')!r} != {SNAPSHOT_VERSION}")
        bitgen = np.random.PCG64()
        bitgen.state = doc["rng"]
        port = doc["portfolio"]
        return EpisodeState(
            org_id=doc["org_id"],
            maturity=tuple(doc["maturity"]),
            adversaries=[AdversaryProfile.from_dict(a) for a in doc["adversaries"]],
            histories=[list(h) for h in doc["histories"]],
            budgets=list(doc["budgets"]),
            alive=list(doc["alive"]),
            rng=np.random.Generator(bitgen),
            seed=doc["seed"],
            portfolio=None if port is None else PortfolioAction(tuple(port["selected"]), port["total_cost"]),
            step_index=doc["step_index"],
            outcome=doc["outcome"],
            attempted={t: list(js) for t, js in doc["attempted"].items()},
        )


@dataclass
class EpisodeResult:
    outcome: str
    steps: int
    total_reward: float
    discounted_return: float
    rewards: List[float]
    trace: List[dict]


def rollout(env: MitigationEnv, state: EpisodeState, gamma: float = 1.0, record: bool = False) -> EpisodeResult:
    """Step ``state`` to termination."""
    rewards, trace = [], []
    while not state.done:
        _, _, r, _, events = env.step(state)
        rewards.append(r)
        if record:
            for ev in events:
                trace.append(
                    {"step": state.step_index, "adversary": ev.adversary, "technique": ev.technique,
                     "result": ev.result, "reward": r}
                )
    disc, g = 0.0, 1.0
    for r in rewards:
        disc += g * r
        g *= gamma
    return EpisodeResult(state.outcome, state.step_index, float(sum(rewards)), disc, rewards, trace)
