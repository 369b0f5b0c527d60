"""DQN defender: a small numpy MLP over (maturity, technique matrix) with one Q-head per mitigation.

The portfolio is built greedily in descending Q order under the defender
budget. Because the portfolio is fixed for a whole episode, the default
training unit is one transition per episode whose reward is the discounted
episode return.
"""

from __future__ import annotations

import io
import json
import logging
import math
import zipfile
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .adversary import AdversaryProfile
from .costs import BUDGET_TOL, EPISODE_BUDGET
from .env import EpisodeState, MitigationEnv, Observation, PortfolioAction, rollout
from .errors import ConfigError, TrainingDivergence
from .maturity import OrgProfile

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


# -- network ----------------------------------------------------------------


class QNetwork:
    """Fully connected ReLU network with a linear output layer."""

    def __init__(self, input_dim: int, output_dim: int, hidden: Sequence[int] = (256, 256), seed: int = 0):
        self.sizes = [int(input_dim), *[int(h) for h in hidden], int(output_dim)]
        rng = np.random.default_rng(seed)
        self.params: List[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.params.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def output_dim(self) -> int:
        return self.sizes[-1]

    def copy(self) -> "QNetwork":
        other = QNetwork.__new__(QNetwork)
        other.sizes = list(self.sizes)
        other.params = [p.copy() for p in self.params]
        return other

    def load_state(self, other: "QNetwork") -> None:
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    def forward(self, x: np.ndarray, keep: bool = False):
        acts = [np.atleast_2d(x)]
        h = acts[0]
        n_layers = len(self.params) // 2
        for i in range(n_layers):
            z = h @ self.params[2 * i] + self.params[2 * i + 1]
            h = np.maximum(z, 0.0) if i < n_layers - 1 else z
            acts.append(h)
        return (h, acts) if keep else h

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)

    def backward(self, acts: List[np.ndarray], grad_out: np.ndarray) -> List[np.ndarray]:
        grads: List[np.ndarray] = [None] * len(self.params)
        g = grad_out
        n_layers = len(self.params) // 2
        for i in reversed(range(n_layers)):
            a_in = acts[i]
            grads[2 * i] = a_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.params[2 * i].T) * (acts[i] > 0)
        return grads

    def all_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params)


class Adam:
    def __init__(self, params: List[np.ndarray], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: List[np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def masked_mse(q: np.ndarray, mask: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean squared error over selected heads; every selected head regresses to its row target."""
    n = mask.sum()
    if n == 0:
        return 0.0, np.zeros_like(q)
    diff = (q - targets[:, None]) * mask
    return float((diff**2).sum() / n), 2.0 * diff / n


def td_targets(rewards: np.ndarray, dones: np.ndarray, next_q: np.ndarray, gamma: float) -> np.ndarray:
    return rewards + gamma * (1.0 - dones) * next_q.max(axis=1)


def td_update(
    net: QNetwork,
    target_net: QNetwork,
    batch: Mapping[str, np.ndarray],
    gamma: float,
    optimizer: Adam,
) -> float:
    next_q = target_net(batch["next_obs"])
    y = td_targets(batch["reward"], batch["done"], next_q, gamma)
    q, acts = net.forward(batch["obs"], keep=True)
    loss, grad = masked_mse(q, batch["action"], y)
    if not math.isfinite(loss):
        raise TrainingDivergence(
            f"non-finite loss {loss}; max |Q|={np.abs(q).max():.3g}, max |target|={np.abs(y).max():.3g}"
        )
    optimizer.step(net.backward(acts, grad))
    if not net.all_finite():
        raise TrainingDivergence("non-finite network weights after update")
    return loss


# -- replay -----------------------------------------------------------------


class ReplayBuffer:
    def __init__(self, capacity: int = 10_000):
        self.capacity = capacity
        self.items: deque = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self.items)

    def add(self, obs, action, reward, next_obs, done) -> None:
        self.items.append((np.asarray(obs, float), np.asarray(action, float), float(reward),
                           np.asarray(next_obs, float), float(done)))

    def sample(self, batch_size: int, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        idx = rng.choice(len(self.items), size=min(batch_size, len(self.items)), replace=False)
        rows = [self.items[i] for i in idx]
        return {
            "obs": np.stack([r[0] for r in rows]),
            "action": np.stack([r[1] for r in rows]),
            "reward": np.array([r[2] for r in rows]),
            "next_obs": np.stack([r[3] for r in rows]),
            "done": np.array([r[4] for r in rows]),
        }

    def mean_reward(self) -> float:
        return float(np.mean([r[2] for r in self.items])) if self.items else 0.0


# -- portfolio selection and hybrid policies -----------------------------------


def greedy_fill(order: Sequence[str], costs: Mapping[str, float], budget: float) -> PortfolioAction:
    chosen, spent = [], 0.0
    for m in order:
        c = costs[m]
        if spent + c <= budget + BUDGET_TOL:
            chosen.append(m)
            spent += c
    return PortfolioAction(tuple(chosen), spent)


def greedy_order(values: Sequence[float], mitigations: Sequence[str]) -> List[str]:
    """Descending value, ties broken by ascending mitigation id."""
    return [m for _, m in sorted(zip(values, mitigations), key=lambda vm: (-vm[0], vm[1]))]


def select_portfolio(
    q_values: Sequence[float],
    mitigations: Sequence[str],
    costs: Mapping[str, float],
    epsilon: float,
    rng: np.random.Generator,
    budget: float = EPISODE_BUDGET,
) -> PortfolioAction:
    if epsilon > 0 and rng.random() < epsilon:
        order = list(mitigations)
        rng.shuffle(order)
        return greedy_fill(order, costs, budget)
    return greedy_fill(greedy_order(q_values, mitigations), costs, budget)


def softmax(x: np.ndarray, tau: float = 1.0) -> np.ndarray:
    z = np.asarray(x, float) / tau
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def hybrid_additive(q_values, prior, lam: float, tau: float = 1.0) -> np.ndarray:
    if not 0 <= lam <= 1 or tau <= 0:
        raise ValueError("need lambda in [0, 1] and tau > 0")
    return (1 - lam) * softmax(q_values, tau) + lam * np.asarray(prior, float)


def hybrid_product(q_values, prior, beta: float, tau: float = 1.0) -> np.ndarray:
    if beta < 0 or tau <= 0:
        raise ValueError("need beta >= 0 and tau > 0")
    prior = np.asarray(prior, float)
    if beta == 0:
        return softmax(q_values, tau)
    with np.errstate(divide="ignore"):
        logits = np.asarray(q_values, float) / tau + beta * np.log(prior)
    if not np.isfinite(logits).any():
        log.warning("product-of-experts policy has no mass; falling back to uniform")
        return np.full(len(prior), 1.0 / len(prior))
    logits = logits - logits[np.isfinite(logits)].max()
    w = np.exp(logits)
    return w / w.sum()


def mitigation_prior(env: MitigationEnv, state: EpisodeState, observed_boost: float = 3.0) -> np.ndarray:
    """VOMM next-technique mass pushed onto covering mitigations.

    Each adversary's next-technique distribution (boosted on its observed
    techniques) is split evenly among the mitigations covering each technique;
    uncovered techniques drop out and the result is renormalized.
    """
    world = env.world
    index = {m: i for i, m in enumerate(world.mitigation_ids)}
    mass = np.zeros(len(index))
    for adv, hist in zip(state.adversaries, state.histories):
        p = world.vomm.next_probs(hist).copy()
        for tok in adv.observed_techniques:
            i = world.technique_index.get(tok)
            if i is not None:
                p[i] *= observed_boost
        p /= p.sum()
        for tok, pt in zip(world.techniques, p):
            covering = [m for m in world.effectiveness.coverage.get(tok, ()) if m in index]
            for m in covering:
                mass[index[m]] += pt / len(covering)
    total = mass.sum()
    return mass / total if total > 0 else np.full(len(index), 1.0 / len(index))


# -- training -----------------------------------------------------------------


@dataclass
class TrainConfig:
    episodes: int = 2000
    learning_rate: float = 1e-4
    batch_size: int = 64
    warmup: int = 500
    eps_start: float = 0.99
    eps_min: float = 0.05
    decay_steps: int = 500
    gamma: float = 0.90
    target_sync: int = 250
    replay_capacity: int = 10_000
    hidden: Tuple[int, ...] = (256, 256)
    reward_scale: float = 1e-3
    policy: str = "greedy"  # greedy | additive | product
    mix_start: float = 1.0
    tau: float = 1.0
    per_step: bool = False
    updates_per_episode: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must be in (0, 1)")
        if self.policy not in ("greedy", "additive", "product"):
            raise ConfigError(f"unknown policy {self.policy!r}")
        self.hidden = tuple(self.hidden)

    def epsilon(self, step: int) -> float:
        if step < self.warmup:
            return self.eps_start
        frac = min(1.0, (step - self.warmup) / max(1, self.decay_steps))
        return self.eps_start + frac * (self.eps_min - self.eps_start)

    def mixing(self, step: int) -> float:
        """Prior weight (lambda or beta), annealed to 0 on the epsilon schedule."""
        span = self.eps_start - self.eps_min
        frac = 1.0 if span <= 0 else (self.eps_start - self.epsilon(step)) / span
        return self.mix_start * (1.0 - frac)


EpisodeSampler = Callable[[int], Tuple[OrgProfile, Sequence[AdversaryProfile], int]]


def make_episode_sampler(
    orgs: Sequence[OrgProfile], adversaries: Sequence[AdversaryProfile], n_adversaries: int, seed: int
) -> EpisodeSampler:
    if len(adversaries) < n_adversaries:
        raise ConfigError(f"need {n_adversaries} adversaries, pool has {len(adversaries)}")

    def sample(i: int):
        rng = np.random.default_rng([seed, i])
        org = orgs[int(rng.integers(len(orgs)))]
        picks = rng.choice(len(adversaries), size=n_adversaries, replace=False)
        return org, [adversaries[k] for k in picks], int(rng.integers(2**31))

    return sample


class DQNAgent:
    def __init__(self, env: MitigationEnv, config: TrainConfig = TrainConfig(), net: Optional[QNetwork] = None):
        self.env = env
        self.config = config
        n_slots = env.config.n_adversaries or 1
        self.input_dim = len(env.world.mitigation_ids) + n_slots * len(env.world.techniques)
        self.net = net or QNetwork(self.input_dim, len(env.world.mitigation_ids), config.hidden, config.seed)
        if self.net.sizes[0] != self.input_dim:
            raise ConfigError(f"network input {self.net.sizes[0]} != observation size {self.input_dim}")
        self.target = self.net.copy()
        self.optimizer = Adam(self.net.params, config.learning_rate)
        self.replay = ReplayBuffer(config.replay_capacity)
        self.rng = np.random.default_rng([config.seed, 1])
        self.steps = 0
        self.updates = 0

    @property
    def mitigations(self) -> Tuple[str, ...]:
        return self.env.world.mitigation_ids

    def q_values(self, obs: Observation) -> np.ndarray:
        return self.net(obs.flat())[0]

    def ranking_scores(self, state: EpisodeState, obs: Observation, mix: float) -> np.ndarray:
        q = self.q_values(obs)
        if self.config.policy == "greedy" or mix <= 0:
            return q
        prior = mitigation_prior(self.env, state)
        if self.config.policy == "additive":
            return hybrid_additive(q, prior, min(1.0, mix), self.config.tau)
        return hybrid_product(q, prior, mix, self.config.tau)

    def act(self, state: EpisodeState, obs: Observation, epsilon: float = 0.0, mix: float = 0.0) -> PortfolioAction:
        scores = self.ranking_scores(state, obs, mix)
        return select_portfolio(
            scores, self.mitigations, self.env.costs(state), epsilon, self.rng, self.env.config.defender_budget
        )

    def greedy_action(self, state: EpisodeState, obs: Observation) -> PortfolioAction:
        return greedy_fill(
            greedy_order(self.q_values(obs), self.mitigations), self.env.costs(state), self.env.config.defender_budget
        )

    def _update(self) -> Optional[float]:
        cfg = self.config
        if len(self.replay) < max(cfg.warmup, cfg.batch_size):
            return None
        loss = None
        for _ in range(cfg.updates_per_episode):
            batch = self.replay.sample(cfg.batch_size, self.rng)
            loss = td_update(self.net, self.target, batch, cfg.gamma, self.optimizer)
            self.updates += 1
            if self.updates % cfg.target_sync == 0:
                self.target.load_state(self.net)
        return loss

    def train(self, sampler: EpisodeSampler, episodes: Optional[int] = None) -> List[dict]:
        cfg = self.config
        episodes = cfg.episodes if episodes is None else episodes
        logs: List[dict] = []
        baseline: List[float] = []
        over = 0
        for ep in range(episodes):
            org, advs, seed = sampler(ep)
            state, obs = self.env.reset(org, advs, seed)
            eps, mix = cfg.epsilon(self.steps), cfg.mixing(self.steps)
            action = self.act(state, obs, eps, mix)
            self.env.apply_action(state, action)
            x = obs.flat()
            a = action.multi_hot(self.mitigations)
            result = rollout(self.env, state, gamma=cfg.gamma)
            if cfg.per_step:
                for t, r in enumerate(result.rewards):
                    last = t == len(result.rewards) - 1
                    self.replay.add(x, a, r * cfg.reward_scale, x, last)
                    self.steps += 1
            else:
                self.replay.add(x, a, result.discounted_return * cfg.reward_scale, x, True)
                self.steps += 1
            loss = self._update()
            if loss is not None:
                if len(baseline) < 50:
                    baseline.append(loss)
                else:
                    limit = 10.0 * float(np.median(baseline))
                    over = over + 1 if loss > limit else 0
                    if over >= 100:
                        raise TrainingDivergence(
                            f"100 consecutive losses above {limit:.4g} (10x warm-up median) at episode {ep}"
                        )
            logs.append(
                {
                    "episode": ep,
                    "outcome": result.outcome,
                    "steps": result.steps,
                    "return": result.total_reward,
                    "discounted_return": result.discounted_return,
                    "epsilon": eps,
                    "mix": mix,
                    "portfolio": list(action.selected),
                    "cost": action.total_cost,
                    "loss": loss,
                    "replay_mean_reward": self.replay.mean_reward(),
                }
            )
        return logs

    # -- checkpoints --------------------------------------------------------

    def save(self, path: Union[str, Path]) -> None:
        meta = {
            "version": CHECKPOINT_VERSION,
            "sizes": self.net.sizes,
            "mitigations": list(self.mitigations),
            "techniques": list(self.env.world.techniques),
            "config": asdict(self.config),
        }
        arrays = {"meta": np.array(json.dumps(meta, sort_keys=True))}
        arrays.update({f"p{i}": p for i, p in enumerate(self.net.params)})
        # fixed member timestamps keep checkpoints byte-identical across runs
        with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
            for name, arr in arrays.items():
                info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
                info.compress_type = zipfile.ZIP_DEFLATED
                buf = io.BytesIO()
                np.lib.format.write_array(buf, arr, allow_pickle=False)
                zf.writestr(info, buf.getvalue())

    @classmethod
    def load(cls, path: Union[str, Path], env: MitigationEnv) -> "DQNAgent":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ConfigError(f"checkpoint version {meta.get('version')} unsupported")
            if meta["mitigations"] != list(env.world.mitigation_ids) or meta["techniques"] != list(env.world.techniques):
                raise ConfigError("checkpoint was trained on a different mitigation/technique index")
            sizes = meta["sizes"]
            net = QNetwork(sizes[0], sizes[-1], sizes[1:-1])
            net.params = [data[f"p{i}"].copy() for i in range(len(net.params))]
        cfg = dict(meta["config"])
        return cls(env, TrainConfig(**cfg), net)
