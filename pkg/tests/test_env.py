import numpy as np
import pytest

from mitiplan.adversary import AdversaryProfile, EffectivenessTable
from mitiplan.costs import PctCostTable
from mitiplan.env import (
    EMPTY_ACTION,
    LOSS,
    TRUNCATED,
    WIN,
    EnvConfig,
    MitigationEnv,
    PortfolioAction,
    World,
    cover_eff,
    eff_cov,
    reward,
    rollout,
)
from mitiplan.errors import ConfigError, FeasibilityError, RestoreError, StateError
from toyworld import ACCESS, DOMINANT, IMPACT, toy_adversary, toy_env, toy_org, toy_world


def test_reward_cases():
    assert reward(3, 0.0, 0, False) == 300.0
    table = EffectivenessTable(
        {"TA0002:T1059": frozenset({"M1038"}), "TA0002:T1047": frozenset({"M1026"})},
        global_avg={("TA0002:T1059", "M1038"): 4.0},
    )
    adv = toy_adversary()
    score = cover_eff(["M1038", "M1026"], {"TA0002:T1059": [adv]}, table)
    assert score == 26.0
    assert abs(reward(0, score, 2, False) - 26 / 3) <= 1e-12
    assert reward(0, 0.0, 0, True) == 1000.0
    assert reward(3, 50.0, 1, False, simple=True) == 300.0


def test_eff_cov_cases():
    adv = toy_adversary()
    table = EffectivenessTable(
        {ACCESS: frozenset({"M1", "M2"})}, global_avg={(ACCESS, "M1"): 5.0, (ACCESS, "M2"): 3.0}
    )
    assert eff_cov(IMPACT, ["M1"], {"M1": 1.0}, table, adv) == 0.0
    assert eff_cov(ACCESS, ["M1"], {"M1": 1.0}, table, adv) == 1.0
    assert eff_cov(ACCESS, ["M1", "M2"], {"M1": 0.5, "M2": 1.0}, table, adv) == 0.5


def test_reset_is_deterministic_and_observes_profile():
    env = toy_env()
    a, obs_a = env.reset(toy_org(), [toy_adversary()], 4)
    b, obs_b = env.reset(toy_org(), [toy_adversary()], 4)
    assert env.snapshot(a) == env.snapshot(b)
    assert np.array_equal(obs_a.flat(), obs_b.flat())
    row = obs_a.technique_matrix[0]
    expected = [1.0 if t in toy_adversary().observed_techniques else 0.0 for t in env.world.techniques]
    assert row.tolist() == expected


def test_reset_adversary_count_checked():
    with pytest.raises(ConfigError):
        toy_env().reset(toy_org(), [toy_adversary(), toy_adversary()], 0)


def full_price_env(**config):
    # every mitigation costs exactly 100 units at maturity 1
    w = toy_world(**config)
    pct = PctCostTable({(c, k): 0.5 for c in range(1, 6) for k in range(1, 6)})
    return MitigationEnv(World(w.vomm, w.matrix, w.mitigations, pct, w.attacker_costs, w.effectiveness, None, w.config))


def test_apply_action_boundaries():
    env = full_price_env()
    state, _ = env.reset(toy_org(), [toy_adversary()], 0)
    env.apply_action(state, EMPTY_ACTION)
    assert state.portfolio.total_cost == 0.0
    state, _ = env.reset(toy_org(), [toy_adversary()], 0)
    env.apply_action(state, env.make_action(state, [DOMINANT]))
    assert state.portfolio.total_cost == 100.0
    tight = full_price_env(defender_budget=99.5)
    state, _ = tight.reset(toy_org(), [toy_adversary()], 0)
    with pytest.raises(FeasibilityError) as info:
        tight.apply_action(state, tight.make_action(state, [DOMINANT]))
    assert "0.5" in str(info.value)


def test_portfolio_only_once():
    env = toy_env()
    state, _ = env.reset(toy_org(), [toy_adversary()], 0)
    env.apply_action(state, EMPTY_ACTION)
    with pytest.raises(StateError):
        env.apply_action(state, EMPTY_ACTION)


def test_pre_exhausted_is_immediate_win():
    env = toy_env(adversary_budget=0.0)
    state, _ = env.reset(toy_org(), [toy_adversary()], 0)
    assert state.alive == [False]
    _, _, r, done, _ = env.step(state)
    assert done and state.outcome == WIN and r == 1000.0
    with pytest.raises(StateError):
        env.step(state)


def test_full_coverage_stalls_to_win():
    w = toy_world()
    table = EffectivenessTable(
        {ACCESS: frozenset({DOMINANT}), IMPACT: frozenset({DOMINANT})},
        global_avg={(ACCESS, DOMINANT): 5.0, (IMPACT, DOMINANT): 5.0},
    )
    env = MitigationEnv(World(w.vomm, w.matrix, w.mitigations, w.pct_cost, w.attacker_costs, table, None, w.config))
    state, _ = env.reset(toy_org(), [toy_adversary()], 3)
    env.apply_action(state, env.make_action(state, [DOMINANT]))
    result = rollout(env, state)
    assert result.outcome == WIN
    assert state.histories == [[]]


def test_forced_uncovered_impact_is_loss():
    env = toy_env()
    state, _ = env.reset(toy_org(), [toy_adversary()], 0)
    env.apply_action(state, EMPTY_ACTION)
    _, _, done, event = env.step_forced(state, 0, IMPACT, None)
    assert done and state.outcome == LOSS and event.result == "advanced"


def test_truncation():
    w = toy_world(max_steps=2, charge_blocked=False)
    table = EffectivenessTable(
        {ACCESS: frozenset({DOMINANT}), IMPACT: frozenset({DOMINANT})},
        global_avg={(ACCESS, DOMINANT): 5.0, (IMPACT, DOMINANT): 5.0},
    )
    env = MitigationEnv(World(w.vomm, w.matrix, w.mitigations, w.pct_cost, w.attacker_costs, table, None, w.config))
    state, _ = env.reset(toy_org(), [toy_adversary()], 0)
    env.apply_action(state, env.make_action(state, [DOMINANT]))
    result = rollout(env, state)
    assert result.outcome == TRUNCATED and result.steps == 2


def test_snapshot_roundtrip_and_isolation(tmp_path):
    env = toy_env()
    state, _ = env.reset(toy_org(), [toy_adversary()], 11)
    env.apply_action(state, env.make_action(state, ["M1017"]))
    blob = env.snapshot(state)
    (tmp_path / "s.bin").write_bytes(blob)
    restored = env.restore((tmp_path / "s.bin").read_bytes())
    _, _, r1, _, _ = env.step(state)
    _, _, r2, _, _ = env.step(restored)
    assert r1 == r2 and env.snapshot(state) == env.snapshot(restored)
    parent = env.snapshot(state)
    for _ in range(5):
        child = env.restore(parent)
        if not child.done:
            env.step(child)
    assert env.snapshot(state) == parent


def test_restore_rejects_other_versions():
    env = toy_env()
    state, _ = env.reset(toy_org(), [toy_adversary()], 0)
    blob = env.snapshot(state).replace(b'"version":1', b'"version":9')
    with pytest.raises(RestoreError):
        env.restore(blob)
    with pytest.raises(RestoreError):
        env.restore(b"not json")


def test_bundled_episode_invariants(bundled_env, orgs, pool):
    cfg = bundled_env.config
    for i in range(20):
        advs = [pool[(i + k) % len(pool)] for k in range(cfg.n_adversaries)]
        state, _ = bundled_env.reset(orgs[i % len(orgs)], advs, i)
        bundled_env.apply_action(state, EMPTY_ACTION)
        prev = list(state.budgets)
        bonus = 0
        while not state.done:
            _, _, r, _, _ = bundled_env.step(state)
            assert all(0 <= b <= p for b, p in zip(state.budgets, prev))
            prev = list(state.budgets)
            bonus += r >= 1000
        assert state.step_index <= cfg.max_steps
        assert bonus <= 1


def test_same_inputs_same_trajectory(bundled_env, orgs, pool):
    advs = pool[: bundled_env.config.n_adversaries]
    traces = []
    for _ in range(2):
        state, _ = bundled_env.reset(orgs[0], advs, 42)
        bundled_env.apply_action(state, EMPTY_ACTION)
        traces.append(rollout(bundled_env, state, record=True).trace)
    assert traces[0] == traces[1]
