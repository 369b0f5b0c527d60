import pytest

from mitiplan import DATA_DIR
from mitiplan.adversary import (
    AdversaryProfile,
    EffectivenessTable,
    SpreadTable,
    adv_budget,
    adv_technique_cost,
    effectiveness,
    remediation_probability,
)
from mitiplan.costs import AttackerCostTable
from mitiplan.errors import ConfigError, DomainError, ValidationError

TECH = "TA0002:T1059"


def adversary(soph="Medium", adv_type="criminal", resource="low", effort=None):
    return AdversaryProfile("A1", adv_type, resource, soph, frozenset({TECH}), effort or {})


def table(**tiers):
    return EffectivenessTable({TECH: frozenset({"M1038", "M1042"})}, **tiers)


def test_exact_beats_class():
    t = table(exact={("A1", TECH, "M1038"): 4.0}, by_class={("criminal", "Medium", TECH, "M1038"): 2.0})
    assert effectiveness(t, adversary(), TECH, "M1038") == 4.0
    del t.exact[("A1", TECH, "M1038")]
    assert t.resolve(adversary(), TECH, "M1038") == ("class", 2.0)


def test_global_and_floor():
    t = table(global_avg={(TECH, "M1038"): 2.6})
    assert effectiveness(t, adversary(), TECH, "M1038") == 2.6
    assert effectiveness(t, adversary(), TECH, "M1042") == 1.0


def test_uncovered_pair_is_domain_error():
    with pytest.raises(DomainError):
        effectiveness(table(), adversary(), TECH, "M1050")


def test_remediation_probability_endpoints():
    assert remediation_probability(1.0) == 0.0
    assert remediation_probability(5.0) == 1.0


def test_bundled_effectiveness_in_range(pool):
    t = EffectivenessTable.load(DATA_DIR / "effectiveness.json")
    for adv in pool[:5]:
        for tech, mits in t.coverage.items():
            for m in mits:
                assert 1.0 <= effectiveness(t, adv, tech, m) <= 5.0


def test_attacker_costs_by_sophistication():
    costs = AttackerCostTable({e: 0.08 for e in range(1, 6)})
    assert adv_technique_cost(adversary("Low"), TECH, costs) == pytest.approx(40.0, abs=1e-12)
    assert adv_technique_cost(adversary("High"), TECH, costs) == pytest.approx(16.0, abs=1e-12)
    assert adv_technique_cost(adversary("High"), TECH, costs) < adv_technique_cost(adversary("Low"), TECH, costs)


def test_unknown_tactic_falls_back_to_default_row(caplog):
    costs = AttackerCostTable({e: 0.05 for e in range(1, 6)}, {"TA0001": {e: 0.01 for e in range(1, 6)}})
    assert costs.base_cost(TECH, 2) == 0.05
    assert "default row" in caplog.text


def test_spread_budgets():
    spread = SpreadTable({("criminal", "low"): (10, 1000), ("state", "high"): (100, 10)})
    assert adv_budget(adversary(), spread) == pytest.approx(1.0)
    assert adv_budget(adversary(adv_type="state", resource="high"), spread) == pytest.approx(1000.0)
    with pytest.raises(ConfigError):
        adv_budget(adversary(adv_type="hacktivist"), spread)


def test_bundled_spread_is_monotone():
    SpreadTable.load(DATA_DIR / "spread.json").check_monotone()
    with pytest.raises(ValidationError):
        SpreadTable({("c", "low"): (10, 10), ("c", "medium"): (1, 10)}).check_monotone()


def test_profile_validation_and_roundtrip():
    with pytest.raises(ValidationError):
        AdversaryProfile("A", "c", "low", "Medium", frozenset())
    with pytest.raises(ValidationError):
        adversary(soph="Elite")
    adv = adversary(effort={TECH: 2})
    assert AdversaryProfile.from_dict(adv.to_dict()) == adv
