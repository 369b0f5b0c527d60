"""A tiny hand-built world where one mitigation is strictly dominant.

One adversary alternates between an initial-access technique and an impact
technique. M1053 blocks the impact technique outright at full maturity, and every
mitigation costs 60 units so a portfolio holds at most one of them.
Picking M1053 therefore guarantees a win; anything else loses about 3/4 of
the time.
"""

from mitiplan.adversary import AdversaryProfile, EffectivenessTable
from mitiplan.costs import AttackerCostTable, PctCostTable
from mitiplan.env import EnvConfig, MitigationEnv, MitigationInfo, World
from mitiplan.flows import WeightedSequence
from mitiplan.maturity import OrgProfile, StrengthMatrix
from mitiplan.vomm import fit

ACCESS = "TA0001:T1566"
IMPACT = "TA0040:T1486"
DOMINANT = "M1053"
MITIGATIONS = ("M1017", "M1031", DOMINANT)


def toy_world(**config) -> World:
    corpus = [WeightedSequence((ACCESS, IMPACT), 1.0, "toy-1")]
    vomm = fit(corpus, max_order=1)
    matrix = StrengthMatrix(("GV.OC-01",), MITIGATIONS, {("GV.OC-01", m): 5 for m in MITIGATIONS})
    infos = {m: MitigationInfo(m, m, 3, 3) for m in MITIGATIONS}
    pct = PctCostTable({(c, k): 0.3 for c in range(1, 6) for k in range(1, 6)})
    attacker = AttackerCostTable({e: 0.1 for e in range(1, 6)})
    table = EffectivenessTable(
        {ACCESS: frozenset({"M1017", "M1031"}), IMPACT: frozenset({DOMINANT})},
        global_avg={(ACCESS, "M1017"): 3.0, (ACCESS, "M1031"): 2.0, (IMPACT, DOMINANT): 5.0},
    )
    cfg = EnvConfig(n_adversaries=1, **config)
    return World(vomm, matrix, infos, pct, attacker, table, None, cfg)


def toy_adversary() -> AdversaryProfile:
    return AdversaryProfile("TOY-1", "criminal", "low", "Medium", frozenset({ACCESS, IMPACT}))


def toy_org() -> OrgProfile:
    # a single top-tier practice gives maturity 1.0 for every mitigation
    return OrgProfile("toy-org", {"GV.OC-01": 4})


def toy_env(**config) -> MitigationEnv:
    return MitigationEnv(toy_world(**config))


def toy_sampler(seed: int = 0):
    org, adv = toy_org(), toy_adversary()
    return lambda i: (org, [adv], seed * 1_000_003 + i)
