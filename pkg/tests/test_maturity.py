import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mitiplan.errors import ParseError, UndefinedMaturityError, ValidationError
from mitiplan.maturity import (
    OrgProfile,
    load_strength_matrix,
    mitigation_maturity,
    power_mean_score,
)


def matrix_doc(entries):
    practices = sorted({p for p, _, _ in entries})
    mitigations = sorted({m for _, m, _ in entries})
    return {
        "practices": practices,
        "mitigations": mitigations,
        "entries": [{"practice": p, "mitigation": m, "strength": s} for p, m, s in entries],
    }


def test_two_practices_equal_strength():
    matrix = load_strength_matrix(matrix_doc([("P1", "M1001", 5), ("P2", "M1001", 5)]))
    org = OrgProfile("o", {"P1": 4, "P2": 1})
    vec = mitigation_maturity(org, matrix, q=2.0)
    assert vec["M1001"] == pytest.approx(math.sqrt(8.5) / 4, abs=1e-12)
    assert round(vec["M1001"], 4) == 0.7289


def test_single_top_practice_is_fully_mature():
    matrix = load_strength_matrix(matrix_doc([("P1", "M1001", 5)]))
    assert mitigation_maturity(OrgProfile("o", {"P1": 4}), matrix)["M1001"] == 1.0


def test_strength_out_of_range_rejected():
    with pytest.raises(ValidationError):
        load_strength_matrix(matrix_doc([("P1", "M1001", 6)]))


def test_missing_mitigation_list_is_parse_error():
    doc = matrix_doc([("P1", "M1001", 5)])
    del doc["mitigations"]
    with pytest.raises(ParseError):
        load_strength_matrix(doc)


def test_mitigation_without_strong_support_rejected():
    with pytest.raises(ValidationError):
        load_strength_matrix(matrix_doc([("P1", "M1001", 1)]))


def test_zero_weights_undefined():
    with pytest.raises(UndefinedMaturityError):
        power_mean_score([3, 2], [0, 0], 2.0)


def test_q_must_exceed_one():
    matrix = load_strength_matrix(matrix_doc([("P1", "M1001", 5)]))
    with pytest.raises(ValueError):
        mitigation_maturity(OrgProfile("o", {"P1": 4}), matrix, q=1.0)


def test_missing_tier_rejected():
    matrix = load_strength_matrix(matrix_doc([("P1", "M1001", 5), ("P2", "M1001", 3)]))
    with pytest.raises(ValidationError):
        mitigation_maturity(OrgProfile("o", {"P1": 4}), matrix)


def test_equal_weights_q1_is_arithmetic_mean():
    tiers = [1, 2, 4]
    assert power_mean_score(tiers, [1, 1, 1], 1.0) == pytest.approx(sum(tiers) / 3, abs=1e-12)


def test_bundled_matrix_gives_values_in_unit_interval():
    from mitiplan import DATA_DIR

    matrix = load_strength_matrix(DATA_DIR / "strength_matrix.json")
    for tier in (1, 4):
        org = OrgProfile("o", {p: tier for p in matrix.practices})
        vec = mitigation_maturity(org, matrix)
        assert all(0.0 <= v <= 1.0 for v in vec.values)


instances = st.integers(1, 6).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(1, 4), min_size=n, max_size=n),
        st.lists(st.integers(1, 5), min_size=n, max_size=n),
        st.floats(1.1, 6.0),
    )
)


@settings(max_examples=200, deadline=None)
@given(instances, st.data())
def test_monotone_in_any_tier(inst, data):
    tiers, strengths, q = inst
    weights = [s / 5 for s in strengths]
    i = data.draw(st.integers(0, len(tiers) - 1))
    if tiers[i] == 4:
        return
    raised = list(tiers)
    raised[i] += 1
    assert power_mean_score(raised, weights, q) >= power_mean_score(tiers, weights, q) - 1e-12


@settings(max_examples=200, deadline=None)
@given(instances, st.floats(0.0, 3.0))
def test_monotone_in_q(inst, dq):
    tiers, strengths, q = inst
    weights = [s / 5 for s in strengths]
    assert power_mean_score(tiers, weights, q + dq) >= power_mean_score(tiers, weights, q) - 1e-12
