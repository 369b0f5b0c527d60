import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mitiplan.errors import ConfigError, ValidationError
from mitiplan.orgsynth import (
    MaturityPrior,
    PracticeDifficulty,
    difficulty_shift,
    read_population,
    sample_population,
    sample_population_with_latents,
    tier_probabilities,
    write_population,
)


@pytest.mark.parametrize("cost,complexity,shift", [(3, 2, 0.0), (5, 5, 0.75), (1, 1, -0.45)])
def test_difficulty_shift(cost, complexity, shift):
    assert difficulty_shift(cost, complexity) == pytest.approx(shift, abs=1e-12)


def test_difficulty_shift_rejects_bad_ordinal():
    with pytest.raises(ValidationError):
        difficulty_shift(0, 3)


def test_cutpoint_at_latent_is_half():
    cps = (1.5, 2.5, 3.5)
    p = tier_probabilities(2.5, cps)
    assert p[0] + p[1] == pytest.approx(0.5, abs=1e-12)


def test_top_tier_probability():
    p = tier_probabilities(4.0, (1.5, 2.5, 3.5))
    assert round(p[3], 4) == 0.6225


def test_cutpoints_must_increase():
    with pytest.raises(ValidationError):
        tier_probabilities(2.0, (2.5, 1.5, 3.5))


def test_noise_free_latent_equals_class():
    diffs = [PracticeDifficulty.from_ordinals("P1", 3, 3)]
    (_, cls, latent), = sample_population_with_latents(MaturityPrior(noise_sd=0.0, rng_seed=3), diffs, 1)
    assert latent == float(cls)


def test_same_seed_same_population(tmp_path):
    diffs = [PracticeDifficulty.from_ordinals(f"P{i}", 1 + i % 5, 1 + (i * 2) % 5) for i in range(8)]
    a = sample_population(MaturityPrior(rng_seed=11), diffs, 50)
    b = sample_population(MaturityPrior(rng_seed=11), diffs, 50)
    assert a == b
    write_population(a, tmp_path / "orgs.jsonl")
    assert read_population(tmp_path / "orgs.jsonl") == a


def test_empty_difficulties_rejected():
    with pytest.raises(ConfigError):
        sample_population(MaturityPrior(), [], 3)


def test_prior_validation():
    with pytest.raises(ValidationError):
        MaturityPrior(class_probs=(0.5, 0.5, 0.5, 0.5))


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.floats(-3, 8), min_size=3, max_size=3, unique=True),
    st.floats(0, 6),
    st.floats(0.01, 2),
)
def test_probabilities_sum_to_one_and_dominance(cps, latent, delta):
    cps = tuple(sorted(cps))
    if min(b - a for a, b in zip(cps, cps[1:])) < 1e-6:
        return
    lo = tier_probabilities(latent, cps)
    hi = tier_probabilities(latent + delta, cps)
    assert abs(sum(lo) - 1.0) <= 1e-12
    assert all(p >= 0 for p in lo)
    for k in range(1, 4):
        # raising the latent shifts mass toward higher tiers
        assert sum(hi[:k]) <= sum(lo[:k]) + 1e-12
