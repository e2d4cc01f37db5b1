import pytest

from safedrive.generate import PROFILES, STANDSTILL_GAP, dumps, generate
from safedrive.scenario import parse_scenario, validate_assumptions
from safedrive.simulate import initial_problems


def test_seven_profiles():
    assert len(PROFILES) == 7


@pytest.mark.parametrize("profile", PROFILES)
def test_generation_is_byte_identical(profile):
    assert dumps(generate(17, profile)) == dumps(generate(17, profile))


def test_seeds_differ():
    assert dumps(generate(1, "merge")) != dumps(generate(2, "merge"))


@pytest.mark.parametrize("profile", PROFILES)
@pytest.mark.parametrize("seed", range(5))
def test_generated_scenarios_validate_and_start_safe(profile, seed):
    doc = generate(seed, profile)
    sc = parse_scenario(doc)
    assert validate_assumptions(sc) == []
    assert initial_problems(sc) == {}
    assert sc.world.gap == STANDSTILL_GAP
    assert len(sc.vehicles) >= 1


def test_horizon_is_passed_through():
    assert generate(0, "straight-road", horizon=1500)["horizon"] == 1500


def test_unknown_profile():
    with pytest.raises(ValueError):
        generate(0, "roundabout")
