import pytest
from pydantic import ValidationError

from conftest import AGGRESSIVE, TIMID, TYPICAL, make_spec
from drivercal.config import ConfigError
from drivercal.core.calibration_engine import objective
from drivercal.core.population_generator import (
    GenerationError,
    PopulationGenerator,
    generate,
    initial_state,
)
from drivercal.models.synth_models import Archetype, PopulationSpec


def test_labels_cover_every_driver():
    episodes, labels = generate(make_spec((TIMID, AGGRESSIVE), n_drivers=6, frames=200))
    assert sorted(labels.drivers) == [1, 2, 3, 4, 5, 6]
    assert sorted({e.driver_id for e in episodes}) == [1, 2, 3, 4, 5, 6]
    for episode in episodes:
        assert episode.length == 200
        assert min(episode.gap) > 0


def test_noiseless_constant_leader_gives_identical_drivers():
    episodes, _ = generate(make_spec(n_drivers=3, frames=150, profile="constant"))
    first = episodes[0]
    for episode in episodes[1:]:
        assert episode.ego_velocity == first.ego_velocity
        assert episode.gap == first.gap


def test_same_seed_same_population():
    spec = make_spec((TIMID, AGGRESSIVE), n_drivers=3, frames=200, noise=0.3, seed=9)
    assert generate(spec) == generate(spec)
    other = generate(spec.model_copy(update={"seed": 10}))
    assert other != generate(spec)


def test_noiseless_episodes_are_reproduced_by_their_parameters():
    episodes, labels = generate(make_spec((TIMID, AGGRESSIVE), n_drivers=4, frames=300))
    for episode in episodes:
        params = labels.drivers[episode.driver_id].params
        assert objective(params, [episode]) < 1e-10


def test_archetype_mixture_follows_weights():
    spec = make_spec((TIMID, AGGRESSIVE), n_drivers=200, frames=20, weights=[0.8, 0.2])
    _, labels = generate(spec)
    timid = sum(1 for label in labels.drivers.values() if label.archetype_index == 0)
    assert 130 <= timid <= 190


def test_initial_state():
    state = initial_state(TYPICAL, leader_velocity=14.0)
    assert state.velocity == 14.0
    assert state.gap > 2.0
    slow = initial_state(TYPICAL, leader_velocity=30.0)
    assert slow.velocity == pytest.approx(0.95 * TYPICAL.v0)


def test_weights_must_sum_to_one():
    with pytest.raises(ValidationError):
        PopulationSpec(
            archetypes=[Archetype(name="x", params=TYPICAL, weight=0.5)],
            n_drivers=1,
            frames_per_driver=10,
        )


def test_infeasible_archetype_names_itself():
    spec = make_spec(
        (TYPICAL,), n_drivers=1, frames=200, noise=1000.0, max_regenerations=2
    )
    with pytest.raises(GenerationError, match="archetype_0"):
        generate(spec)


def test_resampled_halves_label_both_draws():
    spec = make_spec(
        (TIMID, AGGRESSIVE), n_drivers=5, frames=300, resample_between_halves=True
    )
    episodes, labels = generate(spec)
    assert len(episodes) == 10
    for driver_id, label in labels.drivers.items():
        first, second = [e for e in episodes if e.driver_id == driver_id]
        assert (first.start_frame, second.start_frame) == (0, 150)
        assert label.second_half_params is not None
        assert objective(label.second_half_params, [second]) < 1e-10


def test_regenerations_are_counted():
    generator = PopulationGenerator(make_spec(n_drivers=2, frames=100, noise=0.2))
    generator.generate()
    assert generator.regenerations >= 0


@pytest.mark.parametrize("frames", [2, 3])
def test_resampled_halves_need_two_frames_each(frames):
    spec = make_spec(n_drivers=1, frames=frames, resample_between_halves=True)
    with pytest.raises(GenerationError, match="at least 4 frames"):
        generate(spec)


def test_shortest_resampled_population():
    spec = make_spec(n_drivers=1, frames=4, resample_between_halves=True)
    episodes, _ = generate(spec)
    assert [episode.length for episode in episodes] == [2, 2]


def test_recorded_leader_is_required_for_the_recorded_profile():
    with pytest.raises(ConfigError, match="recorded_leader"):
        PopulationGenerator(make_spec(n_drivers=1, frames=10, profile="recorded"))
