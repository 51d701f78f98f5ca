import math

import numpy as np
import pytest

from conftest import AGGRESSIVE, TIMID, TYPICAL, grouped_dataset, make_dataset, make_spec
from drivercal.core.calibration_engine import (
    CalibrationError,
    StagedSearch,
    aggregate_mse,
    driver_seed,
    estimate_fit_noise,
    fit,
    fit_per_driver,
    fit_shared,
    grid_search,
    mse_table,
    normalized_distance,
    objective,
    parameter_distance,
)
from drivercal.core.population_generator import generate
from drivercal.models.calibration_models import Pooling, SearchSpace
from drivercal.models.idm_models import IdmParams

PINNED_V0_SPACE = SearchSpace(
    s0=(0.0, 8.0), T=(0.2, 4.0), a=(0.2, 5.0), b=(0.2, 5.0), fixed={"v0": 20.0}
)


class TestObjective:
    def test_generating_parameters_have_zero_error(self, typical_episodes):
        assert objective(TYPICAL, typical_episodes) < 1e-10

    def test_wrong_parameters_have_positive_error(self, typical_episodes):
        assert objective(AGGRESSIVE, typical_episodes) > 1e-3

    def test_no_episodes_raises(self):
        with pytest.raises(CalibrationError, match="no data"):
            objective(TYPICAL, [])

    def test_pooling_modes_agree_on_equal_lengths(self, typical_episodes):
        episodes = [typical_episodes[0], typical_episodes[0]]
        frames = objective(AGGRESSIVE, episodes, pooling=Pooling.FRAMES)
        per_episode = objective(AGGRESSIVE, episodes, pooling=Pooling.EPISODES)
        assert frames == pytest.approx(per_episode)


class TestStagedSearch:
    def test_candidates_stay_in_bounds_and_pinned_values_hold(self):
        space = SearchSpace(fixed={"v0": 20.0})
        search = StagedSearch(space, n_trials=50, seed=1)
        points = search.exploration_points()
        assert points.shape == (10, 4)
        assert (points >= search.lower).all() and (points <= search.upper).all()
        assert search.to_params(points[0]).v0 == 20.0
        assert (search.param_matrix(points)[:, 0] == 20.0).all()

    def test_simplex_at_a_corner_stays_in_the_unit_cube(self):
        search = StagedSearch(SearchSpace(), n_trials=50, seed=1)
        simplex = search.initial_simplex(np.ones(5), 0.1)
        assert simplex.shape == (6, 5)
        assert (simplex >= 0.0).all() and (simplex <= 1.0).all()
        np.testing.assert_allclose(np.abs(simplex[1:] - simplex[0]).sum(axis=1), 0.1)

    def test_simplex_edge_shrinks_from_ten_to_one_percent(self):
        search = StagedSearch(SearchSpace(), n_trials=100, seed=0)
        assert search.step_fraction(0) == pytest.approx(0.10)
        assert search.step_fraction(1) == pytest.approx(0.05)
        assert search.step_fraction(20) == pytest.approx(0.01)

    def test_screening_starts_from_the_best_exploration_points(self):
        search = StagedSearch(SearchSpace(), n_trials=100, seed=0)
        assert search.screening_starts(np.array([3.0, 0.5, 2.0, 0.1, 9.0])) == [3, 1, 2]

    def test_pinned_everything_repeats_the_single_point(self, typical_episodes):
        space = SearchSpace(fixed=TYPICAL.model_dump(exclude={"delta"}))
        result = fit(typical_episodes, space, n_trials=3, seed=0)
        assert len(result.trial_log) == 3
        assert result.params == TYPICAL


class TestFit:
    def test_same_seed_same_result(self, typical_episodes):
        first = fit(typical_episodes, PINNED_V0_SPACE, n_trials=40, seed=5)
        second = fit(typical_episodes, PINNED_V0_SPACE, n_trials=40, seed=5)
        assert first == second
        assert len(first.trial_log) == 40

    def test_different_seeds_search_differently(self, typical_episodes):
        first = fit(typical_episodes, PINNED_V0_SPACE, n_trials=20, seed=1)
        second = fit(typical_episodes, PINNED_V0_SPACE, n_trials=20, seed=2)
        assert first.trial_log != second.trial_log

    @pytest.mark.parametrize("n_trials", [1, 2, 7, 60])
    def test_budget_is_spent_exactly(self, typical_episodes, n_trials):
        result = fit(typical_episodes, SearchSpace(), n_trials=n_trials, seed=0)
        assert result.n_trials == n_trials
        assert len(result.trial_log) == n_trials
        assert all(SearchSpace().contains(trial.params) for trial in result.trial_log)

    def test_best_trial_is_reported(self, typical_episodes):
        result = fit(typical_episodes, PINNED_V0_SPACE, n_trials=30, seed=3)
        assert result.objective == min(t.objective for t in result.trial_log)
        assert PINNED_V0_SPACE.contains(result.params)
        assert objective(result.params, typical_episodes) == pytest.approx(
            result.objective, rel=1e-9, abs=1e-12
        )

    def test_trial_log_can_be_dropped(self, typical_episodes):
        result = fit(
            typical_episodes, PINNED_V0_SPACE, n_trials=10, seed=3, keep_trial_log=False
        )
        assert result.trial_log == []

    def test_no_episodes_raises(self):
        with pytest.raises(CalibrationError):
            fit([], n_trials=5)

    def test_recovers_noiseless_parameters_in_the_default_space(self, excited_episodes):
        result = fit(excited_episodes, SearchSpace(), n_trials=500, seed=11)
        assert result.objective < 0.05
        for name in ("T", "a", "b"):
            truth = getattr(TYPICAL, name)
            assert abs(getattr(result.params, name) - truth) / truth < 0.25, name

    def test_two_parameter_fit_matches_grid_oracle(self, typical_episodes):
        # 200 points at a spacing of 0.0125 put the truth on a grid node
        space = SearchSpace(
            T=(0.5, 2.9875),
            a=(0.5, 2.9875),
            fixed={"v0": 20.0, "s0": TYPICAL.s0, "b": TYPICAL.b},
        )
        grid_params, grid_value, axes = grid_search(typical_episodes, space, resolution=200)
        assert len(axes["T"]) == len(axes["a"]) == 200
        assert grid_params.T == pytest.approx(TYPICAL.T)
        assert grid_params.a == pytest.approx(TYPICAL.a)
        assert grid_value < 1e-10

        result = fit(typical_episodes, space, n_trials=400, seed=2)
        cell = {name: axis[1] - axis[0] for name, axis in axes.items()}
        assert abs(result.params.T - grid_params.T) <= cell["T"]
        assert abs(result.params.a - grid_params.a) <= cell["a"]

    def test_refined_grids_never_lose_ground(self, typical_episodes):
        # nested grids; only the finest puts T = a = 1.5 on a node
        space = SearchSpace(
            T=(0.45, 2.45),
            a=(0.45, 2.45),
            fixed={"v0": 20.0, "s0": TYPICAL.s0, "b": TYPICAL.b},
        )
        values = [
            grid_search(typical_episodes, space, resolution=resolution)[1]
            for resolution in (11, 21, 41)
        ]
        assert values[1] <= values[0] * (1 + 1e-9)
        assert values[2] <= values[1] * (1 + 1e-9)
        assert values[0] > 1e-8
        assert values[2] < 1e-10

    def test_grid_search_needs_two_free_parameters(self, typical_episodes):
        with pytest.raises(ValueError):
            grid_search(typical_episodes, SearchSpace(fixed={"v0": 20.0}), resolution=5)


class TestPopulationFits:
    @pytest.fixture(scope="class")
    def dataset(self):
        return make_dataset(make_spec((TIMID, AGGRESSIVE), n_drivers=4, frames=300, seed=4))

    def test_per_driver_seeds_are_derived(self, dataset):
        fits = fit_per_driver(dataset, PINNED_V0_SPACE, n_trials=10, seed=9)
        assert list(fits) == sorted(dataset)
        for driver_id, result in fits.items():
            assert result.driver_id == driver_id
            assert result.seed == driver_seed(9, driver_id)

    def test_parallel_fits_equal_serial_fits(self, dataset):
        serial = fit_per_driver(dataset, PINNED_V0_SPACE, n_trials=10, seed=9, jobs=1)
        parallel = fit_per_driver(dataset, PINNED_V0_SPACE, n_trials=10, seed=9, jobs=2)
        assert serial == parallel

    def test_mse_table_aggregates(self, dataset):
        per_driver = fit_per_driver(dataset, PINNED_V0_SPACE, n_trials=30, seed=1)
        shared = fit_shared(dataset, PINNED_V0_SPACE, n_trials=30, seed=1)
        rows, per_mode = mse_table(dataset, per_driver, shared, "toy")
        assert [row.mode for row in rows] == ["per_driver", "shared"]
        mses = [per_mode["per_driver"][d] for d in sorted(dataset)]
        row = rows[0]
        assert row.dataset == "toy"
        assert row.n_drivers == 4
        assert row.mse_mean == pytest.approx(np.mean(mses))
        assert row.mse_sd == pytest.approx(np.std(mses, ddof=1))
        assert row.mse_se == pytest.approx(np.std(mses, ddof=1) / 2.0)


class TestDriverSpecificFits:
    def test_per_driver_fits_beat_the_shared_fit(self):
        dataset, _ = grouped_dataset(
            [(TIMID, 5), (AGGRESSIVE, 5)], frames=600, seed=31, noise=0.3
        )
        per_driver = fit_per_driver(dataset, SearchSpace(), n_trials=300, seed=1)
        shared = fit_shared(dataset, SearchSpace(), n_trials=300, seed=1)
        rows, _ = mse_table(dataset, per_driver, shared, "two_archetypes")
        own, common = rows
        pooled_se = math.hypot(own.mse_se, common.mse_se)
        assert common.mse_mean - own.mse_mean > 2.0 * pooled_se

    def test_fitted_headways_keep_the_archetype_order(self):
        dataset, truth = grouped_dataset(
            [(TIMID, 3), (AGGRESSIVE, 3)], frames=600, seed=41, noise=0.1
        )
        fits = fit_per_driver(dataset, SearchSpace(), n_trials=300, seed=2)
        timid = [fits[d].params.T for d in fits if truth[d] == TIMID]
        aggressive = [fits[d].params.T for d in fits if truth[d] == AGGRESSIVE]
        assert len(timid) == len(aggressive) == 3
        assert min(timid) > max(aggressive)


def test_aggregate_of_single_driver_has_zero_spread():
    row = aggregate_mse([0.4], "d", "per_driver")
    assert (row.mse_mean, row.mse_sd, row.mse_se) == (0.4, 0.0, 0.0)


def test_distances():
    p = IdmParams(v0=20.0, s0=2.0, T=1.0, a=1.0, b=1.0)
    q = IdmParams(v0=23.0, s0=6.0, T=1.0, a=1.0, b=1.0)
    assert parameter_distance(p, q) == pytest.approx(5.0)
    space = SearchSpace(v0=(10.0, 40.0), s0=(0.0, 8.0))
    assert normalized_distance(p, q, space) == pytest.approx(math.hypot(0.1, 0.5))


def test_driver_seed_is_stable_and_key_sensitive():
    assert driver_seed(1, 5) == driver_seed(1, 5)
    assert driver_seed(1, 5) != driver_seed(1, 6)
    assert driver_seed(1, (5, 0, 1)) != driver_seed(1, (5, 0, 0))


class TestFitNoise:
    def test_needs_two_repeats(self, typical_episodes):
        with pytest.raises(ValueError):
            estimate_fit_noise(typical_episodes, PINNED_V0_SPACE, n_trials=5, n_repeats=1)

    def test_short_noisy_data_is_noisier_to_fit(self, typical_episodes):
        episodes, _ = generate(make_spec(n_drivers=1, frames=30, seed=8, noise=0.5))
        long_noise = estimate_fit_noise(
            typical_episodes[:1], PINNED_V0_SPACE, n_trials=150, n_repeats=3, seed=1
        )
        short_noise = estimate_fit_noise(
            episodes, PINNED_V0_SPACE, n_trials=150, n_repeats=3, seed=1
        )
        assert long_noise.n_repeats == 3
        assert all(std >= 0 for std in long_noise.param_std.values())
        assert long_noise.param_std["v0"] == 0.0
        assert long_noise.mean_pairwise_distance < short_noise.mean_pairwise_distance
