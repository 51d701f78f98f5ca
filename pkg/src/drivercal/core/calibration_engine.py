"""
IDM calibration.

Fits IdmParams to car-following episodes by minimizing the closed-loop
velocity MSE with a staged derivative-free search: a scrambled Sobol
exploration over the first 20% of trials, then bounded Nelder-Mead rounds
restarted with an initial simplex edge shrinking from 10% to 1% of each range.
"""

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, Hashable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import Bounds, minimize
from scipy.stats import qmc

from drivercal.core.idm import rollout, rollout_batch
from drivercal.models.calibration_models import (
    CalibrationResult,
    FitNoiseEstimate,
    MseRow,
    Pooling,
    SearchSpace,
    TrialRecord,
)
from drivercal.models.idm_models import PARAM_NAMES, EgoState, IdmParams, SimulationOptions
from drivercal.models.trajectory_models import FollowEpisode

logger = logging.getLogger(__name__)

EXPLORATION_FRACTION = 0.2
INITIAL_STEP_FRACTION = 0.10
FINAL_STEP_FRACTION = 0.01
STEP_DECAY = 0.5
SCREENED_STARTS = 3
SCREEN_FRACTION = 0.1
# unit-cube coordinates
SIMPLEX_XATOL = 1e-6
SIMPLEX_FATOL = 1e-12
MAX_TRIAL_LOG = 10_000
GRID_CHUNK = 2_000


class CalibrationError(Exception):
    """Raised when a calibration cannot run (e.g. no data)."""

    pass


def _initial_state(episode: FollowEpisode) -> EgoState:
    return EgoState(velocity=episode.ego_velocity[0], gap=episode.gap[0])


def objective(
    params: IdmParams,
    episodes: Sequence[FollowEpisode],
    options: Optional[SimulationOptions] = None,
    pooling: Union[Pooling, str] = Pooling.FRAMES,
) -> float:
    """Closed-loop velocity MSE of params on episodes, in (m/s)^2.

    Every episode is rolled out from its recorded initial velocity and gap
    against its leader series. FRAMES pools squared errors over all frames,
    EPISODES averages the per-episode MSEs.

    Raises:
        CalibrationError: If episodes is empty
    """
    if not episodes:
        raise CalibrationError("no data")
    options = options or SimulationOptions()
    pooling = Pooling(pooling)

    total_sq = 0.0
    total_frames = 0
    episode_mses = []
    for episode in episodes:
        result = rollout(
            params,
            _initial_state(episode),
            episode.leader_velocity,
            dt=episode.dt,
            options=options,
        )
        sq = 0.0
        for predicted, truth in zip(result.velocities, episode.ego_velocity):
            sq += (predicted - truth) ** 2
        total_sq += sq
        total_frames += episode.length
        episode_mses.append(sq / episode.length)

    if pooling is Pooling.EPISODES:
        return float(sum(episode_mses) / len(episode_mses))
    return total_sq / total_frames


def objective_batch(
    param_matrix: np.ndarray,
    episodes: Sequence[FollowEpisode],
    options: Optional[SimulationOptions] = None,
    pooling: Union[Pooling, str] = Pooling.FRAMES,
    delta: float = 4.0,
) -> np.ndarray:
    """Vectorized objective for many (v0, s0, T, a, b) rows."""
    if not episodes:
        raise CalibrationError("no data")
    options = options or SimulationOptions()
    pooling = Pooling(pooling)
    params = np.atleast_2d(np.asarray(param_matrix, dtype=float))

    total_sq = np.zeros(params.shape[0])
    episode_mses = []
    total_frames = 0
    for episode in episodes:
        velocities, _, _ = rollout_batch(
            params,
            _initial_state(episode),
            episode.leader_velocity,
            dt=episode.dt,
            options=options,
            delta=delta,
        )
        sq = ((velocities - np.asarray(episode.ego_velocity)) ** 2).sum(axis=1)
        total_sq += sq
        total_frames += episode.length
        episode_mses.append(sq / episode.length)

    if pooling is Pooling.EPISODES:
        return np.mean(episode_mses, axis=0)
    return total_sq / total_frames


def driver_seed(seed: int, key: Hashable) -> int:
    """Derive a reproducible sub-seed for a driver (or any integer-tuple key)."""
    entropy = [seed] + list(key if isinstance(key, tuple) else (key,))
    entropy = [int(value) for value in entropy]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


class _BudgetSpent(Exception):
    """A search (or one simplex round) has used its evaluations."""

    pass


class StagedSearch:
    """Staged global-then-local black-box minimizer over a SearchSpace.

    Exploration evaluates a scrambled Sobol sample over the first 20% of the
    trials. The local stage runs bounded Nelder-Mead rounds in unit-cube
    coordinates, first from each of the best exploration points and then
    repeatedly from the incumbent, with the initial simplex edge shrinking
    geometrically from 10% to 1% of each range. Candidates are always inside
    the bounds; pinned parameters never move.
    """

    def __init__(self, space: SearchSpace, n_trials: int, seed: int):
        if n_trials < 1:
            raise ValueError("n_trials must be at least 1")
        self.space = space
        self.n_trials = n_trials
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.free = space.free_names
        self.lower = np.array([space.bounds(name)[0] for name in self.free])
        self.upper = np.array([space.bounds(name)[1] for name in self.free])
        self.width = self.upper - self.lower
        if self.free:
            self.n_explore = min(n_trials, max(1, math.ceil(EXPLORATION_FRACTION * n_trials)))
        else:
            self.n_explore = n_trials
        self.n_local = n_trials - self.n_explore

    def to_params(self, free_values: np.ndarray) -> IdmParams:
        values = dict(self.space.fixed)
        for name, value in zip(self.free, free_values):
            values[name] = float(value)
        return IdmParams(**values, delta=self.space.delta)

    def to_unit(self, free_values: np.ndarray) -> np.ndarray:
        return (np.asarray(free_values, dtype=float) - self.lower) / self.width

    def from_unit(self, unit: np.ndarray) -> np.ndarray:
        return np.clip(self.lower + np.asarray(unit) * self.width, self.lower, self.upper)

    def param_matrix(self, points: np.ndarray) -> np.ndarray:
        """(v0, s0, T, a, b) rows for free-parameter points, pinned values filled in."""
        points = np.atleast_2d(points)
        columns = []
        for name in PARAM_NAMES:
            if name in self.free:
                columns.append(points[:, self.free.index(name)])
            else:
                columns.append(np.full(points.shape[0], self.space.fixed[name]))
        return np.column_stack(columns)

    def exploration_points(self) -> np.ndarray:
        if not self.free:
            return np.zeros((self.n_explore, 0))
        sampler = qmc.Sobol(d=len(self.free), scramble=True, seed=self.rng)
        with warnings.catch_warnings():
            # balance warning for sample sizes that are not powers of two
            warnings.simplefilter("ignore", UserWarning)
            unit = sampler.random(self.n_explore)
        return qmc.scale(unit, self.lower, self.upper)

    def step_fraction(self, round_index: int) -> float:
        """Initial simplex edge of a local round, as a share of each range."""
        return max(FINAL_STEP_FRACTION, INITIAL_STEP_FRACTION * STEP_DECAY**round_index)

    def initial_simplex(self, unit_start: np.ndarray, fraction: float) -> np.ndarray:
        """Axis-aligned simplex around unit_start, every vertex inside the unit cube."""
        d = len(unit_start)
        simplex = np.tile(np.asarray(unit_start, dtype=float), (d + 1, 1))
        for j in range(d):
            direction = 1.0 if unit_start[j] + fraction <= 1.0 else -1.0
            simplex[j + 1, j] += direction * fraction
        return simplex

    @property
    def screening_budget(self) -> int:
        """Evaluations granted to each screening round."""
        return max(2 * (len(self.free) + 1), int(SCREEN_FRACTION * self.n_trials))

    def screening_starts(self, values: np.ndarray) -> List[int]:
        """Indices of the best exploration points, best first."""
        order = np.argsort(np.asarray(values), kind="stable")
        return [int(i) for i in order[:SCREENED_STARTS]]


def fit(
    episodes: Sequence[FollowEpisode],
    space: Optional[SearchSpace] = None,
    n_trials: int = 500,
    seed: int = 0,
    options: Optional[SimulationOptions] = None,
    pooling: Union[Pooling, str] = Pooling.FRAMES,
    keep_trial_log: bool = True,
    driver_id: Optional[int] = None,
) -> CalibrationResult:
    """Fit IDM parameters to episodes.

    Exactly n_trials objective evaluations are spent: the Sobol sample is
    evaluated in one vectorized batch, then local rounds run until the budget
    is used.

    Args:
        episodes: Episodes pooled into one objective
        space: Search space (defaults to SearchSpace())
        n_trials: Number of objective evaluations
        seed: RNG seed; identical seeds give identical trial logs
        options: Integration switches
        pooling: Frame- or episode-weighted MSE
        keep_trial_log: Store every trial (improving ones only above 10,000)
        driver_id: Recorded on the result

    Returns:
        CalibrationResult with the best trial

    Raises:
        CalibrationError: If episodes is empty
    """
    if not episodes:
        raise CalibrationError("no data")
    space = space or SearchSpace()
    options = options or SimulationOptions()
    search = StagedSearch(space, n_trials, seed)
    keep_all = keep_trial_log and n_trials <= MAX_TRIAL_LOG

    trial_log: List[TrialRecord] = []
    best_params: Optional[IdmParams] = None
    best_value = math.inf
    best_unit: Optional[np.ndarray] = None
    used = 0

    def record(unit: np.ndarray, params: IdmParams, value: float) -> None:
        nonlocal best_params, best_value, best_unit, used
        used += 1
        improved = value < best_value
        if improved:
            best_params, best_value, best_unit = params, value, unit
        if keep_all or (keep_trial_log and improved):
            trial_log.append(TrialRecord(params=params, objective=value))

    def local_round(
        unit_start: np.ndarray, start_value: float, fraction: float, allowance: int
    ) -> int:
        spent = 0

        def evaluate(unit: np.ndarray) -> float:
            nonlocal spent
            if np.array_equal(unit, unit_start):
                return start_value
            if spent >= allowance or used >= n_trials:
                raise _BudgetSpent()
            spent += 1
            point = search.from_unit(unit)
            params = search.to_params(point)
            value = objective(params, episodes, options, pooling)
            record(search.to_unit(point), params, value)
            return value

        try:
            minimize(
                evaluate,
                unit_start,
                method="Nelder-Mead",
                bounds=Bounds(np.zeros(len(unit_start)), np.ones(len(unit_start))),
                options={
                    "initial_simplex": search.initial_simplex(unit_start, fraction),
                    "maxfev": allowance + 1,
                    "xatol": SIMPLEX_XATOL,
                    "fatol": SIMPLEX_FATOL,
                    "adaptive": True,
                },
            )
        except _BudgetSpent:
            pass
        return spent

    points = search.exploration_points()
    values = objective_batch(search.param_matrix(points), episodes, options, pooling, space.delta)
    values = np.where(np.isfinite(values), values, np.inf)
    for point, value in zip(points, values):
        record(search.to_unit(point), search.to_params(point), float(value))

    if search.n_local:
        for index in search.screening_starts(values):
            if used >= n_trials:
                break
            local_round(
                search.to_unit(points[index]),
                float(values[index]),
                search.step_fraction(0),
                search.screening_budget,
            )
        round_index = 1
        while used < n_trials:
            spent = local_round(
                best_unit, best_value, search.step_fraction(round_index), n_trials - used
            )
            round_index += 1
            if spent == 0:
                break

    assert best_params is not None
    logger.debug(
        f"Fit driver={driver_id} seed={seed}: objective {best_value:.6g} "
        f"after {used} trials"
    )
    return CalibrationResult(
        params=best_params,
        objective=best_value,
        n_trials=n_trials,
        seed=seed,
        driver_id=driver_id,
        trial_log=trial_log,
    )


@dataclass
class FitTask:
    """A picklable unit of work for the fit pool."""

    episodes: List[FollowEpisode]
    seed: int
    space: SearchSpace = field(default_factory=SearchSpace)
    n_trials: int = 500
    options: SimulationOptions = field(default_factory=SimulationOptions)
    pooling: Pooling = Pooling.FRAMES
    keep_trial_log: bool = False
    driver_id: Optional[int] = None


def _run_fit_task(task: FitTask) -> CalibrationResult:
    return fit(
        task.episodes,
        task.space,
        task.n_trials,
        task.seed,
        task.options,
        task.pooling,
        task.keep_trial_log,
        task.driver_id,
    )


def run_fit_tasks(
    tasks: Mapping[Hashable, FitTask], jobs: int = 1
) -> Dict[Hashable, CalibrationResult]:
    """Run independent fits, in worker processes when jobs > 1.

    Results are returned keyed like tasks, keys in ascending order.
    """
    results: Dict[Hashable, CalibrationResult] = {}
    if jobs <= 1 or len(tasks) <= 1:
        for key, task in tasks.items():
            results[key] = _run_fit_task(task)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            future_to_key = {
                executor.submit(_run_fit_task, task): key for key, task in tasks.items()
            }
            for future in as_completed(future_to_key):
                key = future_to_key[future]
                results[key] = future.result()
    return {key: results[key] for key in sorted(results)}


def fit_per_driver(
    dataset: Mapping[int, Sequence[FollowEpisode]],
    space: Optional[SearchSpace] = None,
    n_trials: int = 500,
    seed: int = 0,
    options: Optional[SimulationOptions] = None,
    pooling: Union[Pooling, str] = Pooling.FRAMES,
    jobs: int = 1,
    keep_trial_log: bool = False,
) -> Dict[int, CalibrationResult]:
    """Independent fit per driver, each with a seed derived from (seed, driver_id).

    Drivers without episodes are omitted.
    """
    space = space or SearchSpace()
    options = options or SimulationOptions()
    tasks = {
        driver_id: FitTask(
            episodes=list(episodes),
            seed=driver_seed(seed, driver_id),
            space=space,
            n_trials=n_trials,
            options=options,
            pooling=Pooling(pooling),
            keep_trial_log=keep_trial_log,
            driver_id=driver_id,
        )
        for driver_id, episodes in dataset.items()
        if episodes
    }
    logger.info(f"Fitting {len(tasks)} drivers with {n_trials} trials (jobs={jobs})")
    return run_fit_tasks(tasks, jobs)  # type: ignore[return-value]


def fit_shared(
    dataset: Mapping[int, Sequence[FollowEpisode]],
    space: Optional[SearchSpace] = None,
    n_trials: int = 500,
    seed: int = 0,
    options: Optional[SimulationOptions] = None,
    pooling: Union[Pooling, str] = Pooling.FRAMES,
    keep_trial_log: bool = False,
) -> CalibrationResult:
    """One parameter set fitted on the pooled frames of every driver."""
    pooled = [episode for episodes in dataset.values() for episode in episodes]
    logger.info(f"Fitting shared parameters on {len(pooled)} episodes")
    return fit(pooled, space, n_trials, seed, options, pooling, keep_trial_log)


def parameter_distance(p: IdmParams, q: IdmParams) -> float:
    """Euclidean distance between raw (v0, s0, T, a, b) vectors."""
    return math.dist(p.as_vector(), q.as_vector())


def normalized_distance(p: IdmParams, q: IdmParams, space: SearchSpace) -> float:
    """Euclidean distance with each parameter scaled by its search range."""
    return math.sqrt(
        sum(
            ((getattr(p, name) - getattr(q, name)) / space.width(name)) ** 2
            for name in PARAM_NAMES
        )
    )


def estimate_fit_noise(
    episodes: Sequence[FollowEpisode],
    space: Optional[SearchSpace] = None,
    n_trials: int = 500,
    n_repeats: int = 3,
    seed: int = 0,
    options: Optional[SimulationOptions] = None,
    pooling: Union[Pooling, str] = Pooling.FRAMES,
    seeds: Optional[Sequence[int]] = None,
) -> FitNoiseEstimate:
    """Refit the same data n_repeats times and measure the parameter spread.

    Args:
        seeds: Explicit per-repeat seeds; derived from seed when omitted

    Raises:
        CalibrationError: If episodes is empty
        ValueError: If fewer than two repeats are requested
    """
    if n_repeats < 2:
        raise ValueError("n_repeats must be at least 2")
    if seeds is None:
        seeds = [driver_seed(seed, repeat) for repeat in range(n_repeats)]
    elif len(seeds) != n_repeats:
        raise ValueError("seeds must have n_repeats entries")

    fits = [fit(episodes, space, n_trials, s, options, pooling, False) for s in seeds]
    return fit_noise_from_results(fits)


def fit_noise_from_results(fits: Sequence[CalibrationResult]) -> FitNoiseEstimate:
    """Per-parameter std (ddof=1) and mean pairwise distance of repeated fits."""
    if len(fits) < 2:
        raise ValueError("need at least two fits to measure refit noise")
    vectors = np.array([result.params.as_vector() for result in fits])
    stds = vectors.std(axis=0, ddof=1)
    distances = [parameter_distance(p.params, q.params) for p, q in combinations(fits, 2)]
    return FitNoiseEstimate(
        param_std={name: float(std) for name, std in zip(PARAM_NAMES, stds)},
        mean_pairwise_distance=float(np.mean(distances)),
        n_repeats=len(fits),
    )


def grid_search(
    episodes: Sequence[FollowEpisode],
    space: SearchSpace,
    resolution: int = 200,
    free: Optional[Sequence[str]] = None,
    options: Optional[SimulationOptions] = None,
    pooling: Union[Pooling, str] = Pooling.FRAMES,
) -> Tuple[IdmParams, float, Dict[str, np.ndarray]]:
    """Exhaustive search over two free parameters.

    Args:
        episodes: Episodes pooled into one objective
        space: Bounds; every parameter outside free must be pinned in space.fixed
        resolution: Grid points per axis, bounds included
        free: The two searched parameters (defaults to space.free_names)
        options: Integration switches
        pooling: Frame- or episode-weighted MSE

    Returns:
        (best params, best objective, grid axis per free parameter)

    Raises:
        ValueError: If not exactly two parameters are free
    """
    free = list(free) if free is not None else space.free_names
    if len(free) != 2:
        raise ValueError(f"grid search needs exactly two free parameters, got {free}")
    unpinned = [name for name in PARAM_NAMES if name not in free and name not in space.fixed]
    if unpinned:
        raise ValueError(f"parameters {unpinned} must be pinned for a grid search")
    axes = {name: np.linspace(*space.bounds(name), resolution) for name in free}
    mesh = np.meshgrid(axes[free[0]], axes[free[1]], indexing="ij")
    columns = []
    for name in PARAM_NAMES:
        if name in free:
            columns.append(mesh[free.index(name)].ravel())
        else:
            columns.append(np.full(resolution * resolution, space.fixed[name]))
    candidates = np.column_stack(columns)

    values = np.concatenate(
        [
            objective_batch(
                candidates[i : i + GRID_CHUNK], episodes, options, pooling, space.delta
            )
            for i in range(0, len(candidates), GRID_CHUNK)
        ]
    )
    values = np.where(np.isfinite(values), values, np.inf)
    best = int(np.argmin(values))
    params = IdmParams.from_vector(candidates[best].tolist(), delta=space.delta)
    logger.debug(f"Grid search over {free}: best objective {values[best]:.6g}")
    return params, float(values[best]), axes


def aggregate_mse(
    mses: Sequence[float], dataset: str, mode: str
) -> MseRow:
    """Mean, standard error and standard deviation of per-driver MSEs."""
    values = np.asarray(mses, dtype=float)
    n = len(values)
    sd = float(values.std(ddof=1)) if n > 1 else 0.0
    return MseRow(
        dataset=dataset,
        mode=mode,
        mse_mean=float(values.mean()) if n else 0.0,
        mse_se=sd / math.sqrt(n) if n else 0.0,
        mse_sd=sd,
        n_drivers=n,
    )


def shared_driver_mses(
    shared: CalibrationResult,
    dataset: Mapping[int, Sequence[FollowEpisode]],
    options: Optional[SimulationOptions] = None,
    pooling: Union[Pooling, str] = Pooling.FRAMES,
) -> Dict[int, float]:
    """Per-driver MSE of the shared parameters."""
    return {
        driver_id: objective(shared.params, episodes, options, pooling)
        for driver_id, episodes in dataset.items()
        if episodes
    }


def mse_table(
    dataset: Mapping[int, Sequence[FollowEpisode]],
    per_driver: Optional[Mapping[int, CalibrationResult]] = None,
    shared: Optional[CalibrationResult] = None,
    dataset_name: str = "",
    options: Optional[SimulationOptions] = None,
    pooling: Union[Pooling, str] = Pooling.FRAMES,
) -> Tuple[List[MseRow], Dict[str, Dict[int, float]]]:
    """Per-driver MSEs and their aggregates for each available fitting mode.

    Returns:
        (one MseRow per mode, mode -> driver_id -> MSE)
    """
    rows: List[MseRow] = []
    per_mode: Dict[str, Dict[int, float]] = {}
    if per_driver is not None:
        per_mode["per_driver"] = {
            driver_id: result.objective for driver_id, result in per_driver.items()
        }
    if shared is not None:
        per_mode["shared"] = shared_driver_mses(shared, dataset, options, pooling)
    for mode, mses in per_mode.items():
        ordered = [mses[driver_id] for driver_id in sorted(mses)]
        rows.append(aggregate_mse(ordered, dataset_name, mode))
    return rows, per_mode
