"""
On-disk cache of calibration results.

Entries are CalibrationResult JSON files named by the sha256 of everything
that determines a fit: the episode data, the search space, the trial count,
the seed, the simulation options, the pooling mode and the search revision.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, Hashable, Mapping, Optional, Sequence, Union

from drivercal.core.calibration_engine import (
    FitTask,
    driver_seed,
    fit,
    run_fit_tasks,
)
from drivercal.models.calibration_models import CalibrationResult, Pooling, SearchSpace
from drivercal.models.idm_models import SimulationOptions
from drivercal.models.trajectory_models import FollowEpisode

# bump whenever the search algorithm changes what a seed produces
SEARCH_REVISION = 2


def fit_key(
    episodes: Sequence[FollowEpisode],
    space: SearchSpace,
    n_trials: int,
    seed: int,
    options: SimulationOptions,
    pooling: Union[Pooling, str] = Pooling.FRAMES,
) -> str:
    """Content hash identifying one fit."""
    payload = {
        "episodes": [
            {
                "dt": episode.dt,
                "ego_velocity": episode.ego_velocity,
                "leader_velocity": episode.leader_velocity,
                "gap": episode.gap,
            }
            for episode in episodes
        ],
        "space": space.model_dump(mode="json"),
        "n_trials": n_trials,
        "seed": seed,
        "options": options.model_dump(mode="json"),
        "pooling": Pooling(pooling).value,
        "search_revision": SEARCH_REVISION,
    }
    encoded = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(encoded.encode("utf-8")).hexdigest()


class FitCache:
    """Get-or-fit store shared by the fit and analyze commands.

    With directory=None the cache lives in memory only.
    """

    def __init__(self, directory: Optional[Union[str, Path]] = None):
        self.directory = Path(directory) if directory is not None else None
        self.logger = logging.getLogger(__name__)
        self._memory: Dict[str, CalibrationResult] = {}
        self.hits = 0
        self.misses = 0
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Optional[Path]:
        return self.directory / f"{key}.json" if self.directory is not None else None

    def get(self, key: str) -> Optional[CalibrationResult]:
        if key in self._memory:
            return self._memory[key]
        path = self._path(key)
        if path is not None and path.exists():
            with open(path, "r") as f:
                result = CalibrationResult.model_validate(json.load(f))
            self._memory[key] = result
            return result
        return None

    def put(self, key: str, result: CalibrationResult) -> None:
        self._memory[key] = result
        path = self._path(key)
        if path is not None:
            with open(path, "w") as f:
                json.dump(result.model_dump(mode="json"), f, indent=2)

    def fit(
        self,
        episodes: Sequence[FollowEpisode],
        space: SearchSpace,
        n_trials: int,
        seed: int,
        options: SimulationOptions,
        pooling: Union[Pooling, str] = Pooling.FRAMES,
        driver_id: Optional[int] = None,
    ) -> CalibrationResult:
        """Cached calibration_engine.fit (trial logs are not kept)."""
        key = fit_key(episodes, space, n_trials, seed, options, pooling)
        cached = self.get(key)
        if cached is not None:
            self.hits += 1
            return cached.model_copy(update={"driver_id": driver_id})
        self.misses += 1
        result = fit(episodes, space, n_trials, seed, options, pooling, False, driver_id)
        self.put(key, result)
        return result

    def fit_many(
        self,
        tasks: Mapping[Hashable, FitTask],
        jobs: int = 1,
    ) -> Dict[Hashable, CalibrationResult]:
        """Run the uncached tasks (in parallel when jobs > 1), fill the cache.

        Results are keyed like tasks, keys ascending.
        """
        keys = {
            name: fit_key(
                task.episodes, task.space, task.n_trials, task.seed, task.options, task.pooling
            )
            for name, task in tasks.items()
        }
        results: Dict[Hashable, CalibrationResult] = {}
        pending: Dict[Hashable, FitTask] = {}
        for name, task in tasks.items():
            cached = self.get(keys[name])
            if cached is not None:
                results[name] = cached.model_copy(update={"driver_id": task.driver_id})
            else:
                pending[name] = task
        self.hits += len(results)
        self.misses += len(pending)
        if pending:
            self.logger.info(
                f"Fitting {len(pending)} of {len(tasks)} tasks ({len(results)} cached)"
            )
            for name, result in run_fit_tasks(pending, jobs).items():
                self.put(keys[name], result)
                results[name] = result
        return {name: results[name] for name in sorted(results)}

    def fit_per_driver(
        self,
        dataset: Mapping[int, Sequence[FollowEpisode]],
        space: SearchSpace,
        n_trials: int,
        seed: int,
        options: SimulationOptions,
        pooling: Union[Pooling, str] = Pooling.FRAMES,
        jobs: int = 1,
    ) -> Dict[int, CalibrationResult]:
        """Cached counterpart of calibration_engine.fit_per_driver."""
        tasks = {
            driver_id: FitTask(
                episodes=list(episodes),
                seed=driver_seed(seed, driver_id),
                space=space,
                n_trials=n_trials,
                options=options,
                pooling=Pooling(pooling),
                driver_id=driver_id,
            )
            for driver_id, episodes in dataset.items()
            if episodes
        }
        return self.fit_many(tasks, jobs)  # type: ignore[return-value]
