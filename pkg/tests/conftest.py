"""Shared fixtures: IDM archetypes, synthetic populations and tiny CSV exports."""

from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import pytest

from drivercal.core.episode_extractor import group_by_driver
from drivercal.core.population_generator import generate
from drivercal.models.idm_models import IdmParams
from drivercal.models.synth_models import Archetype, PopulationSpec
from drivercal.models.trajectory_models import FollowEpisode, TrajectoryFrame

TIMID = IdmParams(v0=20.0, s0=3.0, T=2.0, a=0.8, b=1.5)
TYPICAL = IdmParams(v0=20.0, s0=2.0, T=1.5, a=1.5, b=2.0)
AGGRESSIVE = IdmParams(v0=20.0, s0=1.5, T=0.8, a=2.5, b=3.0)

NGSIM_HEADER = [
    "Vehicle_ID",
    "Frame_ID",
    "Local_X",
    "Local_Y",
    "v_Vel",
    "v_Acc",
    "Lane_ID",
    "Preceding",
    "Following",
    "v_Length",
    "v_Class",
]


def make_spec(
    archetypes: Sequence[IdmParams] = (TYPICAL,),
    n_drivers: int = 4,
    frames: int = 300,
    seed: int = 0,
    noise: float = 0.0,
    profile: str = "stop_and_go",
    weights: Optional[Sequence[float]] = None,
    **settings,
) -> PopulationSpec:
    """Population over the given archetypes, equal weights by default."""
    weights = weights or [1.0 / len(archetypes)] * len(archetypes)
    return PopulationSpec(
        archetypes=[
            Archetype(name=f"archetype_{i}", params=params, weight=weight)
            for i, (params, weight) in enumerate(zip(archetypes, weights))
        ],
        n_drivers=n_drivers,
        frames_per_driver=frames,
        seed=seed,
        action_noise_std=noise,
        leader_profile=profile,
        period_frames=300,
        **settings,
    )


def make_dataset(spec: PopulationSpec) -> Dict[int, List[FollowEpisode]]:
    episodes, _ = generate(spec)
    return group_by_driver(episodes)


def grouped_dataset(
    groups: Sequence[Tuple[IdmParams, int]],
    frames: int = 600,
    seed: int = 0,
    noise: float = 0.0,
    **settings,
) -> Tuple[Dict[int, List[FollowEpisode]], Dict[int, IdmParams]]:
    """Dataset with a fixed driver count per parameter set, ids numbered across groups.

    Returns:
        (driver id -> episodes, driver id -> generating parameters)
    """
    dataset: Dict[int, List[FollowEpisode]] = {}
    truth: Dict[int, IdmParams] = {}
    for index, (params, n_drivers) in enumerate(groups):
        spec = make_spec(
            (params,),
            n_drivers=n_drivers,
            frames=frames,
            seed=seed + index,
            noise=noise,
            **settings,
        )
        for _, episodes in sorted(make_dataset(spec).items()):
            driver_id = len(dataset) + 1
            dataset[driver_id] = [
                e.model_copy(
                    update={
                        "driver_id": driver_id,
                        "episode_id": f"{driver_id}-{e.start_frame}",
                    }
                )
                for e in episodes
            ]
            truth[driver_id] = params
    return dataset, truth


def make_frame(
    vehicle_id: int,
    frame_index: int,
    local_y: float,
    velocity: float = 10.0,
    preceding_id: int = 0,
    lane_id: int = 1,
    length: float = 5.0,
) -> TrajectoryFrame:
    return TrajectoryFrame(
        vehicle_id=vehicle_id,
        frame_index=frame_index,
        local_x=0.0,
        local_y=local_y,
        velocity=velocity,
        lane_id=lane_id,
        preceding_id=preceding_id,
        vehicle_length=length,
    )


def ngsim_rows(frames: int = 80, gap_ft: float = 60.0) -> List[List[str]]:
    """Leader (id 1) and follower (id 2) in lane 1, both at 30 ft/s."""
    rows = []
    for k in range(frames):
        lead_y = 500.0 + 3.0 * k
        rows.append(["1", str(k), "6.0", f"{lead_y}", "30.0", "0.0", "1", "0", "2", "15.0", "2"])
        rows.append(
            [
                "2",
                str(k),
                "6.0",
                f"{lead_y - 15.0 - gap_ft}",
                "30.0",
                "0.0",
                "1",
                "1",
                "0",
                "15.0",
                "2",
            ]
        )
    return rows


def write_rows(path: Path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> Path:
    lines = [",".join(header)] + [",".join(row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def ngsim_csv(tmp_path: Path) -> Path:
    return write_rows(tmp_path / "trajectories.csv", NGSIM_HEADER, ngsim_rows())


@pytest.fixture
def write_config(tmp_path: Path) -> Callable[[str, str], Path]:
    """Write a run config file into tmp_path and return its path."""

    def write(body: str, name: str = "run.toml") -> Path:
        path = tmp_path / name
        path.write_text(body)
        return path

    return write


@pytest.fixture(scope="session")
def typical_episodes() -> List[FollowEpisode]:
    """One noiseless stop-and-go episode of the typical archetype (1000 frames)."""
    episodes, _ = generate(make_spec(n_drivers=1, frames=1000, seed=3))
    return episodes


@pytest.fixture(scope="session")
def excited_episodes() -> List[FollowEpisode]:
    """Noiseless typical driver behind a leader that outruns v0 and brakes to a stop."""
    episodes, _ = generate(make_spec(n_drivers=1, frames=1200, seed=3, cruise_speed=28.0))
    return episodes
