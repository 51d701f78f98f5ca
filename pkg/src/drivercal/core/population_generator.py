"""
Synthetic driver populations.

Generates car-following episodes from a known mixture of IDM archetypes so
calibration and analysis results can be checked against ground truth.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np

from drivercal.config import ConfigError
from drivercal.core.calibration_engine import driver_seed
from drivercal.core.idm import equilibrium_gap, rollout
from drivercal.core.plugin_registry import PluginRegistry
from drivercal.handlers import (
    ConstantProfileHandler,
    RecordedProfileHandler,
    SawtoothProfileHandler,
    StopAndGoProfileHandler,
)
from drivercal.models.idm_models import EgoState, IdmParams, SimulationOptions
from drivercal.models.synth_models import (
    DriverLabel,
    GroundTruthLabel,
    LeaderProfileKind,
    LeaderProfileRequest,
    PopulationSpec,
)
from drivercal.models.trajectory_models import FollowEpisode

MIN_INITIAL_GAP = 2.0
INITIAL_SPEED_FRACTION = 0.95
LEADER_STREAM = 0
MIN_HALF_FRAMES = 2


class GenerationError(Exception):
    """Raised when a population cannot be generated (layout or collisions)."""

    pass


def default_registry() -> PluginRegistry:
    """Registry holding the four built-in leader profile handlers."""
    registry = PluginRegistry()
    registry.register_handler(ConstantProfileHandler(), priority=10)
    registry.register_handler(StopAndGoProfileHandler(), priority=10)
    registry.register_handler(SawtoothProfileHandler(), priority=10)
    registry.register_handler(RecordedProfileHandler(), priority=20)
    return registry


def leader_profile(
    kind: str,
    frames: int,
    seed: int = 0,
    registry: Optional[PluginRegistry] = None,
    **settings,
) -> List[float]:
    """Leader velocity series of the given kind, one non-negative entry per frame.

    Args:
        kind: Profile kind (constant, stop_and_go, sawtooth, recorded)
        frames: Number of frames
        seed: Seed for profiles with random structure
        registry: Handler registry (defaults to the built-in handlers)
        **settings: Further LeaderProfileRequest fields (cruise_speed, ...)

    Raises:
        ConfigError: If no handler can build the requested kind
    """
    registry = registry or default_registry()
    request = LeaderProfileRequest(
        kind=str(getattr(kind, "value", kind)), frames=frames, seed=seed, **settings
    )
    handler = registry.get_handler(request)
    if handler is None:
        if request.kind == LeaderProfileKind.RECORDED.value and request.recorded is None:
            raise ConfigError(
                "Leader profile 'recorded' needs a recorded leader velocity series "
                "(recorded_leader)"
            )
        available = sorted({h.kind for h in registry.get_handlers_by_priority()})
        raise ConfigError(
            f"No leader profile handler for kind '{request.kind}' (available: {available})"
        )
    return handler.process(request)


def initial_state(params: IdmParams, leader_velocity: float) -> EgoState:
    """Start slightly below the leader (and v0) at the equilibrium gap."""
    velocity = min(leader_velocity, INITIAL_SPEED_FRACTION * params.v0)
    gap = max(equilibrium_gap(params, velocity), MIN_INITIAL_GAP)
    return EgoState(velocity=velocity, gap=gap)


class PopulationGenerator:
    """Rolls out sampled archetypes against a shared leader profile."""

    def __init__(self, spec: PopulationSpec, registry: Optional[PluginRegistry] = None):
        if spec.resample_between_halves and spec.frames_per_driver < 2 * MIN_HALF_FRAMES:
            raise GenerationError(
                f"resample_between_halves needs at least {2 * MIN_HALF_FRAMES} frames per "
                f"driver, got {spec.frames_per_driver}"
            )
        self.spec = spec
        self.options = SimulationOptions()
        self.logger = logging.getLogger(__name__)
        self.leader = leader_profile(
            spec.leader_profile,
            spec.frames_per_driver,
            seed=driver_seed(spec.seed, LEADER_STREAM),
            registry=registry,
            cruise_speed=spec.cruise_speed,
            low_speed=spec.low_speed,
            period_frames=spec.period_frames,
            recorded=spec.recorded_leader,
        )
        self.weights = np.array([archetype.weight for archetype in spec.archetypes])
        self.weights = self.weights / self.weights.sum()
        self.regenerations = 0

    def generate(self) -> Tuple[List[FollowEpisode], GroundTruthLabel]:
        """Generate every driver in driver-id order (ids start at 1)."""
        episodes: List[FollowEpisode] = []
        labels = GroundTruthLabel()
        self.regenerations = 0
        for driver_id in range(1, self.spec.n_drivers + 1):
            driver_episodes, label = self._generate_driver(driver_id)
            episodes.extend(driver_episodes)
            labels.drivers[driver_id] = label

        self.logger.info(
            f"Generated {self.spec.n_drivers} drivers x {self.spec.frames_per_driver} frames "
            f"({self.regenerations} regenerated draws)"
        )
        return episodes, labels

    def _generate_driver(self, driver_id: int) -> Tuple[List[FollowEpisode], DriverLabel]:
        rng = np.random.default_rng(driver_seed(self.spec.seed, driver_id + 1))
        index = int(rng.choice(len(self.spec.archetypes), p=self.weights))
        archetype = self.spec.archetypes[index]

        if not self.spec.resample_between_halves:
            episode = self._rollout_clean(driver_id, archetype.params, self.leader, 0, rng, index)
            label = DriverLabel(
                archetype_index=index, archetype_name=archetype.name, params=archetype.params
            )
            return [episode], label

        second_index = int(rng.choice(len(self.spec.archetypes), p=self.weights))
        second = self.spec.archetypes[second_index]
        half = self.spec.frames_per_driver // 2
        first_episode = self._rollout_clean(
            driver_id, archetype.params, self.leader[:half], 0, rng, index
        )
        second_episode = self._rollout_clean(
            driver_id, second.params, self.leader[half:], half, rng, second_index
        )
        label = DriverLabel(
            archetype_index=index,
            archetype_name=archetype.name,
            params=archetype.params,
            second_half_archetype_index=second_index,
            second_half_params=second.params,
        )
        return [first_episode, second_episode], label

    def _rollout_clean(
        self,
        driver_id: int,
        params: IdmParams,
        leader: List[float],
        start_frame: int,
        rng: np.random.Generator,
        archetype_index: int,
    ) -> FollowEpisode:
        """Roll out until a draw stays collision-free, regenerating the noise."""
        initial = initial_state(params, leader[0])
        noise_std = self.spec.action_noise_std
        for attempt in range(self.spec.max_regenerations + 1):
            draw_rng = rng if attempt == 0 else np.random.default_rng(
                driver_seed(self.spec.seed, (driver_id + 1, start_frame, attempt))
            )
            noise = draw_rng.normal(0.0, noise_std, len(leader) - 1) if noise_std > 0 else None
            result = rollout(params, initial, leader, dt=0.1, options=self.options, noise=noise)
            if not result.collided:
                if attempt:
                    self.regenerations += attempt
                    self.logger.warning(
                        f"Driver {driver_id} regenerated {attempt} time(s) after collisions"
                    )
                return FollowEpisode(
                    episode_id=f"{driver_id}-{start_frame}",
                    driver_id=driver_id,
                    leader_id=0,
                    lane_id=1,
                    start_frame=start_frame,
                    ego_velocity=result.velocities,
                    leader_velocity=list(leader),
                    gap=result.gaps,
                )
        name = self.spec.archetypes[archetype_index].name
        raise GenerationError(
            f"Archetype '{name}' collides with the "
            f"{self.spec.leader_profile.value} leader profile in every draw "
            f"({self.spec.max_regenerations} regenerations)"
        )


def generate(
    spec: PopulationSpec, registry: Optional[PluginRegistry] = None
) -> Tuple[List[FollowEpisode], GroundTruthLabel]:
    """Generate a synthetic population.

    Returns:
        (episodes ordered by driver id, ground-truth labels for every driver)

    Raises:
        GenerationError: If an archetype always collides with the leader
        ConfigError: If the leader profile kind is unknown
    """
    return PopulationGenerator(spec, registry).generate()
