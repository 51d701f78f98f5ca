"""
Car-following episode reconstruction.

Turns per-vehicle frame records into FollowEpisodes: contiguous runs with a
single leader and a single lane, gap measured bumper-to-bumper along local_y.
"""

import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

from drivercal.models.trajectory_models import (
    FRAME_DT,
    AnomalyKind,
    DatasetSummary,
    EpisodeFile,
    FollowEpisode,
    TrajectoryFrame,
)

logger = logging.getLogger(__name__)

DEFAULT_MIN_LENGTH = 50


@dataclass
class _Segment:
    """Episode under construction."""

    driver_id: int
    leader_id: int
    lane_id: int
    start_frame: int
    last_frame: int
    ego_velocity: List[float] = field(default_factory=list)
    leader_velocity: List[float] = field(default_factory=list)
    gap: List[float] = field(default_factory=list)
    anomalies: List[AnomalyKind] = field(default_factory=list)


class EpisodeExtractor:
    """Splits vehicle records into car-following episodes.

    An episode ends when the leader changes, the lane changes, a frame is
    skipped, the leader has no frame at the same instant, or the gap stops
    being positive. In the last case the frames up to the previous one are
    kept and the rest of that leader/lane run is discarded.
    """

    def __init__(self, min_length: int = DEFAULT_MIN_LENGTH, dt: float = FRAME_DT):
        if min_length < 2:
            raise ValueError("min_length must be at least 2 frames")
        self.min_length = min_length
        self.dt = dt
        self.logger = logging.getLogger(__name__)
        self.anomaly_counts: Counter[str] = Counter()

    def extract(self, frames: Iterable[TrajectoryFrame]) -> List[FollowEpisode]:
        """Build episodes from frames.

        Args:
            frames: Normalized frames (any order)

        Returns:
            Episodes ordered by (driver_id, start_frame)
        """
        by_vehicle: Dict[int, List[TrajectoryFrame]] = defaultdict(list)
        index: Dict[Tuple[int, int], TrajectoryFrame] = {}
        for frame in frames:
            by_vehicle[frame.vehicle_id].append(frame)
            index[(frame.vehicle_id, frame.frame_index)] = frame

        self.anomaly_counts = Counter()
        episodes: List[FollowEpisode] = []
        for vehicle_id in sorted(by_vehicle):
            records = sorted(by_vehicle[vehicle_id], key=lambda f: f.frame_index)
            episodes.extend(self._extract_vehicle(vehicle_id, records, index))

        self.logger.info(
            f"Extracted {len(episodes)} episodes from {len(by_vehicle)} vehicles "
            f"(anomalies: {dict(sorted(self.anomaly_counts.items()))})"
        )
        return episodes

    def _extract_vehicle(
        self,
        vehicle_id: int,
        records: List[TrajectoryFrame],
        index: Dict[Tuple[int, int], TrajectoryFrame],
    ) -> List[FollowEpisode]:
        episodes: List[FollowEpisode] = []
        current: Optional[_Segment] = None
        # (leader, lane) run poisoned by a non-positive gap
        blocked: Optional[Tuple[int, int]] = None

        def close(segment: Optional[_Segment]) -> None:
            if segment is not None:
                episode = self._finish(segment)
                if episode is not None:
                    episodes.append(episode)

        for frame in records:
            key = (frame.preceding_id, frame.lane_id)
            if blocked is not None and key != blocked:
                blocked = None

            if current is not None and frame.frame_index != current.last_frame + 1:
                current.anomalies.append(AnomalyKind.FRAME_GAP)
                self.anomaly_counts[AnomalyKind.FRAME_GAP.value] += 1
                close(current)
                current = None
                blocked = None

            if frame.preceding_id == 0 or blocked is not None:
                close(current)
                current = None
                continue

            if current is not None and (
                frame.preceding_id != current.leader_id
                or frame.lane_id != current.lane_id
            ):
                close(current)
                current = None

            leader = index.get((frame.preceding_id, frame.frame_index))
            if leader is None:
                self.anomaly_counts[AnomalyKind.MISSING_LEADER.value] += 1
                if current is not None:
                    current.anomalies.append(AnomalyKind.MISSING_LEADER)
                close(current)
                current = None
                continue

            gap = leader.local_y - frame.local_y - leader.vehicle_length
            if gap <= 0:
                self.anomaly_counts[AnomalyKind.NONPOSITIVE_GAP.value] += 1
                if current is not None:
                    current.anomalies.append(AnomalyKind.NONPOSITIVE_GAP)
                close(current)
                current = None
                blocked = key
                continue

            if current is None:
                current = _Segment(
                    driver_id=vehicle_id,
                    leader_id=frame.preceding_id,
                    lane_id=frame.lane_id,
                    start_frame=frame.frame_index,
                    last_frame=frame.frame_index - 1,
                )
            current.ego_velocity.append(frame.velocity)
            current.leader_velocity.append(leader.velocity)
            current.gap.append(gap)
            current.last_frame = frame.frame_index

        close(current)
        return episodes

    def _finish(self, segment: _Segment) -> Optional[FollowEpisode]:
        length = len(segment.ego_velocity)
        if length < self.min_length:
            if length:
                self.anomaly_counts[AnomalyKind.TOO_SHORT.value] += 1
                self.logger.debug(
                    f"Dropping {length}-frame episode of driver {segment.driver_id}"
                )
            return None
        return FollowEpisode(
            episode_id=f"{segment.driver_id}-{segment.start_frame}",
            driver_id=segment.driver_id,
            leader_id=segment.leader_id,
            lane_id=segment.lane_id,
            start_frame=segment.start_frame,
            dt=self.dt,
            ego_velocity=segment.ego_velocity,
            leader_velocity=segment.leader_velocity,
            gap=segment.gap,
            anomalies=segment.anomalies,
        )


def extract_episodes(
    frames: Iterable[TrajectoryFrame], min_length: int = DEFAULT_MIN_LENGTH
) -> List[FollowEpisode]:
    """Reconstruct car-following episodes, dropping those below min_length."""
    return EpisodeExtractor(min_length=min_length).extract(frames)


def summarize(
    episodes: List[FollowEpisode],
    dataset_name: str = "",
    extra_anomalies: Optional[Dict[str, int]] = None,
) -> DatasetSummary:
    """Count episodes, drivers, frames and anomalies.

    Each anomaly recorded on an episode counts once; extra_anomalies adds
    extractor-level counts such as dropped short episodes.
    """
    anomalies: Counter[str] = Counter()
    for episode in episodes:
        anomalies.update(kind.value for kind in episode.anomalies)
    if extra_anomalies:
        anomalies.update(extra_anomalies)
    return DatasetSummary(
        dataset_name=dataset_name,
        episode_count=len(episodes),
        driver_count=len({episode.driver_id for episode in episodes}),
        total_frames=sum(episode.length for episode in episodes),
        anomaly_counts=dict(sorted(anomalies.items())),
    )


def group_by_driver(episodes: Iterable[FollowEpisode]) -> Dict[int, List[FollowEpisode]]:
    """Episodes keyed by driver id, keys ascending, episode order preserved."""
    grouped: Dict[int, List[FollowEpisode]] = defaultdict(list)
    for episode in episodes:
        grouped[episode.driver_id].append(episode)
    return {driver_id: grouped[driver_id] for driver_id in sorted(grouped)}


def save_episodes(
    episodes: List[FollowEpisode], path: Union[str, Path], dataset_name: str = ""
) -> Path:
    """Write episodes in the versioned episode JSON format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = EpisodeFile(dataset_name=dataset_name, episodes=episodes)
    with open(path, "w") as f:
        json.dump(document.model_dump(mode="json"), f, indent=2)
    return path


def load_episodes(path: Union[str, Path]) -> EpisodeFile:
    """Read an episode JSON file written by save_episodes."""
    with open(path, "r") as f:
        return EpisodeFile.model_validate(json.load(f))
