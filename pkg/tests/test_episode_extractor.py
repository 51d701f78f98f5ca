import pytest

from conftest import make_frame
from drivercal.core.episode_extractor import (
    EpisodeExtractor,
    extract_episodes,
    group_by_driver,
    load_episodes,
    save_episodes,
    summarize,
)
from drivercal.core.trajectory_parser import parse_csv
from drivercal.models.trajectory_models import AnomalyKind


def leader_frames(n, vehicle_id=1, start_y=100.0):
    return [make_frame(vehicle_id, k, start_y + k) for k in range(n)]


def follower_frames(n, preceding_id=1, offset=50.0, vehicle_id=2):
    return [
        make_frame(vehicle_id, k, 100.0 - offset + k, preceding_id=preceding_id)
        for k in range(n)
    ]


def test_single_episode_with_bumper_gap():
    frames = leader_frames(60) + follower_frames(60)
    (episode,) = extract_episodes(frames, min_length=50)
    assert episode.driver_id == 2
    assert episode.leader_id == 1
    assert episode.length == 60
    # leader rear minus ego front: 50 m offset minus 5 m leader length
    assert episode.gap == pytest.approx([45.0] * 60)
    assert episode.ego_velocity == [10.0] * 60
    assert episode.leader_velocity == [10.0] * 60
    assert episode.anomalies == []


def test_leader_change_splits_episode():
    third = [make_frame(3, k, 200.0 + k) for k in range(60)]
    follower = follower_frames(30) + [
        make_frame(2, k, 50.0 + k, preceding_id=3) for k in range(30, 60)
    ]
    episodes = extract_episodes(leader_frames(60) + third + follower, min_length=20)
    assert [e.leader_id for e in episodes] == [1, 3]
    assert [e.length for e in episodes] == [30, 30]
    assert episodes[1].start_frame == 30


def test_short_episodes_are_dropped_and_counted():
    third = [make_frame(3, k, 200.0 + k) for k in range(60)]
    follower = follower_frames(30) + [
        make_frame(2, k, 50.0 + k, preceding_id=3) for k in range(30, 60)
    ]
    extractor = EpisodeExtractor(min_length=50)
    assert extractor.extract(leader_frames(60) + third + follower) == []
    assert extractor.anomaly_counts[AnomalyKind.TOO_SHORT.value] == 2


def test_frame_gap_ends_episode():
    follower = [f for f in follower_frames(80) if f.frame_index != 40]
    episodes = extract_episodes(leader_frames(80) + follower, min_length=20)
    assert [e.length for e in episodes] == [40, 39]
    assert AnomalyKind.FRAME_GAP in episodes[0].anomalies


def test_nonpositive_gap_truncates_and_discards_rest_of_run():
    follower = follower_frames(40) + [
        make_frame(2, k, 100.0 + k, preceding_id=1) for k in range(40, 60)
    ] + [make_frame(2, k, 50.0 + k, preceding_id=1) for k in range(60, 120)]
    episodes = extract_episodes(leader_frames(120) + follower, min_length=20)
    # frames 60.. have a positive gap again but belong to the same leader/lane run
    assert [e.length for e in episodes] == [40]
    assert episodes[0].anomalies == [AnomalyKind.NONPOSITIVE_GAP]
    assert min(episodes[0].gap) > 0


def test_new_episode_after_nonpositive_gap_when_lane_changes():
    follower = follower_frames(40) + [
        make_frame(2, 40, 100.0 + 40, preceding_id=1)
    ] + [make_frame(2, k, 50.0 + k, preceding_id=1, lane_id=2) for k in range(41, 100)]
    episodes = extract_episodes(leader_frames(100) + follower, min_length=20)
    assert [e.lane_id for e in episodes] == [1, 2]


def test_missing_leader_frame_ends_episode():
    episodes = extract_episodes(leader_frames(40) + follower_frames(60), min_length=20)
    assert [e.length for e in episodes] == [40]
    assert AnomalyKind.MISSING_LEADER in episodes[0].anomalies


def test_episodes_from_csv(ngsim_csv):
    (episode,) = extract_episodes(parse_csv(ngsim_csv), min_length=50)
    assert episode.length == 80
    assert episode.gap[0] == pytest.approx(60.0 * 0.3048)


def test_summarize_counts_and_merges_extra_anomalies():
    frames = leader_frames(80) + [f for f in follower_frames(80) if f.frame_index != 40]
    episodes = extract_episodes(frames, min_length=20)
    summary = summarize(episodes, "toy", {"too_short": 3})
    assert summary.dataset_name == "toy"
    assert summary.episode_count == 2
    assert summary.driver_count == 1
    assert summary.total_frames == 79
    assert summary.anomaly_counts == {"frame_gap": 1, "too_short": 3}


def test_episode_file_round_trip(tmp_path):
    episodes = extract_episodes(leader_frames(60) + follower_frames(60), min_length=50)
    path = save_episodes(episodes, tmp_path / "episodes.json", "toy")
    loaded = load_episodes(path)
    assert loaded.format_version == 1
    assert loaded.dataset_name == "toy"
    assert loaded.episodes == episodes


def test_group_by_driver_sorts_keys():
    frames = leader_frames(60) + follower_frames(60)
    frames += [make_frame(0, k, 10.0 + k, preceding_id=2) for k in range(60)]
    grouped = group_by_driver(extract_episodes(frames, min_length=50))
    assert list(grouped) == [0, 2]


def test_min_length_must_be_at_least_two():
    with pytest.raises(ValueError):
        EpisodeExtractor(min_length=1)
