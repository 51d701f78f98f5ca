import json

import pandas as pd
import pytest

from drivercal.models.calibration_models import CalibrationResult, MseRow
from drivercal.models.idm_models import IdmParams, RolloutResult
from drivercal.models.report_models import (
    BucketResult,
    ConsistencyReport,
    DistanceStats,
    Histogram,
    MetricSummary,
    SignificanceTest,
)
from drivercal.models.trajectory_models import FollowEpisode
from drivercal.report import (
    MSE_COLUMNS,
    ROLLOUT_COLUMNS,
    SvgRenderer,
    fits_frame,
    rollout_frame,
    write_consistency,
    write_driver_mses,
    write_json,
    write_mse_table,
    write_svg,
)


@pytest.fixture
def summary():
    return MetricSummary(
        name="min_time_headway",
        unit="s",
        values={1: 0.8, 2: 1.1, 3: 2.4, 4: 2.6},
        histogram=Histogram(
            bin_edges=[0.0, 1.0, 2.0, 3.0], counts=[1, 1, 2], peaks=[2]
        ),
        total_drivers=5,
        excluded=1,
    )


def stats(mean, se, n):
    return DistanceStats(mean=mean, standard_error=se, n=n, mean_normalized=mean / 10)


@pytest.fixture
def consistency():
    buckets = [
        BucketResult(
            label=label,
            min_frames=lower,
            max_frames=upper,
            n_drivers=4,
            refit_noise=stats(0.1, 0.01, 4),
            same_driver=stats(0.3, 0.05, 4),
            cross_driver=stats(1.2, 0.2, 12),
        )
        for label, lower, upper in (("100-1000", 100, 1000), ("1000-5000", 1000, 5000))
    ]
    return ConsistencyReport(
        buckets=buckets,
        significance=SignificanceTest(
            alternative="less", statistic=-5.0, p_value=0.001, bucket="1000-5000"
        ),
    )


class TestSvg:
    def test_histogram(self, summary, tmp_path):
        svg = SvgRenderer().render_histogram(summary)
        assert svg.startswith('<?xml version="1.0" encoding="UTF-8"?>')
        assert 'version="1.1"' in svg
        assert svg.count('opacity="0.85"') == 3
        assert svg.count("#e74c3c") == 1
        assert "4 of 5 drivers (80%)" in svg
        assert "min time headway" in svg

        path = write_svg(svg, tmp_path / "charts" / "headway.svg")
        assert path.read_text() == svg

    def test_errorbars(self, consistency):
        svg = SvgRenderer(width=800, height=500).render_errorbars(consistency)
        assert 'width="800"' in svg
        assert svg.count("<circle") == 6
        assert "1000-5000 frames" in svg
        assert "p = 0.001" in svg

    def test_empty_histogram_renders(self):
        empty = MetricSummary(
            name="mean_acceleration",
            unit="m/s^2",
            histogram=Histogram(bin_edges=[0.0, 0.5, 1.0], counts=[0, 0]),
            total_drivers=3,
            excluded=3,
        )
        svg = SvgRenderer().render_histogram(empty)
        assert "0 of 3 drivers (0%)" in svg


def test_mse_table_columns(tmp_path):
    rows = [
        MseRow(dataset="toy", mode=mode, mse_mean=m, mse_se=0.01, mse_sd=0.02, n_drivers=4)
        for mode, m in (("per_driver", 0.1), ("shared", 0.3))
    ]
    frame = pd.read_csv(write_mse_table(rows, tmp_path / "mse_table.csv"))
    assert list(frame.columns) == MSE_COLUMNS
    assert frame["mode"].tolist() == ["per_driver", "shared"]


def test_driver_mses_are_long_format(tmp_path):
    per_mode = {"per_driver": {2: 0.2, 1: 0.1}, "shared": {1: 0.4}}
    frame = pd.read_csv(write_driver_mses(per_mode, tmp_path / "m.csv"))
    assert list(frame.columns) == ["mode", "driver_id", "mse"]
    assert frame["driver_id"].tolist() == [1, 2, 1]


def test_fits_frame():
    params = IdmParams(v0=20.0, s0=2.0, T=1.5, a=1.5, b=2.0)
    fits = {
        2: CalibrationResult(params=params, objective=0.2, n_trials=10, seed=5, driver_id=2),
        1: CalibrationResult(params=params, objective=0.1, n_trials=10, seed=4, driver_id=1),
    }
    frame = fits_frame(fits)
    assert list(frame.columns) == [
        "driver_id", "v0", "s0", "T", "a", "b", "delta", "objective", "seed", "n_trials",
    ]
    assert frame["driver_id"].tolist() == [1, 2]


def test_consistency_csv_has_three_series_per_bucket(consistency, tmp_path):
    (path,) = write_consistency(consistency, tmp_path)
    frame = pd.read_csv(path)
    assert len(frame) == 6
    assert frame["series"].tolist()[:3] == ["refit_noise", "same_driver", "cross_driver"]
    assert frame["n"].tolist()[:3] == [4, 4, 12]


def test_json_keys_become_strings(tmp_path):
    row = MseRow(dataset="d", mode="m", mse_mean=0, mse_se=0, mse_sd=0, n_drivers=1)
    path = write_json({1: row}, tmp_path / "x.json")
    data = json.loads(path.read_text())
    assert list(data) == ["1"]
    assert data["1"]["mode"] == "m"
    assert path.read_text().endswith("}\n")


def test_rollout_frame():
    episode = FollowEpisode(
        episode_id="1-0",
        driver_id=1,
        lane_id=1,
        ego_velocity=[10.0, 10.5, 11.0],
        leader_velocity=[11.0, 11.0, 11.0],
        gap=[20.0, 20.1, 20.15],
    )
    result = RolloutResult(velocities=[10.0, 10.4, 10.9], gaps=[20.0, 20.06, 20.1])
    frame = rollout_frame(episode, result)
    assert list(frame.columns) == ROLLOUT_COLUMNS
    assert frame["t"].tolist() == [0.0, 0.1, 0.2]
    assert frame["v_pred"].tolist() == [10.0, 10.4, 10.9]
