"""
Flat CSV and JSON report writers.

CSV is the canonical output: one header row, one record per line, written
with pandas. JSON carries the full pydantic models.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Union

import pandas as pd
from pydantic import BaseModel

from drivercal.models.calibration_models import CalibrationResult, MseRow
from drivercal.models.idm_models import PARAM_NAMES, RolloutResult
from drivercal.models.report_models import (
    ConsistencyReport,
    DiversityReport,
    ParamDistributionReport,
)
from drivercal.models.trajectory_models import FollowEpisode

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MSE_COLUMNS = ["dataset", "mode", "mse_mean", "mse_se", "mse_sd", "n_drivers"]
ROLLOUT_COLUMNS = ["t", "v_truth", "v_pred", "gap_truth", "gap_pred"]


def _prepare(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    path = _prepare(path)
    frame.to_csv(path, index=False, lineterminator="\n")
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def write_json(data: Any, path: PathLike) -> Path:
    """Dump a pydantic model, or plain data holding models, with indent=2."""
    path = _prepare(path)

    def encode(value: Any) -> Any:
        if isinstance(value, BaseModel):
            return value.model_dump(mode="json")
        if isinstance(value, Mapping):
            return {str(key): encode(item) for key, item in value.items()}
        if isinstance(value, (list, tuple)):
            return [encode(item) for item in value]
        return value

    with open(path, "w") as f:
        json.dump(encode(data), f, indent=2)
        f.write("\n")
    return path


def fits_frame(fits: Mapping[int, CalibrationResult]) -> pd.DataFrame:
    records = []
    for driver_id, result in sorted(fits.items()):
        record: Dict[str, Any] = {"driver_id": driver_id}
        record.update({name: getattr(result.params, name) for name in PARAM_NAMES})
        record["delta"] = result.params.delta
        record.update(
            {"objective": result.objective, "seed": result.seed, "n_trials": result.n_trials}
        )
        records.append(record)
    columns = ["driver_id", *PARAM_NAMES, "delta", "objective", "seed", "n_trials"]
    return pd.DataFrame(records, columns=columns)


def write_mse_table(rows: Sequence[MseRow], path: PathLike) -> Path:
    frame = pd.DataFrame([row.model_dump() for row in rows], columns=MSE_COLUMNS)
    return write_csv(frame, path)


def write_driver_mses(per_mode: Mapping[str, Mapping[int, float]], path: PathLike) -> Path:
    """Long-format (mode, driver_id, mse) rows."""
    records = [
        {"mode": mode, "driver_id": driver_id, "mse": mse}
        for mode, mses in per_mode.items()
        for driver_id, mse in sorted(mses.items())
    ]
    return write_csv(pd.DataFrame(records, columns=["mode", "driver_id", "mse"]), path)


def write_diversity(report: DiversityReport, directory: PathLike) -> List[Path]:
    """diversity_drivers.csv plus one histogram CSV per metric.

    Excluded drivers have an empty cell for that metric.
    """
    directory = Path(directory)
    drivers = sorted({d for metric in report.metrics.values() for d in metric.values})
    frame = pd.DataFrame({"driver_id": drivers})
    for name, metric in report.metrics.items():
        frame[name] = [metric.values.get(driver_id) for driver_id in drivers]
    paths = [write_csv(frame, directory / "diversity_drivers.csv")]

    for name, metric in report.metrics.items():
        histogram = metric.histogram
        bins = pd.DataFrame(
            {
                "bin_lower": histogram.bin_edges[:-1],
                "bin_upper": histogram.bin_edges[1:],
                "count": histogram.counts,
                "peak": [i in histogram.peaks for i in range(len(histogram.counts))],
            }
        )
        paths.append(write_csv(bins, directory / f"diversity_{name}_hist.csv"))
    return paths


def write_param_distribution(report: ParamDistributionReport, directory: PathLike) -> List[Path]:
    directory = Path(directory)
    bands = pd.DataFrame(
        [
            {
                "parameter": band.name,
                "shared_value": band.shared_value,
                "noise_std": band.noise_std,
                "band_lower": band.band[0],
                "band_upper": band.band[1],
                "in_band_fraction": band.in_band_fraction,
                "diverse": band.diverse,
            }
            for band in report.parameters.values()
        ]
    )
    drivers = sorted({d for band in report.parameters.values() for d in band.values})
    values = pd.DataFrame({"driver_id": drivers})
    for name, band in report.parameters.items():
        values[name] = [band.values.get(driver_id) for driver_id in drivers]
    return [
        write_csv(bands, directory / "param_bands.csv"),
        write_csv(values, directory / "param_values.csv"),
    ]


def write_consistency(report: ConsistencyReport, directory: PathLike) -> List[Path]:
    """One row per (bucket, distance population)."""
    records = []
    for bucket in report.buckets:
        series = {
            "refit_noise": bucket.refit_noise,
            "same_driver": bucket.same_driver,
            "cross_driver": bucket.cross_driver,
        }
        for name, stats in series.items():
            records.append(
                {
                    "bucket": bucket.label,
                    "min_frames": bucket.min_frames,
                    "max_frames": bucket.max_frames,
                    "n_drivers": bucket.n_drivers,
                    "series": name,
                    "mean": stats.mean,
                    "standard_error": stats.standard_error,
                    "n": stats.n,
                    "mean_normalized": stats.mean_normalized,
                }
            )
    columns = [
        "bucket",
        "min_frames",
        "max_frames",
        "n_drivers",
        "series",
        "mean",
        "standard_error",
        "n",
        "mean_normalized",
    ]
    return [write_csv(pd.DataFrame(records, columns=columns), Path(directory) / "consistency.csv")]


def rollout_frame(episode: FollowEpisode, result: RolloutResult) -> pd.DataFrame:
    """Recorded and simulated series of one episode, t in seconds from its start."""
    n = episode.length
    return pd.DataFrame(
        {
            "t": [round(k * episode.dt, 6) for k in range(n)],
            "v_truth": episode.ego_velocity,
            "v_pred": result.velocities[:n],
            "gap_truth": episode.gap,
            "gap_pred": result.gaps[:n],
        },
        columns=ROLLOUT_COLUMNS,
    )
