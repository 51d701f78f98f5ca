"""
Driver-population analyses.

Three studies over a dataset grouped by driver:
- diversity of observed driving (mean acceleration, mean deceleration and
  minimum time headway per driver, with histograms)
- spread of per-driver IDM fits against the shared fit and its refit noise
- consistency of one driver's two trajectory halves compared with other
  drivers and with refit noise
"""

import logging
import math
from typing import Dict, Hashable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from drivercal.core.calibration_engine import (
    FitTask,
    driver_seed,
    normalized_distance,
    parameter_distance,
    run_fit_tasks,
)
from drivercal.core.fit_cache import FitCache
from drivercal.models.calibration_models import (
    CalibrationResult,
    FitNoiseEstimate,
    Pooling,
    SearchSpace,
)
from drivercal.models.idm_models import PARAM_NAMES, SimulationOptions
from drivercal.models.report_models import (
    BucketResult,
    ConsistencyReport,
    DistanceStats,
    DiversityReport,
    Histogram,
    MetricSummary,
    ParamDistributionReport,
    ParameterBand,
    SignificanceTest,
    ThresholdMode,
)
from drivercal.models.trajectory_models import FollowEpisode

logger = logging.getLogger(__name__)

# Frames slower than this (m/s) carry no time headway
MIN_HEADWAY_SPEED = 0.1
NOISE_BAND_SIGMAS = 2.0
CROSS_PAIR_STREAM = 0

ACCELERATION = "mean_acceleration"
DECELERATION = "mean_deceleration"
HEADWAY = "min_time_headway"


class AnalysisError(Exception):
    """Raised when an analysis has no input or its statistic is undefined."""

    pass


Dataset = Mapping[int, Sequence[FollowEpisode]]


def _velocity_changes(
    episode: FollowEpisode, mode: ThresholdMode, window_frames: int
) -> Tuple[np.ndarray, float]:
    """Velocity changes and the time span they cover (s)."""
    v = np.asarray(episode.ego_velocity)
    lag = 1 if mode is ThresholdMode.PER_FRAME else window_frames
    if len(v) <= lag:
        return np.empty(0), lag * episode.dt
    return v[lag:] - v[:-lag], lag * episode.dt


def _mean_rate(
    episodes: Sequence[FollowEpisode],
    threshold: float,
    mode: ThresholdMode,
    window_frames: int,
    sign: float,
) -> Optional[float]:
    """Mean |dv|/span over changes of the given sign reaching threshold."""
    rates = []
    for episode in episodes:
        changes, span = _velocity_changes(episode, mode, window_frames)
        qualifying = sign * changes >= threshold
        rates.extend((sign * changes[qualifying] / span).tolist())
    return float(np.mean(rates)) if rates else None


def _min_headway(episodes: Sequence[FollowEpisode]) -> Optional[float]:
    best = math.inf
    for episode in episodes:
        v = np.asarray(episode.ego_velocity)
        moving = v >= MIN_HEADWAY_SPEED
        if moving.any():
            best = min(best, float((np.asarray(episode.gap)[moving] / v[moving]).min()))
    return best if math.isfinite(best) else None


def find_histogram_peaks(
    counts: Sequence[int], min_separation: int = 2, min_height_fraction: float = 0.1
) -> List[int]:
    """Bin indices of well-separated local maxima of a histogram.

    A peak is a local maximum (plateaus report their first bin) holding at
    least min_height_fraction of the highest count. Peaks are accepted from
    the highest down when they lie min_separation bins or more from every
    accepted peak and a strictly lower bin separates them.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.size == 0 or counts.max() <= 0:
        return []
    padded = np.concatenate(([-1.0], counts, [-1.0]))
    candidates = [
        i
        for i in range(counts.size)
        if padded[i + 1] > padded[i]
        and padded[i + 1] >= padded[i + 2]
        and counts[i] >= min_height_fraction * counts.max()
    ]
    accepted: List[int] = []
    for i in sorted(candidates, key=lambda i: (-counts[i], i)):
        separated = True
        for j in accepted:
            lo, hi = min(i, j), max(i, j)
            valley = counts[lo + 1 : hi].min() if hi - lo > 1 else math.inf
            if hi - lo < min_separation or valley >= min(counts[i], counts[j]):
                separated = False
                break
        if separated:
            accepted.append(i)
    return sorted(accepted)


def _histogram(
    values: Sequence[float], bins: int, value_range: Optional[Tuple[float, float]] = None
) -> Histogram:
    data = np.asarray(values, dtype=float)
    if value_range is None:
        value_range = (float(data.min()), float(data.max())) if data.size else (0.0, 1.0)
        if value_range[0] == value_range[1]:
            value_range = (value_range[0] - 0.5, value_range[1] + 0.5)
    counts, edges = np.histogram(data, bins=bins, range=value_range)
    return Histogram(
        bin_edges=edges.tolist(),
        counts=counts.astype(int).tolist(),
        peaks=find_histogram_peaks(counts),
    )


def _summary(
    name: str,
    unit: str,
    values: Dict[int, float],
    total: int,
    bins: int,
    value_range: Optional[Tuple[float, float]] = None,
) -> MetricSummary:
    return MetricSummary(
        name=name,
        unit=unit,
        values=values,
        histogram=_histogram(list(values.values()), bins, value_range),
        total_drivers=total,
        excluded=total - len(values),
    )


def diversity_metrics(
    dataset: Dataset,
    accel_threshold: float = 2.0,
    headway_cap: float = 5.0,
    mode: Union[ThresholdMode, str] = ThresholdMode.PER_SECOND,
    window_frames: int = 10,
    bins: int = 20,
) -> DiversityReport:
    """Per-driver diversity metrics with histograms.

    Mean acceleration and deceleration average the rates of all velocity
    changes reaching accel_threshold (m/s) over one frame (PER_FRAME) or over
    window_frames frames (PER_SECOND); drivers without such changes are
    excluded from that metric. Minimum time headway skips frames below
    0.1 m/s and excludes drivers whose minimum exceeds headway_cap.
    Inclusion fractions of the other threshold mode are reported alongside.
    """
    mode = ThresholdMode(mode)
    other = (
        ThresholdMode.PER_FRAME if mode is ThresholdMode.PER_SECOND else ThresholdMode.PER_SECOND
    )
    drivers = sorted(dataset)
    total = len(drivers)

    def rates(threshold_mode: ThresholdMode, sign: float) -> Dict[int, float]:
        values = {}
        for driver_id in drivers:
            rate = _mean_rate(
                dataset[driver_id], accel_threshold, threshold_mode, window_frames, sign
            )
            if rate is not None:
                values[driver_id] = rate
        return values

    headways = {}
    for driver_id in drivers:
        headway = _min_headway(dataset[driver_id])
        if headway is not None and headway <= headway_cap:
            headways[driver_id] = headway

    metrics = {
        ACCELERATION: _summary(ACCELERATION, "m/s^2", rates(mode, 1.0), total, bins),
        DECELERATION: _summary(DECELERATION, "m/s^2", rates(mode, -1.0), total, bins),
        HEADWAY: _summary(HEADWAY, "s", headways, total, bins, (0.0, headway_cap)),
    }
    alternate = {
        ACCELERATION: len(rates(other, 1.0)) / total if total else 0.0,
        DECELERATION: len(rates(other, -1.0)) / total if total else 0.0,
    }
    report = DiversityReport(
        mode=mode,
        accel_threshold=accel_threshold,
        headway_cap=headway_cap,
        metrics=metrics,
        alternate_mode_inclusion=alternate,
        multimodal={name: len(m.histogram.peaks) >= 2 for name, m in metrics.items()},
    )
    logger.info(
        "Diversity inclusion: "
        + ", ".join(f"{name}={m.inclusion_fraction:.2f}" for name, m in metrics.items())
    )
    return report


def average_fit_noise(estimates: Sequence[FitNoiseEstimate]) -> FitNoiseEstimate:
    """Mean of several per-driver refit-noise estimates."""
    if not estimates:
        raise AnalysisError("no refit-noise estimates")
    return FitNoiseEstimate(
        param_std={
            name: float(np.mean([e.param_std[name] for e in estimates])) for name in PARAM_NAMES
        },
        mean_pairwise_distance=float(np.mean([e.mean_pairwise_distance for e in estimates])),
        n_repeats=min(e.n_repeats for e in estimates),
    )


def param_distribution(
    per_driver_fits: Mapping[int, CalibrationResult],
    shared_fit: CalibrationResult,
    noise: Union[FitNoiseEstimate, Sequence[FitNoiseEstimate]],
    expected_fraction: float = 0.95,
) -> ParamDistributionReport:
    """Compare per-driver fits with the shared fit's noise band.

    The band is shared value +- 2 x refit std (inclusive). A parameter whose
    in-band fraction falls below expected_fraction is flagged as diverse.

    Raises:
        AnalysisError: If per_driver_fits is empty
    """
    if not per_driver_fits:
        raise AnalysisError("no per-driver fits to compare")
    if not isinstance(noise, FitNoiseEstimate):
        noise = average_fit_noise(noise)

    parameters = {}
    for name in PARAM_NAMES:
        values = {
            driver_id: getattr(result.params, name)
            for driver_id, result in sorted(per_driver_fits.items())
        }
        center = getattr(shared_fit.params, name)
        std = noise.param_std.get(name, 0.0)
        band = (center - NOISE_BAND_SIGMAS * std, center + NOISE_BAND_SIGMAS * std)
        inside = sum(1 for value in values.values() if band[0] <= value <= band[1])
        fraction = inside / len(values)
        parameters[name] = ParameterBand(
            name=name,
            values=values,
            shared_value=center,
            noise_std=std,
            band=band,
            in_band_fraction=fraction,
            diverse=fraction < expected_fraction,
        )
    report = ParamDistributionReport(parameters=parameters, expected_fraction=expected_fraction)
    logger.info(f"Parameters beyond refit noise: {report.diverse_parameters}")
    return report


def pooled_length(episodes: Sequence[FollowEpisode]) -> int:
    return sum(episode.length for episode in episodes)


def split_halves(
    episodes: Sequence[FollowEpisode],
) -> Tuple[List[FollowEpisode], List[FollowEpisode]]:
    """Split a driver's pooled frames at the midpoint.

    An episode crossing the midpoint is cut in two, each part starting from
    its own recorded state. Parts shorter than two frames are dropped.
    """
    midpoint = pooled_length(episodes) // 2
    first: List[FollowEpisode] = []
    second: List[FollowEpisode] = []
    seen = 0
    for episode in episodes:
        cut = midpoint - seen
        seen += episode.length
        if cut >= episode.length:
            first.append(episode)
        elif cut <= 0:
            second.append(episode)
        else:
            head, tail = _cut(episode, cut)
            if head is not None:
                first.append(head)
            if tail is not None:
                second.append(tail)
    return first, second


def _cut(
    episode: FollowEpisode, at: int
) -> Tuple[Optional[FollowEpisode], Optional[FollowEpisode]]:
    def part(lo: int, hi: int) -> Optional[FollowEpisode]:
        if hi - lo < 2:
            return None
        return episode.model_copy(
            update={
                "episode_id": f"{episode.driver_id}-{episode.start_frame + lo}",
                "start_frame": episode.start_frame + lo,
                "ego_velocity": episode.ego_velocity[lo:hi],
                "leader_velocity": episode.leader_velocity[lo:hi],
                "gap": episode.gap[lo:hi],
            }
        )

    return part(0, at), part(at, episode.length)


def _distance_stats(
    pairs: Sequence[Tuple[CalibrationResult, CalibrationResult]], space: SearchSpace
) -> DistanceStats:
    raw = np.array([parameter_distance(p.params, q.params) for p, q in pairs])
    scaled = np.array([normalized_distance(p.params, q.params, space) for p, q in pairs])
    n = len(raw)
    return DistanceStats(
        mean=float(raw.mean()) if n else 0.0,
        standard_error=float(raw.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
        n=n,
        mean_normalized=float(scaled.mean()) if n else 0.0,
        distances=raw.tolist(),
    )


def _cross_pairs(n: int, count: int, rng: np.random.Generator) -> List[Tuple[int, int]]:
    """Ordered pairs (i, j), i != j: all of them, or count distinct ones sampled."""
    total = n * (n - 1)
    if total <= count:
        codes = np.arange(total)
    else:
        codes = np.sort(rng.choice(total, size=count, replace=False))
    pairs = []
    for code in codes.tolist():
        i, offset = divmod(code, n - 1)
        j = offset if offset < i else offset + 1
        pairs.append((i, j))
    return pairs


def _bucket_label(lower: int, upper: int) -> str:
    return f"{lower}-{upper}"


def consistency_experiment(
    dataset: Dataset,
    space: Optional[SearchSpace] = None,
    n_trials: int = 500,
    buckets: Sequence[Tuple[int, int]] = ((100, 400), (400, 1000), (1000, 1_000_000)),
    seed: int = 0,
    options: Optional[SimulationOptions] = None,
    pooling: Union[Pooling, str] = Pooling.FRAMES,
    min_fit_length: int = 50,
    cross_pairs: int = 1000,
    alternative: str = "less",
    jobs: int = 1,
    cache: Optional[FitCache] = None,
) -> ConsistencyReport:
    """Fit both halves of every driver and compare the parameter distances.

    Per bucket of pooled driver length [lower, upper):
    refit noise is the distance between two fits of the first half with
    different seeds, same-driver the distance between first- and second-half
    fits, cross-driver the distance between the first half of one driver and
    the second half of another. A Welch test compares same-driver with
    cross-driver distances in the longest populated bucket.
    """
    space = space or SearchSpace()
    options = options or SimulationOptions()
    pooling = Pooling(pooling)

    ordered = sorted(buckets)
    members: Dict[Tuple[int, int], List[int]] = {bucket: [] for bucket in ordered}
    halves: Dict[int, Tuple[List[FollowEpisode], List[FollowEpisode]]] = {}
    for driver_id in sorted(dataset):
        length = pooled_length(dataset[driver_id])
        if length < 2 * min_fit_length:
            continue
        for lower, upper in ordered:
            if lower <= length < upper:
                members[(lower, upper)].append(driver_id)
                halves[driver_id] = split_halves(dataset[driver_id])
                break

    tasks: Dict[Hashable, FitTask] = {}
    for driver_id, (first, second) in halves.items():
        # (driver, half, repeat)
        fits_needed = (
            ((driver_id, 0, 0), first),
            ((driver_id, 0, 1), first),
            ((driver_id, 1, 0), second),
        )
        for key, episodes in fits_needed:
            tasks[key] = FitTask(
                episodes=episodes,
                seed=driver_seed(seed, key),
                space=space,
                n_trials=n_trials,
                options=options,
                pooling=pooling,
                driver_id=driver_id,
            )
    logger.info(f"Consistency experiment: {len(halves)} drivers, {len(tasks)} half fits")
    fits = cache.fit_many(tasks, jobs) if cache is not None else run_fit_tasks(tasks, jobs)

    report = ConsistencyReport()
    for index, (lower, upper) in enumerate(ordered):
        label = _bucket_label(lower, upper)
        drivers = members[(lower, upper)]
        if len(drivers) < 2:
            logger.warning(f"Omitting bucket {label}: {len(drivers)} driver(s)")
            report.omitted_buckets.append(label)
            continue
        rng = np.random.default_rng(driver_seed(seed, (CROSS_PAIR_STREAM, index)))
        refit = [(fits[(d, 0, 0)], fits[(d, 0, 1)]) for d in drivers]
        same = [(fits[(d, 0, 0)], fits[(d, 1, 0)]) for d in drivers]
        cross = [
            (fits[(drivers[i], 0, 0)], fits[(drivers[j], 1, 0)])
            for i, j in _cross_pairs(len(drivers), cross_pairs, rng)
        ]
        report.buckets.append(
            BucketResult(
                label=label,
                min_frames=lower,
                max_frames=upper,
                n_drivers=len(drivers),
                refit_noise=_distance_stats(refit, space),
                same_driver=_distance_stats(same, space),
                cross_driver=_distance_stats(cross, space),
            )
        )

    if report.buckets:
        longest = report.buckets[-1]
        same_d = longest.same_driver.distances
        cross_d = longest.cross_driver.distances
        if len(same_d) >= 2 and len(cross_d) >= 2:
            report.significance = welch_test(same_d, cross_d, longest.label, alternative)
            logger.info(
                f"Bucket {longest.label}: same-driver {longest.same_driver.mean:.3f} vs "
                f"cross-driver {longest.cross_driver.mean:.3f}, "
                f"p={report.significance.p_value:.3g}"
            )
    return report


def welch_test(
    same: Sequence[float], cross: Sequence[float], bucket: str, alternative: str = "less"
) -> SignificanceTest:
    """Welch's unequal-variance t-test of same-driver against cross-driver distances.

    Raises:
        AnalysisError: If the statistic is undefined (e.g. both samples constant)
    """
    if np.var(same) == 0.0 and np.var(cross) == 0.0:
        raise AnalysisError(
            f"Welch test undefined in bucket {bucket}: same-driver and "
            f"cross-driver distances both have zero variance"
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        result = stats.ttest_ind(same, cross, equal_var=False, alternative=alternative)
    if not (np.isfinite(result.statistic) and np.isfinite(result.pvalue)):
        raise AnalysisError(
            f"Welch test in bucket {bucket} is not finite "
            f"(statistic={result.statistic}, p={result.pvalue})"
        )
    return SignificanceTest(
        alternative=alternative,
        statistic=float(result.statistic),
        p_value=float(result.pvalue),
        bucket=bucket,
    )
