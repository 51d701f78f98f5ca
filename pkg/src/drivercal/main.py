"""
drivercal command-line interface.

Commands:
1. ingest   - parse trajectory CSVs into the episode JSON format
2. synth    - generate a synthetic driver population with ground-truth labels
3. fit      - calibrate IDM parameters per driver and/or shared, with the MSE table
4. rollout  - replay sampled episodes with a fitted model or the boosted baseline
5. analyze  - diversity, parameter-distribution and consistency reports

Every command is driven by one run config file; reruns with the same config
and seed write byte-identical outputs.
"""

import argparse
import logging
import os
import sys
from collections import Counter
from itertools import chain
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from slugify import slugify

from drivercal.config import (
    ROLLOUT_SOURCES,
    ConfigError,
    RunConfig,
    apply_overrides,
    load_run_config,
)
from drivercal.core.analysis_engine import (
    AnalysisError,
    consistency_experiment,
    diversity_metrics,
    param_distribution,
)
from drivercal.core.boosting import (
    BoostingConfigError,
    build_training_set,
    closed_loop_errors,
    open_loop_errors,
    load_model,
    rollout_boosted,
    save_model,
    train,
    write_loss_csv,
)
from drivercal.core.calibration_engine import (
    CalibrationError,
    FitTask,
    driver_seed,
    fit_noise_from_results,
    fit_per_driver,
    fit_shared,
    mse_table,
)
from drivercal.core.episode_extractor import (
    EpisodeExtractor,
    group_by_driver,
    load_episodes,
    save_episodes,
    summarize,
)
from drivercal.core.fit_cache import FitCache
from drivercal.core.idm import rollout
from drivercal.core.population_generator import GenerationError, PopulationGenerator
from drivercal.core.trajectory_parser import SchemaError, TrajectoryParseError, TrajectoryParser
from drivercal.models.boost_models import BoostModel
from drivercal.models.calibration_models import CalibrationResult, FitNoiseEstimate
from drivercal.models.idm_models import EgoState, IdmParams, RolloutResult
from drivercal.models.trajectory_models import FollowEpisode
from drivercal.report.svg_renderer import SvgRenderer, write_svg
from drivercal.report.writers import (
    fits_frame,
    rollout_frame,
    write_consistency,
    write_csv,
    write_diversity,
    write_driver_mses,
    write_json,
    write_mse_table,
    write_param_distribution,
)

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GENERATION = 3
EXIT_NO_DATA = 4

FIT_MODES = ("per_driver", "shared", "both")
ANALYSES = ("diversity", "params", "consistency", "all")


def configure_logging() -> None:
    """Root logger to stderr, level from DRIVERCAL_LOG (default INFO)."""
    level_name = os.environ.get("DRIVERCAL_LOG", "INFO").upper()
    level = logging.getLevelName(level_name)
    if not isinstance(level, int):
        level = logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)
    logging.getLogger().setLevel(level)


def _banner(title: str) -> None:
    print("=" * 60)
    print(f"MODE: {title}")
    print("=" * 60)


def _print_statistics(stats: Dict[str, Any]) -> None:
    print("\n📊 Final Statistics:")
    for name, value in stats.items():
        print(f"  {name}: {value}")


def _load_dataset(config: RunConfig) -> Dict[int, List[FollowEpisode]]:
    path = config.episodes_path
    if not path.exists():
        raise ConfigError(f"Episode file not found: {path} (run ingest or synth first)")
    episodes = load_episodes(path).episodes
    if not episodes:
        raise CalibrationError("no data")
    return group_by_driver(episodes)


def _fit_cache(config: RunConfig) -> FitCache:
    return FitCache(config.output_dir / "cache")


def _per_driver_fits(
    config: RunConfig, dataset: Dict[int, List[FollowEpisode]], cache: FitCache
) -> Dict[int, CalibrationResult]:
    calibration = config.calibration
    options = config.simulation.to_options()
    if calibration.keep_trial_log:
        return fit_per_driver(
            dataset,
            calibration.space,
            calibration.n_trials,
            calibration.seed,
            options,
            calibration.pooling,
            config.jobs,
            keep_trial_log=True,
        )
    return cache.fit_per_driver(
        dataset,
        calibration.space,
        calibration.n_trials,
        calibration.seed,
        options,
        calibration.pooling,
        config.jobs,
    )


def _shared_fit(
    config: RunConfig, dataset: Dict[int, List[FollowEpisode]], cache: FitCache
) -> CalibrationResult:
    calibration = config.calibration
    options = config.simulation.to_options()
    if calibration.keep_trial_log:
        return fit_shared(
            dataset,
            calibration.space,
            calibration.n_trials,
            calibration.seed,
            options,
            calibration.pooling,
            keep_trial_log=True,
        )
    pooled = [episode for episodes in dataset.values() for episode in episodes]
    return cache.fit(
        pooled,
        calibration.space,
        calibration.n_trials,
        calibration.seed,
        options,
        calibration.pooling,
    )


def cmd_ingest(config: RunConfig) -> Dict[str, Any]:
    """Parse every trajectory file and write episodes.json and summary.json."""
    _banner("Ingest trajectories")
    data = config.data
    if not data.trajectories:
        raise ConfigError("data.trajectories lists no files to ingest")
    parser = TrajectoryParser(data.column_schema(), data.unit_system, data.delimiter)
    extractor = EpisodeExtractor(min_length=data.min_length)
    frames = chain.from_iterable(parser.parse_file(path) for path in data.trajectories)
    episodes = extractor.extract(frames)

    attached = Counter(kind.value for episode in episodes for kind in episode.anomalies)
    summary = summarize(episodes, data.name, dict(extractor.anomaly_counts - attached))
    save_episodes(episodes, config.output_dir / "episodes.json", data.name)
    write_json(summary, config.output_dir / "summary.json")
    return {
        "Files": len(data.trajectories),
        "Episodes": summary.episode_count,
        "Drivers": summary.driver_count,
        "Frames": summary.total_frames,
        "Anomalies": summary.anomaly_counts,
    }


def cmd_synth(config: RunConfig) -> Dict[str, Any]:
    """Generate the configured population and write episodes.json and labels.json."""
    _banner("Synthesize driver population")
    spec = config.synth.population
    if spec is None:
        raise ConfigError("synth.population is not configured")
    generator = PopulationGenerator(spec)
    episodes, labels = generator.generate()
    save_episodes(episodes, config.output_dir / "episodes.json", config.data.name)
    write_json(labels, config.output_dir / "labels.json")
    summary = summarize(episodes, config.data.name)
    write_json(summary, config.output_dir / "summary.json")
    archetypes = Counter(label.archetype_name for label in labels.drivers.values())
    return {
        "Drivers": summary.driver_count,
        "Episodes": summary.episode_count,
        "Frames": summary.total_frames,
        "Archetypes": dict(sorted(archetypes.items())),
        "Regenerated draws": generator.regenerations,
    }


def cmd_fit(config: RunConfig, mode: str, cache: Optional[FitCache] = None) -> Dict[str, Any]:
    """Fit per driver and/or shared; write fits_<mode>.json/csv and mse_table.csv."""
    _banner(f"Fit IDM parameters ({mode})")
    if mode not in FIT_MODES:
        raise ConfigError(f"Unknown fit mode '{mode}' (expected one of {FIT_MODES})")
    cache = cache or _fit_cache(config)
    dataset = _load_dataset(config)
    out = config.output_dir
    options = config.simulation.to_options()

    per_driver = shared = None
    if mode in ("per_driver", "both"):
        per_driver = _per_driver_fits(config, dataset, cache)
        write_json(per_driver, out / "fits_per_driver.json")
        write_csv(fits_frame(per_driver), out / "fits_per_driver.csv")
    if mode in ("shared", "both"):
        shared = _shared_fit(config, dataset, cache)
        write_json(shared, out / "fits_shared.json")
        write_csv(fits_frame({0: shared}), out / "fits_shared.csv")

    rows, per_mode = mse_table(
        dataset, per_driver, shared, config.data.name, options, config.calibration.pooling
    )
    write_mse_table(rows, out / "mse_table.csv")
    write_driver_mses(per_mode, out / "driver_mse.csv")

    stats: Dict[str, Any] = {"Drivers": len(dataset)}
    for row in rows:
        stats[f"MSE {row.mode}"] = f"{row.mse_mean:.4f} +- {row.mse_se:.4f} (sd {row.mse_sd:.4f})"
    stats["Cache hits"] = cache.hits
    return stats


def _sample_episodes(
    episodes: Sequence[FollowEpisode], count: int, seed: int
) -> List[FollowEpisode]:
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(episodes), size=min(count, len(episodes)), replace=False)
    return [episodes[i] for i in sorted(int(i) for i in picks)]


def _boosted_model(config: RunConfig, episodes: Sequence[FollowEpisode]) -> BoostModel:
    """Boosted model for the rollout command, with its holdout error table.

    Trains on all but a seeded holdout unless boosting.model_path names a saved
    model, which is replayed as is.
    """
    boosting = config.boosting
    rng = np.random.default_rng(boosting.seed)
    order = [int(i) for i in rng.permutation(len(episodes))]
    n_holdout = int(round(boosting.holdout_fraction * len(episodes)))
    if 0 < n_holdout < len(episodes):
        holdout = [episodes[i] for i in sorted(order[:n_holdout])]
        training = [episodes[i] for i in sorted(order[n_holdout:])]
    else:
        holdout = training = list(episodes)

    if boosting.model_path is not None:
        model = load_model(boosting.model_path)
    else:
        model = train(
            build_training_set(training),
            rounds=boosting.rounds,
            max_depth=boosting.max_depth,
            learning_rate=boosting.learning_rate,
            seed=boosting.seed,
            subsample=boosting.subsample,
            min_samples_leaf=boosting.min_samples_leaf,
        )
    out = config.output_dir
    save_model(model, out / "boost_model.json")
    write_loss_csv(model, out / "boost_training.csv")

    options = config.simulation.to_options()
    errors = pd.DataFrame(
        [
            {
                "episode_id": episode.episode_id,
                "driver_id": episode.driver_id,
                "frames": episode.length,
                "open_loop_mae": float(open_loop_errors(model, episode).mean()),
                "closed_loop_mae": float(
                    closed_loop_errors(model, episode, options=options).mean()
                ),
            }
            for episode in holdout
        ],
        columns=["episode_id", "driver_id", "frames", "open_loop_mae", "closed_loop_mae"],
    )
    write_csv(errors, out / "boost_errors.csv")
    return model


def cmd_rollout(
    config: RunConfig, source: str, cache: Optional[FitCache] = None
) -> Dict[str, Any]:
    """Replay sampled episodes and write rollouts/<source>/<episode>.csv."""
    _banner(f"Rollout ({source})")
    if source not in ROLLOUT_SOURCES:
        raise ConfigError(f"Unknown rollout source '{source}' (expected one of {ROLLOUT_SOURCES})")
    cache = cache or _fit_cache(config)
    dataset = _load_dataset(config)
    episodes = [episode for driver_episodes in dataset.values() for episode in driver_episodes]
    sampled = _sample_episodes(episodes, config.rollout.n_episodes, config.rollout.seed)
    options = config.simulation.to_options()

    def replay_idm(
        params_for: Callable[[FollowEpisode], IdmParams]
    ) -> Dict[str, RolloutResult]:
        return {
            episode.episode_id: rollout(
                params_for(episode),
                EgoState(velocity=episode.ego_velocity[0], gap=episode.gap[0]),
                episode.leader_velocity,
                dt=episode.dt,
                options=options,
            )
            for episode in sampled
        }

    if source == "idm_per_driver":
        drivers = sorted({episode.driver_id for episode in sampled})
        fits = _per_driver_fits(config, {d: dataset[d] for d in drivers}, cache)
        results = replay_idm(lambda episode: fits[episode.driver_id].params)
    elif source == "idm_shared":
        shared = _shared_fit(config, dataset, cache)
        results = replay_idm(lambda episode: shared.params)
    else:
        model = _boosted_model(config, episodes)
        results = {
            episode.episode_id: rollout_boosted(
                model,
                EgoState(velocity=episode.ego_velocity[0], gap=episode.gap[0]),
                episode.leader_velocity,
                dt=episode.dt,
                options=options,
            )
            for episode in sampled
        }

    directory = config.output_dir / "rollouts" / source
    index = []
    for episode in sampled:
        result = results[episode.episode_id]
        frame = rollout_frame(episode, result)
        write_csv(frame, directory / f"{slugify(episode.episode_id)}.csv")
        index.append(
            {
                "episode_id": episode.episode_id,
                "driver_id": episode.driver_id,
                "frames": episode.length,
                "velocity_rmse": float(np.sqrt(np.mean((frame.v_pred - frame.v_truth) ** 2))),
                "collided": result.collided,
            }
        )
    write_csv(
        pd.DataFrame(
            index, columns=["episode_id", "driver_id", "frames", "velocity_rmse", "collided"]
        ),
        directory / "index.csv",
    )
    return {
        "Episodes": len(sampled),
        "Collisions": sum(1 for row in index if row["collided"]),
        "Mean velocity RMSE": f"{np.mean([row['velocity_rmse'] for row in index]):.4f}",
    }


def _refit_noise(
    config: RunConfig, dataset: Dict[int, List[FollowEpisode]], cache: FitCache
) -> List[FitNoiseEstimate]:
    """Refit noise of a seeded driver sample; repeat 0 reuses the per-driver fit."""
    calibration = config.calibration
    rng = np.random.default_rng(config.analysis.seed)
    drivers = sorted(
        int(d)
        for d in rng.choice(
            sorted(dataset), size=min(calibration.noise_drivers, len(dataset)), replace=False
        )
    )
    tasks = {
        (driver_id, repeat): FitTask(
            episodes=dataset[driver_id],
            seed=(
                driver_seed(calibration.seed, driver_id)
                if repeat == 0
                else driver_seed(calibration.seed, (driver_id, repeat))
            ),
            space=calibration.space,
            n_trials=calibration.n_trials,
            options=config.simulation.to_options(),
            pooling=calibration.pooling,
            driver_id=driver_id,
        )
        for driver_id in drivers
        for repeat in range(calibration.noise_repeats)
    }
    fits = cache.fit_many(tasks, config.jobs)
    return [
        fit_noise_from_results(
            [fits[(driver_id, repeat)] for repeat in range(calibration.noise_repeats)]
        )
        for driver_id in drivers
    ]


def cmd_analyze(
    config: RunConfig, which: str, cache: Optional[FitCache] = None
) -> Dict[str, Any]:
    """Run the requested analyses; `all` shares one fit cache across them."""
    _banner(f"Analyze ({which})")
    if which not in ANALYSES:
        raise ConfigError(f"Unknown analysis '{which}' (expected one of {ANALYSES})")
    cache = cache or _fit_cache(config)
    dataset = _load_dataset(config)
    analysis = config.analysis
    calibration = config.calibration
    out = config.output_dir / "analysis"
    svg = "svg" in config.formats
    renderer = SvgRenderer() if svg else None
    stats: Dict[str, Any] = {"Drivers": len(dataset)}

    if which in ("diversity", "all"):
        report = diversity_metrics(
            dataset,
            accel_threshold=analysis.accel_threshold,
            headway_cap=analysis.headway_cap,
            mode=analysis.threshold_mode,
            window_frames=analysis.window_frames,
            bins=analysis.histogram_bins,
        )
        write_json(report, out / "diversity.json")
        write_diversity(report, out)
        if renderer is not None:
            for name, metric in report.metrics.items():
                write_svg(renderer.render_histogram(metric), out / f"diversity_{name}.svg")
        for name, metric in report.metrics.items():
            stats[f"Included ({name})"] = f"{metric.inclusion_fraction:.0%}"

    if which in ("params", "all"):
        per_driver = _per_driver_fits(config, dataset, cache)
        shared = _shared_fit(config, dataset, cache)
        noise = _refit_noise(config, dataset, cache)
        report = param_distribution(per_driver, shared, noise, analysis.expected_fraction)
        write_json(report, out / "param_distribution.json")
        write_param_distribution(report, out)
        stats["Diverse parameters"] = report.diverse_parameters

    if which in ("consistency", "all"):
        report = consistency_experiment(
            dataset,
            space=calibration.space,
            n_trials=analysis.n_trials or calibration.n_trials,
            buckets=analysis.buckets,
            seed=analysis.seed,
            options=config.simulation.to_options(),
            pooling=calibration.pooling,
            min_fit_length=analysis.min_fit_length,
            cross_pairs=analysis.cross_pairs,
            alternative=analysis.alternative,
            jobs=config.jobs,
            cache=cache,
        )
        write_json(report, out / "consistency.json")
        write_consistency(report, out)
        if renderer is not None and report.buckets:
            write_svg(renderer.render_errorbars(report), out / "consistency.svg")
        stats["Buckets"] = [bucket.label for bucket in report.buckets]
        if report.significance is not None:
            stats["Welch p-value"] = f"{report.significance.p_value:.3g}"

    stats["Cache hits"] = cache.hits
    stats["Cache misses"] = cache.misses
    return stats


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="Run config file (.toml or .yaml)")
    common.add_argument("--out", type=str, help="Output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="Master seed; derives every seed in the config")
    common.add_argument("--jobs", type=int, help="Worker processes for per-driver fits")
    common.add_argument(
        "--format",
        action="append",
        dest="formats",
        metavar="{csv,json,svg}",
        help="Output format (repeatable; csv and json are always written)",
    )

    parser = argparse.ArgumentParser(
        prog="drivercal",
        description="Car-following calibration and driver-behaviour analysis",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Build episodes from NGSIM exports
  drivercal ingest --config configs/ngsim_us101.yaml

  # Synthetic two-archetype population, then per-driver vs shared fits
  drivercal synth --config configs/synth_two_archetype.toml
  drivercal fit --config configs/synth_two_archetype.toml --mode both --jobs 8

  # Consistency experiment with SVG charts
  drivercal analyze consistency --config configs/synth_consistency.toml --format svg
        """,
    )
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("ingest", parents=[common], help="Parse trajectory CSVs into episodes")
    commands.add_parser("synth", parents=[common], help="Generate a synthetic population")
    fit_parser = commands.add_parser("fit", parents=[common], help="Calibrate IDM parameters")
    fit_parser.add_argument("--mode", default="both", help=f"One of {FIT_MODES}")
    rollout_parser = commands.add_parser("rollout", parents=[common], help="Replay episodes")
    rollout_parser.add_argument(
        "--source", default=None, help=f"One of {ROLLOUT_SOURCES} (default from config)"
    )
    analyze_parser = commands.add_parser("analyze", parents=[common], help="Population analyses")
    analyze_parser.add_argument("which", nargs="?", default="all", help=f"One of {ANALYSES}")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the drivercal command; returns the process exit code."""
    configure_logging()
    args = build_parser().parse_args(argv)

    try:
        config = apply_overrides(
            load_run_config(args.config),
            out=args.out,
            seed=args.seed,
            jobs=args.jobs,
            formats=args.formats,
        )
        config.output_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "ingest":
            stats = cmd_ingest(config)
        elif args.command == "synth":
            stats = cmd_synth(config)
        elif args.command == "fit":
            stats = cmd_fit(config, args.mode)
        elif args.command == "rollout":
            stats = cmd_rollout(config, args.source or config.rollout.source)
        else:
            stats = cmd_analyze(config, args.which)
    except (ConfigError, SchemaError, TrajectoryParseError, BoostingConfigError) as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        print(f"\n❌ Error: {e}")
        return EXIT_CONFIG
    except GenerationError as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        print(f"\n❌ Error: {e}")
        return EXIT_GENERATION
    except (CalibrationError, AnalysisError) as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        print(f"\n❌ Error: {e}")
        return EXIT_NO_DATA

    _print_statistics(stats)
    print(f"\n✅ Outputs written to {Path(config.output_dir)}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
