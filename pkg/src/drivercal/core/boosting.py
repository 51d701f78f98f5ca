"""
Boosted regression-tree baseline.

Learns the one-step velocity change from instantaneous car-following
features (no driver-specific inputs) with squared-loss gradient boosting
over scikit-learn regression trees, and replays the learned policy in
closed loop to expose error accumulation.
"""

import json
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError
from sklearn.tree import DecisionTreeRegressor

from drivercal.models.boost_models import (
    FEATURE_NAMES,
    BoostModel,
    FeatureVector,
    RegressionTree,
    TrainingSample,
)
from drivercal.models.idm_models import EgoState, RolloutResult, SimulationOptions
from drivercal.models.trajectory_models import FollowEpisode

logger = logging.getLogger(__name__)

# Velocity floor of the gap-in-seconds feature (m/s)
MIN_HEADWAY_SPEED = 0.1


class BoostingConfigError(Exception):
    """Raised for invalid boosting hyperparameters or an empty training set."""

    pass


def make_features(velocity: float, gap: float, leader_velocity: float) -> FeatureVector:
    """Features of one frame from the ego state and the leader speed."""
    return FeatureVector(
        velocity=velocity,
        gap_m=gap,
        gap_s=gap / max(velocity, MIN_HEADWAY_SPEED),
        delta_v=velocity - leader_velocity,
    )


def _feature_row(velocity: float, gap: float, leader_velocity: float) -> List[float]:
    return [velocity, gap, gap / max(velocity, MIN_HEADWAY_SPEED), velocity - leader_velocity]


def build_training_set(episodes: Sequence[FollowEpisode]) -> List[TrainingSample]:
    """One sample per consecutive frame pair, pooled over all episodes.

    Features come from frame t, the target is v(t+1) - v(t).
    """
    samples = []
    for episode in episodes:
        ego, lead, gap = episode.ego_velocity, episode.leader_velocity, episode.gap
        for t in range(episode.length - 1):
            samples.append(
                TrainingSample(
                    features=make_features(ego[t], gap[t], lead[t]),
                    target=ego[t + 1] - ego[t],
                )
            )
    return samples


def training_arrays(samples: Sequence[TrainingSample]) -> Tuple[np.ndarray, np.ndarray]:
    """(X, y) arrays with feature columns in FEATURE_NAMES order."""
    X = np.array([sample.features.as_list() for sample in samples], dtype=float)
    y = np.array([sample.target for sample in samples], dtype=float)
    return X.reshape(len(samples), len(FEATURE_NAMES)), y


def _to_regression_tree(estimator: DecisionTreeRegressor) -> RegressionTree:
    tree = estimator.tree_
    is_leaf = tree.children_left < 0
    return RegressionTree(
        feature=np.where(is_leaf, -1, tree.feature).astype(int).tolist(),
        threshold=np.where(is_leaf, 0.0, tree.threshold).tolist(),
        left=np.where(is_leaf, -1, tree.children_left).astype(int).tolist(),
        right=np.where(is_leaf, -1, tree.children_right).astype(int).tolist(),
        value=tree.value[:, 0, 0].tolist(),
    )


def _check_hyperparameters(
    n_samples: int, rounds: int, max_depth: int, learning_rate: float, subsample: float
) -> None:
    if n_samples == 0:
        raise BoostingConfigError("no training samples")
    if rounds <= 0:
        raise BoostingConfigError(f"rounds must be positive, got {rounds}")
    if max_depth <= 0:
        raise BoostingConfigError(f"max_depth must be positive, got {max_depth}")
    if not 0 < learning_rate <= 1:
        raise BoostingConfigError(f"learning_rate must be in (0, 1], got {learning_rate}")
    if not 0 < subsample <= 1:
        raise BoostingConfigError(f"subsample must be in (0, 1], got {subsample}")


def train(
    samples: Sequence[TrainingSample],
    rounds: int = 2000,
    max_depth: int = 4,
    learning_rate: float = 0.1,
    seed: int = 0,
    subsample: float = 1.0,
    min_samples_leaf: int = 1,
) -> BoostModel:
    """Fit a squared-loss gradient-boosted tree ensemble.

    Each round fits a depth-limited tree to the current residuals (on a
    seeded row subsample when subsample < 1) and adds it with shrinkage
    learning_rate. With subsample = 1 the training loss never increases.

    Raises:
        BoostingConfigError: If a hyperparameter is out of range or samples is empty
    """
    _check_hyperparameters(len(samples), rounds, max_depth, learning_rate, subsample)
    X, y = training_arrays(samples)
    rng = np.random.default_rng(seed)
    n = len(y)
    n_rows = max(1, int(round(subsample * n)))

    base = float(y.mean())
    prediction = np.full(n, base)
    trees: List[RegressionTree] = []
    loss_history: List[float] = []
    for round_index in range(rounds):
        residual = y - prediction
        rows = np.sort(rng.choice(n, n_rows, replace=False)) if n_rows < n else slice(None)
        estimator = DecisionTreeRegressor(
            max_depth=max_depth, min_samples_leaf=min_samples_leaf, random_state=seed
        )
        estimator.fit(X[rows], residual[rows])
        leaf_values = estimator.tree_.value[:, 0, 0]
        prediction = prediction + learning_rate * leaf_values[estimator.apply(X)]
        trees.append(_to_regression_tree(estimator))
        loss_history.append(float(np.mean((y - prediction) ** 2)))
        if round_index % 500 == 0:
            logger.debug(f"Round {round_index}: training loss {loss_history[-1]:.6g}")

    logger.info(
        f"Trained {rounds} rounds on {n} samples, final loss {loss_history[-1]:.6g}"
    )
    return BoostModel(
        base_prediction=base,
        learning_rate=learning_rate,
        max_depth=max_depth,
        trees=trees,
        loss_history=loss_history,
    )


def _predict_row(model: BoostModel, row: Sequence[float]) -> float:
    # split thresholds were learned on float32 features
    x = [float(np.float32(value)) for value in row]
    return model.base_prediction + model.learning_rate * sum(
        tree.predict_one(x) for tree in model.trees
    )


def predict_step(model: BoostModel, fv: FeatureVector) -> float:
    """Predicted velocity change (m/s) over one frame."""
    return _predict_row(model, fv.as_list())


def predict_batch(model: BoostModel, X: np.ndarray) -> np.ndarray:
    """Vectorized predict_step over the rows of X."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float32))
    rows = np.arange(X.shape[0])
    total = np.zeros(X.shape[0])
    for tree in model.trees:
        feature = np.asarray(tree.feature)
        threshold = np.asarray(tree.threshold)
        left, right = np.asarray(tree.left), np.asarray(tree.right)
        node = np.zeros(X.shape[0], dtype=int)
        for _ in range(model.max_depth):
            f = feature[node]
            inner = f >= 0
            if not inner.any():
                break
            go_left = X[rows, np.maximum(f, 0)] <= threshold[node]
            node = np.where(inner, np.where(go_left, left[node], right[node]), node)
        total += np.asarray(tree.value)[node]
    return model.base_prediction + model.learning_rate * total


def rollout_boosted(
    model: BoostModel,
    initial: EgoState,
    leader_velocities: Sequence[float],
    dt: float = 0.1,
    options: Optional[SimulationOptions] = None,
) -> RolloutResult:
    """Closed-loop replay of the learned policy.

    The predicted change is applied to the velocity (clamped at zero) and the
    gap is integrated as in the IDM rollout, with the same collision freezing.
    """
    if len(leader_velocities) == 0:
        raise ValueError("leader velocity series is empty")
    options = options or SimulationOptions()
    n = len(leader_velocities)
    v, gap = initial.velocity, initial.gap
    velocities, gaps = [v], [gap]
    for k in range(1, n):
        lead = leader_velocities[k - 1]
        v_next = max(0.0, v + _predict_row(model, _feature_row(v, gap, lead)))
        ego_speed = v_next if options.semi_implicit else v
        v, gap = v_next, gap + (lead - ego_speed) * dt
        velocities.append(v)
        gaps.append(gap)
        if gap <= 0:
            remaining = n - k - 1
            velocities.extend([v] * remaining)
            gaps.extend([gap] * remaining)
            return RolloutResult(
                velocities=velocities, gaps=gaps, collided=True, collision_frame=k
            )
    return RolloutResult(velocities=velocities, gaps=gaps)


def open_loop_errors(model: BoostModel, episode: FollowEpisode) -> np.ndarray:
    """|predicted - true| next-frame velocity, each step starting from the recorded state."""
    X = np.array(
        [
            _feature_row(v, g, lead)
            for v, g, lead in zip(
                episode.ego_velocity[:-1], episode.gap[:-1], episode.leader_velocity[:-1]
            )
        ]
    )
    ego = np.asarray(episode.ego_velocity)
    predicted = np.maximum(0.0, ego[:-1] + predict_batch(model, X))
    return np.abs(predicted - ego[1:])


def closed_loop_errors(
    model: BoostModel,
    episode: FollowEpisode,
    horizon: Optional[int] = None,
    options: Optional[SimulationOptions] = None,
) -> np.ndarray:
    """|rolled out - true| velocity for frames 1..horizon of a closed-loop replay."""
    horizon = min(horizon or episode.length, episode.length)
    result = rollout_boosted(
        model,
        EgoState(velocity=episode.ego_velocity[0], gap=episode.gap[0]),
        episode.leader_velocity[:horizon],
        dt=episode.dt,
        options=options,
    )
    return np.abs(np.asarray(result.velocities[1:]) - np.asarray(episode.ego_velocity[1:horizon]))


def save_model(model: BoostModel, path: Union[str, Path]) -> Path:
    """Write the tree arrays (and loss history) as JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(model.model_dump(mode="json"), f, indent=2)
    return path


def load_model(path: Union[str, Path]) -> BoostModel:
    """Read a model written by save_model.

    Raises:
        BoostingConfigError: If the file is not a saved boost model
    """
    try:
        with open(path, "r") as f:
            model = BoostModel.model_validate(json.load(f))
    except (json.JSONDecodeError, ValidationError) as e:
        raise BoostingConfigError(f"{path} is not a saved boost model: {e}") from e
    logger.info(f"Loaded boost model with {model.rounds} trees from {path}")
    return model


def write_loss_csv(model: BoostModel, path: Union[str, Path]) -> Path:
    """Training metrics as (round, loss) rows, rounds counted from 1."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        {"round": range(1, len(model.loss_history) + 1), "loss": model.loss_history}
    )
    frame.to_csv(path, index=False)
    return path
