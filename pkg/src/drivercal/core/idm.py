"""
Intelligent Driver Model dynamics.

Acceleration law, Euler step, and closed-loop rollout of an ego vehicle
against a recorded leader velocity profile. All functions are pure.
"""

import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np

from drivercal.models.idm_models import (
    EgoState,
    IdmParams,
    RolloutResult,
    SimulationOptions,
)

logger = logging.getLogger(__name__)

DEFAULT_OPTIONS = SimulationOptions()


class NonPositiveGapError(ValueError):
    """Raised when the gap to the leader is zero or negative.

    state holds the offending ego state when raised by a step.
    """

    def __init__(self, message: str = "nonpositive gap", state: Optional[EgoState] = None):
        super().__init__(message)
        self.state = state


def desired_gap(params: IdmParams, v: float, delta_v: float, clamp: bool = True) -> float:
    """Dynamic desired gap s*(v, delta_v)."""
    s_star = params.s0 + v * params.T + v * delta_v / (2.0 * math.sqrt(params.a * params.b))
    if clamp:
        return max(0.0, s_star)
    return s_star


def idm_acceleration(
    params: IdmParams, v: float, delta_v: float, s: float, clamp: bool = True
) -> float:
    """IDM acceleration a[1 - (v/v0)^delta - (s*/s)^2].

    Args:
        params: IDM parameters
        v: Ego velocity (m/s)
        delta_v: Approach rate, ego minus leader velocity (m/s)
        s: Bumper-to-bumper gap (m)
        clamp: Floor s* at zero

    Raises:
        NonPositiveGapError: If s <= 0
    """
    if s <= 0:
        raise NonPositiveGapError()
    s_star = desired_gap(params, v, delta_v, clamp)
    return params.a * (1.0 - (v / params.v0) ** params.delta - (s_star / s) ** 2)


def equilibrium_gap(params: IdmParams, v: float) -> float:
    """Steady-state gap at speed v behind a leader driving at v (requires v < v0)."""
    if not 0 <= v < params.v0:
        raise ValueError(f"equilibrium needs 0 <= v < v0, got v={v}")
    return (params.s0 + v * params.T) / math.sqrt(1.0 - (v / params.v0) ** params.delta)


def _advance(
    params: IdmParams,
    v: float,
    gap: float,
    leader_velocity: float,
    dt: float,
    semi_implicit: bool,
    clamp: bool,
    noise: float = 0.0,
) -> Tuple[float, float]:
    """One Euler update on plain floats; no gap check on the result."""
    acc = idm_acceleration(params, v, v - leader_velocity, gap, clamp) + noise
    v_next = max(0.0, v + acc * dt)
    ego_speed = v_next if semi_implicit else v
    return v_next, gap + (leader_velocity - ego_speed) * dt


def step(
    params: IdmParams,
    state: EgoState,
    leader_velocity: float,
    dt: float = 0.1,
    options: Optional[SimulationOptions] = None,
    noise: float = 0.0,
) -> EgoState:
    """Advance the ego state by one Euler step.

    Velocity is clamped at zero. With options.semi_implicit the gap is
    integrated with the post-step velocity, otherwise with the pre-step one.

    Args:
        params: IDM parameters
        state: Current ego state
        leader_velocity: Leader velocity during the step (m/s)
        dt: Step length (s)
        options: Integration switches (dt in options is ignored here)
        noise: Additive acceleration term (m/s^2)

    Raises:
        NonPositiveGapError: If the updated gap is <= 0; .state holds it
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    options = options or DEFAULT_OPTIONS
    v_next, gap_next = _advance(
        params,
        state.velocity,
        state.gap,
        leader_velocity,
        dt,
        options.semi_implicit,
        options.clamp_desired_gap,
        noise,
    )
    if gap_next <= 0:
        raise NonPositiveGapError(state=EgoState(velocity=v_next, gap=gap_next))
    return EgoState(velocity=v_next, gap=gap_next)


def rollout(
    params: IdmParams,
    initial: EgoState,
    leader_velocities: Sequence[float],
    dt: float = 0.1,
    options: Optional[SimulationOptions] = None,
    noise: Optional[Sequence[float]] = None,
) -> RolloutResult:
    """Closed-loop rollout, one ego state per leader frame.

    Frame 0 is the initial state; frame k follows from frame k-1 and the
    leader velocity at k-1. On collision the collision values are repeated
    to the end of the horizon.

    Args:
        params: IDM parameters
        initial: Recorded initial velocity and gap
        leader_velocities: Leader velocity per frame
        dt: Step length (s)
        options: Integration switches
        noise: Optional acceleration noise per step (len(leader) - 1 entries)
    """
    if len(leader_velocities) == 0:
        raise ValueError("leader velocity series is empty")
    if initial.gap <= 0:
        raise NonPositiveGapError()
    options = options or DEFAULT_OPTIONS
    semi_implicit = options.semi_implicit
    clamp = options.clamp_desired_gap

    n = len(leader_velocities)
    velocities = [initial.velocity]
    gaps = [initial.gap]
    v, gap = initial.velocity, initial.gap
    for k in range(1, n):
        eps = noise[k - 1] if noise is not None else 0.0
        v, gap = _advance(
            params, v, gap, leader_velocities[k - 1], dt, semi_implicit, clamp, eps
        )
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


def rollout_batch(
    param_matrix: np.ndarray,
    initial: EgoState,
    leader_velocities: Sequence[float],
    dt: float = 0.1,
    options: Optional[SimulationOptions] = None,
    delta: float = 4.0,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Roll out many parameter sets against one leader profile at once.

    Args:
        param_matrix: (n, 5) array of (v0, s0, T, a, b) rows
        initial: Shared initial state
        leader_velocities: Leader velocity per frame
        dt: Step length (s)
        options: Integration switches
        delta: Acceleration exponent

    Returns:
        (velocities (n, L), gaps (n, L), collided (n,)) with the same
        freezing rule as rollout
    """
    options = options or DEFAULT_OPTIONS
    params = np.atleast_2d(np.asarray(param_matrix, dtype=float))
    v0, s0, T, a, b = (params[:, i] for i in range(5))
    sqrt_ab2 = 2.0 * np.sqrt(a * b)
    leader = np.asarray(leader_velocities, dtype=float)
    n_sets, n_frames = params.shape[0], leader.shape[0]

    velocities = np.empty((n_sets, n_frames))
    gaps = np.empty((n_sets, n_frames))
    v = np.full(n_sets, initial.velocity)
    gap = np.full(n_sets, initial.gap)
    alive = np.ones(n_sets, dtype=bool)
    velocities[:, 0] = v
    gaps[:, 0] = gap

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for k in range(1, n_frames):
            lead = leader[k - 1]
            s_star = s0 + v * T + v * (v - lead) / sqrt_ab2
            if options.clamp_desired_gap:
                s_star = np.maximum(0.0, s_star)
            acc = a * (1.0 - (v / v0) ** delta - (s_star / gap) ** 2)
            v_next = np.maximum(0.0, v + acc * dt)
            ego_speed = v_next if options.semi_implicit else v
            gap_next = gap + (lead - ego_speed) * dt
            v = np.where(alive, v_next, v)
            gap = np.where(alive, gap_next, gap)
            alive &= gap > 0
            velocities[:, k] = v
            gaps[:, k] = gap
    return velocities, gaps, ~alive
