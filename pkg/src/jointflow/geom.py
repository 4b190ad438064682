"""Pure trajectory geometry.

Headings, viewing/approach angles, pairwise distance matrices between
trajectories, first-crossing detection, and hypothetical-future
extrapolation. Everything here is a pure function of immutable inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .scene import AgentType, Trajectory


class GeometryError(ValueError):
    """Degenerate geometry where an angle or crossing is undefined."""


@dataclass(frozen=True)
class CrossingCell:
    """First cell of a distance matrix where two trajectories meet."""

    t_m: int
    t_n: int
    distance: float


class ApproachAngle(NamedTuple):
    angle: float
    degenerate: bool


class ExtrapolationResult(NamedTuple):
    trajectory: Trajectory
    degenerate: bool


def heading(traj: Trajectory) -> float | None:
    """Heading angle in (-pi, pi] from the last nonzero displacement.

    Returns None for a fully stationary trajectory (the caller decides what
    stationarity means for its attention rule).
    """
    pos = traj.positions
    if len(pos) < 2:
        raise ValueError("heading needs at least 2 points")
    deltas = np.diff(pos, axis=0)
    nonzero = np.nonzero(np.any(deltas != 0.0, axis=1))[0]
    if nonzero.size == 0:
        return None
    d = deltas[nonzero[-1]]
    return math.atan2(d[1], d[0])


def approach_angle(d: np.ndarray, x_tilde: np.ndarray) -> ApproachAngle:
    """Angle in [0, pi] between a separation vector and a displacement.

    Zero-length inputs make the angle undefined; those return the neutral
    pi/2 with the degenerate flag set instead of raising, because classifier
    feature extraction must stay total.
    """
    d = np.asarray(d, dtype=float)
    x_tilde = np.asarray(x_tilde, dtype=float)
    nd, nx = np.linalg.norm(d), np.linalg.norm(x_tilde)
    if nd == 0.0 or nx == 0.0:
        return ApproachAngle(math.pi / 2.0, True)
    cos = float(np.dot(d, x_tilde) / (nd * nx))
    return ApproachAngle(math.acos(min(1.0, max(-1.0, cos))), False)


def wrap_angle(delta: float) -> float:
    """Fold an angle difference into [0, pi]."""
    w = abs(delta) % (2.0 * math.pi)
    return 2.0 * math.pi - w if w > math.pi else w


def viewing_angle(s_m: np.ndarray, gamma_m: float, s_n: np.ndarray) -> float:
    """Angle in [0, pi] at which an observer at s_m with heading gamma_m sees s_n.

    Left and right are not distinguished; only the deviation from the
    observer's heading matters.
    """
    s_m = np.asarray(s_m, dtype=float)
    s_n = np.asarray(s_n, dtype=float)
    if np.all(s_m == s_n):
        raise GeometryError("viewing angle undefined for coincident points")
    bearing = math.atan2(s_n[1] - s_m[1], s_n[0] - s_m[0])
    return wrap_angle(bearing - gamma_m)


def pairwise_distance_matrix(y_m: Trajectory, y_n: Trajectory) -> np.ndarray:
    """All-timestep-pairs Euclidean distances; D[i, j] = |y_m[i] - y_n[j]|."""
    a, b = y_m.positions, y_n.positions
    if len(a) != len(b):
        raise ValueError(f"trajectory lengths differ: {len(a)} vs {len(b)}")
    return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)


def first_crossing(D: np.ndarray, eps: float) -> CrossingCell | None:
    """Earliest-encounter cell among all entries of D at or below eps.

    "Earliest" means the smallest min(i, j) — the first wall-clock moment
    either agent occupies the conflict region — tie-broken by smaller
    max(i, j), then by smaller i. Returns None when no entry qualifies.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    ii, jj = np.nonzero(D <= eps)
    if ii.size == 0:
        return None
    lo = np.minimum(ii, jj)
    hi = np.maximum(ii, jj)
    key = np.lexsort((ii, hi, lo))
    k = key[0]
    return CrossingCell(int(ii[k]), int(jj[k]), float(D[ii[k], jj[k]]))


def crossing_threshold(
    type_m: AgentType, type_n: AgentType, symmetric: bool = False
) -> float:
    """Distance threshold for a crossing between two agents.

    Defaults to the first agent's average width (distances are measured
    between center points); the symmetric variant averages both widths.
    """
    if symmetric:
        return 0.5 * (type_m.avg_width_m + type_n.avg_width_m)
    return type_m.avg_width_m


def extrapolate_hypothetical(
    past: Trajectory, future: Trajectory, agent_type: AgentType
) -> ExtrapolationResult:
    """Speed a future up to what the agent would do if unimpeded.

    Every future step keeps its ground-truth direction; step magnitudes are
    raised to a per-step speed floor of max(last observed speed, the agent
    type's average speed). Steps already at or above the floor pass through
    unchanged. Stationary ground-truth steps reuse the most recent nonzero
    direction, falling back to the past heading.
    """
    if len(past) < 1 or len(future) < 1:
        raise ValueError("past and future must be nonempty")
    dt = future.dt
    deltas = np.diff(future.positions, axis=0, prepend=past.positions[-1:])
    speeds = np.linalg.norm(deltas, axis=1) / dt

    if len(past) >= 2:
        x_h_speed = float(np.linalg.norm(past.positions[-1] - past.positions[-2])) / past.dt
    else:
        x_h_speed = 0.0
    floor = max(x_h_speed, agent_type.avg_speed_mps)

    past_heading = heading(past) if len(past) >= 2 else None
    fallback_dir = None
    if past_heading is not None:
        fallback_dir = np.array([math.cos(past_heading), math.sin(past_heading)])

    out = np.empty_like(deltas)
    last_dir = fallback_dir
    degenerate = False
    for t in range(len(deltas)):
        norm = float(np.linalg.norm(deltas[t]))
        if norm > 0.0:
            direction = deltas[t] / norm
            last_dir = direction
        else:
            direction = last_dir
        if direction is None:
            out[t] = deltas[t]
            degenerate = True
            continue
        if speeds[t] >= floor:
            out[t] = deltas[t]
        else:
            out[t] = direction * floor * dt

    positions = np.empty_like(future.positions)
    anchor = past.positions[-1]
    for t in range(len(out)):
        positions[t] = anchor + out[t]
        anchor = positions[t]
    if degenerate and np.all(speeds == 0.0):
        return ExtrapolationResult(future, True)
    return ExtrapolationResult(Trajectory(positions, dt), degenerate)
