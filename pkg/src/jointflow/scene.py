"""Scene data model: agents, trajectories, displacement transforms and file I/O.

A scene is one traffic situation: a set of agents with identities, types,
and past/future trajectories sampled on a shared clock. Scenes are stored
one JSON object per line so corpora stream and diff cleanly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class SceneFormatError(ValueError):
    """A scene record could not be parsed."""


class SceneValidationError(ValueError):
    """A parsed scene violates a structural invariant."""


class SplitError(ValueError):
    """A dataset split request cannot be satisfied."""


class AgentKind(Enum):
    VEHICLE = "vehicle"
    MOTORCYCLE = "motorcycle"
    BICYCLE = "bicycle"
    PEDESTRIAN = "pedestrian"


@dataclass(frozen=True)
class AgentType:
    """Physical profile of an agent class.

    avg_width_m drives crossing-detection thresholds; avg_speed_mps is the
    free-flow speed floor used when extrapolating hypothetical futures.
    """

    kind: AgentKind
    avg_width_m: float
    avg_speed_mps: float

    def __post_init__(self):
        if self.avg_width_m <= 0 or self.avg_speed_mps <= 0:
            raise SceneValidationError(
                f"agent type {self.kind.value}: width and speed must be positive"
            )

    def one_hot(self) -> np.ndarray:
        vec = np.zeros(len(AgentKind))
        vec[list(AgentKind).index(self.kind)] = 1.0
        return vec


# Widths and speeds are defaults, not measured constants; override per
# corpus via default_agent_types(...) when the data says otherwise.
DEFAULT_WIDTHS = {
    AgentKind.VEHICLE: 2.0,
    AgentKind.MOTORCYCLE: 1.0,
    AgentKind.BICYCLE: 0.8,
    AgentKind.PEDESTRIAN: 0.5,
}
DEFAULT_SPEEDS = {
    AgentKind.VEHICLE: 7.0,
    AgentKind.MOTORCYCLE: 7.0,
    AgentKind.BICYCLE: 3.5,
    AgentKind.PEDESTRIAN: 1.4,
}


def default_agent_types(
    widths: dict[AgentKind, float] | None = None,
    speeds: dict[AgentKind, float] | None = None,
) -> dict[AgentKind, AgentType]:
    """Build the kind -> AgentType table, optionally overriding defaults."""
    widths = {**DEFAULT_WIDTHS, **(widths or {})}
    speeds = {**DEFAULT_SPEEDS, **(speeds or {})}
    return {k: AgentType(k, widths[k], speeds[k]) for k in AgentKind}


DEFAULT_AGENT_TYPES = default_agent_types()


@dataclass(frozen=True)
class Trajectory:
    """An ordered sequence of 2D positions (meters) at a fixed timestep."""

    positions: np.ndarray  # (n, 2) float64
    dt: float

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise SceneValidationError(f"positions must be (n, 2), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise SceneValidationError("positions contain non-finite values")
        if self.dt <= 0:
            raise SceneValidationError(f"dt must be positive, got {self.dt}")
        pos = pos.copy()
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class Agent:
    agent_id: str
    atype: AgentType
    past: Trajectory
    future: Trajectory


@dataclass(frozen=True)
class Scene:
    """One traffic situation; all agents share horizons and timestep."""

    scene_id: str
    agents: tuple[Agent, ...]
    sampling_hz: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if self.sampling_hz <= 0:
            raise SceneValidationError("sampling_hz must be positive")
        if not self.agents:
            raise SceneValidationError(f"scene {self.scene_id}: needs at least one agent")
        ids = [a.agent_id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise SceneValidationError(f"scene {self.scene_id}: duplicate agent ids")
        n_i, n_o = len(self.agents[0].past), len(self.agents[0].future)
        dt = self.agents[0].past.dt
        for a in self.agents:
            if len(a.past) != n_i or len(a.future) != n_o:
                raise SceneValidationError(
                    f"scene {self.scene_id}: agent {a.agent_id} horizons "
                    f"({len(a.past)}/{len(a.future)}) differ from ({n_i}/{n_o})"
                )
            if a.past.dt != dt or a.future.dt != dt:
                raise SceneValidationError(
                    f"scene {self.scene_id}: agent {a.agent_id} dt mismatch"
                )
        if abs(dt - 1.0 / self.sampling_hz) > 1e-9:
            raise SceneValidationError(
                f"scene {self.scene_id}: dt {dt} inconsistent with "
                f"sampling_hz {self.sampling_hz}"
            )

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def n_past(self) -> int:
        return len(self.agents[0].past)

    @property
    def n_future(self) -> int:
        return len(self.agents[0].future)

    @property
    def dt(self) -> float:
        return self.agents[0].past.dt

    def agent(self, agent_id: str) -> Agent:
        for a in self.agents:
            if a.agent_id == agent_id:
                return a
        raise KeyError(agent_id)

    def past_view(self) -> "PastScene":
        return PastScene(
            scene_id=self.scene_id,
            agents=tuple(
                PastAgent(a.agent_id, a.atype, a.past) for a in self.agents
            ),
            sampling_hz=self.sampling_hz,
        )


@dataclass(frozen=True)
class PastAgent:
    agent_id: str
    atype: AgentType
    past: Trajectory


@dataclass(frozen=True)
class PastScene:
    """A scene stripped of futures: the only view inference code may see."""

    scene_id: str
    agents: tuple[PastAgent, ...]
    sampling_hz: float

    @property
    def dt(self) -> float:
        return self.agents[0].past.dt

    def agent(self, agent_id: str) -> PastAgent:
        for a in self.agents:
            if a.agent_id == agent_id:
                return a
        raise KeyError(agent_id)


@dataclass(frozen=True)
class DisplacementSeq:
    """Per-step displacement vectors plus the origin they integrate from."""

    deltas: np.ndarray  # (n-1, 2)
    origin: np.ndarray  # (2,)
    dt: float


def to_displacements(traj: Trajectory) -> DisplacementSeq:
    """Convert positions to per-step displacements (last minus previous)."""
    pos = traj.positions
    if len(pos) < 1:
        raise ValueError("trajectory must have at least one point")
    return DisplacementSeq(
        deltas=np.diff(pos, axis=0), origin=pos[0].copy(), dt=traj.dt
    )


def from_displacements(seq: DisplacementSeq) -> Trajectory:
    """Rebuild a trajectory by sequential accumulation from the origin.

    Accumulation mirrors the forward differencing step by step so the
    round trip is bit-exact whenever steps do not dwarf coordinates.
    """
    n = len(seq.deltas) + 1
    pos = np.empty((n, 2))
    pos[0] = seq.origin
    for t, d in enumerate(seq.deltas, start=1):
        pos[t] = pos[t - 1] + d
    return Trajectory(positions=pos, dt=seq.dt)


def future_displacements(agent: Agent) -> np.ndarray:
    """Future trajectory as displacements, anchored at the last observed point.

    Returns (n_future, 2): entry 0 is future[0] - past[-1].
    """
    return np.diff(agent.future.positions, axis=0, prepend=agent.past.positions[-1:])


def past_displacements(past: Trajectory) -> np.ndarray:
    """Past trajectory as its n_past - 1 internal displacements."""
    return np.diff(past.positions, axis=0)


# -- JSON-lines persistence ---------------------------------------------


def _agent_to_json(agent: Agent) -> dict:
    return {
        "id": agent.agent_id,
        "type": agent.atype.kind.value,
        "past": agent.past.positions.tolist(),
        "future": agent.future.positions.tolist(),
    }


def scene_to_json(scene: Scene) -> dict:
    rec = {
        "scene_id": scene.scene_id,
        "sampling_hz": scene.sampling_hz,
        "agents": [_agent_to_json(a) for a in scene.agents],
    }
    if scene.meta:
        rec["meta"] = scene.meta
    return rec


def scene_from_json(rec: dict, type_table: dict[AgentKind, AgentType] | None = None) -> Scene:
    type_table = type_table or DEFAULT_AGENT_TYPES
    try:
        hz = float(rec["sampling_hz"])
        dt = 1.0 / hz
        agents = []
        for a in rec["agents"]:
            kind = AgentKind(a["type"])
            agents.append(
                Agent(
                    agent_id=str(a["id"]),
                    atype=type_table[kind],
                    past=Trajectory(np.asarray(a["past"], dtype=np.float64), dt),
                    future=Trajectory(np.asarray(a["future"], dtype=np.float64), dt),
                )
            )
        return Scene(
            scene_id=str(rec["scene_id"]),
            agents=tuple(agents),
            sampling_hz=hz,
            meta=rec.get("meta", {}),
        )
    except (KeyError, TypeError) as exc:
        raise SceneFormatError(f"malformed scene record: {exc}") from exc


def save_scenes(scenes: Sequence[Scene], path: str | Path) -> None:
    """Write scenes as JSON lines; float coordinates round-trip bit-exactly."""
    path = Path(path)
    with path.open("w") as fh:
        for scene in scenes:
            fh.write(json.dumps(scene_to_json(scene)) + "\n")


def load_scenes(
    path: str | Path, type_table: dict[AgentKind, AgentType] | None = None
) -> list[Scene]:
    """Read a JSON-lines scene file, preserving record order.

    Raises SceneFormatError naming the offending line on parse failures and
    SceneValidationError when a record breaks scene invariants.
    """
    path = Path(path)
    scenes = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SceneFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                scenes.append(scene_from_json(rec, type_table))
            except SceneFormatError as exc:
                raise SceneFormatError(f"{path}:{lineno}: {exc}") from exc
            except SceneValidationError as exc:
                raise SceneValidationError(f"{path}:{lineno}: {exc}") from exc
    return scenes


def split_dataset(
    scenes: Sequence[Scene], train_fraction: float, seed: int
) -> tuple[list[Scene], list[Scene]]:
    """Disjoint train/validation partition, deterministic under `seed`."""
    if not 0.0 < train_fraction < 1.0:
        raise SplitError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if len(scenes) < 2:
        raise SplitError("need at least 2 scenes to split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(scenes))
    n_train = int(round(train_fraction * len(scenes)))
    n_train = min(max(n_train, 1), len(scenes) - 1)
    train = [scenes[i] for i in sorted(order[:n_train])]
    val = [scenes[i] for i in sorted(order[n_train:])]
    return train, val
