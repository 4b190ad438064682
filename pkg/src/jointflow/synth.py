"""Synthetic interactive-scene generator with ground-truth interaction labels.

Four scenario templates produce desk-scale corpora whose interaction
semantics are known by construction: who passes a shared conflict point
first, and which agent pairs do not interact at all. Yielding agents are
realized by a longitudinal time warp of their free-flow motion, so every
yielding future is slowed relative to the free-flow profile while the
spatial path is unchanged.

Scene frames are centered away from the coordinate origin so that the
displacement round trip stays bit-exact (steps never dwarf coordinates).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .scene import (
    Agent,
    AgentKind,
    AgentType,
    Scene,
    Trajectory,
    default_agent_types,
)


class ConfigError(ValueError):
    """Generator configuration is inconsistent."""


TEMPLATES = ("crossing-intersection", "merge", "roundabout-entry", "independent-lanes")

# (n_past, n_future, sampling_hz)
HORIZON_PRESETS = {
    "argoverse-like": (50, 60, 10.0),
    "interaction-like": (10, 30, 10.0),
    "nuscenes-like": (4, 12, 2.0),
    "round-like": (15, 25, 5.0),
}


@dataclass
class GeneratorConfig:
    """Knobs for one synthetic corpus.

    priority_mode "arrival" makes right-of-way follow free-flow arrival
    order (predictable from pasts); "random" assigns it by coin flip, which
    yields two genuinely different future modes for near-symmetric pasts.
    """

    template: str = "crossing-intersection"
    n_scenes: int = 100
    agents_min: int = 2
    agents_max: int = 2
    n_past: int = 10
    n_future: int = 30
    sampling_hz: float = 10.0
    noise_std: float = 0.05
    priority_mode: str = "arrival"
    arrival_window: tuple[float, float] = (0.25, 0.5)
    arrival_spread: float | None = None
    gap_frac: float = 0.18
    speed_jitter: tuple[float, float] = (0.8, 1.2)
    agent_kinds: tuple[str, ...] = ("vehicle",)
    widths: dict = field(default_factory=dict)
    speeds: dict = field(default_factory=dict)
    center: tuple[float, float] = (150.0, 150.0)

    @classmethod
    def from_preset(cls, preset: str, **kwargs) -> "GeneratorConfig":
        if preset not in HORIZON_PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; options: {sorted(HORIZON_PRESETS)}")
        n_past, n_future, hz = HORIZON_PRESETS[preset]
        return cls(n_past=n_past, n_future=n_future, sampling_hz=hz, **kwargs)

    def validate(self) -> None:
        if self.template not in TEMPLATES:
            raise ConfigError(f"unknown template {self.template!r}; options: {TEMPLATES}")
        if self.agents_min > self.agents_max or self.agents_min < 1:
            raise ConfigError(
                f"agent-count range [{self.agents_min}, {self.agents_max}] is empty"
            )
        if self.n_scenes < 0:
            raise ConfigError("n_scenes must be nonnegative")
        if self.n_past < 2 or self.n_future < 2:
            raise ConfigError("horizons must be at least 2 steps each")
        if not 0 < self.gap_frac < 1:
            raise ConfigError("gap_frac must be in (0, 1)")
        if self.priority_mode not in ("arrival", "random"):
            raise ConfigError("priority_mode must be 'arrival' or 'random'")
        for k in self.agent_kinds:
            AgentKind(k)

    def type_table(self) -> dict[AgentKind, AgentType]:
        widths = {AgentKind(k): v for k, v in self.widths.items()}
        speeds = {AgentKind(k): v for k, v in self.speeds.items()}
        return default_agent_types(widths, speeds)


def _agent_count_range(cfg: GeneratorConfig) -> tuple[int, int]:
    caps = {
        "crossing-intersection": (2, 4),
        "merge": (2, 2),
        "roundabout-entry": (2, 2),
        "independent-lanes": (1, 12),
    }[cfg.template]
    lo, hi = max(cfg.agents_min, caps[0]), min(cfg.agents_max, caps[1])
    if lo > hi:
        raise ConfigError(
            f"template {cfg.template!r} supports {caps[0]}..{caps[1]} agents, "
            f"which excludes the configured range [{cfg.agents_min}, {cfg.agents_max}]"
        )
    return lo, hi


def _unit(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


def _warped_times(times: np.ndarray, t_obs: float, t_free: float, t_req: float) -> np.ndarray:
    """Map wall-clock times onto the free-flow clock of a yielding agent.

    Up to the last observation the clocks agree; between observation and the
    required conflict arrival the agent runs slow (factor < 1); afterwards it
    resumes free-flow speed.
    """
    if t_req <= t_free:
        return times.copy()
    alpha = (t_free - t_obs) / (t_req - t_obs)
    tau = times.copy()
    during = (times > t_obs) & (times <= t_req)
    after = times > t_req
    tau[during] = t_obs + alpha * (times[during] - t_obs)
    tau[after] = t_free + (times[after] - t_req)
    return tau


def _line_separation(a: float, b: float) -> float:
    """Angle between the undirected lines with bearings a and b, in [0, pi/2]."""
    d = abs(a - b) % math.pi
    return min(d, math.pi - d)


def _sample_bearings(rng: np.random.Generator, n: int) -> list[float]:
    """Approach bearings whose undirected lines are pairwise >= 40 deg apart.

    Near-collinear approaches (same or opposite direction) are excluded so
    that every pair of paths has a proper single crossing at the conflict.
    """
    min_sep = math.radians(40.0)
    for _ in range(500):
        bearings = [float(rng.uniform(0.0, 2.0 * math.pi))]
        while len(bearings) < n:
            for _ in range(80):
                cand = float(rng.uniform(0.0, 2.0 * math.pi))
                if all(_line_separation(cand, b) >= min_sep for b in bearings):
                    bearings.append(cand)
                    break
            else:
                break
        if len(bearings) == n:
            return bearings
    raise ConfigError(f"could not place {n} non-collinear approach bearings")


@dataclass
class _Mover:
    agent_id: str
    atype: AgentType
    path: Callable[[np.ndarray], np.ndarray]  # signed arc length -> (n, 2)
    speed: float
    t_free: float  # free-flow conflict arrival (absolute time)
    t_req: float  # enforced conflict arrival

    def rollout(self, times: np.ndarray, t_obs: float) -> np.ndarray:
        tau = _warped_times(times, t_obs, self.t_free, self.t_req)
        return self.path(self.speed * (tau - self.t_free))


def _priority_arrivals(
    rng: np.random.Generator,
    t_free: list[float],
    t_obs: float,
    t_fut: float,
    cfg: GeneratorConfig,
) -> tuple[list[int], list[float]]:
    """Pick a passing order and the enforced arrival time for each agent."""
    n = len(t_free)
    if cfg.priority_mode == "random":
        order = list(rng.permutation(n))
    else:
        order = list(np.argsort(t_free, kind="stable"))
    gap = cfg.gap_frac * t_fut
    t_req = [0.0] * n
    prev = -math.inf
    for idx in order:
        t_req[idx] = max(t_free[idx], prev + gap)
        prev = t_req[idx]
    return [int(i) for i in order], t_req


def _finish_scene(
    scene_id: str,
    movers: Sequence[_Mover],
    cfg: GeneratorConfig,
    rng: np.random.Generator,
    conflict: np.ndarray | None,
    interacting: list[tuple[str, str]],
    order: list[int] | None,
) -> Scene:
    dt = 1.0 / cfg.sampling_hz
    t_obs = (cfg.n_past - 1) * dt
    times = np.arange(cfg.n_past + cfg.n_future) * dt
    agents = []
    for mv in movers:
        pos = mv.rollout(times, t_obs)
        if cfg.noise_std > 0:
            pos = pos + rng.normal(0.0, cfg.noise_std, pos.shape)
        agents.append(
            Agent(
                agent_id=mv.agent_id,
                atype=mv.atype,
                past=Trajectory(pos[: cfg.n_past], dt),
                future=Trajectory(pos[cfg.n_past :], dt),
            )
        )
    meta = {
        "template": cfg.template,
        "conflict": None if conflict is None else [float(conflict[0]), float(conflict[1])],
        "priority": [] if order is None else [movers[i].agent_id for i in order],
        "interacting_pairs": [[a, b] for a, b in interacting],
        "noise_std": cfg.noise_std,
    }
    return Scene(scene_id=scene_id, agents=tuple(agents), sampling_hz=cfg.sampling_hz, meta=meta)


def _spawn_movers(
    rng: np.random.Generator, cfg: GeneratorConfig, n: int
) -> list[tuple[str, AgentType, float]]:
    table = cfg.type_table()
    lo, hi = cfg.speed_jitter
    out = []
    for i in range(n):
        kind = AgentKind(cfg.agent_kinds[int(rng.integers(len(cfg.agent_kinds)))])
        atype = table[kind]
        speed = atype.avg_speed_mps * float(rng.uniform(lo, hi))
        out.append((f"a{i}", atype, speed))
    return out


def _free_arrivals(
    rng: np.random.Generator, cfg: GeneratorConfig, n: int, t_obs: float, t_fut: float
) -> list[float]:
    lo, hi = cfg.arrival_window
    if cfg.arrival_spread is not None:
        base = t_obs + float(rng.uniform(lo, hi)) * t_fut
        return [
            base + float(rng.uniform(-cfg.arrival_spread, cfg.arrival_spread)) * t_fut
            for _ in range(n)
        ]
    return [t_obs + float(rng.uniform(lo, hi)) * t_fut for _ in range(n)]


def _mark_interacting(
    movers: Sequence[_Mover], order: list[int], t_obs: float, t_end: float
) -> list[tuple[str, str]]:
    """Pairs where both agents clear the conflict inside the future window,
    ordered (influencer, influencee) by enforced arrival."""
    pairs = []
    reach = [mv.t_req <= t_end - 1e-9 and mv.t_req > t_obs for mv in movers]
    for pos_a in range(len(order)):
        for pos_b in range(pos_a + 1, len(order)):
            i, j = order[pos_a], order[pos_b]
            if reach[i] and reach[j]:
                pairs.append((movers[i].agent_id, movers[j].agent_id))
    return pairs


def _gen_crossing(rng: np.random.Generator, cfg: GeneratorConfig, scene_id: str, n: int) -> Scene:
    dt = 1.0 / cfg.sampling_hz
    t_obs = (cfg.n_past - 1) * dt
    t_fut = cfg.n_future * dt
    t_end = t_obs + t_fut
    conflict = np.asarray(cfg.center, dtype=float)
    bearings = _sample_bearings(rng, n)
    spawned = _spawn_movers(rng, cfg, n)
    t_free = _free_arrivals(rng, cfg, n, t_obs, t_fut)
    order, t_req = _priority_arrivals(rng, t_free, t_obs, t_fut, cfg)
    movers = []
    for i, (aid, atype, speed) in enumerate(spawned):
        u = _unit(bearings[i])
        movers.append(
            _Mover(aid, atype, lambda s, u=u: conflict + np.outer(s, u), speed, t_free[i], t_req[i])
        )
    interacting = _mark_interacting(movers, order, t_obs, t_end)
    return _finish_scene(scene_id, movers, cfg, rng, conflict, interacting, order)


def _gen_merge(rng: np.random.Generator, cfg: GeneratorConfig, scene_id: str) -> Scene:
    dt = 1.0 / cfg.sampling_hz
    t_obs = (cfg.n_past - 1) * dt
    t_fut = cfg.n_future * dt
    t_end = t_obs + t_fut
    merge_pt = np.asarray(cfg.center, dtype=float)
    heading = float(rng.uniform(0.0, 2.0 * math.pi))
    split = math.radians(float(rng.uniform(15.0, 35.0)))
    exit_dir = _unit(heading)
    approach = [_unit(heading + split), _unit(heading - split)]
    spawned = _spawn_movers(rng, cfg, 2)
    t_free = _free_arrivals(rng, cfg, 2, t_obs, t_fut)
    order, t_req = _priority_arrivals(rng, t_free, t_obs, t_fut, cfg)

    def make_path(a_dir):
        def path(s, a_dir=a_dir):
            s = np.asarray(s, dtype=float)
            pre = merge_pt + np.outer(np.minimum(s, 0.0), a_dir)
            post = np.outer(np.maximum(s, 0.0), exit_dir)
            return pre + post

        return path

    movers = [
        _Mover(aid, atype, make_path(approach[i]), speed, t_free[i], t_req[i])
        for i, (aid, atype, speed) in enumerate(spawned)
    ]
    interacting = _mark_interacting(movers, order, t_obs, t_end)
    return _finish_scene(scene_id, movers, cfg, rng, merge_pt, interacting, order)


def _gen_roundabout(rng: np.random.Generator, cfg: GeneratorConfig, scene_id: str) -> Scene:
    dt = 1.0 / cfg.sampling_hz
    t_obs = (cfg.n_past - 1) * dt
    t_fut = cfg.n_future * dt
    t_end = t_obs + t_fut
    center = np.asarray(cfg.center, dtype=float)
    radius = float(rng.uniform(9.0, 14.0))
    phi_entry = float(rng.uniform(0.0, 2.0 * math.pi))
    entry = center + radius * _unit(phi_entry)

    def circle_path(s):
        s = np.asarray(s, dtype=float)
        phi = phi_entry + s / radius
        return center + radius * np.stack([np.cos(phi), np.sin(phi)], axis=-1)

    # Entering agent drives a straight spur into the ring, then circulates.
    spur_dir = _unit(phi_entry + math.radians(float(rng.uniform(25.0, 55.0))))

    def entering_path(s):
        s = np.asarray(s, dtype=float)
        on_ring = circle_path(np.maximum(s, 0.0))
        off = np.outer(np.minimum(s, 0.0), spur_dir)
        return np.where((s >= 0.0)[:, None], on_ring, entry + off)

    spawned = _spawn_movers(rng, cfg, 2)
    t_free = _free_arrivals(rng, cfg, 2, t_obs, t_fut)
    order, t_req = _priority_arrivals(rng, t_free, t_obs, t_fut, cfg)
    paths = [circle_path, entering_path]
    movers = [
        _Mover(aid, atype, paths[i], speed, t_free[i], t_req[i])
        for i, (aid, atype, speed) in enumerate(spawned)
    ]
    interacting = _mark_interacting(movers, order, t_obs, t_end)
    return _finish_scene(scene_id, movers, cfg, rng, entry, interacting, order)


def _gen_independent(rng: np.random.Generator, cfg: GeneratorConfig, scene_id: str, n: int) -> Scene:
    dt = 1.0 / cfg.sampling_hz
    heading = float(rng.uniform(0.0, 2.0 * math.pi))
    u = _unit(heading)
    normal = np.array([-u[1], u[0]])
    base = np.asarray(cfg.center, dtype=float)
    spawned = _spawn_movers(rng, cfg, n)
    movers = []
    for i, (aid, atype, speed) in enumerate(spawned):
        lateral = (i - (n - 1) / 2.0) * float(rng.uniform(6.0, 12.0)) + float(
            rng.uniform(-1.0, 1.0)
        )
        along = float(rng.uniform(-20.0, 20.0))
        origin = base + lateral * normal + along * u

        def path(s, origin=origin):
            return origin + np.outer(np.asarray(s, dtype=float), u)

        # t_free far beyond the horizon: cruise throughout, never warped.
        movers.append(_Mover(aid, atype, path, speed, t_free=0.0, t_req=0.0))
    return _finish_scene(scene_id, movers, cfg, rng, None, [], None)


def generate_synthetic(config: GeneratorConfig, seed: int) -> list[Scene]:
    """Generate a corpus of scenes, deterministic under (config, seed).

    Every scene's meta block records the template, the shared conflict
    point (when one exists), the ground-truth passing order, and the
    (influencer, influencee) pairs usable as oracle interaction labels.
    """
    config.validate()
    lo, hi = _agent_count_range(config)
    rng = np.random.default_rng(seed)
    scenes = []
    for i in range(config.n_scenes):
        sid = f"{config.template}-{seed}-{i:05d}"
        n = int(rng.integers(lo, hi + 1))
        if config.template == "crossing-intersection":
            scenes.append(_gen_crossing(rng, config, sid, n))
        elif config.template == "merge":
            scenes.append(_gen_merge(rng, config, sid))
        elif config.template == "roundabout-entry":
            scenes.append(_gen_roundabout(rng, config, sid))
        else:
            scenes.append(_gen_independent(rng, config, sid, n))
    return scenes


def first_arrival_step(positions: np.ndarray, point: np.ndarray, radius: float = 2.0) -> int:
    """First step at which a trajectory comes within `radius` of `point`.

    Falls back to the step of closest approach when the trajectory never
    enters the radius; used to classify which agent passes a conflict first.
    """
    d = np.linalg.norm(np.asarray(positions, dtype=float) - np.asarray(point, dtype=float), axis=-1)
    inside = np.nonzero(d <= radius)[0]
    if inside.size:
        return int(inside[0])
    return int(np.argmin(d))
