"""Ground-truth world: target loops, straight-line agent motion and the binary sensor.

Mission time equals agent path length (unit agent speed), so a sense event
fires every ``measurement_spacing`` of travelled distance.
"""

from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .tsp import nearest_neighbor_tour, solve_tour, tour_length

_EVENT_TOL = 1e-12


@dataclass
class EnvConfig:
    num_targets: int = 2
    speed_ratio: float = 0.0
    sensor_radius: float = 0.1
    measurement_spacing: float = 0.1
    loop_nodes: int = 50
    domain_size: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.sensor_radius <= 0:
            raise ValueError("sensor_radius must be positive")
        if not 0 <= self.speed_ratio < 1:
            raise ValueError("speed_ratio must lie in [0, 1)")
        if self.num_targets < 1:
            raise ValueError("num_targets must be >= 1")
        if self.measurement_spacing <= 0:
            raise ValueError("measurement_spacing must be positive")
        if self.domain_size != 1.0:
            raise ValueError("only the unit square domain is supported")


class Measurement(NamedTuple):
    x: float
    y: float
    t: float
    z: int


class TargetTrack:
    """A target moving at constant speed along a closed polyline."""

    def __init__(self, loop_points, arc_position=0.0, speed=0.0):
        pts = np.asarray(loop_points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("loop_points must be an (n>=2, 2) array")
        self.loop_points = pts
        seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        self._cum = np.concatenate([[0.0], np.cumsum(seg)])
        self.perimeter = float(self._cum[-1])
        if self.perimeter <= 0:
            raise ValueError("degenerate loop with zero perimeter")
        self.speed = float(speed)
        self.arc_position = float(arc_position) % self.perimeter

    def position_at(self, arc):
        s = arc % self.perimeter
        i = int(np.searchsorted(self._cum, s, side="right")) - 1
        i = min(max(i, 0), len(self.loop_points) - 1)
        seg_len = self._cum[i + 1] - self._cum[i]
        a = self.loop_points[i]
        b = self.loop_points[(i + 1) % len(self.loop_points)]
        frac = 0.0 if seg_len == 0 else (s - self._cum[i]) / seg_len
        return a + frac * (b - a)

    @property
    def position(self):
        return self.position_at(self.arc_position)

    def advance(self, distance):
        """Move along the loop by ``speed * distance`` (agent path length)."""
        if distance < 0:
            raise ValueError("distance must be non-negative")
        self.arc_position = (self.arc_position + self.speed * distance) % self.perimeter
        return self

    def copy(self):
        return TargetTrack(self.loop_points.copy(), self.arc_position, self.speed)


def generate_tracks(config, rng):
    """Random closed loops, each a heuristic TSP tour over uniform points."""
    tracks = []
    for _ in range(config.num_targets):
        pts = rng.uniform(0.0, config.domain_size, size=(config.loop_nodes, 2))
        pts = _perturb_duplicates(pts, rng)
        order = solve_tour(pts)
        loop = pts[order]
        track = TargetTrack(loop, 0.0, config.speed_ratio)
        track.arc_position = rng.uniform(0.0, track.perimeter)
        tracks.append(track)
    return tracks


def _perturb_duplicates(pts, rng):
    _, idx = np.unique(pts, axis=0, return_index=True)
    if len(idx) == len(pts):
        return pts
    dup = np.setdiff1d(np.arange(len(pts)), idx)
    pts = pts.copy()
    pts[dup] = np.clip(pts[dup] + rng.uniform(-1e-9, 1e-9, size=(len(dup), 2)), 0.0, 1.0)
    return pts


def advance_targets(tracks, distance):
    for tr in tracks:
        tr.advance(distance)
    return tracks


def sense(agent_pos, t, target_positions, radius=0.1):
    """One binary reading per target: z=1 at the target, else z=0 at the agent."""
    ax, ay = float(agent_pos[0]), float(agent_pos[1])
    out = []
    for y in np.asarray(target_positions, dtype=float).reshape(-1, 2):
        if np.hypot(y[0] - ax, y[1] - ay) <= radius:
            out.append(Measurement(float(y[0]), float(y[1]), float(t), 1))
        else:
            out.append(Measurement(ax, ay, float(t), 0))
    return out


def step_along_edge(start, end, spacing, carry=0.0):
    """Offsets and positions of sense events along the segment ``start -> end``.

    ``carry`` is the path length already travelled since the last sense event.
    Returns ``(offsets, positions, new_carry)``.
    """
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    length = float(np.linalg.norm(end - start))
    offsets = []
    o = spacing - carry
    while o <= length + _EVENT_TOL:
        offsets.append(min(o, length))
        o += spacing
    if length == 0:
        return [], [], carry
    positions = [start + (off / length) * (end - start) for off in offsets]
    new_carry = length - offsets[-1] if offsets else carry + length
    return offsets, positions, max(new_carry, 0.0)


class MeasurementSet:
    """Per-target timestamped binary readings."""

    def __init__(self, num_targets):
        self.entries = [[] for _ in range(num_targets)]

    def extend(self, readings):
        for i, m in enumerate(readings):
            self.entries[i].append(m)

    def count_positive(self):
        return [sum(m.z for m in e) for e in self.entries]

    def as_array(self, i):
        e = self.entries[i]
        if not e:
            return np.zeros((0, 4))
        return np.array([[m.x, m.y, m.t, m.z] for m in e], dtype=float)


class SenseEvent(NamedTuple):
    t: float
    agent_pos: np.ndarray
    readings: list
    true_positions: np.ndarray


class World:
    """Holds privileged target state; planners only see the ``readings`` of events."""

    def __init__(self, config, tracks, agent_pos):
        self.config = config
        self.tracks = [tr.copy() for tr in tracks]
        self.agent_pos = np.asarray(agent_pos, dtype=float).copy()
        self.time = 0.0
        self.carry = 0.0
        self.num_events = 0

    def target_positions(self):
        return np.array([tr.position for tr in self.tracks])

    def travel(self, goal, max_length=np.inf):
        """Move straight toward ``goal`` (at most ``max_length``) sensing on cadence."""
        goal = np.asarray(goal, dtype=float)
        delta = goal - self.agent_pos
        full = float(np.linalg.norm(delta))
        if full > max_length:
            goal = self.agent_pos + delta * (max_length / full)
        start = self.agent_pos.copy()
        offsets, positions, new_carry = step_along_edge(
            start, goal, self.config.measurement_spacing, self.carry)
        length = float(np.linalg.norm(goal - start))
        events = []
        prev = 0.0
        for off, pos in zip(offsets, positions):
            advance_targets(self.tracks, off - prev)
            prev = off
            self.num_events += 1
            t = self.num_events * self.config.measurement_spacing
            truth = self.target_positions()
            readings = sense(pos, t, truth, self.config.sensor_radius)
            events.append(SenseEvent(t, pos, readings, truth))
        advance_targets(self.tracks, length - prev)
        self.agent_pos = goal.copy()
        self.time += length
        self.carry = new_carry
        return events

    def remaining_to_event(self):
        return self.config.measurement_spacing - self.carry


@dataclass
class Scenario:
    """Everything needed to replay one evaluation instance identically."""

    config: EnvConfig
    loops: list
    arc_positions: list
    num_nodes: int = 200
    k: int = 10
    roadmap_seed: int = 0
    start_node: int = 0
    meta: dict = field(default_factory=dict)

    def tracks(self):
        return [TargetTrack(lp, a, self.config.speed_ratio)
                for lp, a in zip(self.loops, self.arc_positions)]

    def to_dict(self):
        return {
            "config": asdict(self.config),
            "loops": [np.asarray(lp).tolist() for lp in self.loops],
            "arc_positions": [float(a) for a in self.arc_positions],
            "num_nodes": self.num_nodes,
            "k": self.k,
            "roadmap_seed": self.roadmap_seed,
            "start_node": self.start_node,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            config=EnvConfig(**d["config"]),
            loops=[np.asarray(lp, dtype=float) for lp in d["loops"]],
            arc_positions=list(d["arc_positions"]),
            num_nodes=d.get("num_nodes", 200),
            k=d.get("k", 10),
            roadmap_seed=d.get("roadmap_seed", 0),
            start_node=d.get("start_node", 0),
            meta=d.get("meta", {}),
        )


def make_scenario(config, num_nodes=200, k=10):
    """Deterministic scenario from ``config.seed``."""
    ss = np.random.SeedSequence(config.seed)
    track_seq, graph_seq, start_seq = ss.spawn(3)
    tracks = generate_tracks(config, np.random.default_rng(track_seq))
    roadmap_seed = int(graph_seq.generate_state(1)[0])
    start_node = int(np.random.default_rng(start_seq).integers(num_nodes))
    return Scenario(config, [tr.loop_points for tr in tracks],
                    [tr.arc_position for tr in tracks], num_nodes, k,
                    roadmap_seed, start_node)


__all__ = [
    "EnvConfig", "Measurement", "MeasurementSet", "Scenario", "SenseEvent",
    "TargetTrack", "World", "advance_targets", "generate_tracks", "make_scenario",
    "nearest_neighbor_tour", "sense", "step_along_edge", "tour_length",
]
