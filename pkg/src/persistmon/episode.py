"""Mission runner shared by every planner.

The runner owns the privileged world state; planners receive only the
readings of each sense event (and, for graph planners, their own beliefs).
"""

import time as _time
from dataclasses import dataclass, field

import numpy as np

from .belief_gp import KernelParams, TargetBelief, stamp
from .env_sim import MeasurementSet, World
from .eval_metrics import (EvalGrid, MetricTrace, belief_jsd, minob_metric, mean_jsd,
                           target_area_uncertainty, unc_metric)
from .obs_builder import build_observation, snapshot
from .roadmap import build_roadmap

PRIOR_MODES = ("full", "count_only", "none")


class BeliefSet:
    """Agent-side beliefs, one GP per known target.

    ``full`` seeds each target with a z=1 reading at its initial position,
    ``count_only`` starts N empty beliefs, ``none`` creates a belief the first
    time a target index is sighted.
    """

    def __init__(self, num_targets, prior="full", initial_positions=None, params=KernelParams()):
        if prior not in PRIOR_MODES:
            raise ValueError(f"unknown prior mode {prior!r}")
        self.params = params
        self.prior = prior
        self.beliefs = [None] * num_targets
        self.discovery_order = []
        if prior in ("full", "count_only"):
            for i in range(num_targets):
                self._create(i)
        if prior == "full":
            for i, y in enumerate(np.asarray(initial_positions, dtype=float)):
                self.beliefs[i].add(y[0], y[1], 0.0, 1)

    def _create(self, i):
        self.beliefs[i] = TargetBelief(self.params)
        self.discovery_order.append(i)

    def ingest(self, readings, t):
        for i, m in enumerate(readings):
            if self.beliefs[i] is None:
                if m.z != 1:
                    continue
                self._create(i)
            self.beliefs[i].add(m.x, m.y, m.t, m.z)
        for b in self.known():
            b.evict(t)

    def known(self):
        return [self.beliefs[i] for i in self.discovery_order]

    def policy_inputs(self):
        """Beliefs fed to the network; a lone prior stands in when none are known."""
        known = self.known()
        return known if known else [None]


@dataclass
class EpisodeLog:
    seed: int
    planner: str
    nodes: list = field(default_factory=list)
    path: list = field(default_factory=list)
    measurements: MeasurementSet | None = None
    trace: MetricTrace | None = None
    rewards: list = field(default_factory=list)
    wall_clock: float = 0.0

    def summary(self):
        unc, unc_std = unc_metric(self.trace)
        return {"Unc": unc, "Unc_std": unc_std, "MinOb": minob_metric(self.trace),
                "JSD": mean_jsd(self.trace), "reward": float(np.sum(self.rewards))}

    def fingerprint(self):
        """Tuple of every logged quantity except wall clock, for equality checks."""
        meas = tuple(tuple(e) for e in self.measurements.entries)
        tr = (tuple(self.trace.times), tuple(map(tuple, self.trace.sigma)),
              tuple(map(tuple, self.trace.counts)), tuple(map(tuple, self.trace.jsd)))
        return (self.seed, self.planner, tuple(self.nodes),
                tuple(map(tuple, np.asarray(self.path).tolist())), meas, tr, tuple(self.rewards))


class Mission:
    def __init__(self, scenario, start_pos, prior="full", horizon=np.inf, grid=None,
                 record=True, with_jsd=True, params=KernelParams()):
        cfg = scenario.config
        self.config = cfg
        self.scenario = scenario
        self.world = World(cfg, scenario.tracks(), start_pos)
        self.beliefs = BeliefSet(cfg.num_targets, prior, self.world.target_positions(), params)
        self.horizon = horizon
        self.grid = grid or EvalGrid(30, cfg.sensor_radius)
        self.record = record
        self.with_jsd = with_jsd
        self.trace = MetricTrace(cfg.num_targets)
        self.measurements = MeasurementSet(cfg.num_targets)
        self.counts = np.zeros(cfg.num_targets, dtype=int)
        self.path = [self.world.agent_pos.copy()]
        self.last_readings = None

    @property
    def time(self):
        return self.world.time

    @property
    def done(self):
        return self.world.time >= self.horizon - 1e-9

    def travel(self, goal, max_length=np.inf):
        limit = min(max_length, self.horizon - self.world.time)
        events = self.world.travel(goal, max(limit, 0.0))
        for ev in events:
            self._absorb(ev)
        self.path.append(self.world.agent_pos.copy())
        return events

    def _absorb(self, ev):
        self.measurements.extend(ev.readings)
        self.counts += np.array([m.z for m in ev.readings])
        self.beliefs.ingest(ev.readings, ev.t)
        self.last_readings = ev.readings
        if not self.record:
            return
        sig = self.sigma_bar(ev.true_positions, ev.t)
        jsd_vals = None
        if self.with_jsd:
            q = stamp(self.grid.points, ev.t)
            jsd_vals = []
            for b, y in zip(self.beliefs.beliefs, ev.true_positions):
                mean = np.zeros(len(q)) if b is None else b.regress(q).mean
                jsd_vals.append(belief_jsd(mean, y, self.grid))
        self.trace.record(ev.t, sig, self.counts, jsd_vals)

    def sigma_bar(self, truth=None, t=None):
        """Per-target mean std over each true target area; 1.0 for undiscovered targets."""
        truth = self.world.target_positions() if truth is None else truth
        t = self.world.time if t is None else t
        return np.array([target_area_uncertainty(b, y, self.grid, t)
                         for b, y in zip(self.beliefs.beliefs, truth)])


def roadmap_for(scenario):
    return build_roadmap(scenario.num_nodes, scenario.k, seed=scenario.roadmap_seed)


class GraphEpisode:
    """Roadmap-confined episode: decisions at node arrivals, snapshots and rewards per step."""

    def __init__(self, scenario, roadmap, prior="full", horizon=np.inf, max_steps=None,
                 record=True, with_jsd=True, future=True):
        self.roadmap = roadmap
        self.node = int(scenario.start_node)
        self.mission = Mission(scenario, roadmap.nodes[self.node], prior, horizon,
                               record=record, with_jsd=with_jsd)
        self.max_steps = max_steps
        self.future = future
        self.nodes = [self.node]
        self.history = []
        self.times = []
        self.rewards = []
        self.sigma_prev = self.mission.sigma_bar()
        self._take_snapshot()

    @property
    def steps(self):
        return len(self.nodes) - 1

    @property
    def done(self):
        if self.max_steps is not None and self.steps >= self.max_steps:
            return True
        return self.mission.done

    def _take_snapshot(self):
        self.history.append(snapshot(self.mission.beliefs.policy_inputs(), self.roadmap.nodes,
                                     self.mission.time, self.future))
        self.times.append(self.mission.time)

    def observation(self, T, s):
        return build_observation(self.history, self.times, self.roadmap, self.node, T, s)

    def neighbors(self):
        return self.roadmap.neighbors[self.node]

    def step(self, neighbor_position):
        """Move to the neighbour at position ``neighbor_position``; returns the reward."""
        nxt = int(self.roadmap.neighbors[self.node][neighbor_position])
        self.mission.travel(self.roadmap.nodes[nxt])
        self.node = nxt
        self.nodes.append(nxt)
        sig = self.mission.sigma_bar()
        r = float(np.sum(np.maximum(self.sigma_prev - sig, 0.0)))
        self.sigma_prev = sig
        self.rewards.append(r)
        self._take_snapshot()
        return r

    def log(self, planner_name, wall_clock=0.0):
        m = self.mission
        return EpisodeLog(self.mission.config.seed, planner_name, list(self.nodes),
                          [p.tolist() for p in m.path], m.measurements, m.trace,
                          list(self.rewards), wall_clock)


def run_graph_planner(scenario, roadmap, choose, name, prior="full", horizon=30.0,
                      T=100, s=5, future=True, with_jsd=True, max_steps=None):
    """Run ``choose(episode, obs) -> neighbour position`` until the horizon."""
    t0 = _time.perf_counter()
    ep = GraphEpisode(scenario, roadmap, prior, horizon, max_steps, True, with_jsd, future)
    while not ep.done:
        obs = ep.observation(T, s) if T else None
        ep.step(choose(ep, obs))
    return ep.log(name, _time.perf_counter() - t0)


def run_continuous_planner(scenario, planner, start_pos, prior="full", horizon=30.0,
                           with_jsd=True):
    """Free-space planners re-plan after every sense event."""
    t0 = _time.perf_counter()
    m = Mission(scenario, start_pos, prior, horizon, with_jsd=with_jsd)
    heading = np.array([1.0, 0.0])
    stalls = 0
    while not m.done:
        pos = m.world.agent_pos
        readings = m.last_readings
        if hasattr(planner, "state"):
            in_view = (lambda i: readings is not None and readings[i].z == 1)
            goal = planner.next_waypoint(pos, m.time, in_view)
        else:
            goal = planner.next_waypoint(pos, m.time)
        goal = np.asarray(goal, dtype=float)
        if np.linalg.norm(goal - pos) < 1e-9:
            stalls += 1
            # keep moving so mission time advances; bounce off walls
            probe = pos + heading * m.world.remaining_to_event()
            if np.any(probe < 0) or np.any(probe > 1):
                heading = -heading
            goal = np.clip(pos + heading * m.world.remaining_to_event(), 0.0, 1.0)
        else:
            heading = (goal - pos) / np.linalg.norm(goal - pos)
        events = m.travel(goal, m.world.remaining_to_event())
        for ev in events:
            planner.observe(ev.readings, ev.t)
    log = EpisodeLog(scenario.config.seed, planner.name, [], [p.tolist() for p in m.path],
                     m.measurements, m.trace, [], _time.perf_counter() - t0)
    return log
