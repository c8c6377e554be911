"""Non-learned planners: boustrophedon coverage and the adaptive TSP-loop tracker."""

import numpy as np

from .tsp import solve_tour


def lawnmower_sweep(sensor_radius=0.1):
    """One boustrophedon sweep with vertical lanes ``2 * radius`` apart.

    Lanes sit ``radius`` from the side walls and run the full height so that
    every point of the square is within ``radius`` of the path.
    """
    xs = np.arange(sensor_radius, 1.0 - sensor_radius + 1e-9, 2.0 * sensor_radius)
    pts = []
    for i, x in enumerate(xs):
        ys = (0.0, 1.0) if i % 2 == 0 else (1.0, 0.0)
        pts.append((x, ys[0]))
        pts.append((x, ys[1]))
    return np.array(pts)


def lawnmower_plan(horizon, sensor_radius=0.1):
    """Waypoints of back-and-forth sweeps whose total length covers ``horizon``."""
    sweep = lawnmower_sweep(sensor_radius)
    seg = np.linalg.norm(np.diff(sweep, axis=0), axis=1).sum()
    n = int(np.ceil(horizon / seg)) + 1
    pts = [sweep]
    for k in range(1, n):
        pts.append((sweep[::-1] if k % 2 else sweep)[1:])
    return np.vstack(pts)


def path_length(waypoints):
    return float(np.linalg.norm(np.diff(np.asarray(waypoints), axis=0), axis=1).sum())


class LawnmowerPlanner:
    name = "lawnmower"
    confined_to_graph = False

    def __init__(self, horizon, sensor_radius=0.1):
        self.waypoints = lawnmower_plan(horizon, sensor_radius)
        self.index = 1

    @property
    def start(self):
        return self.waypoints[0]

    def observe(self, readings, t):
        pass

    def next_waypoint(self, agent_pos, t):
        while (self.index < len(self.waypoints) - 1
               and np.linalg.norm(self.waypoints[self.index] - agent_pos) < 1e-12):
            self.index += 1
        return self.waypoints[self.index]


class TspLoopState:
    def __init__(self, initial_positions):
        pos = np.asarray(initial_positions, dtype=float).reshape(-1, 2)
        n = len(pos)
        self.last_seen_position = pos.copy()
        self.last_seen_time = np.zeros(n)
        self.last_seen_heading = np.full((n, 2), np.nan)
        self.order = list(range(n))


class TspLoopPlanner:
    """Tours extrapolated last-seen target positions, skipping targets not found on arrival."""

    name = "tsp_loop"
    confined_to_graph = False

    def __init__(self, initial_positions, speed_ratio, sensor_radius=0.1, arrive_tol=0.05):
        self.state = TspLoopState(initial_positions)
        self.speed_ratio = float(speed_ratio)
        self.sensor_radius = sensor_radius
        self.arrive_tol = arrive_tol
        self.goal = None
        self.last_visited = None
        self.before_last = None
        self.visits = []
        self.skips = 0

    @property
    def num_targets(self):
        return len(self.state.last_seen_position)

    def predicted(self, t):
        st = self.state
        heading = np.nan_to_num(st.last_seen_heading, nan=0.0)
        elapsed = (t - st.last_seen_time)[:, None]
        return np.clip(st.last_seen_position + heading * self.speed_ratio * elapsed, 0.0, 1.0)

    def observe(self, readings, t):
        st = self.state
        seen = False
        for i, m in enumerate(readings):
            if m.z != 1:
                continue
            p = np.array([m.x, m.y])
            prev = st.last_seen_position[i]
            if m.t > st.last_seen_time[i]:
                step = p - prev
                norm = np.linalg.norm(step)
                if norm > 1e-12:
                    st.last_seen_heading[i] = step / norm
            st.last_seen_position[i] = p
            st.last_seen_time[i] = m.t
            seen = True
        if seen:
            self.replan(t)

    def replan(self, t):
        pred = self.predicted(t)
        order = solve_tour(pred) if len(pred) > 1 else [0]
        if self.last_visited is not None and self.before_last is not None and len(order) > 2:
            pos = order.index(self.last_visited)
            if order[(pos + 1) % len(order)] == self.before_last:
                order = order[::-1]
        self.state.order = order
        if self.goal is not None and self.last_visited is not None:
            self.goal = self._successor(self.last_visited)

    def _successor(self, i):
        order = self.state.order
        return order[(order.index(i) + 1) % len(order)]

    def _arrive(self, agent_pos, t, truth_in_view):
        if not truth_in_view:
            self.skips += 1
        self.visits.append(self.goal)
        self.before_last, self.last_visited = self.last_visited, self.goal
        self.goal = self._successor(self.goal)

    def next_waypoint(self, agent_pos, t, in_view=None):
        """Waypoint toward the current tour stop.

        ``in_view(i)`` reports whether target ``i`` produced z=1 at the most
        recent reading; it is how arrival decides between visit and skip.
        """
        agent_pos = np.asarray(agent_pos, dtype=float)
        pred = self.predicted(t)
        if self.goal is None:
            self.replan(t)
            self.goal = int(np.argmin(np.linalg.norm(pred - agent_pos, axis=1)))
        for _ in range(self.num_targets + 1):
            if np.linalg.norm(pred[self.goal] - agent_pos) > self.arrive_tol:
                break
            seen = bool(in_view(self.goal)) if in_view is not None else True
            self._arrive(agent_pos, t, seen)
        return pred[self.goal]


def tsp_loop_step(planner, readings, agent_pos, t):
    """Feed the latest readings to ``planner`` and return its next waypoint."""
    planner.observe(readings, t)
    z = {i: m.z for i, m in enumerate(readings)}
    return planner.next_waypoint(agent_pos, t, lambda i: z.get(i, 0) == 1)
