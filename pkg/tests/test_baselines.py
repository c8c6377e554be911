import numpy as np
import pytest

from persistmon.baselines import (LawnmowerPlanner, TspLoopPlanner, lawnmower_plan,
                                  lawnmower_sweep, path_length, tsp_loop_step)
from persistmon.env_sim import EnvConfig, Measurement, make_scenario
from persistmon.episode import run_continuous_planner


def dist_to_polyline(points, poly):
    best = np.full(len(points), np.inf)
    for a, b in zip(poly[:-1], poly[1:]):
        ab = b - a
        t = np.clip(((points - a) @ ab) / max(ab @ ab, 1e-300), 0, 1)
        best = np.minimum(best, np.linalg.norm(points - (a + t[:, None] * ab), axis=1))
    return best


def test_sweep_has_five_lanes():
    sweep = lawnmower_sweep(0.1)
    lanes = np.unique(np.round(sweep[:, 0], 12))
    np.testing.assert_allclose(lanes, [0.1, 0.3, 0.5, 0.7, 0.9])
    assert path_length(sweep) == pytest.approx(5 * 1.0 + 4 * 0.2)


def test_sweep_covers_square():
    g = np.linspace(0, 1, 100)
    pts = np.array([[x, y] for x in g for y in g])
    assert dist_to_polyline(pts, lawnmower_sweep(0.1)).max() <= 0.1 + 1e-12


def test_plan_is_long_enough_and_continuous():
    plan = lawnmower_plan(30.0)
    assert path_length(plan) >= 30.0
    assert np.all(np.linalg.norm(np.diff(plan, axis=0), axis=1) > 0)


def test_lawnmower_ignores_readings():
    sc = make_scenario(EnvConfig(num_targets=2, speed_ratio=0.1, seed=4), num_nodes=50)
    sc2 = make_scenario(EnvConfig(num_targets=2, speed_ratio=0.1, seed=5), num_nodes=50)
    paths = []
    for s in (sc, sc2):
        p = LawnmowerPlanner(5.0)
        paths.append(run_continuous_planner(s, p, p.start, horizon=5.0, with_jsd=False).path)
    np.testing.assert_allclose(paths[0], paths[1])


def test_tsp_heading_undefined_until_second_sighting():
    p = TspLoopPlanner([[0.5, 0.5], [0.2, 0.2]], speed_ratio=0.1)
    assert np.isnan(p.state.last_seen_heading).all()
    np.testing.assert_allclose(p.predicted(10.0), [[0.5, 0.5], [0.2, 0.2]])
    p.observe([Measurement(0.6, 0.5, 1.0, 1), Measurement(0.0, 0.0, 1.0, 0)], 1.0)
    np.testing.assert_allclose(p.state.last_seen_heading[0], [1.0, 0.0])
    assert np.isnan(p.state.last_seen_heading[1]).all()


def test_tsp_lost_target_extrapolation():
    p = TspLoopPlanner([[0.2, 0.5]], speed_ratio=0.1)
    p.observe([Measurement(0.3, 0.5, 1.0, 1)], 1.0)
    np.testing.assert_allclose(p.predicted(3.0), [[0.3 + 0.1 * 2.0, 0.5]])
    np.testing.assert_allclose(p.predicted(100.0), [[1.0, 0.5]])


def test_tsp_stationary_targets_revisited():
    sc = make_scenario(EnvConfig(num_targets=3, speed_ratio=0.0, seed=2), num_nodes=50)
    init = np.array([tr.position for tr in sc.tracks()])
    planner = TspLoopPlanner(init, 0.0)
    log = run_continuous_planner(sc, planner, [0.5, 0.5], horizon=15.0, with_jsd=False)
    assert min(log.trace.counts[-1]) >= 3
    assert planner.skips == 0
    # each full cycle visits every target exactly once
    n = 3
    for k in range(0, len(planner.visits) - n + 1, n):
        assert sorted(planner.visits[k:k + n]) == [0, 1, 2]


def test_tsp_step_counts_skip_when_absent():
    p = TspLoopPlanner([[0.5, 0.5], [0.9, 0.9]], speed_ratio=0.0)
    miss = [Measurement(0.5, 0.5, 0.1, 0), Measurement(0.5, 0.5, 0.1, 0)]
    goal = tsp_loop_step(p, miss, np.array([0.5, 0.5]), 0.1)
    assert p.skips == 1 and p.visits == [0]
    np.testing.assert_allclose(goal, [0.9, 0.9])
