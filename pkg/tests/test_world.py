"""Waypath kinematics, body distances, and scenario serialization."""

import json

import numpy as np
import pytest

from pyravoid.geometry import AABB
from pyravoid.world import (Mover, Scenario, StaticBody, load_scenario,
                            save_scenario, scenario_from_dict,
                            scenario_to_dict, step_world)


def straight_mover(**kw):
    args = dict(shape="ellipsoid", size=[0.5, 0.5, 1.8],
                waypoints=[[0.0, 0, 1], [10.0, 0, 1]], speeds=[1.0],
                color=[200, 60, 60])
    args.update(kw)
    return Mover(**args)


# ---------------------------------------------------------------------------
# waypath kinematics

def test_constant_speed_advance():
    m = straight_mover()
    p, v = m.state_at(0.1)
    np.testing.assert_allclose(p, [0.1, 0, 1], atol=1e-12)
    np.testing.assert_allclose(v, [1, 0, 0], atol=1e-12)


def test_position_continuous_across_corner():
    m = Mover(shape="box", size=[1, 1, 1],
              waypoints=[[0.0, 0, 0], [2.0, 0, 0], [2.0, 3, 0]],
              speeds=[2.0, 1.5], color=[0, 0, 255])
    # segment one takes 1 s; just before and after the corner
    p0, v0 = m.state_at(1.0 - 1e-9)
    p1, v1 = m.state_at(1.0 + 1e-9)
    np.testing.assert_allclose(p0, p1, atol=1e-6)
    np.testing.assert_allclose(v0, [2, 0, 0], atol=1e-9)
    np.testing.assert_allclose(v1, [0, 1.5, 0], atol=1e-9)


def test_arc_length_equals_speed_times_time():
    rng = np.random.default_rng(40)
    wps = rng.uniform(-5, 5, size=(5, 3))
    m = Mover(shape="ellipsoid", size=[0.5, 0.5, 0.5], waypoints=wps,
              speeds=[1.3], color=[10, 10, 10], end_mode="stop")
    seg_len = np.linalg.norm(np.diff(wps, axis=0), axis=1)
    total_len = seg_len.sum()
    t_end = total_len / 1.3
    # chord-sum the walk; corner instants must be sample points, otherwise
    # chords cut the corners and undercount
    corners = np.cumsum(seg_len / 1.3)
    ts = np.unique(np.concatenate([np.linspace(0, t_end, 4001), corners]))
    pts = np.array([m.state_at(t)[0] for t in ts])
    walked = np.linalg.norm(np.diff(pts, axis=0), axis=1).sum()
    assert walked == pytest.approx(total_len, abs=1e-9)


def test_reverse_retraces_path():
    m = straight_mover(end_mode="reverse")
    # 10 m at 1 m/s: at t=12 the body is 2 m back from the far end
    p, v = m.state_at(12.0)
    np.testing.assert_allclose(p, [8, 0, 1], atol=1e-9)
    np.testing.assert_allclose(v, [-1, 0, 0], atol=1e-12)
    # a full out-and-back period returns the start
    p, v = m.state_at(20.0)
    np.testing.assert_allclose(p, [0, 0, 1], atol=1e-9)


def test_loop_wraps_to_first_waypoint():
    m = Mover(shape="box", size=[1, 1, 1],
              waypoints=[[0.0, 0, 0], [4.0, 0, 0], [0.0, 0, 0.0001]],
              speeds=[1.0, 1.0], color=[5, 5, 5], end_mode="loop")
    cycle = 4.0 + np.linalg.norm([4.0, 0, -0.0001])
    p0, _ = m.state_at(0.5)
    p1, _ = m.state_at(0.5 + cycle)
    np.testing.assert_allclose(p0, p1, atol=1e-9)


def test_stop_parks_at_final_waypoint():
    m = straight_mover(end_mode="stop")
    p, v = m.state_at(10.0)
    np.testing.assert_allclose(p, [10, 0, 1], atol=1e-12)
    np.testing.assert_allclose(v, 0.0, atol=1e-12)
    p, v = m.state_at(25.0)
    np.testing.assert_allclose(p, [10, 0, 1], atol=1e-12)
    np.testing.assert_allclose(v, 0.0, atol=1e-12)


def test_per_segment_speeds_respected():
    m = Mover(shape="box", size=[1, 1, 1],
              waypoints=[[0.0, 0, 0], [1.0, 0, 0], [1.0, 4, 0]],
              speeds=[0.5, 2.0], color=[1, 2, 3], end_mode="stop")
    _, v = m.state_at(1.0)        # inside segment one (takes 2 s)
    assert np.linalg.norm(v) == pytest.approx(0.5)
    _, v = m.state_at(3.0)        # inside segment two
    assert np.linalg.norm(v) == pytest.approx(2.0)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        straight_mover().state_at(-0.1)


def test_mover_validation():
    with pytest.raises(ValueError):
        straight_mover(shape="cylinder")
    with pytest.raises(ValueError):
        straight_mover(waypoints=[[0.0, 0, 0]])
    with pytest.raises(ValueError):
        straight_mover(speeds=[0.0])
    with pytest.raises(ValueError):
        straight_mover(end_mode="bounce")
    with pytest.raises(ValueError):
        straight_mover(waypoints=[[0.0, 0, 0], [0.0, 0, 0]])
    with pytest.raises(ValueError):
        straight_mover(speeds=[1.0, 1.0])   # one segment, two speeds


def test_scalar_speed_broadcasts():
    m = Mover(shape="box", size=[1, 1, 1],
              waypoints=[[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]],
              speeds=[1.5], color=[0, 0, 0])
    np.testing.assert_allclose(m.speeds, [1.5, 1.5])


# ---------------------------------------------------------------------------
# distances

def test_box_mover_surface_distance():
    m = Mover(shape="box", size=[2.0, 2, 2],
              waypoints=[[0.0, 0, 0], [10.0, 0, 0]], speeds=[1.0],
              color=[0, 0, 0], end_mode="stop")
    # at t=1 the box spans [0,2] in x; probe 3 m out along +x
    assert m.surface_distance(np.array([4.0, 0, 0]), 1.0) == pytest.approx(2.0)
    assert m.surface_distance(np.array([1.0, 0, 0]), 1.0) == 0.0


def test_ellipsoid_mover_surface_distance():
    m = straight_mover(size=[1.0, 1.0, 1.0], end_mode="stop")
    # unit-diameter sphere centered at (1,0,1) at t=1
    d = m.surface_distance(np.array([3.0, 0, 1.0]), 1.0)
    assert d == pytest.approx(1.5, abs=1e-9)


def test_scenario_min_body_distance():
    sc = Scenario(
        movers=[straight_mover(size=[1.0, 1, 1], end_mode="stop")],
        static_bodies=[StaticBody(aabb=AABB([5.0, 5, 0], [6.0, 6, 2]))],
    )
    p = np.array([0.0, -2.0, 1.0])
    # sphere surface at t=0 is 1.5 m away; the box is much farther
    assert sc.min_body_distance(p, 0.0) == pytest.approx(1.5, abs=1e-9)
    assert Scenario().min_body_distance(p, 0.0) == np.inf


def test_step_world_matches_state_at():
    sc = Scenario(movers=[straight_mover()])
    (p, v), = step_world(sc, 1.0, 0.5)
    p_ref, v_ref = sc.movers[0].state_at(1.5)
    np.testing.assert_allclose(p, p_ref)
    np.testing.assert_allclose(v, v_ref)
    with pytest.raises(ValueError):
        step_world(sc, 1.0, -0.5)


# ---------------------------------------------------------------------------
# serialization

def full_scenario():
    return Scenario(
        name="roundtrip", duration=12.5, seed=9,
        vehicle_start=np.array([0.0, 1.0, 1.5]),
        goal=np.array([8.0, -1.0, 1.5]), round_trips=2, goal_tolerance=0.3,
        static_bodies=[StaticBody(aabb=AABB([1.0, 1, 0], [2.0, 2, 2]),
                                  color=np.array([10.0, 20, 30]))],
        movers=[Mover(shape="box", size=[0.4, 0.4, 1.0],
                      waypoints=[[3.0, -2, 1], [3.0, 2, 1]],
                      speeds=[0.8], color=[50.0, 60, 70], end_mode="loop")],
    )


def test_dict_round_trip():
    sc = full_scenario()
    sc2 = scenario_from_dict(scenario_to_dict(sc))
    assert sc2.name == sc.name
    assert sc2.duration == sc.duration
    assert sc2.seed == sc.seed
    assert sc2.round_trips == sc.round_trips
    assert sc2.goal_tolerance == sc.goal_tolerance
    np.testing.assert_allclose(sc2.vehicle_start, sc.vehicle_start)
    np.testing.assert_allclose(sc2.goal, sc.goal)
    assert len(sc2.static_bodies) == 1 and len(sc2.movers) == 1
    np.testing.assert_allclose(sc2.static_bodies[0].aabb.minimum, [1, 1, 0])
    np.testing.assert_allclose(sc2.static_bodies[0].color, [10, 20, 30])
    m = sc2.movers[0]
    assert m.shape == "box" and m.end_mode == "loop"
    np.testing.assert_allclose(m.speeds, [0.8])
    np.testing.assert_allclose(m.waypoints, [[3, -2, 1], [3, 2, 1]])


def test_file_round_trip(tmp_path):
    path = tmp_path / "sc.json"
    save_scenario(full_scenario(), path)
    sc2 = load_scenario(path)
    assert sc2.name == "roundtrip"
    p, v = sc2.movers[0].state_at(2.5)
    p_ref, v_ref = full_scenario().movers[0].state_at(2.5)
    np.testing.assert_allclose(p, p_ref)
    np.testing.assert_allclose(v, v_ref)


def test_scalar_speed_key_accepted():
    sc = scenario_from_dict({"movers": [
        {"waypoints": [[0, 0, 1], [5, 0, 1]], "speed": 2.0}]})
    np.testing.assert_allclose(sc.movers[0].speeds, [2.0])


def test_load_error_names_file_and_line(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n "duration": 5,\n "movers": [oops]\n}\n')
    with pytest.raises(ValueError) as exc:
        load_scenario(path)
    msg = str(exc.value)
    assert "broken.json" in msg
    assert ":3" in msg


def test_load_missing_required_key(tmp_path):
    path = tmp_path / "nokey.json"
    path.write_text(json.dumps({"movers": [{"speed": 1.0}]}))
    with pytest.raises(ValueError) as exc:
        load_scenario(path)
    assert "nokey.json" in str(exc.value)
