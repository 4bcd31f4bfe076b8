"""Synthetic world: static boxes plus movers on piecewise-linear waypaths.

Mover positions are closed-form in time (arc-length bookkeeping, no
integration), so ground truth is exact at any query instant. Waypaths
traverse their waypoints at constant per-segment speed and can reverse
(ping-pong), loop, or stop at the end.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import AABB, point_ellipsoid_distance

ELLIPSOID = "ellipsoid"
BOX = "box"
END_MODES = ("reverse", "loop", "stop")


@dataclass
class StaticBody:
    aabb: AABB
    color: np.ndarray = field(default_factory=lambda: np.array([128.0, 128.0, 128.0]))

    def __post_init__(self) -> None:
        self.color = np.asarray(self.color, dtype=float)


@dataclass
class Mover:
    shape: str                        # "ellipsoid" | "box"
    size: np.ndarray                  # full extents (x, y, z), meters
    waypoints: np.ndarray             # (M, 3) centers the body passes through
    speeds: np.ndarray                # (M-1,) per-segment speeds, m/s
    color: np.ndarray
    end_mode: str = "reverse"

    def __post_init__(self) -> None:
        self.size = np.asarray(self.size, dtype=float)
        self.waypoints = np.asarray(self.waypoints, dtype=float).reshape(-1, 3)
        self.speeds = np.atleast_1d(np.asarray(self.speeds, dtype=float))
        self.color = np.asarray(self.color, dtype=float)
        if self.shape not in (ELLIPSOID, BOX):
            raise ValueError(f"unknown mover shape {self.shape!r}")
        if len(self.waypoints) < 2:
            raise ValueError("a waypath needs at least two waypoints")
        if len(self.speeds) == 1:
            self.speeds = np.full(len(self.waypoints) - 1, float(self.speeds[0]))
        if len(self.speeds) != len(self.waypoints) - 1:
            raise ValueError("need one speed per waypath segment")
        if np.any(self.speeds <= 0):
            raise ValueError("segment speeds must be positive")
        if self.end_mode not in END_MODES:
            raise ValueError(f"unknown end mode {self.end_mode!r}")
        seg = np.diff(self.waypoints, axis=0)
        self._seg_len = np.linalg.norm(seg, axis=1)
        if np.any(self._seg_len < 1e-9):
            raise ValueError("degenerate waypath segment")
        self._seg_dir = seg / self._seg_len[:, None]
        self._seg_time = self._seg_len / self.speeds
        self._cycle = float(self._seg_time.sum())

    def state_at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Exact (position, velocity) of the body center at time t >= 0."""
        if t < 0:
            raise ValueError("time must be non-negative")
        tau = float(t)
        direction = 1
        if self.end_mode == "loop":
            tau = tau % self._cycle
        elif self.end_mode == "reverse":
            phase = tau % (2 * self._cycle)
            if phase >= self._cycle:
                tau = 2 * self._cycle - phase
                direction = -1
            else:
                tau = phase
        else:                          # stop
            if tau >= self._cycle:
                return self.waypoints[-1].copy(), np.zeros(3)
        cum = np.concatenate([[0.0], np.cumsum(self._seg_time)])
        i = int(np.searchsorted(cum, tau, side="right") - 1)
        i = min(i, len(self._seg_time) - 1)
        local = tau - cum[i]
        pos = self.waypoints[i] + self._seg_dir[i] * self.speeds[i] * local
        vel = self._seg_dir[i] * self.speeds[i] * direction
        return pos, vel

    def surface_distance(self, p: np.ndarray, t: float) -> float:
        """Distance from a point to the body surface at time t; 0 if inside."""
        center, _ = self.state_at(t)
        if self.shape == BOX:
            half = self.size / 2
            return AABB(center - half, center + half).surface_distance(p)
        return point_ellipsoid_distance(p, center, self.size / 2)


@dataclass
class Scenario:
    name: str = "scenario"
    duration: float = 20.0
    seed: int = 0
    vehicle_start: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.2]))
    goal: np.ndarray = field(default_factory=lambda: np.array([10.0, 0.0, 1.2]))
    round_trips: int = 0
    goal_tolerance: float = 0.4
    static_bodies: list[StaticBody] = field(default_factory=list)
    movers: list[Mover] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.vehicle_start = np.asarray(self.vehicle_start, dtype=float)
        self.goal = np.asarray(self.goal, dtype=float)

    def mover_states(self, t: float) -> list[tuple[np.ndarray, np.ndarray]]:
        return [m.state_at(t) for m in self.movers]

    def min_body_distance(self, p: np.ndarray, t: float) -> float:
        """Distance from a point to the nearest body surface at time t."""
        dists = [m.surface_distance(p, t) for m in self.movers]
        dists += [b.aabb.surface_distance(p) for b in self.static_bodies]
        return min(dists) if dists else float("inf")


def step_world(scenario: Scenario, t: float, dt: float) -> list[tuple[np.ndarray, np.ndarray]]:
    """Ground-truth mover states advanced from t by dt (exact, no drift)."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    return scenario.mover_states(t + dt)


# ---------------------------------------------------------------------------
# scenario JSON

def scenario_from_dict(data: dict) -> Scenario:
    statics = [StaticBody(aabb=AABB(np.array(b["min"]), np.array(b["max"])),
                          color=np.array(b.get("color", [128, 128, 128])))
               for b in data.get("static_bodies", [])]
    movers = []
    for m in data.get("movers", []):
        speeds = m.get("speeds", m.get("speed", 1.0))
        movers.append(Mover(
            shape=m.get("shape", ELLIPSOID),
            size=np.array(m.get("size", [0.5, 0.5, 1.8])),
            waypoints=np.array(m["waypoints"]),
            speeds=np.atleast_1d(np.array(speeds, dtype=float)),
            color=np.array(m.get("color", [200, 60, 60])),
            end_mode=m.get("end_mode", "reverse"),
        ))
    return Scenario(
        name=data.get("name", "scenario"),
        duration=float(data.get("duration", 20.0)),
        seed=int(data.get("seed", 0)),
        vehicle_start=np.array(data.get("vehicle_start", [0.0, 0.0, 1.2])),
        goal=np.array(data.get("goal", [10.0, 0.0, 1.2])),
        round_trips=int(data.get("round_trips", 0)),
        goal_tolerance=float(data.get("goal_tolerance", 0.4)),
        static_bodies=statics,
        movers=movers,
    )


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "name": sc.name,
        "duration": sc.duration,
        "seed": sc.seed,
        "vehicle_start": sc.vehicle_start.tolist(),
        "goal": sc.goal.tolist(),
        "round_trips": sc.round_trips,
        "goal_tolerance": sc.goal_tolerance,
        "static_bodies": [{"min": b.aabb.minimum.tolist(),
                           "max": b.aabb.maximum.tolist(),
                           "color": b.color.tolist()} for b in sc.static_bodies],
        "movers": [{"shape": m.shape, "size": m.size.tolist(),
                    "waypoints": m.waypoints.tolist(),
                    "speeds": m.speeds.tolist(), "color": m.color.tolist(),
                    "end_mode": m.end_mode} for m in sc.movers],
    }


def load_scenario(path: str | Path) -> Scenario:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}:{e.lineno}: invalid scenario JSON: {e.msg}") from e
    try:
        return scenario_from_dict(data)
    except (KeyError, TypeError) as e:
        raise ValueError(f"{path}: malformed scenario: {e}") from e


def save_scenario(sc: Scenario, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(sc), fh, indent=2)
        fh.write("\n")
