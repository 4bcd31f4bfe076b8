"""Collision-free desired-velocity selection via forbidden pyramids.

Every obstacle box, inflated by the vehicle radius plus a tolerance, spans a
rectangular pyramid from the (latency-compensated) vehicle position. Relative
velocities pointing into a pyramid eventually collide; the planner projects
the straight-to-waypoint velocity onto violated pyramid faces, prices each
candidate by the acceleration needed to reach it, and keeps the cheapest one
that is outside every pyramid and reachable under the speed limit. Because
changing velocity takes time, the chosen velocity is re-verified against
pyramids rebuilt at the positions everything will occupy once the change
completes, iterating to a fixed cap.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import AABB
from .tracker import ObstacleSnapshot

log = logging.getLogger(__name__)

_UP = np.array([0.0, 0.0, 1.0])
_INSIDE_TOL = 1e-12


class PyramidApexInsideError(ValueError):
    """Raised when the vehicle is already inside an inflated obstacle box."""


@dataclass
class VehicleState:
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    stamp: float = 0.0

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.acceleration = np.asarray(self.acceleration, dtype=float)


@dataclass
class TimingModel:
    """Latency terms compensated before planning, all seconds."""

    t_pl: float = 0.005   # previous planning iteration cost
    t_ct: float = 0.01    # control/transport delay
    t_pm: float = 0.0     # point-cloud processing delay
    t_dp: float = 0.0     # age of the perception result in use

    @property
    def vehicle_delay(self) -> float:
        return self.t_pl + self.t_ct + self.t_pm

    @property
    def obstacle_delay(self) -> float:
        return self.t_pl + self.t_ct + self.t_pm + self.t_dp


@dataclass
class PlannerConfig:
    v_max: float = 2.0
    r_uav: float = 0.3
    epsilon: float = 0.05             # pyramid inflation / safety-check tolerance
    j_max: float = 20.0
    max_lag_iterations: int = 10

    @property
    def r_safe(self) -> float:
        return self.r_uav + self.epsilon


@dataclass
class Pyramid:
    """Four face planes through the apex, normals pointing into the pyramid."""

    apex: np.ndarray
    base_vertices: np.ndarray          # (4, 3), counter-clockwise seen from apex
    normals: np.ndarray                # (4, 3), unit, positive side = inside
    offsets: np.ndarray                # (4,), plane d terms: n.x + d = 0 on face


def compensate_vehicle(state: VehicleState, timing: TimingModel) -> np.ndarray:
    """Vehicle position once the pipeline latency has elapsed."""
    dt = timing.vehicle_delay
    return state.position + state.velocity * dt + 0.5 * state.acceleration * dt * dt


def compensate_obstacle(obs: ObstacleSnapshot, timing: TimingModel) -> ObstacleSnapshot:
    """Shift an obstacle (and its box) along its velocity across the latency."""
    shift = obs.velocity * timing.obstacle_delay
    return ObstacleSnapshot(position=obs.position + shift, velocity=obs.velocity,
                            aabb=obs.aabb.translated(shift), dynamic=obs.dynamic,
                            stamp=obs.stamp, track_id=obs.track_id)


def build_pyramid(apex: np.ndarray, aabb: AABB, r_safe: float) -> Pyramid:
    """Span the forbidden pyramid of one obstacle box from the vehicle.

    The box is inflated by r_safe; its corners are projected along the
    apex-to-center direction onto the plane through the center, and the
    minimal enclosing rectangle there gives the four base vertices.
    """
    apex = np.asarray(apex, dtype=float)
    box = aabb.inflated(r_safe)
    if box.contains(apex):
        raise PyramidApexInsideError("vehicle inside inflated obstacle box")
    center = box.center
    u = center - apex
    dist = np.linalg.norm(u)
    u = u / dist

    e1 = np.cross(_UP, u)
    n1 = np.linalg.norm(e1)
    if n1 < 1e-9:
        e1 = np.array([1.0, 0.0, 0.0])   # u vertical: fixed horizontal axis
    else:
        e1 = e1 / n1
    e2 = np.cross(u, e1)

    rel = box.corners() - center
    c1 = rel @ e1
    c2 = rel @ e2
    lo1, hi1 = c1.min(), c1.max()
    lo2, hi2 = c2.min(), c2.max()
    if hi1 - lo1 < 1e-12 or hi2 - lo2 < 1e-12:
        raise ValueError("degenerate pyramid base")
    # counter-clockwise when viewed from the apex along +u
    coords = [(lo1, lo2), (lo1, hi2), (hi1, hi2), (hi1, lo2)]
    verts = np.array([center + a * e1 + b * e2 for a, b in coords])

    normals = np.empty((4, 3))
    offsets = np.empty(4)
    for i in range(4):
        v1, v2 = verts[i], verts[(i + 1) % 4]
        n = np.cross(v1 - apex, v2 - apex)
        n = n / np.linalg.norm(n)
        d = -float(n @ apex)
        if n @ center + d < 0:           # orient positive side toward the inside
            n, d = -n, -d
        normals[i] = n
        offsets[i] = d
    return Pyramid(apex=apex, base_vertices=verts, normals=normals, offsets=offsets)


def relative_velocity(v: np.ndarray, obs: ObstacleSnapshot) -> np.ndarray:
    return np.asarray(v, dtype=float) - obs.velocity


def point_in_pyramid(v_rel: np.ndarray, pyr: Pyramid) -> bool:
    """Strict-interior membership of the velocity-space point apex + v_rel.

    Points on a face plane count as outside, so a velocity projected onto a
    face is immediately admissible.
    """
    q = pyr.apex + np.asarray(v_rel, dtype=float)
    return bool(np.all(pyr.normals @ q + pyr.offsets > _INSIDE_TOL))


def propose_velocities(v_rel: np.ndarray, pyr: Pyramid) -> list[tuple[np.ndarray, float]]:
    """Perpendicular projections of v_rel onto the four face planes.

    Returns [(candidate relative velocity, acceleration cost)] per face; the
    cost is the point-to-plane distance, i.e. the velocity change magnitude.
    """
    v_rel = np.asarray(v_rel, dtype=float)
    q = pyr.apex + v_rel
    out = []
    for i in range(4):
        n = pyr.normals[i]
        signed = float(n @ q + pyr.offsets[i])
        out.append((v_rel - signed * n, abs(signed)))
    return out


def reachability_check(v_p: np.ndarray, obs_velocity: np.ndarray, v_max: float) -> bool:
    """Candidate is flyable when the implied vehicle speed fits the limit."""
    return float(np.linalg.norm(np.asarray(v_p) + np.asarray(obs_velocity))) <= v_max + 1e-9


def feasibility_check(v_vehicle: np.ndarray, obstacles: list[ObstacleSnapshot],
                      pyramids: list[Pyramid]) -> bool:
    """True when the vehicle velocity is outside every obstacle's pyramid."""
    for obs, pyr in zip(obstacles, pyramids):
        if point_in_pyramid(relative_velocity(v_vehicle, obs), pyr):
            return False
    return True


def lag_time(v_n: np.ndarray, a_n: np.ndarray, v_des: np.ndarray,
             j_max: float) -> float:
    """Smallest t > 0 where the jerk reaching v_des in t hits the limit.

    Solves ||2 (v_des - v_n - a_n t) / t^2||_inf = j_max per axis in closed
    form; a bisection fallback covers numerically awkward inputs.
    """
    dv = np.asarray(v_des, dtype=float) - np.asarray(v_n, dtype=float)
    a = np.asarray(a_n, dtype=float)
    if j_max <= 0:
        raise ValueError("j_max must be positive")
    if float(np.max(np.abs(dv))) < 1e-12:
        return 0.0

    def residual(t: float) -> float:
        return float(np.max(np.abs(2 * (dv - a * t)))) / (t * t) - j_max

    roots = []
    for i in range(3):
        # j_max t^2 = +-2 (dv_i - a_i t), two quadratics per axis
        for sign in (1.0, -1.0):
            disc = a[i] * a[i] + sign * 2 * j_max * dv[i]
            if disc < 0:
                continue
            s = np.sqrt(disc)
            for root in ((-sign * a[i] + s) / j_max, (-sign * a[i] - s) / j_max):
                if root > 1e-12 and abs(residual(root)) < 1e-7 * max(1.0, j_max):
                    roots.append(root)
    if roots:
        return float(min(roots))

    # Bracket the first sign change of the residual and bisect.
    t_lo = 1e-9
    while residual(t_lo) < 0:          # extremely small dv: shrink further
        t_lo /= 10
        if t_lo < 1e-300:
            return 0.0
    t_hi = t_lo * 2
    while residual(t_hi) > 0:
        t_hi *= 2
        if t_hi > 1e6:
            raise ArithmeticError("lag time bracket failed")
    for _ in range(200):
        mid = (t_lo + t_hi) / 2
        if residual(mid) > 0:
            t_lo = mid
        else:
            t_hi = mid
    return float((t_lo + t_hi) / 2)


def lag_displacements(state: VehicleState, j_n: np.ndarray, t_v: float,
                      obs_velocity: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vehicle and obstacle displacement over the velocity-change window."""
    t = float(t_v)
    d_uav = state.velocity * t + 0.5 * state.acceleration * t * t \
        + np.asarray(j_n, dtype=float) * t ** 3 / 6.0
    d_obs = np.asarray(obs_velocity, dtype=float) * t
    return d_uav, d_obs


@dataclass
class CandidateDiag:
    obstacle: int
    face: int
    a_c: float
    feasible: bool
    reachable: bool


@dataclass
class PlanResult:
    v_des: np.ndarray
    v_prime_safe: bool
    j_dropped: int = 0
    candidates: list[CandidateDiag] = field(default_factory=list)
    chosen: int | None = None
    lag_iterations: int = 0
    degraded: bool = False
    escape: bool = False

    def trace_record(self, step: int) -> dict:
        return {
            "step": step,
            "v_prime_safe": self.v_prime_safe,
            "j_dropped": self.j_dropped,
            "candidates": [
                {"obstacle": c.obstacle, "face": c.face, "a_c": c.a_c,
                 "feasible": c.feasible, "reachable": c.reachable}
                for c in self.candidates
            ],
            "chosen": self.chosen,
            "lag_iterations": self.lag_iterations,
            "degraded": self.degraded,
        }


def _build_all(apex: np.ndarray, obstacles: list[ObstacleSnapshot],
               r_safe: float) -> list[Pyramid]:
    return [build_pyramid(apex, o.aabb, r_safe) for o in obstacles]


def _choose(v_prime: np.ndarray, obstacles: list[ObstacleSnapshot],
            pyramids: list[Pyramid], v_max: float
            ) -> tuple[np.ndarray | None, list[CandidateDiag], int | None]:
    """Price all face projections of the violated pyramids; pick cheapest valid."""
    diags: list[CandidateDiag] = []
    best = None
    best_key = None
    chosen = None
    for oi, (obs, pyr) in enumerate(zip(obstacles, pyramids)):
        v_rel = relative_velocity(v_prime, obs)
        if not point_in_pyramid(v_rel, pyr):
            continue
        for face, (v_p, a_c) in enumerate(propose_velocities(v_rel, pyr)):
            v_vehicle = v_p + obs.velocity
            feas = feasibility_check(v_vehicle, obstacles, pyramids)
            reach = reachability_check(v_p, obs.velocity, v_max)
            diags.append(CandidateDiag(obstacle=oi, face=face, a_c=a_c,
                                       feasible=feas, reachable=reach))
            if feas and reach:
                key = (a_c, oi, face)
                if best_key is None or key < best_key:
                    best_key = key
                    best = v_vehicle
                    chosen = len(diags) - 1
    return best, diags, chosen


def plan_velocity(state: VehicleState, waypoint: np.ndarray,
                  obstacles: list[ObstacleSnapshot], cfg: PlannerConfig,
                  timing: TimingModel | None = None) -> PlanResult:
    """Select a collision-free desired velocity toward the waypoint.

    Obstacles are expected already latency-compensated. The vehicle position
    is compensated here. Returns the straight-to-waypoint velocity when it is
    already safe; otherwise evaluates pyramid-face candidates, dropping the
    farthest obstacles one at a time if nothing is both feasible and
    reachable, then iterates lag compensation until the choice stays safe.
    """
    timing = timing or TimingModel()
    waypoint = np.asarray(waypoint, dtype=float)
    p_hat = compensate_vehicle(state, timing)

    gap = waypoint - p_hat
    dist = float(np.linalg.norm(gap))
    v_prime = cfg.v_max * gap / dist if dist > 1e-9 else np.zeros(3)

    if not obstacles:
        return PlanResult(v_des=v_prime, v_prime_safe=True)

    try:
        pyramids = _build_all(p_hat, obstacles, cfg.r_safe)
    except PyramidApexInsideError:
        # already overlapping an inflated box: flee the deepest overlap so the
        # escape direction stays stable when several boxes contain the vehicle
        worst = None
        for obs in obstacles:
            box = obs.aabb.inflated(cfg.r_safe)
            if box.contains(p_hat):
                depth = float(np.min(np.minimum(p_hat - box.minimum,
                                                box.maximum - p_hat)))
                if worst is None or depth > worst[0]:
                    worst = (depth, box, obs)
        if worst is not None:
            _, box, obs = worst
            away = p_hat - box.center
            n = np.linalg.norm(away)
            away = away / n if n > 1e-9 else np.array([0.0, 0.0, 1.0])
            log.warning("apex inside inflated box of obstacle at %s; escaping",
                        np.round(obs.position, 2))
            return PlanResult(v_des=cfg.v_max * away, v_prime_safe=False,
                              degraded=True, escape=True)
        raise

    if feasibility_check(v_prime, obstacles, pyramids):
        return PlanResult(v_des=v_prime, v_prime_safe=True)

    # nearest obstacles matter most; the farthest are dropped under pressure
    order = sorted(range(len(obstacles)),
                   key=lambda i: (float(np.linalg.norm(obstacles[i].position
                                                       - state.position)), i))

    v_des = None
    diags: list[CandidateDiag] = []
    chosen = None
    j_dropped = 0
    retained: list[int] = order
    for j in range(len(obstacles)):
        retained = order[:len(order) - j]
        if not retained:
            break
        obs_r = [obstacles[i] for i in retained]
        pyr_r = [pyramids[i] for i in retained]
        if j > 0 and feasibility_check(v_prime, obs_r, pyr_r):
            # dropping the offender made the straight velocity admissible
            v_des, diags, chosen = v_prime, [], None
            j_dropped = j
            break
        v_des, diags, chosen = _choose(v_prime, obs_r, pyr_r, cfg.v_max)
        if v_des is not None:
            j_dropped = j
            break

    if v_des is None:
        log.warning("no feasible+reachable candidate even with all obstacles "
                    "dropped; commanding brake, degraded")
        return PlanResult(v_des=np.zeros(3), v_prime_safe=False,
                          j_dropped=len(obstacles), candidates=diags,
                          degraded=True)

    obs_r = [obstacles[i] for i in retained]

    # Lag compensation: everything moves while the velocity changes; shift,
    # rebuild, and re-verify until the choice survives or the cap is hit.
    lag_iterations = 0
    degraded = False
    while True:
        if lag_iterations >= cfg.max_lag_iterations:
            degraded = True
            log.warning("lag compensation hit the %d-iteration cap",
                        cfg.max_lag_iterations)
            break
        lag_iterations += 1
        t_v = lag_time(state.velocity, state.acceleration, v_des, cfg.j_max)
        if t_v <= 1e-9:
            break
        j_n = 2 * (v_des - state.velocity - state.acceleration * t_v) / (t_v * t_v)
        apex = None
        shifted = []
        for obs in obs_r:
            d_uav, d_obs = lag_displacements(state, j_n, t_v, obs.velocity)
            apex = p_hat + d_uav
            shifted.append(ObstacleSnapshot(
                position=obs.position + d_obs, velocity=obs.velocity,
                aabb=obs.aabb.translated(d_obs), dynamic=obs.dynamic,
                stamp=obs.stamp, track_id=obs.track_id))
        try:
            pyr_s = _build_all(apex, shifted, cfg.r_safe)
        except PyramidApexInsideError:
            degraded = True
            break
        if feasibility_check(v_des, shifted, pyr_s):
            break
        v_new, diags_new, chosen_new = _choose(v_prime, shifted, pyr_s, cfg.v_max)
        if v_new is None:
            continue       # keep current choice; later shifts may clear it
        v_des, diags, chosen = v_new, diags_new, chosen_new

    return PlanResult(v_des=v_des, v_prime_safe=False, j_dropped=j_dropped,
                      candidates=diags, chosen=chosen,
                      lag_iterations=lag_iterations, degraded=degraded)
