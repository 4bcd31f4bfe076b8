"""Jerk-limited motion primitive selection, reduced to a 1-D search.

Requiring the vehicle to reach the desired velocity exactly at time t_v under
constant jerk pins the jerk to J(t_v) = 2 (v_des - v_n - a_n t_v) / t_v^2, so
the only free variable is t_v itself. The cost trades off maneuver time
against how far the primitive's endpoint strays from the straight line to the
waypoint; jerk and end-acceleration limits bound the feasible set. A dense
grid scan followed by golden-section refinement nails the minimizer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .velocity_planner import VehicleState

log = logging.getLogger(__name__)

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass
class OptimizerConfig:
    eta_time: float = 10.0            # weight on maneuver time
    eta_dist: float = 6.0             # weight on endpoint path deviation
    horizon_mult: int = 3             # endpoint evaluated at horizon_mult * t_v
    a_max: float = 6.0
    j_max: float = 20.0
    t_min: float = 0.05
    t_max: float = 3.0
    grid_samples: int = 240           # dense scan resolution (>= 200)


@dataclass
class MotionPrimitive:
    j_n: np.ndarray                   # commanded constant jerk
    t_v: float                        # time at which velocity meets v_des
    a_next: np.ndarray                # acceleration at t_v
    p_end: np.ndarray                 # position at horizon_mult * t_v
    d_trj: float                      # endpoint distance to the path line
    objective: float
    feasible: bool
    horizon: float = 0.0              # evaluation horizon, horizon_mult * t_v


def jerk_for(state: VehicleState, v_des: np.ndarray, t_v: float) -> np.ndarray:
    """Constant jerk that lands the velocity on v_des at exactly t_v."""
    if t_v <= 0:
        raise ValueError("t_v must be positive")
    return 2 * (np.asarray(v_des, dtype=float) - state.velocity
                - state.acceleration * t_v) / (t_v * t_v)


def rollout_state(state: VehicleState, j_n: np.ndarray,
                  t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Position, velocity, acceleration after t seconds of constant jerk."""
    j = np.asarray(j_n, dtype=float)
    p = state.position + state.velocity * t + 0.5 * state.acceleration * t * t \
        + j * t ** 3 / 6.0
    v = state.velocity + state.acceleration * t + 0.5 * j * t * t
    a = state.acceleration + j * t
    return p, v, a


def endpoint(state: VehicleState, j_n: np.ndarray, t: float) -> np.ndarray:
    return rollout_state(state, j_n, t)[0]


def dist_to_pathline(p_end: np.ndarray, origin: np.ndarray,
                     waypoint: np.ndarray) -> float:
    """Distance from a point to the infinite line through origin and waypoint."""
    origin = np.asarray(origin, dtype=float)
    waypoint = np.asarray(waypoint, dtype=float)
    seg = waypoint - origin
    n = float(np.linalg.norm(seg))
    if n < 1e-12:
        raise ValueError("path line endpoints coincide")
    d1 = np.asarray(p_end, dtype=float) - origin
    d2 = np.asarray(p_end, dtype=float) - waypoint
    return float(np.linalg.norm(np.cross(d1, d2)) / n)


def sample_trajectory(state: VehicleState, primitive: MotionPrimitive,
                      dt: float) -> list[tuple[float, np.ndarray, np.ndarray, np.ndarray]]:
    """Roll the primitive out at fixed dt up to the evaluation horizon.

    Returns (t, position, velocity, acceleration) tuples. The first sample is
    the initial state; the last lands within one dt of the horizon.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    horizon = primitive.horizon if primitive.horizon > 0 else primitive.t_v
    steps = int(np.floor(horizon / dt + 1e-9))
    out = []
    for n in range(steps + 1):
        t = n * dt
        p, v, a = rollout_state(state, primitive.j_n, t)
        out.append((t, p, v, a))
    return out


def solve_motion(state: VehicleState, v_des: np.ndarray, waypoint: np.ndarray,
                 cfg: OptimizerConfig) -> MotionPrimitive:
    """Pick t_v minimizing eta_time * t_v + eta_dist * d_trj under limits.

    Dense-grid scan over [t_min, t_max] followed by golden-section refinement
    around the best feasible cell. When no sample is feasible, returns the
    least-violating primitive flagged infeasible (the caller brakes).
    """
    v_des = np.asarray(v_des, dtype=float)
    waypoint = np.asarray(waypoint, dtype=float)
    k = cfg.horizon_mult

    def evaluate(t: float) -> tuple[float, float, bool, np.ndarray, np.ndarray]:
        j = jerk_for(state, v_des, t)
        a1 = state.acceleration + j * t
        p_end = endpoint(state, j, k * t)
        d = dist_to_pathline(p_end, state.position, waypoint)
        cost = cfg.eta_time * t + cfg.eta_dist * d
        ok = (np.linalg.norm(j) <= cfg.j_max + 1e-6
              and np.linalg.norm(a1) <= cfg.a_max + 1e-6)
        return cost, d, ok, j, a1

    ts = np.linspace(cfg.t_min, cfg.t_max, cfg.grid_samples)
    # vectorized scan; per-sample jerk/acc limits and endpoint deviation
    dv = v_des - state.velocity
    js = 2 * (dv[None, :] - state.acceleration[None, :] * ts[:, None]) / (ts ** 2)[:, None]
    a1s = state.acceleration[None, :] + js * ts[:, None]
    tk = (k * ts)[:, None]
    p_ends = state.position[None, :] + state.velocity[None, :] * tk \
        + 0.5 * state.acceleration[None, :] * tk ** 2 + js * tk ** 3 / 6.0
    seg = waypoint - state.position
    seg_n = float(np.linalg.norm(seg))
    if seg_n < 1e-12:
        raise ValueError("waypoint coincides with the vehicle position")
    d1 = p_ends - state.position[None, :]
    d2 = p_ends - waypoint[None, :]
    ds = np.linalg.norm(np.cross(d1, d2), axis=1) / seg_n
    costs = cfg.eta_time * ts + cfg.eta_dist * ds
    feas = (np.linalg.norm(js, axis=1) <= cfg.j_max + 1e-6) \
        & (np.linalg.norm(a1s, axis=1) <= cfg.a_max + 1e-6)

    if not np.any(feas):
        viol = np.maximum(np.linalg.norm(js, axis=1) - cfg.j_max,
                          np.linalg.norm(a1s, axis=1) - cfg.a_max)
        i = int(np.argmin(viol))
        log.warning("no feasible t_v in [%.2f, %.2f]; min violation %.3f",
                    cfg.t_min, cfg.t_max, float(viol[i]))
        return MotionPrimitive(j_n=js[i], t_v=float(ts[i]), a_next=a1s[i],
                               p_end=p_ends[i], d_trj=float(ds[i]),
                               objective=float(costs[i]), feasible=False,
                               horizon=float(k * ts[i]))

    masked = np.where(feas, costs, np.inf)
    i = int(np.argmin(masked))
    h = ts[1] - ts[0]
    lo = max(cfg.t_min, float(ts[i]) - h)
    hi = min(cfg.t_max, float(ts[i]) + h)

    # the constrained minimum can sit on a feasibility boundary inside the
    # bracket; bisect the flip so refinement operates on a feasible window
    def boundary_toward(bad: float, good: float) -> float:
        for _ in range(60):
            mid = 0.5 * (bad + good)
            if evaluate(mid)[2]:
                good = mid
            else:
                bad = mid
        return good

    if i > 0 and not feas[i - 1]:
        lo = boundary_toward(float(ts[i - 1]), float(ts[i]))
    if i + 1 < len(ts) and not feas[i + 1]:
        hi = boundary_toward(float(ts[i + 1]), float(ts[i]))

    def refine_cost(t: float) -> float:
        cost, _, ok, _, _ = evaluate(t)
        return cost if ok else np.inf

    # golden-section refinement on the feasible window; the incumbent grid
    # point and the window edges guard against refinement losing the minimum
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = refine_cost(c), refine_cost(d)
    for _ in range(60):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = refine_cost(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = refine_cost(d)
        if b - a < 1e-9:
            break
    t_star = float(ts[i])
    cost_star = float(masked[i])
    for t in ((a + b) / 2, lo, hi):
        cost_t, _, ok_t, _, _ = evaluate(float(t))
        if ok_t and cost_t < cost_star:
            t_star, cost_star = float(t), float(cost_t)
    cost_star, d_star, ok_star, j_star, a1_star = evaluate(t_star)
    return MotionPrimitive(j_n=j_star, t_v=float(t_star), a_next=a1_star,
                           p_end=endpoint(state, j_star, k * t_star),
                           d_trj=float(d_star), objective=float(cost_star),
                           feasible=True, horizon=float(k * t_star))


def braking_primitive(state: VehicleState, cfg: OptimizerConfig) -> MotionPrimitive:
    """Max-deceleration fallback toward zero velocity for infeasible solves."""
    speed = float(np.linalg.norm(state.velocity))
    if speed < 1e-9:
        j = -state.acceleration / max(cfg.t_min, 1e-3)
        jn = float(np.linalg.norm(j))
        if jn > cfg.j_max:
            j = j * (cfg.j_max / jn)
        t_v = cfg.t_min
    else:
        # constant jerk opposing motion, scaled to the limit
        j = -state.velocity / speed * cfg.j_max
        t_v = min(cfg.t_max, max(cfg.t_min, np.sqrt(2 * speed / cfg.j_max)))
    a1 = state.acceleration + j * t_v
    an = float(np.linalg.norm(a1))
    if an > cfg.a_max:
        t_v = max(cfg.t_min, (cfg.a_max - 0.0) / cfg.j_max)
        a1 = state.acceleration + j * t_v
    p_end = endpoint(state, j, cfg.horizon_mult * t_v)
    return MotionPrimitive(j_n=j, t_v=float(t_v), a_next=a1, p_end=p_end,
                           d_trj=0.0, objective=float("inf"), feasible=False,
                           horizon=float(cfg.horizon_mult * t_v))
