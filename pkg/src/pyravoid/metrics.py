"""Episode scoring: CLEAR-style tracking metrics and motion aggregates.

Tracking follows the classic multi-object bookkeeping: per perception step,
surviving correspondences are kept while within the gate, leftovers are
greedily matched nearest-first, and misses / false positives / identity
mismatches accumulate against the total ground-truth count. Motion metrics
integrate the logged piecewise-constant-jerk trajectory in closed form.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .episode import EpisodeLog

log = logging.getLogger(__name__)


@dataclass
class Metrics:
    # tracking
    mota: float = float("nan")
    motp: float = float("nan")
    f_n: float = float("nan")             # miss rate
    f_p: float = float("nan")             # false-positive rate
    f_m: float = float("nan")             # mismatch rate
    vel_rmse: float = float("nan")
    gt_total: int = 0
    misses: int = 0
    false_positives: int = 0
    mismatches: int = 0
    matches: int = 0
    # motion
    a_mean: float = float("nan")
    v_mean: float = float("nan")
    l_traj: float = float("nan")
    t_opt_mean_ms: float = float("nan")
    t_plan_mean_ms: float = float("nan")
    min_separation: float = float("nan")
    duration: float = float("nan")
    status: str = ""

    def row(self, include_timings: bool = False) -> dict:
        """Flat dict for CSV output; wall-clock columns blank by default."""
        out = {
            "status": self.status, "duration": _fmt(self.duration),
            "mota": _fmt(self.mota), "motp": _fmt(self.motp),
            "f_n": _fmt(self.f_n), "f_p": _fmt(self.f_p), "f_m": _fmt(self.f_m),
            "vel_rmse": _fmt(self.vel_rmse), "gt_total": self.gt_total,
            "misses": self.misses, "false_positives": self.false_positives,
            "mismatches": self.mismatches,
            "a_mean": _fmt(self.a_mean), "v_mean": _fmt(self.v_mean),
            "l_traj": _fmt(self.l_traj),
            "min_separation": _fmt(self.min_separation),
            "t_opt_mean_ms": "", "t_plan_mean_ms": "",
        }
        if include_timings:
            out["t_opt_mean_ms"] = _fmt(self.t_opt_mean_ms)
            out["t_plan_mean_ms"] = _fmt(self.t_plan_mean_ms)
        return out


def _fmt(x: float) -> str:
    return "" if isinstance(x, float) and not np.isfinite(x) else f"{x:.6g}"


METRICS_COLUMNS = ["status", "duration", "mota", "motp", "f_n", "f_p", "f_m",
                   "vel_rmse", "gt_total", "misses", "false_positives",
                   "mismatches", "a_mean", "v_mean", "l_traj",
                   "min_separation", "t_opt_mean_ms", "t_plan_mean_ms"]


def score_tracking(log_in: EpisodeLog, gate: float = 1.0,
                   metrics: Metrics | None = None) -> Metrics:
    """CLEAR bookkeeping over the log's perception records.

    Ground truth at each step is every visible mover; hypotheses are the
    dynamic track snapshots. Existing pairings persist while within the gate;
    the rest match greedily by ascending distance. MOTA = 1 - f_n - f_p - f_m.
    """
    m = metrics or Metrics()
    mapping: dict[int, int] = {}           # gt id -> track id, persists gaps
    gt_total = misses = fps = mismatches = n_match = 0
    dist_sum = 0.0
    vel_sq = []

    for rec in log_in.perception:
        gts = {g["id"]: g for g in rec["gt"] if g.get("visible", True)}
        hyps = {h["id"]: h for h in rec["dynamic"]}
        gt_total += len(gts)

        paired_g: set[int] = set()
        paired_h: set[int] = set()
        pairs: list[tuple[int, int, float]] = []

        # keep surviving correspondences first
        for g_id, h_id in mapping.items():
            if g_id in gts and h_id in hyps:
                d = float(np.linalg.norm(np.array(gts[g_id]["pos"])
                                         - np.array(hyps[h_id]["pos"])))
                if d <= gate:
                    pairs.append((g_id, h_id, d))
                    paired_g.add(g_id)
                    paired_h.add(h_id)

        # greedy nearest-first for the rest
        cands = []
        for g_id, g in gts.items():
            if g_id in paired_g:
                continue
            for h_id, h in hyps.items():
                if h_id in paired_h:
                    continue
                d = float(np.linalg.norm(np.array(g["pos"]) - np.array(h["pos"])))
                if d <= gate:
                    cands.append((d, g_id, h_id))
        cands.sort()
        for d, g_id, h_id in cands:
            if g_id in paired_g or h_id in paired_h:
                continue
            if g_id in mapping and mapping[g_id] != h_id:
                mismatches += 1
            mapping[g_id] = h_id
            pairs.append((g_id, h_id, d))
            paired_g.add(g_id)
            paired_h.add(h_id)

        misses += len(gts) - len(paired_g)
        fps += len(hyps) - len(paired_h)
        n_match += len(pairs)
        for g_id, h_id, d in pairs:
            dist_sum += d
            dv = np.array(gts[g_id]["vel"]) - np.array(hyps[h_id]["vel"])
            vel_sq.append(float(dv @ dv))

    m.gt_total = gt_total
    m.misses = misses
    m.false_positives = fps
    m.mismatches = mismatches
    m.matches = n_match
    if gt_total > 0:
        m.f_n = misses / gt_total
        m.f_p = fps / gt_total
        m.f_m = mismatches / gt_total
        m.mota = 1.0 - m.f_n - m.f_p - m.f_m
    if n_match > 0:
        m.motp = dist_sum / n_match
        m.vel_rmse = float(np.sqrt(np.mean(vel_sq)))
    return m


def _accel_integral(a: np.ndarray, j: np.ndarray, dt: float) -> float:
    """Closed-form integral of ||a + j s|| over s in [0, dt]."""
    alpha = float(j @ j)
    beta = 2.0 * float(a @ j)
    gamma = float(a @ a)
    if alpha < 1e-16:
        return np.sqrt(gamma) * dt

    def f(s: float) -> float:
        return max(alpha * s * s + beta * s + gamma, 0.0)

    disc = 4 * alpha * gamma - beta * beta          # >= 0 by Cauchy-Schwarz

    def anti(s: float) -> float:
        root = np.sqrt(f(s))
        first = (2 * alpha * s + beta) / (4 * alpha) * root
        if disc <= 1e-14 * max(1.0, alpha * gamma):
            return first
        arg = 2 * np.sqrt(alpha * f(s)) + 2 * alpha * s + beta
        return first + disc / (8 * alpha ** 1.5) * np.log(arg)

    return anti(dt) - anti(0.0)


def _speed_integral(v: np.ndarray, a: np.ndarray, j: np.ndarray,
                    dt: float) -> float:
    """Simpson integral of ||v + a s + j s^2 / 2|| over one control period."""
    def speed(s: float) -> float:
        return float(np.linalg.norm(v + a * s + 0.5 * j * s * s))
    return dt / 6.0 * (speed(0.0) + 4.0 * speed(dt / 2) + speed(dt))


def score_motion(log_in: EpisodeLog, metrics: Metrics | None = None) -> Metrics:
    """Motion aggregates from the control records plus exact ground truth."""
    m = metrics or Metrics()
    recs = log_in.control
    m.status = log_in.status
    m.duration = log_in.end_time
    if not recs:
        return m
    dt = log_in.dt_control
    accel_int = 0.0
    length = 0.0
    min_sep = float("inf")
    t_total = 0.0
    scenario = log_in.scenario
    for rec in recs:
        a = np.array(rec["acc"], dtype=float)
        v = np.array(rec["vel"], dtype=float)
        j = np.array(rec["jerk"], dtype=float)
        accel_int += _accel_integral(a, j, dt)
        length += _speed_integral(v, a, j, dt)
        t_total += dt
        sep = scenario.min_body_distance(np.array(rec["pos"], dtype=float),
                                         rec["t"])
        min_sep = min(min_sep, sep)
    m.a_mean = accel_int / t_total
    m.l_traj = length
    m.v_mean = length / t_total
    m.min_separation = min_sep if np.isfinite(min_sep) else float("nan")
    opt = [rec["opt_ms"] for rec in recs if "opt_ms" in rec]
    plan = [rec["plan_ms"] for rec in recs if "plan_ms" in rec]
    if opt:
        m.t_opt_mean_ms = float(np.mean(opt))
    if plan:
        m.t_plan_mean_ms = float(np.mean(plan))
    return m


def score_episode(log_in: EpisodeLog, gate: float = 1.0) -> Metrics:
    return score_motion(log_in, score_tracking(log_in, gate))
