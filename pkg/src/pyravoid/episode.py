"""Deterministic fixed-timestep closed loop: render, perceive, plan, fly.

The control loop runs at a fixed rate; perception runs every tracker period
on rendered depth frames. The vehicle is an ideal constant-jerk integrator
following the latest motion primitive. All stochastic pieces draw from
per-frame generators derived from the scenario seed, so a rerun with the same
inputs reproduces every record bit for bit (wall-clock fields aside).
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import CameraModel
from .cloud_pipeline import (FilterConfig, PointCloudFrame, fov_overlap_filter,
                             overlap_frames, process_frame)
from .geometry import Pose, quat_from_matrix
from .motion_optimizer import (MotionPrimitive, OptimizerConfig,
                               braking_primitive, solve_motion)
from .render import render_cloud
from .tracker import (ObstacleSnapshot, PerceptionOutput, TrackerConfig,
                      TrackerState, perception_step)
from .velocity_planner import (PlannerConfig, TimingModel, VehicleState,
                               compensate_obstacle, compensate_vehicle,
                               plan_velocity)
from .world import Scenario, scenario_from_dict, scenario_to_dict

log = logging.getLogger(__name__)


@dataclass
class EpisodeConfig:
    control_hz: float = 50.0
    t_pl: float = 0.005               # assumed planner latency, seconds
    t_ct: float = 0.01                # control/transport delay, seconds
    t_pm: float = 0.0                 # cloud processing delay, seconds
    ego_t_gap: float = 0.0            # cloud/state timestamp gap to compensate
    neighbor_overlap: bool = False    # union consecutive frames (for sparse
                                      # high-rate streams; smears movers when
                                      # frames arrive a full period apart)
    fov_overlap: bool = True          # keep only co-visible points
    assume_static: bool = False      # planner ignores estimated velocities
    max_steps: int | None = None      # overrides duration when set


@dataclass
class SimConfig:
    filters: FilterConfig = field(default_factory=FilterConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    camera: CameraModel = field(default_factory=CameraModel)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)


@dataclass
class EpisodeLog:
    scenario: Scenario
    dt_control: float
    seed: int
    control: list[dict] = field(default_factory=list)
    perception: list[dict] = field(default_factory=list)
    planner_trace: list[dict] = field(default_factory=list)
    primitive_rows: list[dict] = field(default_factory=list)
    status: str = "timeout"
    end_time: float = 0.0
    legs_done: int = 0

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            meta = {"type": "meta", "scenario": scenario_to_dict(self.scenario),
                    "dt_control": self.dt_control, "seed": self.seed}
            fh.write(json.dumps(meta) + "\n")
            for rec in self.control:
                fh.write(json.dumps({"type": "control", **rec}) + "\n")
            for rec in self.perception:
                fh.write(json.dumps({"type": "perception", **rec}) + "\n")
            fh.write(json.dumps({"type": "end", "status": self.status,
                                 "t": self.end_time,
                                 "legs_done": self.legs_done}) + "\n")

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "EpisodeLog":
        scenario = None
        dt, seed = 0.02, 0
        control, perception = [], []
        status, end_time, legs = "timeout", 0.0, 0
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                kind = rec.pop("type")
                if kind == "meta":
                    scenario = scenario_from_dict(rec["scenario"])
                    dt = rec["dt_control"]
                    seed = rec.get("seed", 0)
                elif kind == "control":
                    control.append(rec)
                elif kind == "perception":
                    perception.append(rec)
                elif kind == "end":
                    status = rec.get("status", "timeout")
                    end_time = rec.get("t", 0.0)
                    legs = rec.get("legs_done", 0)
        if scenario is None:
            raise ValueError(f"{path}: missing meta record")
        out = cls(scenario=scenario, dt_control=dt, seed=seed, status=status,
                  end_time=end_time, legs_done=legs)
        out.control = control
        out.perception = perception
        return out


def camera_pose_for(position: np.ndarray, velocity: np.ndarray,
                    look_at: np.ndarray, yaw_rate: float = 0.0) -> Pose:
    """Camera mounted at the vehicle, yawed toward look_at, level pitch."""
    to_target = np.asarray(look_at, dtype=float) - position
    yaw = float(np.arctan2(to_target[1], to_target[0])) \
        if np.linalg.norm(to_target[:2]) > 1e-6 else 0.0
    # camera axes in world coordinates: X right, Y down, Z forward
    f = np.array([np.cos(yaw), np.sin(yaw), 0.0])
    r = np.array([np.sin(yaw), -np.cos(yaw), 0.0])
    d = np.array([0.0, 0.0, -1.0])
    rot = np.column_stack([r, d, f])
    return Pose(translation=np.asarray(position, dtype=float).copy(),
                rotation=quat_from_matrix(rot),
                velocity=np.asarray(velocity, dtype=float).copy(),
                angular_velocity=np.array([0.0, 0.0, yaw_rate]))


def snapshots_for_planner(output: PerceptionOutput,
                          assume_static: bool) -> list[ObstacleSnapshot]:
    """Planner-facing obstacle list: dynamic tracks plus static clusters."""
    snaps = []
    for s in output.dynamic:
        if assume_static:
            snaps.append(ObstacleSnapshot(position=s.position,
                                          velocity=np.zeros(3), aabb=s.aabb,
                                          dynamic=False, stamp=s.stamp,
                                          track_id=s.track_id))
        else:
            snaps.append(s)
    for cl in output.static_clusters:
        snaps.append(ObstacleSnapshot(position=cl.centroid, velocity=np.zeros(3),
                                      aabb=cl.aabb, dynamic=False,
                                      stamp=output.stamp))
    return snaps


def _track_records(step: int, state: TrackerState) -> list[dict]:
    return [{"step": step, "id": tr.track_id, "class": tr.label,
             "pos": tr.kf.position.tolist(), "vel": tr.kf.velocity.tolist(),
             "speed": tr.speed, "matched": bool(tr.matched)}
            for tr in state.tracks]


def _primitive_row(step: int, prim: MotionPrimitive) -> dict:
    return {"step": step, "Jx": prim.j_n[0], "Jy": prim.j_n[1], "Jz": prim.j_n[2],
            "t_v": prim.t_v, "ax1": prim.a_next[0], "ay1": prim.a_next[1],
            "az1": prim.a_next[2], "d_trj": prim.d_trj,
            "objective": prim.objective, "feasible": prim.feasible}


def run_episode(scenario: Scenario, cfg: SimConfig | None = None,
                seed: int | None = None) -> EpisodeLog:
    """Fly the scenario closed-loop and log everything the metrics need.

    seed overrides scenario.seed for the render noise streams.
    """
    cfg = cfg or SimConfig()
    seed = scenario.seed if seed is None else int(seed)
    ep_cfg = cfg.episode
    dt = 1.0 / ep_cfg.control_hz
    perception_every = max(1, int(round(cfg.tracker.d_t / dt)))
    steps = ep_cfg.max_steps if ep_cfg.max_steps is not None \
        else int(round(scenario.duration / dt))

    log_out = EpisodeLog(scenario=scenario, dt_control=dt, seed=seed)

    pos = scenario.vehicle_start.copy()
    vel = np.zeros(3)
    acc = np.zeros(3)

    hover = float(np.linalg.norm(scenario.goal - scenario.vehicle_start)) \
        <= scenario.goal_tolerance
    legs_total = 0 if hover else max(1, 2 * scenario.round_trips)
    legs_done = 0
    target = scenario.goal.copy()
    hover_look = scenario.vehicle_start + np.array([4.0, 0.0, 0.0])

    tracker_state = TrackerState()
    prev_frame: PointCloudFrame | None = None    # last accepted union frame
    prev_pose: Pose | None = None
    perception_out: PerceptionOutput | None = None
    prev_yaw: float | None = None

    frame_index = 0

    for step in range(steps):
        t = step * dt

        if not np.all(np.isfinite(pos)) or not np.all(np.isfinite(vel)):
            log_out.status = "abort"
            log_out.end_time = t
            log.error("vehicle state diverged at t=%.2f", t)
            break

        look_at = hover_look if hover else target
        to_t = look_at - pos
        yaw = float(np.arctan2(to_t[1], to_t[0])) \
            if np.linalg.norm(to_t[:2]) > 1e-6 \
            else (prev_yaw if prev_yaw is not None else 0.0)
        yaw_rate = 0.0
        if prev_yaw is not None:
            d_yaw = (yaw - prev_yaw + np.pi) % (2 * np.pi) - np.pi
            yaw_rate = d_yaw / dt
        prev_yaw = yaw

        if step % perception_every == 0:
            cam_pose = camera_pose_for(pos, vel, look_at, yaw_rate)
            rng = np.random.default_rng([seed, frame_index])
            frame_index += 1
            raw = render_cloud(scenario, t, cam_pose, cfg.camera, rng)
            t0 = time.perf_counter()
            processed = process_frame(raw, cfg.filters, ep_cfg.ego_t_gap)
            if processed is not None:
                if ep_cfg.neighbor_overlap and prev_frame is not None:
                    union = overlap_frames(processed, prev_frame)
                else:
                    union = processed
                if prev_frame is not None:
                    current = fov_overlap_filter(union, prev_pose, cfg.camera) \
                        if ep_cfg.fov_overlap else union
                    perception_out = perception_step(prev_frame, current,
                                                     tracker_state, cfg.tracker)
                    wall_perc = (time.perf_counter() - t0) * 1e3
                    gt = []
                    for gi, (gp, gv) in enumerate(scenario.mover_states(t)):
                        visible = bool(cfg.camera.contains_world(gp, cam_pose)[0])
                        gt.append({"id": gi, "pos": gp.tolist(),
                                   "vel": gv.tolist(), "visible": visible})
                    log_out.perception.append({
                        "step": step, "t": t,
                        "tracks": _track_records(step, tracker_state),
                        "dynamic": [
                            {"id": s.track_id, "pos": s.position.tolist(),
                             "vel": s.velocity.tolist()}
                            for s in perception_out.dynamic],
                        "n_static": len(perception_out.static_clusters),
                        "gt": gt, "wall_ms": wall_perc,
                    })
                prev_frame = union
                prev_pose = raw.camera_pose

        # --- plan and actuate ---------------------------------------------
        state = VehicleState(position=pos, velocity=vel, acceleration=acc, stamp=t)
        timing = TimingModel(t_pl=ep_cfg.t_pl, t_ct=ep_cfg.t_ct, t_pm=ep_cfg.t_pm,
                             t_dp=(t - perception_out.stamp) if perception_out else 0.0)
        if perception_out is not None:
            obstacles = [compensate_obstacle(s, timing)
                         for s in snapshots_for_planner(perception_out,
                                                        ep_cfg.assume_static)]
        else:
            obstacles = []

        t0 = time.perf_counter()
        plan = plan_velocity(state, target, obstacles, cfg.planner, timing)
        wall_plan = (time.perf_counter() - t0) * 1e3
        log_out.planner_trace.append(plan.trace_record(step))

        p_hat = compensate_vehicle(state, timing)
        opt_state = VehicleState(position=p_hat, velocity=vel, acceleration=acc,
                                 stamp=t)
        t0 = time.perf_counter()
        if float(np.linalg.norm(target - p_hat)) < 1e-9:
            primitive = braking_primitive(opt_state, cfg.optimizer)
        else:
            primitive = solve_motion(opt_state, plan.v_des, target, cfg.optimizer)
            if not primitive.feasible:
                primitive = braking_primitive(opt_state, cfg.optimizer)
        wall_opt = (time.perf_counter() - t0) * 1e3
        log_out.primitive_rows.append(_primitive_row(step, primitive))

        log_out.control.append({
            "step": step, "t": t, "pos": pos.tolist(), "vel": vel.tolist(),
            "acc": acc.tolist(), "jerk": primitive.j_n.tolist(),
            "t_v": primitive.t_v, "degraded": bool(plan.degraded),
            "feasible": bool(primitive.feasible),
            "plan_ms": wall_plan, "opt_ms": wall_opt,
            "n_obstacles": len(obstacles),
        })

        # ideal constant-jerk integration over one control period
        j = primitive.j_n
        pos = pos + vel * dt + 0.5 * acc * dt * dt + j * dt ** 3 / 6.0
        vel = vel + acc * dt + 0.5 * j * dt * dt
        acc = acc + j * dt

        if not hover and float(np.linalg.norm(pos - target)) < scenario.goal_tolerance:
            legs_done += 1
            if legs_done >= legs_total:
                log_out.status = "goal"
                log_out.end_time = (step + 1) * dt
                break
            target = scenario.vehicle_start.copy() if legs_done % 2 == 1 \
                else scenario.goal.copy()

    if log_out.status == "timeout":
        log_out.end_time = steps * dt
    log_out.legs_done = legs_done
    return log_out
