"""Command-line front end.

Subcommands: ``simulate`` (closed-loop episodes from a scenario JSON),
``perceive`` (offline tracking over a recorded cloud sequence), ``plan``
(one planning step from a JSON state), ``metrics`` (aggregate metrics CSVs).

Exit codes: 0 success, 1 configuration or input schema errors, 2 aborted
episode. ``PYRAVOID_LOG_LEVEL`` = error|warn|info|debug controls logging.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .episode import EpisodeLog, SimConfig, run_episode
from .frames_io import FrameFormatError, read_sequence
from .geometry import AABB
from .metrics import METRICS_COLUMNS, Metrics, score_episode, score_tracking
from .motion_optimizer import solve_motion
from .tracker import ObstacleSnapshot, TrackerState, perception_step
from .velocity_planner import (TimingModel, VehicleState, compensate_obstacle,
                               plan_velocity)
from .world import load_scenario

log = logging.getLogger(__name__)

PRIMITIVE_COLUMNS = ["step", "Jx", "Jy", "Jz", "t_v", "ax1", "ay1", "az1",
                     "d_trj", "objective", "feasible"]

_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
           "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = os.environ.get("PYRAVOID_LOG_LEVEL", "warn").lower()
    if level not in _LEVELS:
        print(f"warning: unknown PYRAVOID_LOG_LEVEL {level!r}, using warn",
              file=sys.stderr)
        level = "warn"
    logging.basicConfig(level=_LEVELS[level],
                        format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


class ConfigError(Exception):
    pass


def apply_overrides(cfg: SimConfig, sets: list[str]) -> SimConfig:
    """Apply --set section.key=value overrides onto the config bundle."""
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected section.key=value")
        key, _, raw = item.partition("=")
        if "." not in key:
            raise ConfigError(f"--set {item!r}: key must be section.key")
        section_name, _, attr = key.partition(".")
        section = getattr(cfg, section_name, None)
        if section is None or not dataclasses.is_dataclass(section):
            names = [f.name for f in dataclasses.fields(cfg)]
            raise ConfigError(f"--set {item!r}: unknown section "
                              f"{section_name!r} (have {', '.join(names)})")
        if not hasattr(section, attr):
            raise ConfigError(f"--set {item!r}: section {section_name!r} has "
                              f"no option {attr!r}")
        current = getattr(section, attr)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        if isinstance(current, bool) and not isinstance(value, bool):
            raise ConfigError(f"--set {item!r}: expected true/false")
        if isinstance(current, (int, float)) and not isinstance(value, (int, float)):
            raise ConfigError(f"--set {item!r}: expected a number")
        if current is None or value is None or isinstance(value, bool):
            setattr(section, attr, value)
        else:
            setattr(section, attr, type(current)(value))
    return cfg


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def _fmt_num(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def _primitive_csv_row(rec: dict) -> dict:
    return {c: _fmt_num(rec[c]) for c in PRIMITIVE_COLUMNS}


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        scenario = load_scenario(args.scenario)
        cfg = apply_overrides(SimConfig(), args.set or [])
    except (ValueError, ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base_seed = scenario.seed if args.seed is None else args.seed

    rows = []
    aborted = False
    for rep in range(args.reps):
        seed = base_seed + rep
        ep = run_episode(scenario, cfg, seed=seed)
        ep.to_jsonl(out_dir / f"episode_{rep:03d}.jsonl")
        with open(out_dir / f"tracks_{rep:03d}.jsonl", "w") as fh:
            for rec in ep.perception:
                for tr in rec["tracks"]:
                    fh.write(json.dumps(tr) + "\n")
        with open(out_dir / f"planner_{rep:03d}.jsonl", "w") as fh:
            for rec in ep.planner_trace:
                fh.write(json.dumps(rec) + "\n")
        _write_csv(out_dir / f"primitives_{rep:03d}.csv", PRIMITIVE_COLUMNS,
                   [_primitive_csv_row(r) for r in ep.primitive_rows])
        m = score_episode(ep, gate=args.gate)
        row = {"episode": rep, "seed": seed, **m.row(include_timings=args.timings)}
        rows.append(row)
        if ep.status == "abort":
            aborted = True
        line = f"episode {rep}: status={ep.status} duration={ep.end_time:.2f}s"
        if np.isfinite(m.mota):
            line += f" mota={m.mota:.3f}"
        if np.isfinite(m.min_separation):
            line += f" min_sep={m.min_separation:.3f}"
        print(line)
    _write_csv(out_dir / "metrics.csv", ["episode", "seed"] + METRICS_COLUMNS, rows)
    print(f"wrote {out_dir / 'metrics.csv'}")
    return 2 if aborted else 0


def cmd_perceive(args: argparse.Namespace) -> int:
    try:
        cfg = apply_overrides(SimConfig(), args.set or [])
        frames = read_sequence(args.sequence)
    except (ConfigError, FrameFormatError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if len(frames) < 2:
        print("error: need at least two frames", file=sys.stderr)
        return 1

    from .cloud_pipeline import fov_overlap_filter, overlap_frames, process_frame

    state = TrackerState()
    ep = EpisodeLog(scenario=None, dt_control=cfg.tracker.d_t, seed=0)  # type: ignore[arg-type]
    gt_by_time = {}
    if args.ground_truth:
        try:
            with open(args.ground_truth) as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        gt_by_time[round(float(rec["timestamp"]), 6)] = rec["movers"]
        except (OSError, KeyError, json.JSONDecodeError) as e:
            print(f"error: ground truth: {e}", file=sys.stderr)
            return 1

    out_path = Path(args.out) if args.out else Path(str(args.sequence)) \
        .with_suffix(".tracks.jsonl")
    prev = None
    prev_pose = None
    records = []
    for i, raw in enumerate(frames):
        processed = process_frame(raw, cfg.filters, 0.0)
        if processed is None:
            continue
        if prev is not None:
            union = overlap_frames(processed, prev) \
                if cfg.episode.neighbor_overlap else processed
            current = fov_overlap_filter(union, prev_pose, cfg.camera) \
                if cfg.episode.fov_overlap else union
            out = perception_step(prev, current, state, cfg.tracker)
            track_rows = [{"step": i, "id": tr.track_id, "class": tr.label,
                           "pos": tr.kf.position.tolist(),
                           "vel": tr.kf.velocity.tolist(), "speed": tr.speed,
                           "matched": bool(tr.matched)} for tr in state.tracks]
            gt = gt_by_time.get(round(raw.timestamp, 6), [])
            records.append({"step": i, "t": raw.timestamp, "tracks": track_rows,
                            "dynamic": [{"id": s.track_id,
                                         "pos": s.position.tolist(),
                                         "vel": s.velocity.tolist()}
                                        for s in out.dynamic],
                            "n_static": len(out.static_clusters),
                            "gt": [{"id": g["id"], "pos": g["pos"],
                                    "vel": g.get("vel", [0, 0, 0]),
                                    "visible": g.get("visible", True)}
                                   for g in gt]})
            prev = union
        else:
            prev = processed
        prev_pose = raw.camera_pose
    ep.perception = records
    with open(out_path, "w") as fh:
        for rec in records:
            for tr in rec["tracks"]:
                fh.write(json.dumps(tr) + "\n")
    print(f"wrote {out_path} ({len(records)} steps)")
    if gt_by_time:
        m = score_tracking(ep, gate=args.gate)
        print(f"MOTA {m.mota:.4f}  MOTP {m.motp:.4f}  f_n {m.f_n:.4f}  "
              f"f_p {m.f_p:.4f}  f_m {m.f_m:.4f}  vel_rmse {m.vel_rmse:.4f}")
    return 0


def _parse_plan_input(data: dict) -> tuple[VehicleState, np.ndarray,
                                           list[ObstacleSnapshot], TimingModel,
                                           SimConfig]:
    try:
        st = data["state"]
        state = VehicleState(position=np.array(st["position"], dtype=float),
                             velocity=np.array(st["velocity"], dtype=float),
                             acceleration=np.array(st.get("acceleration",
                                                          [0, 0, 0]), dtype=float),
                             stamp=float(st.get("stamp", 0.0)))
        waypoint = np.array(data["waypoint"], dtype=float)
        obstacles = []
        for ob in data.get("obstacles", []):
            box = ob["aabb"]
            obstacles.append(ObstacleSnapshot(
                position=np.array(ob["position"], dtype=float),
                velocity=np.array(ob.get("velocity", [0, 0, 0]), dtype=float),
                aabb=AABB(np.array(box["min"], dtype=float),
                          np.array(box["max"], dtype=float)),
                dynamic=bool(ob.get("dynamic", True)),
                stamp=float(ob.get("stamp", 0.0)),
                track_id=int(ob.get("track_id", -1))))
        tm = data.get("timing", {})
        timing = TimingModel(t_pl=float(tm.get("t_pl", 0.005)),
                             t_ct=float(tm.get("t_ct", 0.01)),
                             t_pm=float(tm.get("t_pm", 0.0)),
                             t_dp=float(tm.get("t_dp", 0.0)))
        if state.position.shape != (3,) or waypoint.shape != (3,):
            raise ValueError("position and waypoint must be 3-vectors")
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"plan input: {e}")
    return state, waypoint, obstacles, timing, SimConfig()


def cmd_plan(args: argparse.Namespace) -> int:
    try:
        text = sys.stdin.read() if args.state_json == "-" \
            else Path(args.state_json).read_text()
        data = json.loads(text)
        state, waypoint, obstacles, timing, cfg = _parse_plan_input(data)
        cfg = apply_overrides(cfg, args.set or [])
    except (OSError, json.JSONDecodeError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    obstacles = [compensate_obstacle(o, timing) for o in obstacles]
    plan = plan_velocity(state, waypoint, obstacles, cfg.planner, timing)
    trace = plan.trace_record(0)
    trace["v_des"] = [round(float(x), 9) for x in plan.v_des]
    print(json.dumps(trace))
    from .velocity_planner import compensate_vehicle
    p_hat = compensate_vehicle(state, timing)
    opt_state = VehicleState(position=p_hat, velocity=state.velocity,
                             acceleration=state.acceleration, stamp=state.stamp)
    prim = solve_motion(opt_state, plan.v_des, waypoint, cfg.optimizer)
    row = _primitive_csv_row({"step": 0, "Jx": prim.j_n[0], "Jy": prim.j_n[1],
                              "Jz": prim.j_n[2], "t_v": prim.t_v,
                              "ax1": prim.a_next[0], "ay1": prim.a_next[1],
                              "az1": prim.a_next[2], "d_trj": prim.d_trj,
                              "objective": prim.objective,
                              "feasible": prim.feasible})
    print(",".join(PRIMITIVE_COLUMNS))
    print(",".join(row[c] for c in PRIMITIVE_COLUMNS))
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    rows = []
    columns: list[str] | None = None
    for path in args.csv:
        try:
            with open(path, newline="") as fh:
                reader = csv.DictReader(fh)
                if columns is None:
                    columns = list(reader.fieldnames or [])
                for row in reader:
                    rows.append(row)
        except OSError as e:
            print(f"error: {e}", file=sys.stderr)
            return 1
    if not rows or not columns:
        print("error: no rows", file=sys.stderr)
        return 1
    print(f"rows: {len(rows)}")
    for col in columns:
        vals = []
        for r in rows:
            v = (r.get(col) or "").strip()
            try:
                vals.append(float(v))
            except ValueError:
                continue
        if vals:
            print(f"{col}: mean {np.mean(vals):.6g} over {len(vals)}")
    if args.out:
        _write_csv(Path(args.out), columns, rows)
        print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pyravoid",
                                description="depth-camera obstacle avoidance "
                                            "simulator and tooling")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="run closed-loop episodes")
    ps.add_argument("--scenario", required=True, help="scenario JSON path")
    ps.add_argument("--seed", type=int, default=None,
                    help="override the scenario seed")
    ps.add_argument("--reps", type=int, default=1, help="episode count")
    ps.add_argument("--output-dir", default="out", help="directory for logs")
    ps.add_argument("--gate", type=float, default=1.0,
                    help="tracking match gate, meters")
    ps.add_argument("--timings", action="store_true",
                    help="include wall-clock columns in metrics.csv")
    ps.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                    help="config override, repeatable")
    ps.set_defaults(func=cmd_simulate)

    pp = sub.add_parser("perceive", help="offline tracking over a recording")
    pp.add_argument("sequence", help="frame directory or .jsonl stream")
    pp.add_argument("--ground-truth", default=None,
                    help="mover ground-truth JSONL for scoring")
    pp.add_argument("--out", default=None, help="track log output path")
    pp.add_argument("--gate", type=float, default=1.0)
    pp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    pp.set_defaults(func=cmd_perceive)

    pl = sub.add_parser("plan", help="single planning step from JSON state")
    pl.add_argument("state_json", help="input path or - for stdin")
    pl.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    pl.set_defaults(func=cmd_plan)

    pm = sub.add_parser("metrics", help="aggregate metrics CSV files")
    pm.add_argument("csv", nargs="+", help="metrics.csv paths")
    pm.add_argument("--out", default=None, help="write combined CSV here")
    pm.set_defaults(func=cmd_metrics)
    return p


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
