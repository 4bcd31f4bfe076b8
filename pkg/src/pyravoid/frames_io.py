"""Recorded cloud sequence I/O.

Two equivalent encodings of camera-frame depth recordings:

* one text file per frame: a header line ``timestamp tx ty tz qw qx qy qz``
  followed by one ``x y z r g b`` line per point; a directory of such files,
  sorted by name, is a sequence;
* a single JSON Lines stream, one frame per line:
  ``{"timestamp": ..., "pose": [tx, ty, tz, qw, qx, qy, qz],
  "points": [[x, y, z, r, g, b], ...]}``.

Poses carry no rates (velocities default to zero). Malformed content raises
:class:`FrameFormatError` anchored to the frame and line.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .cloud_pipeline import CAMERA_FRAME, PointCloudFrame
from .geometry import Pose


class FrameFormatError(ValueError):
    def __init__(self, frame_index: int, detail: str, line: int | None = None):
        self.frame_index = frame_index
        self.line = line
        where = f"frame {frame_index}" + (f", line {line}" if line else "")
        super().__init__(f"{where}: {detail}")


def _pose_from_values(vals: np.ndarray) -> Pose:
    return Pose(translation=vals[:3], rotation=vals[3:7])


def read_frame_file(path: str | Path, frame_index: int = 0) -> PointCloudFrame:
    lines = Path(path).read_text().splitlines()
    body = [(i + 1, ln.strip()) for i, ln in enumerate(lines)
            if ln.strip() and not ln.lstrip().startswith("#")]
    if not body:
        raise FrameFormatError(frame_index, "empty frame file")
    line_no, header = body[0]
    parts = header.split()
    if len(parts) != 8:
        raise FrameFormatError(frame_index,
                               f"header needs 8 fields, got {len(parts)}", line_no)
    try:
        head = np.array([float(p) for p in parts])
    except ValueError:
        raise FrameFormatError(frame_index, "non-numeric header field", line_no)
    pts, cols = [], []
    for line_no, ln in body[1:]:
        parts = ln.split()
        if len(parts) != 6:
            raise FrameFormatError(frame_index,
                                   f"point needs 6 fields, got {len(parts)}",
                                   line_no)
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise FrameFormatError(frame_index, "non-numeric point field", line_no)
        if not all(np.isfinite(vals[:3])):
            raise FrameFormatError(frame_index, "non-finite point position",
                                   line_no)
        pts.append(vals[:3])
        cols.append(vals[3:])
    return PointCloudFrame(
        timestamp=float(head[0]),
        positions=np.array(pts).reshape(-1, 3),
        colors=np.array(cols).reshape(-1, 3),
        camera_pose=_pose_from_values(head[1:]),
        frame=CAMERA_FRAME,
    )


def write_frame_file(frame: PointCloudFrame, path: str | Path) -> None:
    pose = frame.camera_pose
    with open(path, "w") as fh:
        head = [frame.timestamp, *pose.translation, *pose.rotation]
        fh.write(" ".join(f"{v:.9g}" for v in head) + "\n")
        for p, c in zip(frame.positions, frame.colors):
            fh.write(" ".join(f"{v:.9g}" for v in (*p, *c)) + "\n")


def read_sequence_jsonl(path: str | Path) -> list[PointCloudFrame]:
    frames = []
    with open(path) as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            idx = len(frames)
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise FrameFormatError(idx, f"invalid JSON: {e.msg}", i + 1)
            try:
                pose_vals = np.asarray(rec["pose"], dtype=float)
                if pose_vals.shape != (7,):
                    raise FrameFormatError(idx, "pose needs 7 values", i + 1)
                pts = np.asarray(rec["points"], dtype=float).reshape(-1, 6)
                frames.append(PointCloudFrame(
                    timestamp=float(rec["timestamp"]),
                    positions=pts[:, :3], colors=pts[:, 3:],
                    camera_pose=_pose_from_values(pose_vals),
                    frame=CAMERA_FRAME,
                ))
            except FrameFormatError:
                raise
            except (KeyError, TypeError, ValueError) as e:
                raise FrameFormatError(idx, f"malformed frame record: {e}", i + 1)
    return frames


def write_sequence_jsonl(frames: list[PointCloudFrame], path: str | Path) -> None:
    with open(path, "w") as fh:
        for f in frames:
            pose = f.camera_pose
            rec = {
                "timestamp": f.timestamp,
                "pose": [*pose.translation.tolist(), *pose.rotation.tolist()],
                "points": np.hstack([f.positions, f.colors]).tolist(),
            }
            fh.write(json.dumps(rec) + "\n")


def read_sequence(path: str | Path) -> list[PointCloudFrame]:
    """Read a sequence from a directory of frame files or a .jsonl stream."""
    p = Path(path)
    if p.is_dir():
        files = sorted(f for f in p.iterdir()
                       if f.is_file() and not f.name.startswith("."))
        if not files:
            raise FileNotFoundError(f"{path}: no frame files")
        return [read_frame_file(f, i) for i, f in enumerate(files)]
    if p.suffix == ".jsonl":
        return read_sequence_jsonl(p)
    return [read_frame_file(p, 0)]
