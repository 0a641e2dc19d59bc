"""Delimited file formats for detections, calibrations, truth, and reports.

All data files are newline-delimited, comma-separated records with `#`
header/comment lines. Floats are written with repr() so load -> save
round-trips are exact. Detection embeddings either follow the record inline
or live in a sidecar binary of little-endian float32 values, each record
referencing its byte offset (the sidecar is the default: it is far smaller
and keeps the text file readable).

Parse errors always carry file and line number.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .assoc import MatchDecision
from .core import (
    BBox,
    Detection,
    GroundTruthRecord,
    InputError,
    WorldPoint,
    normalize_embedding,
)
from .evaluation import EvalReport
from .geometry import CameraCalibration

DETECTIONS_MAGIC = "# mcmt detections v1"
CALIBRATIONS_MAGIC = "# mcmt calibrations v1"
GROUND_TRUTH_MAGIC = "# mcmt ground_truth v1"
TRACKS_MAGIC = "# mcmt tracks v1"
ASSOC_MAGIC = "# mcmt assoc v1"
EVAL_MAGIC = "# mcmt eval v1"


def _fmt(v: float) -> str:
    return repr(float(v))


def _read_lines(path: Path) -> list[str]:
    try:
        return path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _parse_error(path: Path, lineno: int, message: str) -> InputError:
    return InputError(f"{path}:{lineno}: {message}")


# ---------------------------------------------------------------------------
# Detections
# ---------------------------------------------------------------------------


def write_detections(
    path: str | Path,
    detections: Sequence[Detection],
    sidecar: str | None = "embeddings.f32",
) -> None:
    """Write detection records; embeddings to a sidecar unless sidecar=None.

    Rows: camera_id,frame,x,y,w,h,class_id,confidence then either the byte
    offset into the sidecar or the inline embedding values.
    """
    path = Path(path)
    if detections:
        dim = int(detections[0].embedding.shape[0])
    else:
        dim = 0
    lines = [DETECTIONS_MAGIC, f"# embed_dim = {dim}"]
    if sidecar is not None:
        lines.append(f"# embeddings = {sidecar}")
    blobs: list[bytes] = []
    offset = 0
    for det in detections:
        base = (
            f"{det.camera_id},{det.frame},{_fmt(det.bbox.x)},{_fmt(det.bbox.y)},"
            f"{_fmt(det.bbox.w)},{_fmt(det.bbox.h)},{det.class_id},{_fmt(det.confidence)}"
        )
        if sidecar is not None:
            blob = np.asarray(det.embedding, dtype="<f4").tobytes()
            blobs.append(blob)
            lines.append(f"{base},{offset}")
            offset += len(blob)
        else:
            values = ",".join(_fmt(v) for v in det.embedding)
            lines.append(f"{base},{values}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    if sidecar is not None:
        (path.parent / sidecar).write_bytes(b"".join(blobs))


def load_detections(path: str | Path) -> dict[str, list[Detection]]:
    """Load detections grouped per camera, frame order validated per camera."""
    path = Path(path)
    lines = _read_lines(path)
    dim: int | None = None
    sidecar_data: np.ndarray | None = None
    out: dict[str, list[Detection]] = {}
    last_frame: dict[str, int] = {}
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped.lstrip("#").strip()
            if body.startswith("embed_dim"):
                try:
                    dim = int(body.split("=", 1)[1])
                except (IndexError, ValueError):
                    raise _parse_error(path, lineno, "malformed embed_dim header")
            elif body.startswith("embeddings"):
                name = body.split("=", 1)[1].strip()
                sidecar_path = path.parent / name
                try:
                    sidecar_data = np.fromfile(sidecar_path, dtype="<f4")
                except OSError as exc:
                    raise InputError(f"cannot read sidecar {sidecar_path}: {exc}") from exc
            continue
        parts = stripped.split(",")
        if len(parts) < 9:
            raise _parse_error(path, lineno, f"expected >= 9 fields, got {len(parts)}")
        try:
            camera_id = parts[0]
            frame = int(parts[1])
            x, y, w, h = (float(p) for p in parts[2:6])
            class_id = int(parts[6])
            confidence = float(parts[7])
            if sidecar_data is not None:
                if dim is None:
                    raise _parse_error(path, lineno, "sidecar declared without embed_dim")
                byte_offset = int(parts[8])
                start = byte_offset // 4
                emb = np.array(sidecar_data[start : start + dim])
                if emb.shape[0] != dim:
                    raise _parse_error(path, lineno, "embedding offset beyond sidecar end")
            else:
                emb = np.array([float(p) for p in parts[8:]], dtype=np.float32)
                if dim is not None and emb.shape[0] != dim:
                    raise _parse_error(
                        path, lineno, f"expected {dim} embedding values, got {emb.shape[0]}"
                    )
            det = Detection(
                camera_id=camera_id,
                frame=frame,
                bbox=BBox(x, y, w, h),
                class_id=class_id,
                confidence=confidence,
                embedding=normalize_embedding(emb),
            )
        except InputError as exc:
            if str(exc).startswith(f"{path}:"):
                raise
            raise _parse_error(path, lineno, str(exc)) from exc
        except ValueError as exc:
            raise _parse_error(path, lineno, f"malformed field: {exc}") from exc
        if camera_id in last_frame and frame < last_frame[camera_id]:
            raise _parse_error(
                path, lineno, f"frames not ascending for camera {camera_id}"
            )
        last_frame[camera_id] = frame
        out.setdefault(camera_id, []).append(det)
    return out


# ---------------------------------------------------------------------------
# Calibrations
# ---------------------------------------------------------------------------


def write_calibrations(path: str | Path, cals: dict[str, CameraCalibration]) -> None:
    lines = [CALIBRATIONS_MAGIC]
    for cam_id in sorted(cals):
        cal = cals[cam_id]
        values = ",".join(_fmt(v) for v in cal.projection.ravel())
        lines.append(f"{cam_id},{cal.image_size[0]},{cal.image_size[1]},{values}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_calibrations(path: str | Path) -> dict[str, CameraCalibration]:
    path = Path(path)
    out: dict[str, CameraCalibration] = {}
    for lineno, line in enumerate(_read_lines(path), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split(",")
        if len(parts) != 15:
            raise _parse_error(path, lineno, f"expected 15 fields, got {len(parts)}")
        try:
            cam_id = parts[0]
            width, height = int(parts[1]), int(parts[2])
            p = np.array([float(v) for v in parts[3:]]).reshape(3, 4)
            out[cam_id] = CameraCalibration(cam_id, p, (width, height))
        except InputError as exc:
            raise _parse_error(path, lineno, str(exc)) from exc
        except ValueError as exc:
            raise _parse_error(path, lineno, f"malformed field: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# Ground truth
# ---------------------------------------------------------------------------


def write_ground_truth(path: str | Path, records: Sequence[GroundTruthRecord]) -> None:
    lines = [GROUND_TRUTH_MAGIC, "# frame,object_id,class_id,x,y,z,length,width,height,yaw"]
    for r in sorted(records, key=lambda r: (r.frame, r.object_id)):
        c, d = r.centroid, r.dimensions
        lines.append(
            f"{r.frame},{r.object_id},{r.class_id},{_fmt(c.x)},{_fmt(c.y)},{_fmt(c.z)},"
            f"{_fmt(d[0])},{_fmt(d[1])},{_fmt(d[2])},{_fmt(r.yaw)}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_ground_truth(path: str | Path) -> list[GroundTruthRecord]:
    path = Path(path)
    out: list[GroundTruthRecord] = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split(",")
        if len(parts) != 10:
            raise _parse_error(path, lineno, f"expected 10 fields, got {len(parts)}")
        try:
            out.append(
                GroundTruthRecord(
                    frame=int(parts[0]),
                    object_id=int(parts[1]),
                    class_id=int(parts[2]),
                    centroid=WorldPoint(float(parts[3]), float(parts[4]), float(parts[5])),
                    dimensions=(float(parts[6]), float(parts[7]), float(parts[8])),
                    yaw=float(parts[9]),
                )
            )
        except InputError as exc:
            raise _parse_error(path, lineno, str(exc)) from exc
        except ValueError as exc:
            raise _parse_error(path, lineno, f"malformed field: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# Track output
# ---------------------------------------------------------------------------


def write_tracks(path: str | Path, rows: Iterable) -> None:
    """Rows are pipeline TrackRecord values (or anything shaped like one)."""
    lines = [TRACKS_MAGIC, "# frame,global_id,camera_id,x,y,w,h,wx,wy,wz,class_id"]
    for r in rows:
        b, p = r.bbox, r.world
        lines.append(
            f"{r.frame},{r.global_id},{r.camera_id},{_fmt(b.x)},{_fmt(b.y)},"
            f"{_fmt(b.w)},{_fmt(b.h)},{_fmt(p.x)},{_fmt(p.y)},{_fmt(p.z)},{r.class_id}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_track_predictions(path: str | Path) -> list[tuple[int, int, WorldPoint]]:
    """Load (frame, global_id, world point) for evaluation.

    A global id seen from several cameras repeats per frame; duplicate rows
    are averaged into one centroid.
    """
    path = Path(path)
    acc: dict[tuple[int, int], list[np.ndarray]] = {}
    for lineno, line in enumerate(_read_lines(path), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split(",")
        if len(parts) != 11:
            raise _parse_error(path, lineno, f"expected 11 fields, got {len(parts)}")
        try:
            frame, gid = int(parts[0]), int(parts[1])
            point = np.array([float(parts[7]), float(parts[8]), float(parts[9])])
        except ValueError as exc:
            raise _parse_error(path, lineno, f"malformed field: {exc}") from exc
        acc.setdefault((frame, gid), []).append(point)
    out = []
    for (frame, gid), points in sorted(acc.items()):
        mean = np.mean(points, axis=0)
        out.append((frame, gid, WorldPoint(float(mean[0]), float(mean[1]), float(mean[2]))))
    return out


# ---------------------------------------------------------------------------
# Association report
# ---------------------------------------------------------------------------


def write_assoc_report(path: str | Path, decisions: Sequence[MatchDecision]) -> None:
    lines = [ASSOC_MAGIC, "# camera_id,local_id,global_id,traj_shared,traj_dist,app_sim,accepted,reason"]
    for d in decisions:
        gid = "" if d.global_id is None else str(d.global_id)
        lines.append(
            f"{d.camera_id},{d.local_id},{gid},{d.traj_shared},{_fmt(d.traj_dist)},"
            f"{_fmt(d.app_sim)},{int(d.accepted)},{d.reason}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_assoc_report(path: str | Path) -> list[MatchDecision]:
    path = Path(path)
    out: list[MatchDecision] = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split(",")
        if len(parts) != 8:
            raise _parse_error(path, lineno, f"expected 8 fields, got {len(parts)}")
        try:
            out.append(
                MatchDecision(
                    camera_id=parts[0],
                    local_id=int(parts[1]),
                    global_id=None if parts[2] == "" else int(parts[2]),
                    traj_shared=int(parts[3]),
                    traj_dist=float(parts[4]),
                    app_sim=float(parts[5]),
                    accepted=bool(int(parts[6])),
                    reason=parts[7],
                )
            )
        except ValueError as exc:
            raise _parse_error(path, lineno, f"malformed field: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# Evaluation report
# ---------------------------------------------------------------------------


def write_eval_report(path: str | Path, report: EvalReport) -> None:
    lines = [
        EVAL_MAGIC,
        f"# localization similarity = max(0, 1 - distance / d_max), d_max = {_fmt(report.d_max)}",
        "# headline scores are means over the alpha grid",
        f"HOTA,{_fmt(report.hota)}",
        f"DetA,{_fmt(report.deta)}",
        f"AssA,{_fmt(report.assa)}",
        f"LocA,{_fmt(report.loca)}",
        "# alpha,deta,assa,hota,loca,tp,fp,fn",
    ]
    for row in report.per_alpha:
        lines.append(
            f"{_fmt(row.alpha)},{_fmt(row.deta)},{_fmt(row.assa)},{_fmt(row.hota)},"
            f"{_fmt(row.loca)},{row.tp},{row.fp},{row.fn}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
