"""End-to-end orchestration: detections -> tracklets -> global tracks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .assoc import MatchDecision, check_view_uniqueness, glance_init, progressive_associate
from .config import PipelineConfig
from .core import BBox, Detection, GlobalTrack, InputError, Tracklet, WorldPoint
from .geometry import CameraCalibration, EmptyTrajectoryError, build_trajectory
from .refine import interpolate_gaps, select_representatives, snms
from .sct import track_camera

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrackRecord:
    """One output row: image box in one camera plus the fused world point."""

    frame: int
    global_id: int
    camera_id: str
    bbox: BBox
    world: WorldPoint
    class_id: int


@dataclass(eq=False)
class PipelineResult:
    globals: list[GlobalTrack]
    tracklets: dict[tuple[str, int], Tracklet]
    decisions: list[MatchDecision]
    records: list[TrackRecord]
    dropped: list[tuple[str, int]] = field(default_factory=list)

    def summary(self) -> str:
        cameras = {key[0] for key in self.tracklets}
        lines = [
            f"cameras:        {len(cameras)}",
            f"tracklets:      {len(self.tracklets)}",
            f"global tracks:  {len(self.globals)}",
            f"track records:  {len(self.records)}",
            f"decisions:      {len(self.decisions)}",
        ]
        if self.dropped:
            lines.append(f"dropped (unprojectable): {len(self.dropped)}")
        return "\n".join(lines)


def refine_camera(tracklets: list[Tracklet], cfg: PipelineConfig) -> list[Tracklet]:
    """SNMS -> gap interpolation -> representative selection for one camera."""
    merged = snms(tracklets, cfg.snms_oc, cfg.snms_min_frames, cfg.snms_mode)
    out = []
    for t in merged:
        t = interpolate_gaps(t, cfg.interp_max_gap)
        t.representatives = select_representatives(t, cfg.rep_eps, cfg.rep_min_pts, cfg.rep_k)
        out.append(t)
    return out


def run_tracking(
    detections: dict[str, list[Detection]],
    calibrations: dict[str, CameraCalibration],
    cfg: PipelineConfig,
    strategy: str | None = None,
) -> PipelineResult:
    """Run the full association pipeline over per-camera detection streams."""
    missing = sorted(set(detections) - set(calibrations))
    if missing:
        raise InputError(f"no calibration for camera(s): {', '.join(missing)}")

    tracklets: dict[tuple[str, int], Tracklet] = {}
    for cam_id in sorted(detections):
        raw = track_camera(detections[cam_id], cfg)
        for t in refine_camera(raw, cfg):
            tracklets[t.key] = t

    usable: list[Tracklet] = []
    dropped: list[tuple[str, int]] = []
    for key in sorted(tracklets):
        t = tracklets[key]
        try:
            build_trajectory(t, calibrations[t.camera_id], cfg.anchor_margin)
        except EmptyTrajectoryError:
            dropped.append(key)
            logger.warning("tracklet %s has no projectable frame; excluded", key)
            continue
        usable.append(t)

    globals_, assigned, decisions = glance_init(usable, calibrations, cfg)
    remaining = [t for t in usable if t.key not in assigned]
    globals_, more = progressive_associate(globals_, remaining, calibrations, cfg, strategy)
    decisions.extend(more)
    check_view_uniqueness(globals_, tracklets)

    records: list[TrackRecord] = []
    for g in sorted(globals_, key=lambda g: g.global_id):
        for key in sorted(g.members):
            t = tracklets[key]
            for frame in t.frames:
                point = g.trajectory.get(frame)
                if point is None:
                    continue  # no member was projectable here
                if cfg.world_z_offset:
                    point = WorldPoint(point.x, point.y, point.z + cfg.world_z_offset)
                records.append(
                    TrackRecord(
                        frame=frame,
                        global_id=g.global_id,
                        camera_id=t.camera_id,
                        bbox=t.obs[frame].bbox,
                        world=point,
                        class_id=g.class_id,
                    )
                )
    records.sort(key=lambda r: (r.frame, r.global_id, r.camera_id))
    return PipelineResult(
        globals=globals_,
        tracklets=tracklets,
        decisions=decisions,
        records=records,
        dropped=dropped,
    )
