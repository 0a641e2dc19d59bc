"""Minimal single-camera multi-object tracker.

Constant-velocity Kalman filtering over (cx, cy, w, h) box states, combined
IoU + appearance matching solved as a min-cost bipartite assignment, and the
usual tentative -> confirmed -> lost lifecycle. Cameras are static, so no
motion compensation is attempted.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .config import PipelineConfig
from .core import (
    BBox,
    Detection,
    InternalError,
    Observation,
    Tracklet,
    cosine_similarity,
    iou,
    normalize_embedding,
)

TENTATIVE = "tentative"
CONFIRMED = "confirmed"
LOST = "lost"

# Cost assigned to gated pairs; large enough that the solver only uses them
# when no allowed pairing exists, and such matches are discarded afterwards.
GATED_COST = 1e6

MIN_BOX_SIZE = 1.0  # pixels; keeps w/h positive through Kalman updates


@dataclass(frozen=True)
class KalmanParams:
    """Noise configuration of the constant-velocity filter (pixel units)."""

    q_pos: float = 1.0      # process noise variance, position/size
    q_vel: float = 0.1      # process noise variance, velocities
    r_meas: float = 4.0     # measurement noise variance
    p0_pos: float = 10.0    # initial position/size variance
    p0_vel: float = 100.0   # initial velocity variance


DEFAULT_KALMAN = KalmanParams()

_F = np.eye(8)
for _i in range(4):
    _F[_i, _i + 4] = 1.0
_H = np.zeros((4, 8))
_H[:4, :4] = np.eye(4)


@dataclass(eq=False)
class TrackState:
    """Kalman state of one in-progress track.

    mean = (cx, cy, w, h, vcx, vcy, vw, vh); covariance 8x8 PSD.
    """

    local_id: int
    class_id: int
    mean: np.ndarray
    covariance: np.ndarray
    last_embedding: np.ndarray
    age: int = 0
    hits: int = 1
    misses: int = 0
    status: str = TENTATIVE


def new_track_state(
    local_id: int, det: Detection, params: KalmanParams = DEFAULT_KALMAN
) -> TrackState:
    mean = np.zeros(8)
    mean[0] = det.bbox.cx
    mean[1] = det.bbox.cy
    mean[2] = det.bbox.w
    mean[3] = det.bbox.h
    cov = np.eye(8)
    cov[:4, :4] *= params.p0_pos
    cov[4:, 4:] *= params.p0_vel
    return TrackState(
        local_id=local_id,
        class_id=det.class_id,
        mean=mean,
        covariance=cov,
        last_embedding=normalize_embedding(det.embedding),
    )


def state_bbox(s: TrackState) -> BBox:
    cx, cy, w, h = s.mean[:4]
    w = max(w, MIN_BOX_SIZE)
    h = max(h, MIN_BOX_SIZE)
    return BBox(cx - w / 2.0, cy - h / 2.0, w, h)


def predict(s: TrackState, params: KalmanParams = DEFAULT_KALMAN) -> TrackState:
    """One constant-velocity step: propagate mean and covariance, age += 1."""
    q = np.eye(8)
    q[:4, :4] *= params.q_pos
    q[4:, 4:] *= params.q_vel
    mean = _F @ s.mean
    cov = _F @ s.covariance @ _F.T + q
    return replace(s, mean=mean, covariance=cov, age=s.age + 1)


def update(
    s: TrackState,
    det: Detection,
    params: KalmanParams = DEFAULT_KALMAN,
    embed_beta: float = 0.1,
) -> TrackState:
    """Standard Kalman correction plus exponential smoothing of appearance."""
    z = np.array([det.bbox.cx, det.bbox.cy, det.bbox.w, det.bbox.h])
    innovation = z - _H @ s.mean
    innov_cov = _H @ s.covariance @ _H.T + params.r_meas * np.eye(4)
    gain = s.covariance @ _H.T @ np.linalg.inv(innov_cov)
    mean = s.mean + gain @ innovation
    cov = (np.eye(8) - gain @ _H) @ s.covariance
    cov = (cov + cov.T) / 2.0  # symmetrize to stay PSD under rounding
    if np.any(np.diag(cov) < -1e-9):
        raise InternalError(f"covariance of track {s.local_id} lost positive-definiteness")
    mean[2] = max(mean[2], MIN_BOX_SIZE)
    mean[3] = max(mean[3], MIN_BOX_SIZE)
    smoothed = (1.0 - embed_beta) * s.last_embedding + embed_beta * det.embedding
    smoothed = smoothed / np.linalg.norm(smoothed)
    return replace(
        s,
        mean=mean,
        covariance=cov,
        last_embedding=smoothed,
        hits=s.hits + 1,
        misses=0,
    )


@dataclass(frozen=True)
class Assignment:
    matches: list[tuple[int, int]]          # (track index, detection index)
    unmatched_tracks: list[int]
    unmatched_detections: list[int]


def solve_min_cost(cost: np.ndarray, forbidden: np.ndarray | None = None) -> list[tuple[int, int]]:
    """Min-cost assignment with forbidden pairs excluded from the result.

    Semantics: among matchings of maximum allowed cardinality, minimize the
    summed cost. Realized by pricing forbidden pairs at GATED_COST and
    dropping them from the solver output.
    """
    if cost.size == 0:
        return []
    work = np.array(cost, dtype=float)
    if forbidden is not None:
        work[forbidden] = GATED_COST
    rows, cols = linear_sum_assignment(work)
    return [(int(r), int(c)) for r, c in zip(rows, cols) if work[r, c] < GATED_COST / 2]


def associate_frame(
    tracks: Sequence[TrackState],
    dets: Sequence[Detection],
    lambda_app: float,
    iou_gate: float,
    app_gate: float,
) -> Assignment:
    """Match predicted tracks to one frame's detections.

    Cost is 1 - [(1 - lambda_app) * iou + lambda_app * cosine]; a pair is
    forbidden when both the IoU and the appearance gate fail, or when the
    classes differ.
    """
    if not tracks or not dets:
        return Assignment([], list(range(len(tracks))), list(range(len(dets))))
    n, m = len(tracks), len(dets)
    cost = np.zeros((n, m))
    forbidden = np.zeros((n, m), dtype=bool)
    for i, trk in enumerate(tracks):
        box = state_bbox(trk)
        for j, det in enumerate(dets):
            if trk.class_id != det.class_id:
                forbidden[i, j] = True
                continue
            overlap = iou(box, det.bbox)
            sim = cosine_similarity(trk.last_embedding, det.embedding)
            if overlap < iou_gate and sim < app_gate:
                forbidden[i, j] = True
                continue
            cost[i, j] = 1.0 - ((1.0 - lambda_app) * overlap + lambda_app * sim)
    matches = solve_min_cost(cost, forbidden)
    matched_t = {i for i, _ in matches}
    matched_d = {j for _, j in matches}
    return Assignment(
        matches=matches,
        unmatched_tracks=[i for i in range(n) if i not in matched_t],
        unmatched_detections=[j for j in range(m) if j not in matched_d],
    )


@dataclass(eq=False)
class _ActiveTrack:
    state: TrackState
    obs: dict[int, Observation] = field(default_factory=dict)


def track_camera(
    detections: Iterable[Detection],
    cfg: PipelineConfig,
    params: KalmanParams = DEFAULT_KALMAN,
) -> list[Tracklet]:
    """Run the tracker over one camera's detection stream.

    Detections are grouped by frame and processed in ascending frame order
    (order within a frame is preserved). Tracks are emitted once confirmed;
    a tentative track that misses a frame is discarded, a confirmed track
    survives up to cfg.max_misses consecutive misses.
    """
    by_frame: dict[int, list[Detection]] = {}
    camera_id = None
    for det in detections:
        if camera_id is None:
            camera_id = det.camera_id
        elif det.camera_id != camera_id:
            raise InternalError(
                f"track_camera fed detections from {camera_id} and {det.camera_id}"
            )
        if det.confidence >= cfg.det_min_conf:
            by_frame.setdefault(det.frame, []).append(det)

    active: list[_ActiveTrack] = []
    finished: list[_ActiveTrack] = []
    next_id = 1

    def retire(track: _ActiveTrack) -> None:
        if track.state.status == CONFIRMED:
            finished.append(track)
        track.state = replace(track.state, status=LOST)

    frame_range = range(min(by_frame), max(by_frame) + 1) if by_frame else range(0)
    for frame in frame_range:
        dets = by_frame.get(frame, [])  # empty frames still age and miss tracks
        for track in active:
            track.state = predict(track.state, params)
        assignment = associate_frame(
            [t.state for t in active], dets, cfg.lambda_app, cfg.iou_gate, cfg.app_gate
        )
        survivors: list[_ActiveTrack] = []
        for ti, di in assignment.matches:
            track, det = active[ti], dets[di]
            track.state = update(track.state, det, params, cfg.embed_beta)
            if track.state.status == TENTATIVE and track.state.hits >= cfg.n_init:
                track.state = replace(track.state, status=CONFIRMED)
            track.obs[frame] = Observation(det.bbox, det.embedding, det.confidence)
            survivors.append(track)
        for ti in assignment.unmatched_tracks:
            track = active[ti]
            if track.state.status == TENTATIVE:
                continue  # unconfirmed tracks do not survive a miss
            track.state = replace(track.state, misses=track.state.misses + 1)
            if track.state.misses > cfg.max_misses:
                retire(track)
            else:
                survivors.append(track)
        for di in assignment.unmatched_detections:
            det = dets[di]
            track = _ActiveTrack(state=new_track_state(next_id, det, params))
            next_id += 1
            if cfg.n_init <= 1:
                track.state = replace(track.state, status=CONFIRMED)
            track.obs[frame] = Observation(det.bbox, det.embedding, det.confidence)
            survivors.append(track)
        # keep original creation order for determinism
        survivors.sort(key=lambda t: t.state.local_id)
        active = survivors

    for track in active:
        retire(track)

    finished.sort(key=lambda t: t.state.local_id)
    return [
        Tracklet(
            camera_id=camera_id if camera_id is not None else "",
            local_id=t.state.local_id,
            class_id=t.state.class_id,
            obs=dict(sorted(t.obs.items())),
        )
        for t in finished
    ]
