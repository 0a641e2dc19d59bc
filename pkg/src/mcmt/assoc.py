"""Cross-camera identity assignment.

Two phases. The initialization phase looks only at an opening window of
frames, in which every object is assumed visible somewhere: tracklets from
different cameras whose world trajectories run close together AND whose
representative features agree are linked, and the connected components of
that acceptance graph become the initial global identities. The progressive
phase then repeatedly attaches the remaining tracklets to temporally
overlapping globals under the same two criteria, with the hard constraint
that a global identity appears at most once per camera per frame.

Tracklets the progressive loop cannot place are handed to one of two
leftover strategies:
  * FM  -- force each leftover onto the most compatible global, thresholds
           ignored (per-view uniqueness still holds);
  * GIDE -- promote the longest leftover to a brand-new global identity and
           resume the progressive loop, repeating until nothing remains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .core import GlobalTrack, InputError, InternalError, Tracklet, WorldPoint
from .geometry import CameraCalibration, WorldTrajectory, build_trajectory, trajectory_distance

REASON_BOTH_PASS = "both-pass"
REASON_TRAJ_FAIL = "traj-fail"
REASON_APP_FAIL = "app-fail"
REASON_NO_OVERLAP = "no-overlap"
REASON_VIEW_CONFLICT = "view-conflict"
REASON_FORCED = "forced"
REASON_EXPANDED = "expanded"

_ACCEPT_REASONS = (REASON_BOTH_PASS, REASON_FORCED, REASON_EXPANDED)


@dataclass(frozen=True)
class MatchDecision:
    """Audit record for one association decision on one local tracklet."""

    camera_id: str
    local_id: int
    global_id: int | None
    traj_shared: int
    traj_dist: float
    app_sim: float
    accepted: bool
    reason: str

    def __post_init__(self) -> None:
        if self.accepted and self.reason not in _ACCEPT_REASONS:
            raise InternalError(
                f"accepted decision carries non-accepting reason '{self.reason}'"
            )


def appearance_similarity(a: list[np.ndarray], b: list[np.ndarray]) -> float:
    """Mean of the top-m pairwise cosine similarities, m = min(5, |a|*|b|)."""
    if not a or not b:
        raise InputError("appearance similarity requires non-empty representative sets")
    sims = np.sort((np.stack(a) @ np.stack(b).T).ravel())[::-1]
    m = min(5, sims.size)
    return float(np.mean(sims[:m]))


# ---------------------------------------------------------------------------
# Trajectory projection cache
# ---------------------------------------------------------------------------


class _TrajectoryCache:
    def __init__(self, calibrations: dict[str, CameraCalibration], margin: float):
        self._cals = calibrations
        self._margin = margin
        self._cache: dict[tuple[str, int], WorldTrajectory] = {}

    def get(self, t: Tracklet) -> WorldTrajectory:
        if t.key not in self._cache:
            if t.camera_id not in self._cals:
                raise InputError(f"no calibration for camera {t.camera_id}")
            self._cache[t.key] = build_trajectory(
                t, self._cals[t.camera_id], self._margin
            )
        return self._cache[t.key]


def _fuse(points: list[WorldPoint], mode: str) -> WorldPoint:
    if len(points) == 1:
        return points[0]
    arr = np.array([[p.x, p.y, p.z] for p in points])
    agg = np.median(arr, axis=0) if mode == "median" else arr.mean(axis=0)
    return WorldPoint(float(agg[0]), float(agg[1]), float(agg[2]))


def _append_features(g: GlobalTrack, reps: list[np.ndarray], cap: int) -> None:
    g.feature_pool.extend(reps)
    if len(g.feature_pool) > cap:
        del g.feature_pool[: len(g.feature_pool) - cap]  # evict oldest


def merge_into_global(
    g: GlobalTrack,
    t: Tracklet,
    cal: CameraCalibration,
    cfg: PipelineConfig,
) -> GlobalTrack:
    """Attach a local tracklet to a global identity (in place).

    Frames covered only by the tracklet adopt its world points; frames
    covered by existing members are re-fused over all contributions. The
    tracklet's representatives join the feature pool, oldest entries being
    evicted beyond the cap.

    Raises:
        InternalError: the merge would put the global twice in one view at
            some frame; callers must check beforehand.
    """
    if view_conflict(g, t):
        raise InternalError(
            f"merging {t.key} into global {g.global_id} violates per-view uniqueness"
        )
    traj = build_trajectory(t, cal, cfg.anchor_margin)
    g.members.append(t.key)
    for frame, point in traj.points.items():
        g.frame_points.setdefault(frame, []).append(point)
        g.trajectory[frame] = _fuse(g.frame_points[frame], cfg.fusion)
    g.coverage.setdefault(t.camera_id, set()).update(t.obs.keys())
    _append_features(g, t.representatives, cfg.feature_pool_cap)
    return g


def view_conflict(g: GlobalTrack, t: Tracklet) -> bool:
    """True if some member of g from t's camera already covers a frame of t."""
    covered = g.coverage.get(t.camera_id)
    return bool(covered and not covered.isdisjoint(t.obs.keys()))


def _new_global(
    gid: int, t: Tracklet, cache: _TrajectoryCache, cfg: PipelineConfig
) -> GlobalTrack:
    g = GlobalTrack(global_id=gid, class_id=t.class_id)
    traj = cache.get(t)
    g.members.append(t.key)
    for frame, point in traj.points.items():
        g.frame_points[frame] = [point]
        g.trajectory[frame] = point
    g.coverage[t.camera_id] = set(t.obs.keys())
    _append_features(g, t.representatives, cfg.feature_pool_cap)
    return g


# ---------------------------------------------------------------------------
# Glance initialization
# ---------------------------------------------------------------------------


def glance_init(
    tracklets: list[Tracklet],
    calibrations: dict[str, CameraCalibration],
    cfg: PipelineConfig,
) -> tuple[list[GlobalTrack], set[tuple[str, int]], list[MatchDecision]]:
    """Fix the initial global identity set from the opening frames.

    Tracklets with at least one observation before cfg.glance_window are
    scored pairwise on their window-restricted world trajectories and their
    representative features; passing pairs become edges, and each connected
    component is promoted to one global identity (fused over the members'
    FULL trajectories, which extend past the window).
    """
    cache = _TrajectoryCache(calibrations, cfg.anchor_margin)
    window = [t for t in tracklets if t.start < cfg.glance_window]
    window.sort(key=lambda t: t.key)
    if not window:
        return [], set(), []

    windowed: dict[tuple[str, int], WorldTrajectory] = {}
    for t in window:
        pts = {f: p for f, p in cache.get(t).points.items() if f < cfg.glance_window}
        windowed[t.key] = WorldTrajectory(pts)

    # acceptance graph over window tracklets
    n = len(window)
    adjacency: dict[int, list[int]] = {i: [] for i in range(n)}
    best_edge: dict[int, tuple[int, float, float]] = {}  # i -> (shared, dist, app)
    for i in range(n):
        for j in range(i + 1, n):
            a, b = window[i], window[j]
            if a.camera_id == b.camera_id or a.class_id != b.class_id:
                continue
            shared, dist = trajectory_distance(windowed[a.key], windowed[b.key])
            if shared < cfg.min_shared or dist > cfg.tau_traj:
                continue
            app = appearance_similarity(a.representatives, b.representatives)
            if app < cfg.tau_app:
                continue
            adjacency[i].append(j)
            adjacency[j].append(i)
            for node in (i, j):
                prev = best_edge.get(node)
                if prev is None or app > prev[2]:
                    best_edge[node] = (shared, dist, app)

    # connected components, in deterministic (camera, local id) order
    component_of = [-1] * n
    components: list[list[int]] = []
    for i in range(n):
        if component_of[i] >= 0:
            continue
        comp = [i]
        component_of[i] = len(components)
        stack = [i]
        while stack:
            u = stack.pop()
            for v in adjacency[u]:
                if component_of[v] < 0:
                    component_of[v] = len(components)
                    comp.append(v)
                    stack.append(v)
        components.append(sorted(comp))

    globals_: list[GlobalTrack] = []
    assigned: set[tuple[str, int]] = set()
    decisions: list[MatchDecision] = []
    for gid, comp in enumerate(components, start=1):
        g = _new_global(gid, window[comp[0]], cache, cfg)
        for idx in comp[1:]:
            merge_into_global(g, window[idx], calibrations[window[idx].camera_id], cfg)
        globals_.append(g)
        for idx in comp:
            t = window[idx]
            assigned.add(t.key)
            shared, dist, app = best_edge.get(idx, (0, math.inf, 0.0))
            linked = len(comp) > 1
            decisions.append(
                MatchDecision(
                    camera_id=t.camera_id,
                    local_id=t.local_id,
                    global_id=gid,
                    traj_shared=shared,
                    traj_dist=dist,
                    app_sim=app,
                    accepted=True,
                    reason=REASON_BOTH_PASS if linked else REASON_EXPANDED,
                )
            )
    return globals_, assigned, decisions


# ---------------------------------------------------------------------------
# Progressive association
# ---------------------------------------------------------------------------


def _score_against_global(
    traj: WorldTrajectory, t: Tracklet, g: GlobalTrack
) -> tuple[int, float, float]:
    app = appearance_similarity(t.representatives, g.feature_pool)
    shared_frames = sorted(traj.points.keys() & g.trajectory.keys())
    if not shared_frames:
        return 0, math.inf, app
    dist = sum(traj.points[f].distance(g.trajectory[f]) for f in shared_frames) / len(
        shared_frames
    )
    return len(shared_frames), dist, app


def _candidate_order(tracklets: list[Tracklet]) -> list[Tracklet]:
    return sorted(tracklets, key=lambda t: (-len(t), t.key))


def _progressive_rounds(
    globals_: list[GlobalTrack],
    unassigned: list[Tracklet],
    cache: _TrajectoryCache,
    calibrations: dict[str, CameraCalibration],
    cfg: PipelineConfig,
    decisions: list[MatchDecision],
) -> list[Tracklet]:
    """Attach tracklets to globals until a full pass adds nothing."""
    remaining = list(unassigned)
    while True:
        progressed = False
        next_remaining: list[Tracklet] = []
        for t in _candidate_order(remaining):
            traj = cache.get(t)
            scored: list[tuple[int, float, float, GlobalTrack]] = []
            for g in globals_:
                if g.class_id != t.class_id:
                    continue
                shared, dist, app = _score_against_global(traj, t, g)
                if shared >= cfg.min_shared:
                    scored.append((shared, dist, app, g))
            if not scored:
                next_remaining.append(t)
                continue
            passing = [
                s for s in scored if s[1] <= cfg.tau_traj and s[2] >= cfg.tau_app
            ]
            passing.sort(key=lambda s: (s[1], -s[2], s[3].global_id))
            chosen = next(
                (s for s in passing if not view_conflict(s[3], t)), None
            )
            if chosen is not None:
                shared, dist, app, g = chosen
                merge_into_global(g, t, calibrations[t.camera_id], cfg)
                decisions.append(
                    MatchDecision(
                        t.camera_id, t.local_id, g.global_id,
                        shared, dist, app, True, REASON_BOTH_PASS,
                    )
                )
                progressed = True
            else:
                next_remaining.append(t)
        remaining = next_remaining
        if not progressed:
            return remaining


def _rejection_decision(
    t: Tracklet, traj: WorldTrajectory, globals_: list[GlobalTrack], cfg: PipelineConfig
) -> MatchDecision:
    """Explain why the progressive loop left this tracklet unassigned."""
    scored = []
    for g in globals_:
        if g.class_id != t.class_id:
            continue
        shared, dist, app = _score_against_global(traj, t, g)
        if shared >= cfg.min_shared:
            scored.append((shared, dist, app, g))
    if not scored:
        return MatchDecision(
            t.camera_id, t.local_id, None, 0, math.inf, 0.0, False, REASON_NO_OVERLAP
        )
    passing = [s for s in scored if s[1] <= cfg.tau_traj and s[2] >= cfg.tau_app]
    if passing:
        shared, dist, app, g = min(passing, key=lambda s: (s[1], -s[2], s[3].global_id))
        return MatchDecision(
            t.camera_id, t.local_id, g.global_id, shared, dist, app, False,
            REASON_VIEW_CONFLICT,
        )
    shared, dist, app, g = min(scored, key=lambda s: (s[1], -s[2], s[3].global_id))
    reason = REASON_TRAJ_FAIL if dist > cfg.tau_traj else REASON_APP_FAIL
    return MatchDecision(
        t.camera_id, t.local_id, g.global_id, shared, dist, app, False, reason
    )


def _next_global_id(globals_: list[GlobalTrack]) -> int:
    return max((g.global_id for g in globals_), default=0) + 1


def _temporal_gap(frames_a: list[int], frames_b: list[int]) -> int:
    if not frames_a or not frames_b:
        return 10**9
    if frames_a[0] <= frames_b[-1] and frames_b[0] <= frames_a[-1]:
        return 0
    return max(frames_b[0] - frames_a[-1], frames_a[0] - frames_b[-1])


def _nearest_in_time_distance(traj: WorldTrajectory, g: GlobalTrack) -> float:
    """Distance between the two points closest in time across the pair."""
    fa = traj.frames
    fb = sorted(g.trajectory)
    diffs = np.abs(np.subtract.outer(fa, fb))
    i, j = np.unravel_index(int(np.argmin(diffs)), diffs.shape)
    return traj.points[fa[i]].distance(g.trajectory[fb[j]])


def fm_resolve(
    globals_: list[GlobalTrack],
    leftovers: list[Tracklet],
    calibrations: dict[str, CameraCalibration],
    cfg: PipelineConfig,
) -> list[MatchDecision]:
    """Forced matching: assign each leftover to its most compatible global.

    Compatibility is ranked lexicographically by (temporal gap to the
    global's coverage, spatial distance, -appearance similarity); thresholds
    are ignored but per-view uniqueness and class compatibility still hold.
    A leftover that conflicts with every global gets a fresh identity.
    """
    cache = _TrajectoryCache(calibrations, cfg.anchor_margin)
    decisions: list[MatchDecision] = []
    for t in _candidate_order(leftovers):
        traj = cache.get(t)
        candidates = []
        for g in globals_:
            if g.class_id != t.class_id or view_conflict(g, t):
                continue
            shared, dist, app = _score_against_global(traj, t, g)
            gap = _temporal_gap(traj.frames, sorted(g.trajectory))
            spatial = dist if shared >= 1 else _nearest_in_time_distance(traj, g)
            candidates.append((gap, spatial, -app, g.global_id, shared, dist, app, g))
        if candidates:
            gap, spatial, _, _, shared, dist, app, g = min(candidates)
            merge_into_global(g, t, calibrations[t.camera_id], cfg)
            decisions.append(
                MatchDecision(
                    t.camera_id, t.local_id, g.global_id,
                    shared, dist, app, True, REASON_FORCED,
                )
            )
        else:
            gid = _next_global_id(globals_)
            globals_.append(_new_global(gid, t, cache, cfg))
            decisions.append(
                MatchDecision(
                    t.camera_id, t.local_id, gid, 0, math.inf, 0.0, True,
                    REASON_EXPANDED,
                )
            )
    return decisions


def gide_expand(
    globals_: list[GlobalTrack],
    leftovers: list[Tracklet],
    calibrations: dict[str, CameraCalibration],
    cfg: PipelineConfig,
) -> tuple[list[GlobalTrack], list[MatchDecision]]:
    """Global-identity expansion: promote the longest leftover, re-associate.

    Each promotion adds exactly one global identity; the progressive loop
    then runs again so the other views of the newly promoted object can
    attach to it. Repeats until no leftover remains.
    """
    cache = _TrajectoryCache(calibrations, cfg.anchor_margin)
    decisions: list[MatchDecision] = []
    remaining = list(leftovers)
    while remaining:
        remaining = _candidate_order(remaining)
        promoted = remaining.pop(0)
        gid = _next_global_id(globals_)
        globals_.append(_new_global(gid, promoted, cache, cfg))
        decisions.append(
            MatchDecision(
                promoted.camera_id, promoted.local_id, gid, 0, math.inf, 0.0,
                True, REASON_EXPANDED,
            )
        )
        remaining = _progressive_rounds(
            globals_, remaining, cache, calibrations, cfg, decisions
        )
    return globals_, decisions


def progressive_associate(
    globals_: list[GlobalTrack],
    unassigned: list[Tracklet],
    calibrations: dict[str, CameraCalibration],
    cfg: PipelineConfig,
    strategy: str | None = None,
) -> tuple[list[GlobalTrack], list[MatchDecision]]:
    """Attach all unassigned tracklets to globals, then resolve leftovers.

    Returns the final global list and the audit trail of every decision,
    including a rejection record for each tracklet the threshold-gated loop
    could not place (before the leftover strategy handles it).
    """
    strategy = strategy or cfg.strategy
    if strategy not in ("FM", "GIDE"):
        raise InputError(f"unknown leftover strategy '{strategy}'")
    cache = _TrajectoryCache(calibrations, cfg.anchor_margin)
    decisions: list[MatchDecision] = []
    leftovers = _progressive_rounds(
        globals_, unassigned, cache, calibrations, cfg, decisions
    )
    for t in _candidate_order(leftovers):
        decisions.append(_rejection_decision(t, cache.get(t), globals_, cfg))
    if leftovers:
        if strategy == "FM":
            decisions.extend(fm_resolve(globals_, leftovers, calibrations, cfg))
        else:
            globals_, gide_decisions = gide_expand(globals_, leftovers, calibrations, cfg)
            decisions.extend(gide_decisions)
    return globals_, decisions


def check_view_uniqueness(
    globals_: list[GlobalTrack], tracklets: dict[tuple[str, int], Tracklet]
) -> None:
    """Assert that no global appears twice in one camera at one frame."""
    for g in globals_:
        seen: dict[str, set[int]] = {}
        for key in g.members:
            t = tracklets[key]
            frames = set(t.obs.keys())
            prior = seen.setdefault(t.camera_id, set())
            clash = prior & frames
            if clash:
                raise InternalError(
                    f"global {g.global_id} appears twice in camera {t.camera_id} "
                    f"at frames {sorted(clash)[:5]}"
                )
            prior.update(frames)
