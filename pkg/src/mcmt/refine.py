"""Tracklet post-processing within one camera.

Three independent passes:
  * sequential NMS: duplicate tracklets (same object split by occlusion or an
    identity switch) are detected via temporal overlap + per-frame overlap
    coefficient and either merged or suppressed;
  * representative features: density clustering over the appearance
    embeddings isolates the dominant appearance group, from which a small,
    temporally spread sample is kept;
  * gap interpolation: short internal detection gaps are filled linearly,
    longer ones are left open to avoid fabricating out-of-view boxes.
"""

from __future__ import annotations

import numpy as np

from .core import InputError, Observation, Tracklet, overlap_coefficient


def tracklet_overlap(ta: Tracklet, tb: Tracklet) -> tuple[int, float]:
    """(shared frame count, mean overlap coefficient over shared frames).

    Returns (0, 0.0) for temporally disjoint tracklets.
    """
    if ta.camera_id != tb.camera_id:
        raise InputError(
            f"tracklet overlap across cameras {ta.camera_id}/{tb.camera_id} is undefined"
        )
    shared = ta.obs.keys() & tb.obs.keys()
    if not shared:
        return 0, 0.0
    total = sum(overlap_coefficient(ta.obs[f].bbox, tb.obs[f].bbox) for f in shared)
    return len(shared), total / len(shared)


def _merge_pair(longer: Tracklet, shorter: Tracklet) -> Tracklet:
    # Union of observations; on frame conflicts the higher-confidence box
    # wins, ties going to the longer tracklet.
    obs: dict[int, Observation] = {}
    interpolated: set[int] = set()
    for frame in sorted(longer.obs.keys() | shorter.obs.keys()):
        in_a, in_b = frame in longer.obs, frame in shorter.obs
        if in_a and in_b and shorter.obs[frame].confidence > longer.obs[frame].confidence:
            source, chosen = shorter, shorter.obs[frame]
        elif in_a:
            source, chosen = longer, longer.obs[frame]
        else:
            source, chosen = shorter, shorter.obs[frame]
        obs[frame] = chosen
        if frame in source.interpolated_frames:
            interpolated.add(frame)
    return Tracklet(
        camera_id=longer.camera_id,
        local_id=longer.local_id,
        class_id=longer.class_id,
        obs=obs,
        interpolated_frames=interpolated,
    )


def snms(
    tracklets: list[Tracklet],
    oc_threshold: float,
    min_shared_frames: int,
    mode: str = "merge",
) -> list[Tracklet]:
    """Resolve duplicate tracklets of one camera until a fixpoint.

    Pairs are visited in descending length order; a pair sharing at least
    `min_shared_frames` frames with mean overlap coefficient >=
    `oc_threshold` is resolved: mode="merge" unions the observations into the
    longer tracklet, mode="suppress" drops the shorter one. Resolution
    restarts the scan, so transitive duplicate chains collapse fully; the
    output is pairwise below threshold and the operation is idempotent.
    """
    if mode not in ("merge", "suppress"):
        raise InputError(f"snms mode must be merge or suppress, got '{mode}'")
    live = list(tracklets)

    def order(items: list[Tracklet]) -> list[Tracklet]:
        return sorted(items, key=lambda t: (-len(t), t.local_id))

    changed = True
    while changed:
        changed = False
        live = order(live)
        for i in range(len(live)):
            for j in range(i + 1, len(live)):
                a, b = live[i], live[j]
                if a.class_id != b.class_id:
                    continue
                shared, mean_oc = tracklet_overlap(a, b)
                if shared >= min_shared_frames and mean_oc >= oc_threshold:
                    if mode == "merge":
                        merged = _merge_pair(a, b)
                        live = [t for k, t in enumerate(live) if k not in (i, j)]
                        live.append(merged)
                    else:
                        live = [t for k, t in enumerate(live) if k != j]
                    changed = True
                    break
            if changed:
                break
    return order(live)


def dbscan_cosine(embeddings: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Density clustering under cosine distance (1 - dot on unit vectors).

    Returns a label per row: 0..k-1 for clusters, -1 for noise. The
    neighborhood count includes the point itself. Points are seeded in row
    order, so labels are deterministic.
    """
    n = embeddings.shape[0]
    dist = 1.0 - embeddings @ embeddings.T
    neighbors = [np.flatnonzero(dist[i] <= eps) for i in range(n)]
    labels = np.full(n, -2, dtype=int)  # -2 = unvisited
    cluster = 0
    for seed in range(n):
        if labels[seed] != -2:
            continue
        if len(neighbors[seed]) < min_pts:
            labels[seed] = -1
            continue
        labels[seed] = cluster
        queue = list(neighbors[seed])
        qi = 0
        while qi < len(queue):
            p = queue[qi]
            qi += 1
            if labels[p] == -1:
                labels[p] = cluster  # border point
            if labels[p] != -2:
                continue
            labels[p] = cluster
            if len(neighbors[p]) >= min_pts:
                queue.extend(neighbors[p])
        cluster += 1
    return labels


def select_representatives(
    t: Tracklet, eps: float, min_pts: int, k: int
) -> list[np.ndarray]:
    """Pick up to k embeddings characterizing the tracklet's appearance.

    Clusters the non-interpolated embeddings, keeps the largest cluster, and
    samples its members at evenly spaced positions in frame order. If every
    point is noise the sample is drawn from the whole tracklet instead.
    """
    frames = [
        f
        for f in t.frames
        if f not in t.interpolated_frames and t.obs[f].embedding is not None
    ]
    if not frames:
        raise InputError(f"tracklet {t.key} has no usable embedding")
    matrix = np.stack([t.obs[f].embedding for f in frames])
    labels = dbscan_cosine(matrix, eps, min_pts)
    if np.all(labels == -1):
        member_rows = np.arange(len(frames))
    else:
        counts = np.bincount(labels[labels >= 0])
        best = int(np.argmax(counts))  # ties resolve to the first-discovered cluster
        member_rows = np.flatnonzero(labels == best)
    take = min(k, len(member_rows))
    picks = np.unique(np.round(np.linspace(0, len(member_rows) - 1, take)).astype(int))
    return [matrix[member_rows[i]] for i in picks]


def interpolate_gaps(t: Tracklet, max_gap: int) -> Tracklet:
    """Fill internal gaps strictly shorter than max_gap with linear boxes.

    Inserted observations carry no embedding, take the min of the flanking
    confidences, and are recorded in interpolated_frames. Original
    observations are preserved untouched; the head and tail are never
    extended.
    """
    frames = t.frames
    obs = dict(t.obs)
    interpolated = set(t.interpolated_frames)
    for f0, f1 in zip(frames, frames[1:]):
        gap = f1 - f0 - 1
        if gap < 1 or gap >= max_gap:
            continue
        a, b = t.obs[f0].bbox, t.obs[f1].bbox
        conf = min(t.obs[f0].confidence, t.obs[f1].confidence)
        for f in range(f0 + 1, f1):
            w = (f - f0) / (f1 - f0)
            box = type(a)(
                a.x + (b.x - a.x) * w,
                a.y + (b.y - a.y) * w,
                a.w + (b.w - a.w) * w,
                a.h + (b.h - a.h) * w,
            )
            obs[f] = Observation(box, None, conf)
            interpolated.add(f)
    return Tracklet(
        camera_id=t.camera_id,
        local_id=t.local_id,
        class_id=t.class_id,
        obs=dict(sorted(obs.items())),
        representatives=list(t.representatives),
        interpolated_frames=interpolated,
    )
