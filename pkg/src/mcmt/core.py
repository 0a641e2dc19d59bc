"""Shared domain types and elementary similarity/overlap primitives.

Everything downstream (single-camera tracking, tracklet refinement,
cross-camera association, scoring) is built on the types in this module.
All types are plain values: once constructed they are never mutated by the
similarity primitives, so they are safe to share across workers.

Conventions:
    * Boxes are (x, y, w, h) in pixels, x/y = top-left corner.
    * Embeddings are 1-D numpy arrays, unit L2 norm after ingestion.
    * Frames are integer indices on a clock shared by all cameras.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class InputError(ValueError):
    """Bad caller input (malformed file, invalid config, contract violation)."""


class InternalError(RuntimeError):
    """An internal invariant was violated; indicates a bug, not bad input."""


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------

UNIT_NORM_TOL = 1e-6


def normalize_embedding(values: np.ndarray) -> np.ndarray:
    """Project an appearance vector onto the unit sphere.

    Called once at ingestion; afterwards cosine similarity reduces to a dot
    product. Vectors already unit-norm (within tolerance) are returned
    unchanged so that load -> save round-trips are byte-stable.
    """
    v = np.asarray(values)
    if v.ndim != 1 or v.size == 0:
        raise InputError(f"embedding must be a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InputError("embedding contains non-finite values")
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise InputError("cannot normalize a zero embedding")
    if abs(norm - 1.0) <= UNIT_NORM_TOL:
        return v
    return (v / norm).astype(v.dtype, copy=False)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of two unit-normalized embeddings, in [-1, 1].

    Raises:
        InputError: if the vectors have different dimensions.
    """
    if a.shape != b.shape:
        raise InputError(f"embedding dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a, b))


# ---------------------------------------------------------------------------
# Boxes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BBox:
    """Axis-aligned 2-D box, top-left corner plus size, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise InputError(f"box size must be positive, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0


def _intersection_area(a: BBox, b: BBox) -> float:
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0 for disjoint boxes, 1 for identical."""
    inter = _intersection_area(a, b)
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def overlap_coefficient(a: BBox, b: BBox) -> float:
    """Intersection over the smaller box area.

    Equals 1 exactly when one box contains the other, which makes it a better
    duplicate signal than IoU under scale change.
    """
    inter = _intersection_area(a, b)
    return inter / min(a.area, b.area)


# ---------------------------------------------------------------------------
# Observations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Detection:
    """One observation in one camera frame."""

    camera_id: str
    frame: int
    bbox: BBox
    class_id: int
    confidence: float
    embedding: np.ndarray

    def __post_init__(self) -> None:
        if self.frame < 0:
            raise InputError(f"frame must be non-negative, got {self.frame}")
        if not (0.0 <= self.confidence <= 1.0):
            raise InputError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True, eq=False)
class Observation:
    """A tracklet's record for one frame: box, optional embedding, confidence.

    Interpolated observations carry no embedding.
    """

    bbox: BBox
    embedding: np.ndarray | None
    confidence: float


@dataclass(eq=False)
class Tracklet:
    """Per-camera identity: time-indexed observations plus appearance summary.

    `representatives` stays empty until refinement selects them;
    `interpolated_frames` marks observations synthesized by gap filling
    (those never contribute representatives).
    """

    camera_id: str
    local_id: int
    class_id: int
    obs: dict[int, Observation]
    representatives: list[np.ndarray] = field(default_factory=list)
    interpolated_frames: set[int] = field(default_factory=set)

    def __post_init__(self) -> None:
        if not self.obs:
            raise InputError("tracklet must have at least one observation")

    @property
    def key(self) -> tuple[str, int]:
        return (self.camera_id, self.local_id)

    @property
    def frames(self) -> list[int]:
        return sorted(self.obs)

    @property
    def start(self) -> int:
        return min(self.obs)

    @property
    def end(self) -> int:
        return max(self.obs)

    def __len__(self) -> int:
        return len(self.obs)


# ---------------------------------------------------------------------------
# World-space types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WorldPoint:
    """A point in world coordinates, meters. Ground-plane points have z = 0."""

    x: float
    y: float
    z: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise InputError(f"world point must be finite, got ({self.x}, {self.y}, {self.z})")

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def distance(self, other: "WorldPoint") -> float:
        dx = self.x - other.x
        dy = self.y - other.y
        dz = self.z - other.z
        return float(np.sqrt(dx * dx + dy * dy + dz * dz))


@dataclass(eq=False)
class GlobalTrack:
    """Scene-wide identity aggregating tracklets across cameras.

    `trajectory` is the fused world path (mean or median of the member
    contributions per frame, see the association module). `coverage` maps
    camera id -> observed frames of the members from that camera; it backs
    the one-identity-per-view-per-frame constraint. `frame_points` keeps the
    raw per-member world points so fusion can be recomputed on merge.
    """

    global_id: int
    class_id: int
    members: list[tuple[str, int]] = field(default_factory=list)
    trajectory: dict[int, WorldPoint] = field(default_factory=dict)
    feature_pool: list[np.ndarray] = field(default_factory=list)
    coverage: dict[str, set[int]] = field(default_factory=dict)
    frame_points: dict[int, list[WorldPoint]] = field(default_factory=dict, repr=False)

    @property
    def start(self) -> int:
        return min(self.trajectory)

    @property
    def end(self) -> int:
        return max(self.trajectory)


@dataclass(frozen=True)
class GroundTruthRecord:
    """One annotated object state: 3-D centroid, physical size, heading."""

    frame: int
    object_id: int
    class_id: int
    centroid: WorldPoint
    dimensions: tuple[float, float, float]
    yaw: float

    def __post_init__(self) -> None:
        if any(d <= 0 for d in self.dimensions):
            raise InputError(f"dimensions must be positive, got {self.dimensions}")
        if not (-np.pi < self.yaw <= np.pi + 1e-12):
            raise InputError(f"yaw must be in (-pi, pi], got {self.yaw}")
