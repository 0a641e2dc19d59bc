"""Pixel <-> world geometry: calibrated projection and trajectory comparison.

A camera is described by a 3x4 projection matrix P mapping homogeneous world
coordinates to homogeneous pixels. Restricting world points to the ground
plane z = 0 reduces P to an invertible 3x3 homography H (columns 1, 2, 4 of
P), so a box's ground contact pixel can be lifted back to metric world
coordinates without depth data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import BBox, InputError, Tracklet, WorldPoint

# Homogeneous scale below this is treated as at/behind the horizon.
HORIZON_EPS = 1e-9

# Fraction of the image size by which a box anchor may fall outside the image
# and still be projected (boxes clipped at frame edges).
DEFAULT_ANCHOR_MARGIN = 0.05


class ProjectionError(Exception):
    """A pixel could not be lifted to the ground plane; skip the observation."""


class EmptyTrajectoryError(InputError):
    """No observation of the tracklet was projectable."""


@dataclass(eq=False)
class CameraCalibration:
    """Pinhole camera: projection matrix P = K[R|t] plus image size."""

    camera_id: str
    projection: np.ndarray  # 3x4
    image_size: tuple[int, int]  # (width, height) pixels
    _h_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        p = np.asarray(self.projection, dtype=float)
        if p.shape != (3, 4):
            raise InputError(f"projection matrix must be 3x4, got {p.shape}")
        if np.linalg.matrix_rank(p) != 3:
            raise InputError(f"projection matrix of camera {self.camera_id} is rank-deficient")
        self.projection = p
        h = p[:, [0, 1, 3]]
        if abs(np.linalg.det(h)) < 1e-12:
            raise InputError(
                f"ground-plane homography of camera {self.camera_id} is singular"
            )
        self._h_inv = np.linalg.inv(h)

    def project(self, point: WorldPoint) -> tuple[float, float, float]:
        """World point -> (u, v, depth). Raises ProjectionError behind camera."""
        hom = self.projection @ np.array([point.x, point.y, point.z, 1.0])
        if hom[2] <= HORIZON_EPS:
            raise ProjectionError(
                f"point {point} is behind camera {self.camera_id} (scale {hom[2]:.3g})"
            )
        return float(hom[0] / hom[2]), float(hom[1] / hom[2]), float(hom[2])


@dataclass(eq=False)
class WorldTrajectory:
    """Time-indexed world path of one tracklet or fused identity."""

    points: dict[int, WorldPoint]

    @property
    def frames(self) -> list[int]:
        return sorted(self.points)

    def __len__(self) -> int:
        return len(self.points)


def anchor_pixel(box: BBox) -> tuple[float, float]:
    """Ground contact pixel of a box: bottom-center."""
    return (box.x + box.w / 2.0, box.y + box.h)


def ground_point(
    box: BBox, cal: CameraCalibration, margin: float = DEFAULT_ANCHOR_MARGIN
) -> WorldPoint:
    """Lift a box's bottom-center pixel onto the world plane z = 0.

    Raises:
        ProjectionError: anchor outside the image bounds (beyond `margin`,
            a fraction of the image size) or at/behind the horizon.
    """
    u, v = anchor_pixel(box)
    w, h = cal.image_size
    if not (-margin * w <= u <= (1.0 + margin) * w and -margin * h <= v <= (1.0 + margin) * h):
        raise ProjectionError(
            f"anchor ({u:.1f}, {v:.1f}) outside image {w}x{h} of camera {cal.camera_id}"
        )
    hom = cal._h_inv @ np.array([u, v, 1.0])
    if abs(hom[2]) <= HORIZON_EPS:
        raise ProjectionError(
            f"anchor ({u:.1f}, {v:.1f}) maps to the horizon of camera {cal.camera_id}"
        )
    return WorldPoint(float(hom[0] / hom[2]), float(hom[1] / hom[2]), 0.0)


def build_trajectory(
    t: Tracklet, cal: CameraCalibration, margin: float = DEFAULT_ANCHOR_MARGIN
) -> WorldTrajectory:
    """Project every projectable observation (interpolated ones included).

    Unprojectable frames are silently omitted; a tracklet with zero
    projectable frames raises EmptyTrajectoryError.
    """
    if cal.camera_id != t.camera_id:
        raise InputError(
            f"calibration {cal.camera_id} does not match tracklet camera {t.camera_id}"
        )
    points: dict[int, WorldPoint] = {}
    for frame in t.frames:
        try:
            points[frame] = ground_point(t.obs[frame].bbox, cal, margin)
        except ProjectionError:
            continue
    if not points:
        raise EmptyTrajectoryError(
            f"tracklet {t.key} has no projectable observation"
        )
    return WorldTrajectory(points)


def trajectory_distance(a: WorldTrajectory, b: WorldTrajectory) -> tuple[int, float]:
    """(shared frame count, mean point distance over shared frames).

    Returns (0, inf) when the trajectories share no frame.
    """
    shared = sorted(a.points.keys() & b.points.keys())
    if not shared:
        return 0, math.inf
    total = sum(a.points[f].distance(b.points[f]) for f in shared)
    return len(shared), total / len(shared)
