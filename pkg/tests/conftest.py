from __future__ import annotations

import numpy as np
import pytest

from mcmt.core import BBox, Observation, Tracklet
from mcmt.geometry import CameraCalibration


def unit(dim: int, idx: int) -> np.ndarray:
    v = np.zeros(dim)
    v[idx] = 1.0
    return v


def box_at(x: float, y: float, w: float = 2.0, h: float = 2.0) -> BBox:
    """Box whose bottom-center anchor sits at pixel (x, y)."""
    return BBox(x - w / 2.0, y - h, w, h)


def flat_camera(camera_id: str, size: tuple[int, int] = (200, 200)) -> CameraCalibration:
    """Calibration whose ground homography is the identity: pixel == world."""
    p = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0], [0, 0, 0, 1.0]])
    return CameraCalibration(camera_id, p, size)


def make_tracklet(
    camera_id: str,
    local_id: int,
    positions: dict[int, tuple[float, float]],
    embedding: np.ndarray,
    class_id: int = 0,
    confidence: float = 0.9,
    representatives: list[np.ndarray] | None = None,
) -> Tracklet:
    """Tracklet whose anchors trace `positions` under a flat camera."""
    obs = {
        f: Observation(box_at(x, y), embedding, confidence)
        for f, (x, y) in positions.items()
    }
    t = Tracklet(camera_id=camera_id, local_id=local_id, class_id=class_id, obs=obs)
    t.representatives = representatives if representatives is not None else [embedding]
    return t


class DSU:
    """Independent union-find used as the connected-components oracle."""

    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra

    def groups(self) -> list[frozenset[int]]:
        by_root: dict[int, set[int]] = {}
        for i in range(len(self.parent)):
            by_root.setdefault(self.find(i), set()).add(i)
        return sorted((frozenset(g) for g in by_root.values()), key=min)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
