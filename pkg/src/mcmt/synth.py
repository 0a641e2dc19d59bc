"""Deterministic synthetic multi-camera scene generator.

Objects move along waypoint paths on the ground plane; elevated pinhole
cameras ring the scene with full coverage, so every object is visible in
every view while present. Detections are the projected boxes plus Gaussian
anchor noise, random misses, and clutter; each true detection's embedding is
its object's anchor vector (anchors are mutually orthonormal) plus noise.

Everything is reproducible from the config: a single seed is split into
per-consumer streams (paths, cameras, anchors, per-camera noise), and the
noise streams can be re-seeded independently via `noise_seed` so that two
scenes share identical geometry/ground truth while differing in noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .core import (
    BBox,
    Detection,
    GroundTruthRecord,
    InputError,
    WorldPoint,
)
from .geometry import CameraCalibration

# Per-class physical size templates: (length, width, height) in meters.
CLASS_TEMPLATES: dict[int, tuple[float, float, float]] = {
    0: (0.5, 0.5, 1.75),
    1: (2.2, 1.2, 2.1),
    2: (0.7, 0.5, 0.4),
    3: (1.6, 0.9, 1.9),
    4: (0.6, 0.4, 1.6),
    5: (0.9, 0.5, 1.2),
}

_EDGE_MARGIN = 0.18  # waypoints stay this fraction of the extent away from edges
_COVERAGE_MARGIN = 1.0  # px tolerance of the camera coverage check


@dataclass
class SceneConfig:
    """Full description of a synthetic scene; generation is pure in this."""

    n_objects: int = 3
    classes: tuple[int, ...] = ()        # per object; empty = round-robin templates
    n_cameras: int = 3
    duration: int = 300                  # frames
    fps: float = 30.0
    world_extent: float = 20.0           # scene is [0, extent]^2 meters
    entry_frames: tuple[int, ...] = ()   # per object; empty = all 0
    exit_frames: tuple[int, ...] = ()    # per object, exclusive; empty = duration
    n_waypoints: int = 4
    speed_min: float = 0.4               # m/s
    speed_max: float = 1.2
    waypoints: tuple[tuple[tuple[float, float], ...], ...] = ()  # explicit paths (API only)
    image_size: tuple[int, int] = (1280, 720)
    pixel_noise_sigma: float = 1.0       # anchor jitter, pixels
    embed_dim: int = 64
    embed_noise_sigma: float = 0.05
    miss_rate: float = 0.05
    fp_rate: float = 0.1                 # expected clutter detections per frame per camera
    seed: int = 0
    noise_seed: int | None = None        # overrides the noise streams only

    def resolved_classes(self) -> tuple[int, ...]:
        if self.classes:
            return self.classes
        ids = sorted(CLASS_TEMPLATES)
        return tuple(ids[i % len(ids)] for i in range(self.n_objects))

    def resolved_entries(self) -> tuple[int, ...]:
        return self.entry_frames or tuple(0 for _ in range(self.n_objects))

    def resolved_exits(self) -> tuple[int, ...]:
        return self.exit_frames or tuple(self.duration for _ in range(self.n_objects))

    def validate(self) -> "SceneConfig":
        if self.n_objects < 0:
            raise InputError("n_objects must be >= 0")
        if self.n_cameras < 1:
            raise InputError("n_cameras must be >= 1")
        if self.duration < 1:
            raise InputError("duration must be >= 1")
        if self.fps <= 0:
            raise InputError("fps must be positive")
        if self.world_extent <= 0:
            raise InputError("world_extent must be positive")
        for name, rate in (("miss_rate", self.miss_rate),):
            if not 0.0 <= rate <= 1.0:
                raise InputError(f"{name} must be in [0, 1]")
        if self.fp_rate < 0:
            raise InputError("fp_rate must be >= 0")
        if self.pixel_noise_sigma < 0 or self.embed_noise_sigma < 0:
            raise InputError("noise sigmas must be >= 0")
        if self.embed_dim < 2:
            raise InputError("embed_dim must be >= 2")
        if self.n_waypoints < 1:
            raise InputError("n_waypoints must be >= 1")
        if not 0 < self.speed_min <= self.speed_max:
            raise InputError("need 0 < speed_min <= speed_max")
        classes = self.resolved_classes()
        if len(classes) != self.n_objects:
            raise InputError("classes must list one class per object")
        unknown = set(classes) - set(CLASS_TEMPLATES)
        if unknown:
            raise InputError(f"unknown class ids {sorted(unknown)}")
        entries, exits = self.resolved_entries(), self.resolved_exits()
        if len(entries) != self.n_objects or len(exits) != self.n_objects:
            raise InputError("entry_frames/exit_frames must list one frame per object")
        for i, (e, x) in enumerate(zip(entries, exits)):
            if not 0 <= e < self.duration:
                raise InputError(f"object {i}: entry frame {e} outside [0, duration)")
            if not e < x <= self.duration:
                raise InputError(f"object {i}: exit frame {x} must satisfy entry < exit <= duration")
        if self.waypoints and len(self.waypoints) != self.n_objects:
            raise InputError("waypoints must list one path per object")
        return self


@dataclass(eq=False)
class Scene:
    config: SceneConfig
    ground_truth: list[GroundTruthRecord]
    calibrations: dict[str, CameraCalibration]
    detections: dict[str, list[Detection]]
    anchors: np.ndarray = field(repr=False)  # (n_objects, embed_dim) orthonormal rows


# ---------------------------------------------------------------------------
# Object paths
# ---------------------------------------------------------------------------


class _Path:
    """Piecewise-linear waypoint path traversed at constant speed.

    The traversal reflects at the ends (ping-pong) so objects keep moving
    for an arbitrary duration without teleporting.
    """

    def __init__(self, waypoints: np.ndarray, speed: float, fps: float):
        self.points = waypoints
        self.speed = speed
        self.fps = fps
        seg = np.diff(waypoints, axis=0)
        seg_len = np.linalg.norm(seg, axis=1)
        self.cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        self.total = float(self.cum[-1])

    def at(self, step: int) -> np.ndarray:
        if self.total <= 1e-12:
            return self.points[0]
        d = self.speed * step / self.fps
        period = 2.0 * self.total
        phase = d % period
        arc = phase if phase <= self.total else period - phase
        i = int(np.searchsorted(self.cum, arc, side="right") - 1)
        i = min(i, len(self.points) - 2)
        seg_start, seg_end = self.cum[i], self.cum[i + 1]
        w = 0.0 if seg_end <= seg_start else (arc - seg_start) / (seg_end - seg_start)
        return (1.0 - w) * self.points[i] + w * self.points[i + 1]


def _build_paths(cfg: SceneConfig, rng: np.random.Generator) -> list[_Path]:
    lo = _EDGE_MARGIN * cfg.world_extent
    hi = (1.0 - _EDGE_MARGIN) * cfg.world_extent
    paths = []
    for i in range(cfg.n_objects):
        if cfg.waypoints:
            pts = np.array(cfg.waypoints[i], dtype=float)
        else:
            pts = rng.uniform(lo, hi, size=(cfg.n_waypoints, 2))
        speed = float(rng.uniform(cfg.speed_min, cfg.speed_max))
        paths.append(_Path(pts, speed, cfg.fps))
    return paths


# ---------------------------------------------------------------------------
# Cameras
# ---------------------------------------------------------------------------


def _look_at_rotation(position: np.ndarray, target: np.ndarray) -> np.ndarray:
    forward = target - position
    forward = forward / np.linalg.norm(forward)
    right = np.cross(forward, np.array([0.0, 0.0, 1.0]))
    norm = np.linalg.norm(right)
    if norm < 1e-9:
        raise InputError("camera looks straight down; ground homography degenerates")
    right = right / norm
    down = np.cross(forward, right)
    return np.stack([right, down, forward])


def make_calibration(
    camera_id: str,
    position: np.ndarray,
    target: np.ndarray,
    image_size: tuple[int, int],
    ground_corners: np.ndarray,
    pixel_margin: float = 60.0,
) -> CameraCalibration:
    """Build a pinhole camera at `position` looking at `target`.

    The focal length is chosen so every ground corner projects inside the
    image with `pixel_margin` to spare; a coverage check enforces it.
    """
    w, h = image_size
    rot = _look_at_rotation(position, target)
    f_bound = math.inf
    for corner in ground_corners:
        cam = rot @ (corner - position)
        if cam[2] <= 1e-9:
            raise InputError(f"camera {camera_id} does not face the scene")
        xn, yn = cam[0] / cam[2], cam[1] / cam[2]
        if abs(xn) > 1e-9:
            f_bound = min(f_bound, (w / 2.0 - pixel_margin) / abs(xn))
        if abs(yn) > 1e-9:
            f_bound = min(f_bound, (h / 2.0 - pixel_margin) / abs(yn))
    if not math.isfinite(f_bound) or f_bound <= 0:
        raise InputError(f"camera {camera_id}: no usable focal length")
    focal = min(f_bound, 4.0 * w)
    k = np.array([[focal, 0.0, w / 2.0], [0.0, focal, h / 2.0], [0.0, 0.0, 1.0]])
    p = k @ np.hstack([rot, (-rot @ position).reshape(3, 1)])
    cal = CameraCalibration(camera_id=camera_id, projection=p, image_size=image_size)
    for corner in ground_corners:
        u, v, _ = cal.project(WorldPoint(corner[0], corner[1], corner[2]))
        if not (-_COVERAGE_MARGIN <= u <= w + _COVERAGE_MARGIN
                and -_COVERAGE_MARGIN <= v <= h + _COVERAGE_MARGIN):
            raise InputError(
                f"camera {camera_id} fails the scene coverage check at corner {corner}"
            )
    return cal


def _build_cameras(cfg: SceneConfig, rng: np.random.Generator) -> dict[str, CameraCalibration]:
    e = cfg.world_extent
    center = np.array([e / 2.0, e / 2.0, 0.0])
    corners = np.array(
        [[0.0, 0.0, 0.0], [e, 0.0, 0.0], [0.0, e, 0.0], [e, e, 0.0], [e / 2, e / 2, 0.0]]
    )
    cals: dict[str, CameraCalibration] = {}
    for k in range(cfg.n_cameras):
        angle = 2.0 * math.pi * k / cfg.n_cameras + float(rng.uniform(-0.1, 0.1))
        radius = 0.75 * e * (1.0 + 0.1 * float(rng.uniform(-0.5, 0.5)))
        height = 0.55 * e * (1.0 + 0.2 * float(rng.uniform(-0.5, 0.5)))
        position = center + np.array(
            [radius * math.cos(angle), radius * math.sin(angle), height]
        )
        cam_id = f"cam{k:02d}"
        cals[cam_id] = make_calibration(cam_id, position, center, cfg.image_size, corners)
    return cals


# ---------------------------------------------------------------------------
# Scene generation
# ---------------------------------------------------------------------------


def _anchor_matrix(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Mutually orthonormal identity anchors (random rotation of the basis)."""
    if n == 0:
        return np.zeros((0, dim))
    raw = rng.standard_normal((dim, max(n, 1)))
    q, _ = np.linalg.qr(raw)
    anchors = q[:, :n].T
    if n > dim:  # cannot be orthogonal; fall back to normalized random vectors
        extra = rng.standard_normal((n - dim, dim))
        extra /= np.linalg.norm(extra, axis=1, keepdims=True)
        anchors = np.vstack([q.T, extra])
    return anchors


def _noisy_embedding(
    anchor: np.ndarray, sigma: float, rng: np.random.Generator
) -> np.ndarray:
    v = anchor + sigma * rng.standard_normal(anchor.shape[0]) if sigma > 0 else anchor
    v = v / np.linalg.norm(v)
    return v.astype(np.float32)


def _wrap_angle(a: float) -> float:
    a = (a + math.pi) % (2.0 * math.pi) - math.pi
    return math.pi if a <= -math.pi else a


def _focal_from_projection(p: np.ndarray) -> float:
    # P[:, :3] = K R with unit-norm third row; the principal offset is the
    # projection of row 0 onto row 2, what remains is the focal length.
    scale = float(np.linalg.norm(p[2, :3]))
    row0 = p[0, :3] / scale
    row2 = p[2, :3] / scale
    cx = float(row0 @ row2)
    return float(math.sqrt(float(row0 @ row0) - cx * cx))


def generate_scene(config: SceneConfig) -> Scene:
    """Generate ground truth, calibrations, and noisy detections from config."""
    cfg = config.validate()
    root = np.random.SeedSequence(cfg.seed)
    paths_ss, cameras_ss, anchors_ss, noise_ss = root.spawn(4)
    if cfg.noise_seed is not None:
        noise_ss = np.random.SeedSequence(cfg.noise_seed)

    paths = _build_paths(cfg, np.random.default_rng(paths_ss))
    calibrations = _build_cameras(cfg, np.random.default_rng(cameras_ss))
    anchors = _anchor_matrix(cfg.n_objects, cfg.embed_dim, np.random.default_rng(anchors_ss))

    classes = cfg.resolved_classes()
    entries = cfg.resolved_entries()
    exits = cfg.resolved_exits()

    # ground truth: object positions and headings per visible frame
    positions: dict[int, dict[int, np.ndarray]] = {}
    ground_truth: list[GroundTruthRecord] = []
    for frame in range(cfg.duration):
        for obj in range(cfg.n_objects):
            if not entries[obj] <= frame < exits[obj]:
                continue
            pos = paths[obj].at(frame - entries[obj])
            positions.setdefault(obj, {})[frame] = pos
            ahead = paths[obj].at(frame - entries[obj] + 1)
            delta = ahead - pos
            yaw = _wrap_angle(math.atan2(delta[1], delta[0])) if np.linalg.norm(delta) > 1e-9 else 0.0
            dims = CLASS_TEMPLATES[classes[obj]]
            ground_truth.append(
                GroundTruthRecord(
                    frame=frame,
                    object_id=obj,
                    class_id=classes[obj],
                    centroid=WorldPoint(float(pos[0]), float(pos[1]), 0.0),
                    dimensions=dims,
                    yaw=yaw,
                )
            )

    # detections per camera
    camera_noise = noise_ss.spawn(cfg.n_cameras)
    detections: dict[str, list[Detection]] = {}
    class_choices = sorted(set(classes)) if classes else sorted(CLASS_TEMPLATES)
    for cam_index, cam_id in enumerate(sorted(calibrations)):
        cal = calibrations[cam_id]
        rng = np.random.default_rng(camera_noise[cam_index])
        focal = _focal_from_projection(cal.projection)
        w_img, h_img = cal.image_size
        rows: list[Detection] = []
        for frame in range(cfg.duration):
            for obj in range(cfg.n_objects):
                pos = positions.get(obj, {}).get(frame)
                if pos is None:
                    continue
                if cfg.miss_rate > 0 and rng.random() < cfg.miss_rate:
                    continue
                length, width, height = CLASS_TEMPLATES[classes[obj]]
                foot = WorldPoint(float(pos[0]), float(pos[1]), 0.0)
                head = WorldPoint(float(pos[0]), float(pos[1]), height)
                u_b, v_b, depth = cal.project(foot)
                _, v_t, _ = cal.project(head)
                box_h = v_b - v_t
                box_w = focal * width / depth
                if box_h <= 0 or box_w <= 0:
                    raise InputError(f"degenerate box geometry in camera {cam_id}")
                if cfg.pixel_noise_sigma > 0:
                    u_b += float(rng.normal(0.0, cfg.pixel_noise_sigma))
                    v_b += float(rng.normal(0.0, cfg.pixel_noise_sigma))
                conf = float(rng.uniform(0.8, 0.99))
                emb = _noisy_embedding(anchors[obj], cfg.embed_noise_sigma, rng)
                rows.append(
                    Detection(
                        camera_id=cam_id,
                        frame=frame,
                        bbox=BBox(u_b - box_w / 2.0, v_b - box_h, box_w, box_h),
                        class_id=classes[obj],
                        confidence=conf,
                        embedding=emb,
                    )
                )
            if cfg.fp_rate > 0:
                for _ in range(int(rng.poisson(cfg.fp_rate))):
                    box_h = float(rng.uniform(0.05, 0.2)) * h_img
                    box_w = box_h * float(rng.uniform(0.3, 0.8))
                    u = float(rng.uniform(0.1, 0.9)) * w_img
                    v = float(rng.uniform(0.35, 0.95)) * h_img
                    clutter = rng.standard_normal(cfg.embed_dim)
                    clutter = (clutter / np.linalg.norm(clutter)).astype(np.float32)
                    rows.append(
                        Detection(
                            camera_id=cam_id,
                            frame=frame,
                            bbox=BBox(u - box_w / 2.0, v - box_h, box_w, box_h),
                            class_id=int(rng.choice(class_choices)),
                            confidence=float(rng.uniform(0.1, 0.5)),
                            embedding=clutter,
                        )
                    )
        detections[cam_id] = rows

    return Scene(
        config=cfg,
        ground_truth=ground_truth,
        calibrations=calibrations,
        detections=detections,
        anchors=anchors,
    )


# ---------------------------------------------------------------------------
# Scene config files and export
# ---------------------------------------------------------------------------

_TUPLE_INT_KEYS = {"classes", "entry_frames", "exit_frames"}


def parse_scene_config(text: str) -> SceneConfig:
    cfg = SceneConfig()
    known = {f.name: f for f in fields(SceneConfig)}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise InputError(f"scene config line {lineno}: expected 'key = value'")
        name, raw = (part.strip() for part in stripped.split("=", 1))
        if name not in known or name == "waypoints":
            raise InputError(f"scene config line {lineno}: unknown key '{name}'")
        try:
            if name in _TUPLE_INT_KEYS:
                value = tuple(int(p) for p in raw.split(",") if p.strip())
            elif name == "image_size":
                parts = [int(p) for p in raw.split(",")]
                if len(parts) != 2:
                    raise ValueError(raw)
                value = (parts[0], parts[1])
            elif name == "noise_seed":
                value = None if raw.lower() in ("", "none") else int(raw)
            elif isinstance(getattr(cfg, name), bool):
                value = raw.lower() in ("true", "1", "yes")
            elif isinstance(getattr(cfg, name), int):
                value = int(raw)
            elif isinstance(getattr(cfg, name), float):
                value = float(raw)
            else:
                value = raw
        except ValueError as exc:
            raise InputError(
                f"scene config line {lineno}: cannot parse '{raw}' for key '{name}'"
            ) from exc
        setattr(cfg, name, value)
    return cfg.validate()


def load_scene_config(path: str | Path) -> SceneConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read scene config {path}: {exc}") from exc
    return parse_scene_config(text)


def scene_config_to_text(cfg: SceneConfig) -> str:
    lines = []
    for f in fields(SceneConfig):
        if f.name == "waypoints":
            continue
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def export_scene(scene: Scene, out_dir: str | Path) -> dict[str, Path]:
    """Write the scene in the pipeline's file formats; returns the paths."""
    from . import io  # deferred: io imports nothing from synth

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "detections": out / "detections.txt",
        "embeddings": out / "embeddings.f32",
        "calibrations": out / "calibrations.txt",
        "ground_truth": out / "ground_truth.txt",
        "scene_config": out / "scene_config.txt",
    }
    flat = [d for cam_id in sorted(scene.detections) for d in scene.detections[cam_id]]
    io.write_detections(paths["detections"], flat, sidecar=paths["embeddings"].name)
    io.write_calibrations(paths["calibrations"], scene.calibrations)
    io.write_ground_truth(paths["ground_truth"], scene.ground_truth)
    paths["scene_config"].write_text(scene_config_to_text(scene.config), encoding="utf-8")
    return paths
