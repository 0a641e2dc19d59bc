"""Pipeline configuration: every tunable, with documented defaults.

Config files are flat `key = value` text. Unset keys take the default;
unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .core import InputError

DEFAULT_ALPHAS = tuple(round(0.05 * i, 2) for i in range(1, 20))

STRATEGIES = ("FM", "GIDE")
SNMS_MODES = ("merge", "suppress")
FUSION_MODES = ("mean", "median")


@dataclass
class PipelineConfig:
    """Knobs for the full detections -> global tracks -> scores pipeline."""

    # -- single-camera tracking
    det_min_conf: float = 0.1     # detections below this confidence are dropped
    lambda_app: float = 0.3       # appearance weight in the fused matching cost
    iou_gate: float = 0.1         # pair forbidden if iou < iou_gate AND cosine < app_gate
    app_gate: float = 0.25
    n_init: int = 3               # consecutive hits before a track is confirmed
    max_misses: int = 30          # consecutive misses before a track is terminated
    embed_beta: float = 0.1       # EMA weight of the new embedding (0.9 stays on history)

    # -- tracklet refinement
    snms_oc: float = 0.7          # overlap-coefficient threshold for duplicate tracklets
    snms_min_frames: int = 3      # minimum shared frames before a pair is considered
    snms_mode: str = "merge"      # merge | suppress
    rep_eps: float = 0.3          # cosine-distance radius for density clustering
    rep_min_pts: int = 4
    rep_k: int = 20               # representatives kept per tracklet
    interp_max_gap: int = 30      # gaps of this many frames or more stay unfilled

    # -- geometry
    anchor_margin: float = 0.05   # tolerated anchor overshoot, fraction of image size
    world_z_offset: float = 0.0   # added to output world z (e.g. half object height)

    # -- cross-camera association
    glance_window: int = 100      # frames examined to fix the initial identity set
    tau_traj: float = 1.5         # max mean world distance (m) for a trajectory match
    tau_app: float = 0.6          # min appearance similarity for a match
    min_shared: int = 5           # min shared trajectory frames to score a pair
    strategy: str = "GIDE"        # leftover strategy: FM | GIDE
    feature_pool_cap: int = 64    # representatives retained per global identity
    fusion: str = "mean"          # per-frame fusion of member world points: mean | median

    # -- evaluation
    d_max: float = 2.0            # distance (m) at which localization similarity hits 0
    alphas: tuple[float, ...] = DEFAULT_ALPHAS

    def validate(self) -> "PipelineConfig":
        checks = [
            (0.0 <= self.det_min_conf <= 1.0, "det_min_conf in [0, 1]"),
            (0.0 <= self.lambda_app <= 1.0, "lambda_app in [0, 1]"),
            (0.0 <= self.iou_gate <= 1.0, "iou_gate in [0, 1]"),
            (-1.0 <= self.app_gate <= 1.0, "app_gate in [-1, 1]"),
            (self.n_init >= 1, "n_init >= 1"),
            (self.max_misses >= 0, "max_misses >= 0"),
            (0.0 <= self.embed_beta <= 1.0, "embed_beta in [0, 1]"),
            (0.0 < self.snms_oc <= 1.0, "snms_oc in (0, 1]"),
            (self.snms_min_frames >= 1, "snms_min_frames >= 1"),
            (self.snms_mode in SNMS_MODES, f"snms_mode in {SNMS_MODES}"),
            (self.rep_eps > 0.0, "rep_eps > 0"),
            (self.rep_min_pts >= 1, "rep_min_pts >= 1"),
            (self.rep_k >= 1, "rep_k >= 1"),
            (self.interp_max_gap >= 1, "interp_max_gap >= 1"),
            (self.anchor_margin >= 0.0, "anchor_margin >= 0"),
            (self.glance_window >= 1, "glance_window >= 1"),
            (self.tau_traj > 0.0, "tau_traj > 0"),
            (-1.0 <= self.tau_app <= 1.0, "tau_app in [-1, 1]"),
            (self.min_shared >= 1, "min_shared >= 1"),
            (self.strategy in STRATEGIES, f"strategy in {STRATEGIES}"),
            (self.feature_pool_cap >= 1, "feature_pool_cap >= 1"),
            (self.fusion in FUSION_MODES, f"fusion in {FUSION_MODES}"),
            (self.d_max > 0.0, "d_max > 0"),
            (len(self.alphas) >= 1 and all(0.0 < a <= 1.0 for a in self.alphas),
             "alphas must be a non-empty grid in (0, 1]"),
        ]
        for ok, requirement in checks:
            if not ok:
                raise InputError(f"config violates: {requirement}")
        return self


def _parse_value(name: str, raw: str, target_type: type):
    raw = raw.strip()
    try:
        if target_type is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        if target_type is str:
            return raw
        # tuple-valued keys (the alpha grid) are comma-separated floats
        return tuple(float(part) for part in raw.split(",") if part.strip())
    except ValueError as exc:
        raise InputError(f"config key '{name}': cannot parse value '{raw}'") from exc


def parse_config_text(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    cfg = base if base is not None else PipelineConfig()
    known = {f.name: f for f in fields(PipelineConfig)}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise InputError(f"config line {lineno}: expected 'key = value', got '{stripped}'")
        name, raw = stripped.split("=", 1)
        name = name.strip()
        if name not in known:
            raise InputError(f"config line {lineno}: unknown key '{name}'")
        current = getattr(cfg, name)
        target_type = type(current) if not isinstance(current, tuple) else tuple
        setattr(cfg, name, _parse_value(name, raw, target_type))
    return cfg.validate()


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def config_to_text(cfg: PipelineConfig) -> str:
    lines = []
    for f in fields(PipelineConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(repr(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
