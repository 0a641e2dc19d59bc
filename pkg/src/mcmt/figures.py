"""Report figures rendered to files next to the delimited outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .core import GroundTruthRecord
from .evaluation import EvalReport
from .pipeline import TrackRecord

# Fixed metadata keeps PNG output byte-stable across runs.
_PNG_META = {"Software": "mcmt"}


def save_alpha_curves(report: EvalReport, path: str | Path) -> None:
    """Per-alpha DetA/AssA/HOTA/LocA curves with headline scores."""
    alphas = [r.alpha for r in report.per_alpha]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(alphas, [r.deta for r in report.per_alpha], "b-", label=f"DetA ({report.deta:.3f})")
    ax.plot(alphas, [r.assa for r in report.per_alpha], "g-", label=f"AssA ({report.assa:.3f})")
    ax.plot(alphas, [r.hota for r in report.per_alpha], "r-", label=f"HOTA ({report.hota:.3f})")
    ax.plot(alphas, [r.loca for r in report.per_alpha], "m--", label=f"LocA ({report.loca:.3f})")
    ax.set_xlabel("alpha")
    ax.set_ylabel("score")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower left", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def save_world_map(
    records: list[TrackRecord],
    path: str | Path,
    ground_truth: list[GroundTruthRecord] | None = None,
) -> None:
    """Top-down view of the fused world trajectories, one color per identity."""
    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    if ground_truth:
        by_obj: dict[int, list[tuple[float, float]]] = {}
        for r in sorted(ground_truth, key=lambda r: (r.object_id, r.frame)):
            by_obj.setdefault(r.object_id, []).append((r.centroid.x, r.centroid.y))
        for pts in by_obj.values():
            xs, ys = zip(*pts)
            ax.plot(xs, ys, color="0.75", lw=3.0, zorder=1)
    by_gid: dict[int, list[tuple[int, float, float]]] = {}
    for r in records:
        by_gid.setdefault(r.global_id, []).append((r.frame, r.world.x, r.world.y))
    cmap = matplotlib.colormaps["tab20"]
    for gid in sorted(by_gid):
        pts = sorted(set(by_gid[gid]))
        xs = [p[1] for p in pts]
        ys = [p[2] for p in pts]
        label = f"id {gid}" if gid <= 12 else None
        ax.plot(xs, ys, ".-", ms=2.5, lw=1.0, color=cmap(gid % 20), label=label, zorder=2)
    ax.set_xlabel("world x (m)")
    ax.set_ylabel("world y (m)")
    ax.set_aspect("equal", adjustable="datalim")
    ax.grid(True, alpha=0.3)
    if by_gid:
        ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
