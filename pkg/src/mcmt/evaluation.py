"""HOTA metric family over 3-D world coordinates.

Matching is done per frame and per similarity level alpha: ground-truth and
predicted centroids are paired by a maximum-total-similarity assignment,
restricted to pairs whose localization similarity reaches alpha. Detection
accuracy counts the matches; association accuracy scores, for every matched
pair of identities, how consistently those identities stay matched to each
other across the sequence; the headline score is the mean over the alpha
grid of the per-alpha geometric means.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import GroundTruthRecord, InputError, WorldPoint

logger = logging.getLogger(__name__)


def loc_similarity(gt: WorldPoint, pred: WorldPoint, d_max: float) -> float:
    """Localization similarity in [0, 1]: 1 at coincidence, 0 from d_max on."""
    if d_max <= 0:
        raise InputError(f"d_max must be positive, got {d_max}")
    return max(0.0, 1.0 - gt.distance(pred) / d_max)


def match_frame(
    gt: Sequence[tuple[int, WorldPoint]],
    pred: Sequence[tuple[int, WorldPoint]],
    alpha: float,
    d_max: float,
) -> tuple[list[tuple[int, int, float]], list[int], list[int]]:
    """Match one frame's identities at similarity level alpha.

    Returns (TP pairs as (gt id, pred id, similarity), FP pred ids, FN gt
    ids). The assignment maximizes the summed similarity over pairs with
    similarity >= alpha; ids must be unique within each side.
    """
    gt = sorted(gt, key=lambda item: item[0])
    pred = sorted(pred, key=lambda item: item[0])
    if len({g for g, _ in gt}) != len(gt) or len({p for p, _ in pred}) != len(pred):
        raise InputError("ids must be unique within a frame")
    if not gt or not pred:
        return [], [p for p, _ in pred], [g for g, _ in gt]
    sim = np.array(
        [[loc_similarity(gp, pp, d_max) for _, pp in pred] for _, gp in gt]
    )
    allowed = sim >= alpha - 1e-12
    cost = np.where(allowed, -sim, 0.0)
    rows, cols = linear_sum_assignment(cost)
    tps = [
        (gt[r][0], pred[c][0], float(sim[r, c]))
        for r, c in zip(rows, cols)
        if allowed[r, c]
    ]
    matched_g = {g for g, _, _ in tps}
    matched_p = {p for _, p, _ in tps}
    fps = [p for p, _ in pred if p not in matched_p]
    fns = [g for g, _ in gt if g not in matched_g]
    return tps, fps, fns


@dataclass(frozen=True)
class AlphaScores:
    alpha: float
    deta: float
    assa: float
    hota: float
    loca: float
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class EvalReport:
    hota: float
    deta: float
    assa: float
    loca: float
    per_alpha: list[AlphaScores]
    d_max: float

    def counts(self) -> list[tuple[float, int, int, int]]:
        return [(row.alpha, row.tp, row.fp, row.fn) for row in self.per_alpha]


def _vacuous_report(alphas: Sequence[float], d_max: float) -> EvalReport:
    rows = [AlphaScores(a, 1.0, 1.0, 1.0, 1.0, 0, 0, 0) for a in alphas]
    return EvalReport(1.0, 1.0, 1.0, 1.0, rows, d_max)


def _group_by_frame(
    items: Iterable[tuple[int, int, WorldPoint]]
) -> dict[int, list[tuple[int, WorldPoint]]]:
    frames: dict[int, list[tuple[int, WorldPoint]]] = {}
    for frame, ident, point in items:
        frames.setdefault(frame, []).append((ident, point))
    return frames


def compute_hota(
    gt: Sequence[GroundTruthRecord],
    pred: Iterable[tuple[int, int, WorldPoint]],
    alphas: Sequence[float],
    d_max: float,
) -> EvalReport:
    """Score predicted (frame, id, world point) triples against ground truth.

    Both empty counts as vacuous perfection (all scores 1, logged); empty
    ground truth against non-empty predictions scores 0. Disjoint frame
    ranges are rejected as caller error.
    """
    gt_frames = _group_by_frame((r.frame, r.object_id, r.centroid) for r in gt)
    pred_frames = _group_by_frame(pred)
    if not gt_frames and not pred_frames:
        logger.info("empty ground truth and empty predictions: vacuous perfect score")
        return _vacuous_report(alphas, d_max)
    if gt_frames and pred_frames:
        if min(gt_frames) > max(pred_frames) or min(pred_frames) > max(gt_frames):
            raise InputError(
                "ground-truth and prediction frame ranges are disjoint: "
                f"gt [{min(gt_frames)}, {max(gt_frames)}], "
                f"pred [{min(pred_frames)}, {max(pred_frames)}]"
            )

    gt_count: dict[int, int] = {}
    for rows in gt_frames.values():
        for g, _ in rows:
            gt_count[g] = gt_count.get(g, 0) + 1
    pred_count: dict[int, int] = {}
    for rows in pred_frames.values():
        for p, _ in rows:
            pred_count[p] = pred_count.get(p, 0) + 1

    all_frames = sorted(gt_frames.keys() | pred_frames.keys())
    per_alpha: list[AlphaScores] = []
    sim_sum_total = 0.0
    tp_total = 0
    for alpha in alphas:
        tp = fp = fn = 0
        sim_sum = 0.0
        tpa: dict[tuple[int, int], int] = {}
        for frame in all_frames:
            tps, fps, fns = match_frame(
                gt_frames.get(frame, []), pred_frames.get(frame, []), alpha, d_max
            )
            tp += len(tps)
            fp += len(fps)
            fn += len(fns)
            for g, p, s in tps:
                sim_sum += s
                tpa[(g, p)] = tpa.get((g, p), 0) + 1
        deta = tp / max(1, tp + fp + fn)
        ass_sum = 0.0
        for (g, p), n_matched in tpa.items():
            union = gt_count[g] + pred_count[p] - n_matched
            ass_sum += n_matched * (n_matched / union)
        assa = ass_sum / tp if tp else 0.0
        hota = math.sqrt(deta * assa)
        loca = sim_sum / tp if tp else 0.0
        per_alpha.append(AlphaScores(alpha, deta, assa, hota, loca, tp, fp, fn))
        sim_sum_total += sim_sum
        tp_total += tp

    headline = EvalReport(
        hota=float(np.mean([r.hota for r in per_alpha])),
        deta=float(np.mean([r.deta for r in per_alpha])),
        assa=float(np.mean([r.assa for r in per_alpha])),
        loca=sim_sum_total / tp_total if tp_total else 0.0,
        per_alpha=per_alpha,
        d_max=d_max,
    )
    return headline


def predictions_from_globals(globals_) -> list[tuple[int, int, WorldPoint]]:
    """Flatten global tracks into (frame, global id, fused world point)."""
    rows: list[tuple[int, int, WorldPoint]] = []
    for g in globals_:
        for frame in sorted(g.trajectory):
            rows.append((frame, g.global_id, g.trajectory[frame]))
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows


def report_table(report: EvalReport) -> str:
    """Human-readable summary table."""
    lines = [
        f"{'metric':<8}{'score':>10}",
        f"{'HOTA':<8}{report.hota:>10.4f}",
        f"{'DetA':<8}{report.deta:>10.4f}",
        f"{'AssA':<8}{report.assa:>10.4f}",
        f"{'LocA':<8}{report.loca:>10.4f}",
        "",
        f"{'alpha':>6} {'DetA':>8} {'AssA':>8} {'HOTA':>8} {'LocA':>8} {'TP':>7} {'FP':>7} {'FN':>7}",
    ]
    for row in report.per_alpha:
        lines.append(
            f"{row.alpha:>6.2f} {row.deta:>8.4f} {row.assa:>8.4f} {row.hota:>8.4f} "
            f"{row.loca:>8.4f} {row.tp:>7d} {row.fp:>7d} {row.fn:>7d}"
        )
    return "\n".join(lines)
