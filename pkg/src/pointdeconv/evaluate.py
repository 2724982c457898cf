"""One-to-one detection matching and precision / recall / F1."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

DEFAULT_RADIUS = 6.0


@dataclass(frozen=True)
class Matching:
    pairs: list          # (det_index, gt_index, distance), ascending distance
    unmatched_detections: list
    unmatched_ground_truth: list
    radius: float


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("tp", "fp", "fn", "precision", "recall", "f1")}


def _coords(points) -> np.ndarray:
    if hasattr(points, "points"):
        points = points.points
    return np.asarray(points, dtype=np.float64).reshape(-1, 2)


def match_detections(dets, gts, radius: float = DEFAULT_RADIUS, method: str = "greedy") -> Matching:
    """Match detections to ground truth within ``radius`` (inclusive).

    ``greedy`` accepts candidate pairs in ascending distance order (ties by
    ground-truth index, then detection index) when both ends are free.
    ``hungarian`` maximizes the number of matches, then minimizes total distance.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    d = _coords(dets)
    g = _coords(gts)
    if len(d) and len(g):
        dist = np.hypot(d[:, None, 0] - g[None, :, 0], d[:, None, 1] - g[None, :, 1])
    else:
        dist = np.zeros((len(d), len(g)))
    if method == "greedy":
        di, gi = np.nonzero(dist <= radius)
        order = np.lexsort((di, gi, dist[di, gi]))
        used_d, used_g, pairs = set(), set(), []
        for k in order:
            a, b = int(di[k]), int(gi[k])
            if a in used_d or b in used_g:
                continue
            used_d.add(a)
            used_g.add(b)
            pairs.append((a, b, float(dist[a, b])))
    elif method == "hungarian":
        pairs = []
        if dist.size:
            # a match is worth more than any achievable total distance saving
            big = radius * (min(dist.shape) + 1)
            cost = np.where(dist <= radius, dist - big, 0.0)
            rows, cols = linear_sum_assignment(cost)
            pairs = [(int(a), int(b), float(dist[a, b])) for a, b in zip(rows, cols) if dist[a, b] <= radius]
        pairs.sort(key=lambda p: (p[2], p[1], p[0]))
    else:
        raise ValueError(f"unknown matching method {method!r}")
    matched_d = {p[0] for p in pairs}
    matched_g = {p[1] for p in pairs}
    return Matching(
        pairs=pairs,
        unmatched_detections=[i for i in range(len(d)) if i not in matched_d],
        unmatched_ground_truth=[i for i in range(len(g)) if i not in matched_g],
        radius=float(radius),
    )


def metrics_from_counts(tp: int, fp: int, fn: int) -> Metrics:
    """Precision, recall and F1 with the degenerate-case conventions.

    Nothing predicted and nothing to find scores 1 everywhere; otherwise an
    empty denominator scores 0.
    """
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be non-negative")
    if tp + fp + fn == 0:
        return Metrics(0, 0, 0, 1.0, 1.0, 1.0)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(tp, fp, fn, precision, recall, f1)


def compute_metrics(matching: Matching, n_dets: int, n_gts: int) -> Metrics:
    tp = len(matching.pairs)
    if tp > min(n_dets, n_gts):
        raise ValueError("matching has more pairs than points")
    return metrics_from_counts(tp, n_dets - tp, n_gts - tp)


def compare_methods(results):
    """Render ``[(label, Metrics), ...]`` as a text table and a JSON string."""
    results = list(results)
    if not results:
        raise ValueError("no results to compare")
    rows = []
    for label, m in results:
        if not label or not str(label).strip():
            raise ValueError("method label must be non-empty")
        rows.append({
            "method": str(label), "tp": m.tp, "fp": m.fp, "fn": m.fn,
            "precision": round(100 * m.precision, 2),
            "recall": round(100 * m.recall, 2),
            "f1": round(100 * m.f1, 2),
        })
    width = max(len("Method"), *(len(r["method"]) for r in rows))
    lines = [f"{'Method':<{width}}  {'Precision':>9}  {'Recall':>9}  {'F1-Score':>9}"]
    lines.append("-" * len(lines[0]))
    for r in rows:
        lines.append(
            f"{r['method']:<{width}}  {r['precision']:>8.2f}%  {r['recall']:>8.2f}%  {r['f1']:>8.2f}%"
        )
    return "\n".join(lines) + "\n", json.dumps(rows, indent=2)
