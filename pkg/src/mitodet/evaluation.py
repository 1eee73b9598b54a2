"""Detection scoring: centroid matching, precision/recall/F, activity grade.

A prediction counts as a true mitosis when it lies within 30 pixels of a
ground-truth centroid, and each ground truth is counted once; matching
is one-to-one with maximum cardinality. Slide-level mitotic activity is
graded 1/2/3 from the mitosis count per 10 HPFs.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import BoundingBox
from .tiling import merge_tile_detections

MATCH_RADIUS = 30.0


@dataclass(frozen=True)
class Detection:
    """Predicted mitosis: centroid, confidence, optional bounding box."""

    x: float
    y: float
    confidence: float = 1.0
    box: BoundingBox | None = None

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.box is not None:
            bx, by = self.box.center
            if abs(bx - self.x) > 0.5 or abs(by - self.y) > 0.5:
                raise ValueError("centroid must be the box center within 0.5 px")


@dataclass(frozen=True)
class MatchResult:
    """One-to-one matching outcome: pairs plus unmatched leftovers."""

    pairs: tuple                 # ((det_index, gt_index, distance), ...)
    unmatched_detections: tuple  # detection indices counted as FP
    unmatched_gts: tuple         # gt indices counted as FN

    @property
    def tp(self):
        return len(self.pairs)

    @property
    def fp(self):
        return len(self.unmatched_detections)

    @property
    def fn(self):
        return len(self.unmatched_gts)


@dataclass(frozen=True)
class Metrics:
    """Precision, recall, and their harmonic mean."""

    precision: float
    recall: float
    f_score: float


def match_detections(detections, gts, radius=MATCH_RADIUS):
    """Match detections to ground-truth centroids within `radius` pixels.

    Maximum-cardinality one-to-one matching on the distance-thresholded
    bipartite graph; among maximum matchings the smaller total distance
    wins, then lower index pairs. A second detection near an already
    matched gt is a false positive.
    """
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    n, m = len(detections), len(gts)
    if n == 0 or m == 0:
        return MatchResult((), tuple(range(n)), tuple(range(m)))

    det_xy = np.array([[d.x, d.y] for d in detections], dtype=np.float64)
    gt_xy = np.array([[float(x), float(y)] for x, y in gts], dtype=np.float64)
    dist = np.hypot(det_xy[:, None, 0] - gt_xy[None, :, 0],
                    det_xy[:, None, 1] - gt_xy[None, :, 1])
    feasible = dist <= radius

    # big cost on infeasible edges makes the assignment maximize the
    # feasible-edge count first, then total distance; the tiny index
    # perturbation prefers lower index pairs among exact distance ties
    big = radius * (min(n, m) + 1) + 1.0
    tie = np.arange(n * m, dtype=np.float64).reshape(n, m) * (1e-9 / (n * m))
    rows, cols = linear_sum_assignment(np.where(feasible, dist + tie, big))

    pairs = tuple((int(i), int(j), float(dist[i, j]))
                  for i, j in zip(rows, cols) if feasible[i, j])
    matched_dets = {i for i, _, _ in pairs}
    matched_gts = {j for _, j, _ in pairs}
    return MatchResult(pairs,
                       tuple(i for i in range(n) if i not in matched_dets),
                       tuple(j for j in range(m) if j not in matched_gts))


def compute_prf(tp, fp, fn):
    """Precision, recall, F-score from match counts.

    Degenerate conventions: all three counts zero gives (1, 1, 1);
    otherwise a zero denominator zeroes the affected metric, and F is 0
    whenever TP is 0.
    """
    if tp < 0 or fp < 0 or fn < 0:
        raise ValueError("counts must be nonnegative")
    if tp == 0 and fp == 0 and fn == 0:
        return Metrics(1.0, 1.0, 1.0)
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f_score = (2.0 * precision * recall / (precision + recall)
               if precision + recall > 0.0 else 0.0)
    return Metrics(precision, recall, f_score)


def mitotic_activity_score(count_per_10_hpf):
    """Nottingham mitotic-activity band: 0-11 -> 1, 12-22 -> 2, 23+ -> 3."""
    if count_per_10_hpf < 0:
        raise ValueError("count must be nonnegative")
    if count_per_10_hpf <= 11:
        return 1
    if count_per_10_hpf <= 22:
        return 2
    return 3


@dataclass(frozen=True)
class SlideEvaluation:
    """Full slide scoring: matching, metrics, and activity grades."""

    match: MatchResult
    metrics: Metrics
    activity_score_pred: int
    activity_score_gt: int

    def to_dict(self):
        return {"tp": self.match.tp, "fp": self.match.fp, "fn": self.match.fn,
                "precision": self.metrics.precision,
                "recall": self.metrics.recall,
                "f_score": self.metrics.f_score,
                "activity_score_pred": self.activity_score_pred,
                "activity_score_gt": self.activity_score_gt}


def evaluate_slide(detections, gts, radius=MATCH_RADIUS, dedup_radius=30.0):
    """Merge cross-tile detections, match against gts, and grade the slide.

    Detections must already be in slide coordinates. The predicted
    activity score uses the merged detection count; the gt-based score
    is reported alongside for comparison.
    """
    merged = merge_tile_detections(detections, dedup_radius)
    match = match_detections(merged, gts, radius)
    return SlideEvaluation(match,
                           compute_prf(match.tp, match.fp, match.fn),
                           mitotic_activity_score(len(merged)),
                           mitotic_activity_score(len(gts)))
