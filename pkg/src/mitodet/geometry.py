"""Anchor-based detection geometry.

Anchor generation over a feature grid, IoU, RPN target assignment,
center/size-log box-delta encoding, greedy NMS, and bilinear ROI-align.
Box coordinates are continuous (sub-pixel); quantization happens only at
raster boundaries.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBox

ANCHOR_SCALES = (32, 64, 128, 256)
ANCHOR_RATIOS = (0.5, 1.0, 2.0)  # width / height

# RPN target labels
POSITIVE = 1
NEGATIVE = 0
IGNORE = -1


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box with corners (x1, y1) and (x2, y2), x2 > x1, y2 > y1."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise ValueError(
                f"degenerate box ({self.x1}, {self.y1}, {self.x2}, {self.y2})")

    @property
    def width(self):
        return self.x2 - self.x1

    @property
    def height(self):
        return self.y2 - self.y1

    @property
    def area(self):
        return self.width * self.height

    @property
    def center(self):
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    def as_array(self):
        return np.array([self.x1, self.y1, self.x2, self.y2], dtype=np.float64)


@dataclass(frozen=True)
class Anchor:
    """Reference box of fixed scale and aspect ratio at one grid location."""

    box: BoundingBox
    scale: int
    ratio: float
    location: tuple  # (gx, gy) feature-grid cell


@dataclass(frozen=True)
class RpnTarget:
    """Per-anchor assignment: label plus regression deltas when positive."""

    anchor_index: int
    label: int
    deltas: np.ndarray | None = None

    def __post_init__(self):
        if (self.label == POSITIVE) != (self.deltas is not None):
            raise ValueError("regression deltas present iff label is positive")


def anchor_box(cx, cy, scale, ratio):
    """Area-preserving anchor box: w = scale*sqrt(ratio), h = scale/sqrt(ratio)."""
    w = scale * math.sqrt(ratio)
    h = scale / math.sqrt(ratio)
    return BoundingBox(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)


def generate_anchors(grid_width, grid_height, feature_stride):
    """Emit the 12 scale/ratio anchors at every grid cell center.

    Cell (gx, gy) is centered at ((gx + 0.5) * stride, (gy + 0.5) * stride)
    in image coordinates; cells are visited row-major.
    """
    if grid_width <= 0 or grid_height <= 0 or feature_stride <= 0:
        raise ValueError("grid dimensions and stride must be positive")
    anchors = []
    for gy in range(grid_height):
        cy = (gy + 0.5) * feature_stride
        for gx in range(grid_width):
            cx = (gx + 0.5) * feature_stride
            for scale in ANCHOR_SCALES:
                for ratio in ANCHOR_RATIOS:
                    anchors.append(Anchor(anchor_box(cx, cy, scale, ratio),
                                          scale, ratio, (gx, gy)))
    return anchors


def iou(a, b):
    """Intersection over union of two boxes; 0 when disjoint."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def iou_matrix(boxes_a, boxes_b):
    """Pairwise IoU between two (N, 4) / (M, 4) corner arrays."""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    ix = (np.minimum(a[:, None, 2], b[None, :, 2])
          - np.maximum(a[:, None, 0], b[None, :, 0]))
    iy = (np.minimum(a[:, None, 3], b[None, :, 3])
          - np.maximum(a[:, None, 1], b[None, :, 1]))
    inter = np.clip(ix, 0.0, None) * np.clip(iy, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    return inter / (area_a[:, None] + area_b[None, :] - inter)


def encode_box_deltas(anchor, gt):
    """Center/size-log deltas (tx, ty, tw, th) taking anchor onto gt."""
    ax, ay = anchor.center
    gx, gy = gt.center
    return np.array([(gx - ax) / anchor.width,
                     (gy - ay) / anchor.height,
                     math.log(gt.width / anchor.width),
                     math.log(gt.height / anchor.height)])


def decode_box_deltas(anchor, deltas):
    """Exact inverse of encode_box_deltas."""
    tx, ty, tw, th = np.asarray(deltas, dtype=np.float64)
    ax, ay = anchor.center
    cx = tx * anchor.width + ax
    cy = ty * anchor.height + ay
    w = anchor.width * math.exp(tw)
    h = anchor.height * math.exp(th)
    return BoundingBox(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)


def assign_rpn_targets(anchors, gt_boxes, pos_threshold=0.7, neg_threshold=0.3):
    """Label anchors positive/negative/ignore against ground-truth boxes.

    Positive iff best IoU exceeds pos_threshold, or the anchor is the
    argmax-IoU anchor of some overlapping gt (ties to the lowest anchor
    index); negative iff best IoU is below neg_threshold and the anchor
    was not rescued; ignore otherwise. Positive targets carry deltas to
    their own best-IoU gt.
    """
    if not 0.0 <= neg_threshold < pos_threshold <= 1.0:
        raise ValueError("need 0 <= neg_threshold < pos_threshold <= 1")
    n = len(anchors)
    if not gt_boxes:
        return [RpnTarget(i, NEGATIVE) for i in range(n)]

    overlaps = iou_matrix(np.stack([a.box.as_array() for a in anchors]),
                          np.stack([g.as_array() for g in gt_boxes]))
    best_gt = overlaps.argmax(axis=1)
    best_iou = overlaps.max(axis=1)

    labels = np.full(n, IGNORE, dtype=np.int64)
    labels[best_iou < neg_threshold] = NEGATIVE
    labels[best_iou > pos_threshold] = POSITIVE
    # every gt with any overlap keeps its best anchor (argmax rescue)
    for j in range(overlaps.shape[1]):
        if overlaps[:, j].max() > 0.0:
            labels[overlaps[:, j].argmax()] = POSITIVE

    targets = []
    for i in range(n):
        if labels[i] == POSITIVE:
            deltas = encode_box_deltas(anchors[i].box, gt_boxes[best_gt[i]])
            targets.append(RpnTarget(i, POSITIVE, deltas))
        else:
            targets.append(RpnTarget(i, int(labels[i])))
    return targets


def nms(boxes, scores, iou_threshold):
    """Greedy non-maximum suppression.

    Returns kept indices sorted by score descending (input index breaks
    ties); a box is kept iff its IoU with every previously kept box is
    at or below iou_threshold.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    scores = np.asarray(scores, dtype=np.float64)
    if boxes.shape[0] != scores.shape[0]:
        raise ValueError("boxes and scores length mismatch")
    if scores.size and (scores.min() < 0.0 or scores.max() > 1.0):
        raise ValueError("confidences must lie in [0, 1]")
    order = np.lexsort((np.arange(scores.size), -scores))
    kept = []
    for i in order:
        box = boxes[i]
        if all(iou_matrix(box, boxes[j])[0, 0] <= iou_threshold for j in kept):
            kept.append(int(i))
    return kept


def _bilinear(feature, ys, xs):
    """Bilinear samples of a 2-D raster; feature[i, j] sits at (x=j, y=i)."""
    h, w = feature.shape
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    f00 = feature[y0, x0]
    f01 = feature[y0, x1]
    f10 = feature[y1, x0]
    f11 = feature[y1, x1]
    # expansion around f00 keeps constant and linear fields exact
    return (f00 + fx * (f01 - f00) + fy * (f10 - f00)
            + fx * fy * (f00 + f11 - f01 - f10))


def roi_align(feature, box, out_size, samples_per_bin=2):
    """Pool a box region of a real-valued raster to an out_size^2 grid.

    The box (clamped to the raster extent) is split into out_size^2 bins;
    each bin averages samples_per_bin^2 regularly spaced bilinear samples
    placed at the fractional offsets (k + 0.5) / samples_per_bin.
    """
    feature = np.asarray(feature, dtype=np.float64)
    if feature.ndim != 2:
        raise ValueError("feature must be a 2-D raster")
    if out_size < 1 or samples_per_bin < 1:
        raise ValueError("out_size and samples_per_bin must be >= 1")
    h, w = feature.shape
    x1 = min(max(box.x1, 0.0), w - 1.0)
    x2 = min(max(box.x2, 0.0), w - 1.0)
    y1 = min(max(box.y1, 0.0), h - 1.0)
    y2 = min(max(box.y2, 0.0), h - 1.0)
    if x2 - x1 <= 0.0 or y2 - y1 <= 0.0:
        raise DegenerateBox(f"box clamps to zero extent within {w}x{h} raster")

    s = samples_per_bin
    offsets = (np.arange(s) + 0.5) / s
    bin_w = (x2 - x1) / out_size
    bin_h = (y2 - y1) / out_size
    xs = x1 + (np.arange(out_size)[:, None] + offsets[None, :]) * bin_w
    ys = y1 + (np.arange(out_size)[:, None] + offsets[None, :]) * bin_h
    samples = _bilinear(feature, ys.reshape(-1)[:, None], xs.reshape(-1)[None, :])
    return samples.reshape(out_size, s, out_size, s).mean(axis=(1, 3))
