"""Weak-label mask synthesis: centroids to circle/ellipse masks and boxes.

Mitosis annotations arrive as bare centroids; training targets are
synthesized as random circles (radius 10-16 px) or ellipses (semi-axes
5-13 px, oriented at 60 or 90 degrees), rasterized by a pixel-center
inclusion test.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import MalformedAnnotation
from .geometry import BoundingBox

CIRCLE_RADIUS_RANGE = (10, 16)
ELLIPSE_AXIS_RANGE = (5, 13)
ELLIPSE_ANGLES_DEG = (60, 90)


@dataclass(frozen=True)
class CentroidLabel:
    """Weak label: a mitosis centroid in (x=column, y=row) pixel coordinates."""

    x: int
    y: int
    slide_id: str = ""


@dataclass(frozen=True)
class MaskShape:
    """Circle or ellipse synthesized around a centroid.

    Circles carry r; ellipses carry semi-axes a (along theta) and b
    (across it), with theta in degrees from the +x axis.
    """

    kind: str  # "circle" | "ellipse"
    cx: float
    cy: float
    r: int | None = None
    a: int | None = None
    b: int | None = None
    theta: int | None = None

    def __post_init__(self):
        if self.kind == "circle":
            if self.r is None or not CIRCLE_RADIUS_RANGE[0] <= self.r <= CIRCLE_RADIUS_RANGE[1]:
                raise ValueError(f"circle radius {self.r} outside {CIRCLE_RADIUS_RANGE}")
        elif self.kind == "ellipse":
            lo, hi = ELLIPSE_AXIS_RANGE
            if self.a is None or self.b is None or not (lo <= self.a <= hi and lo <= self.b <= hi):
                raise ValueError(f"ellipse axes ({self.a}, {self.b}) outside {ELLIPSE_AXIS_RANGE}")
            if self.theta not in ELLIPSE_ANGLES_DEG:
                raise ValueError(f"ellipse angle {self.theta} not in {ELLIPSE_ANGLES_DEG}")
        else:
            raise ValueError(f"unknown shape kind {self.kind!r}")


@dataclass(frozen=True)
class GroundTruthObject:
    """Synthetic label: analytic shape, tight box, and clipped raster mask."""

    shape: MaskShape
    bbox: BoundingBox
    raster: np.ndarray  # (height, width) uint8 {0, 1}


def parse_centroids(text, slide_id=""):
    """Parse centroid CSV: one "x,y" integer pair per line, blanks skipped.

    Raises MalformedAnnotation (with line number) on wrong arity,
    non-integer fields, or negative coordinates.
    """
    labels = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 2:
            raise MalformedAnnotation(f"line {lineno}: expected 'x,y', got {raw!r}")
        try:
            x, y = int(fields[0]), int(fields[1])
        except ValueError:
            raise MalformedAnnotation(
                f"line {lineno}: non-integer coordinate in {raw!r}") from None
        if x < 0 or y < 0:
            raise MalformedAnnotation(f"line {lineno}: negative coordinate in {raw!r}")
        labels.append(CentroidLabel(x, y, slide_id))
    return labels


def synthesize_shape(label, rng):
    """Draw a random circle or ellipse around a weak centroid label.

    rng is a seeded numpy Generator; identical seeds give identical
    shapes. Kind is a fair coin; circle radius is a uniform integer in
    [10, 16]; ellipse semi-axes are independent uniform integers in
    [5, 13] with orientation 60 or 90 degrees.
    """
    if rng.integers(2) == 0:
        r = int(rng.integers(CIRCLE_RADIUS_RANGE[0], CIRCLE_RADIUS_RANGE[1] + 1))
        return MaskShape("circle", label.x, label.y, r=r)
    lo, hi = ELLIPSE_AXIS_RANGE
    a = int(rng.integers(lo, hi + 1))
    b = int(rng.integers(lo, hi + 1))
    theta = ELLIPSE_ANGLES_DEG[int(rng.integers(2))]
    return MaskShape("ellipse", label.x, label.y, a=a, b=b, theta=theta)


def shape_bbox(shape):
    """Tight axis-aligned bound of the analytic shape, pre-clipping.

    Ellipse half-extents sqrt(a^2 cos^2 + b^2 sin^2) etc. are rounded
    outward to integer pixels (with a tiny guard against float fuzz at
    exact-integer extents).
    """
    if shape.kind == "circle":
        ex = ey = shape.r
    else:
        t = math.radians(shape.theta)
        ex = math.ceil(math.hypot(shape.a * math.cos(t), shape.b * math.sin(t)) - 1e-9)
        ey = math.ceil(math.hypot(shape.a * math.sin(t), shape.b * math.cos(t)) - 1e-9)
    return BoundingBox(shape.cx - ex, shape.cy - ey, shape.cx + ex, shape.cy + ey)


def rasterize_shape(shape, width, height):
    """Rasterize by the pixel-center inclusion test; no anti-aliasing.

    Pixel (row m, col n) is on iff (n, m) satisfies the analytic
    inclusion (circle: distance <= r; ellipse: rotated quadratic form
    <= 1). Pixels outside the image are dropped.
    """
    if width <= 0 or height <= 0:
        raise ValueError(f"nonpositive mask dimensions {width}x{height}")
    mask = np.zeros((height, width), dtype=np.uint8)
    bbox = shape_bbox(shape)
    x0 = max(int(math.floor(bbox.x1)), 0)
    y0 = max(int(math.floor(bbox.y1)), 0)
    x1 = min(int(math.ceil(bbox.x2)), width - 1)
    y1 = min(int(math.ceil(bbox.y2)), height - 1)
    if x1 < x0 or y1 < y0:
        return mask
    ys, xs = np.mgrid[y0:y1 + 1, x0:x1 + 1]
    dx = xs - shape.cx
    dy = ys - shape.cy
    if shape.kind == "circle":
        inside = dx * dx + dy * dy <= shape.r * shape.r
    else:
        t = math.radians(shape.theta)
        u = dx * math.cos(t) + dy * math.sin(t)
        v = -dx * math.sin(t) + dy * math.cos(t)
        inside = (u / shape.a) ** 2 + (v / shape.b) ** 2 <= 1.0
    mask[y0:y1 + 1, x0:x1 + 1] = inside
    return mask


def build_ground_truth(shape, width, height):
    """Bundle a shape with its tight box and clipped raster mask."""
    return GroundTruthObject(shape, shape_bbox(shape),
                             rasterize_shape(shape, width, height))
