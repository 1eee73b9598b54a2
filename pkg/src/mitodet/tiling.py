"""Sliding-window tiling with overlap, flip transforms, and coordinate maps.

Default geometry is 512x512 tiles at 60% overlap (stride 204). Origins
are (x, y) top-left corners in slide coordinates.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidTiling

DEFAULT_TILE_SIZE = 512
DEFAULT_OVERLAP = 0.6
DEFAULT_DEDUP_RADIUS = 30.0


@dataclass(frozen=True)
class TilePlan:
    """Deterministic tile layout for one slide."""

    slide_width: int
    slide_height: int
    tile_size: int
    stride: int
    origins: tuple   # ((x, y), ...) lexicographically sorted
    padded: tuple    # bool per origin: tile extends past the slide

    def to_dict(self):
        return {"slide_width": self.slide_width,
                "slide_height": self.slide_height,
                "tile_size": self.tile_size,
                "stride": self.stride,
                "origins": [list(origin) for origin in self.origins]}

    @classmethod
    def from_dict(cls, data):
        origins = tuple((int(x), int(y)) for x, y in data["origins"])
        width, height = int(data["slide_width"]), int(data["slide_height"])
        tile = int(data["tile_size"])
        padded = tuple(x + tile > width or y + tile > height for x, y in origins)
        return cls(width, height, tile, int(data["stride"]), origins, padded)


@dataclass(frozen=True)
class TileRef:
    """Reference to one plan tile, optionally horizontally flipped."""

    index: int
    origin: tuple  # (x, y)
    flipped: bool = False


def _axis_origins(dim, tile_size, stride):
    if dim < tile_size:
        return [0]
    origins = list(range(0, dim - tile_size + 1, stride))
    if origins[-1] + tile_size < dim:
        origins.append(dim - tile_size)
    return origins


def plan_tiles(slide_width, slide_height, tile_size=DEFAULT_TILE_SIZE,
               overlap=DEFAULT_OVERLAP):
    """Plan a sliding-window tiling that covers every slide pixel.

    stride = floor(tile_size * (1 - overlap)); the final origin on each
    axis is clamped to dim - tile_size so no border content is lost.
    Slides smaller than the tile get a single zero-padded tile.
    """
    if slide_width <= 0 or slide_height <= 0:
        raise InvalidTiling(f"nonpositive slide dimensions {slide_width}x{slide_height}")
    if tile_size < 32:
        raise InvalidTiling(f"tile_size must be >= 32, got {tile_size}")
    if not 0.0 <= overlap <= 0.95:
        raise InvalidTiling(f"overlap must lie in [0, 0.95], got {overlap}")

    stride = math.floor(tile_size * (1.0 - overlap))
    xs = _axis_origins(slide_width, tile_size, stride)
    ys = _axis_origins(slide_height, tile_size, stride)
    origins = tuple(sorted((x, y) for x in xs for y in ys))
    padded = tuple(x + tile_size > slide_width or y + tile_size > slide_height
                   for x, y in origins)
    return TilePlan(slide_width, slide_height, tile_size, stride, origins, padded)


def tile_refs(plan, flipped=False):
    """TileRefs for every origin of a plan, in plan order."""
    return [TileRef(i, origin, flipped) for i, origin in enumerate(plan.origins)]


def extract_tile(image, ref, tile_size):
    """Copy the tile window at ref.origin; out-of-bounds area is zero-filled.

    A flipped ref reverses the columns of the extracted window.
    """
    pixels = np.asarray(image)
    height, width = pixels.shape[:2]
    ox, oy = ref.origin
    tile = np.zeros((tile_size, tile_size) + pixels.shape[2:], dtype=pixels.dtype)
    x0, y0 = max(ox, 0), max(oy, 0)
    x1, y1 = min(ox + tile_size, width), min(oy + tile_size, height)
    if x1 > x0 and y1 > y0:
        tile[y0 - oy:y1 - oy, x0 - ox:x1 - ox] = pixels[y0:y1, x0:x1]
    if ref.flipped:
        tile = tile[:, ::-1].copy()
    return tile


def map_local_to_slide(ref, local, tile_size):
    """Map a tile-local (x, y) point to slide coordinates."""
    lx, ly = local
    if ref.flipped:
        return (ref.origin[0] + (tile_size - 1 - lx), ref.origin[1] + ly)
    return (ref.origin[0] + lx, ref.origin[1] + ly)


def map_slide_to_local(ref, point, tile_size):
    """Inverse of map_local_to_slide."""
    gx, gy = point
    if ref.flipped:
        return (tile_size - 1 - (gx - ref.origin[0]), gy - ref.origin[1])
    return (gx - ref.origin[0], gy - ref.origin[1])


def merge_tile_detections(detections, dedup_radius=DEFAULT_DEDUP_RADIUS):
    """Deduplicate detections re-found by overlapping tiles.

    Greedy confidence-descending sweep (ties by input index): a detection
    is kept iff its centroid is at least dedup_radius away from every
    already-kept centroid. Output is sorted by confidence descending.
    """
    for det in detections:
        if not 0.0 <= det.confidence <= 1.0:
            raise ValueError(f"confidence {det.confidence} outside [0, 1]")
    order = sorted(range(len(detections)),
                   key=lambda i: (-detections[i].confidence, i))
    kept = []
    for i in order:
        det = detections[i]
        if all(math.hypot(det.x - k.x, det.y - k.y) >= dedup_radius for k in kept):
            kept.append(det)
    return kept
