"""Color-space and stain mathematics for H&E rasters.

Images are numpy arrays of shape (H, W, 3), dtype uint8, RGB order.
Optical density follows Beer-Lambert with natural log and white level
255: od = -ln(I / 255). All operations are pure functions; identical
inputs give bit-identical outputs.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import StainEstimationDegenerate

# estimation guards
MIN_STAIN_PIXELS = 100   # retained pixels required for a usable profile
RANK_TOLERANCE = 1e-6    # s2 < RANK_TOLERANCE * s1 -> effectively single stain
MIN_STAIN_ANGLE = 1e-3   # radians between the two stain vectors

DEFAULT_OD_THRESHOLD = 0.15
DEFAULT_ANGLE_PERCENTILE = 1.0
CONCENTRATION_PERCENTILE = 99.0


@dataclass(frozen=True)
class StainProfile:
    """Two unit stain vectors in OD space plus per-stain concentration ceilings.

    Row 0 is the hematoxylin-like stain, ordered so it carries the larger
    blue-channel OD component; row 1 is the eosin-like stain.
    """

    stain_vectors: np.ndarray       # (2, 3)
    max_concentrations: np.ndarray  # (2,)

    def __post_init__(self):
        vectors = np.array(self.stain_vectors, dtype=np.float64)
        ceilings = np.array(self.max_concentrations, dtype=np.float64)
        if vectors.shape != (2, 3):
            raise ValueError(f"stain_vectors must be (2, 3), got {vectors.shape}")
        if ceilings.shape != (2,):
            raise ValueError(f"max_concentrations must be (2,), got {ceilings.shape}")
        if np.any(vectors < 0.0):
            raise ValueError("stain vector components must be nonnegative")
        norms = np.linalg.norm(vectors, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError(f"stain vectors must be unit norm, got norms {norms}")
        cos_angle = float(np.clip(vectors[0] @ vectors[1], -1.0, 1.0))
        if math.acos(cos_angle) <= MIN_STAIN_ANGLE:
            raise ValueError("stain vectors are not linearly independent")
        if vectors[0, 2] < vectors[1, 2]:
            raise ValueError("first stain vector must have the larger blue OD component")
        if np.any(ceilings < 0.0) or not np.all(np.isfinite(ceilings)):
            raise ValueError("max_concentrations must be finite and nonnegative")
        object.__setattr__(self, "stain_vectors", vectors)
        object.__setattr__(self, "max_concentrations", ceilings)

    def to_dict(self):
        return {"stain_vectors": self.stain_vectors.tolist(),
                "max_concentrations": self.max_concentrations.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(np.asarray(data["stain_vectors"], dtype=np.float64),
                   np.asarray(data["max_concentrations"], dtype=np.float64))


def rgb_to_od(image, floor=1):
    """Convert an RGB raster to optical density.

    Intensities are clamped at `floor` before the log, removing the
    log-of-zero singularity for fully opaque pixels.
    """
    if not 1 <= floor <= 255:
        raise ValueError(f"floor must be in [1, 255], got {floor}")
    clamped = np.maximum(np.asarray(image, dtype=np.float64), float(floor))
    return -np.log(clamped / 255.0)


def od_to_rgb(od):
    """Invert optical density back to a uint8 RGB raster."""
    od = np.asarray(od, dtype=np.float64)
    if np.any(od < 0.0):
        raise ValueError("optical densities must be nonnegative")
    intensity = np.rint(255.0 * np.exp(-od))
    return np.clip(intensity, 0.0, 255.0).astype(np.uint8)


def stain_concentrations(od_pixels, stain_vectors):
    """Per-pixel least-squares stain concentrations, clamped nonnegative.

    od_pixels is (N, 3); stain_vectors is the (2, 3) profile matrix.
    """
    od_pixels = np.asarray(od_pixels, dtype=np.float64).reshape(-1, 3)
    basis = np.asarray(stain_vectors, dtype=np.float64).T  # (3, 2)
    solution, _, _, _ = np.linalg.lstsq(basis, od_pixels.T, rcond=None)
    return np.clip(solution.T, 0.0, None)


def _unit_stain_vector(vector):
    # SVD leaves sign arbitrary; flip to the nonnegative octant, then clamp
    # residual negatives (noise outside the stain cone) and renormalize.
    if vector.sum() < 0.0:
        vector = -vector
    vector = np.maximum(vector, 0.0)
    norm = np.linalg.norm(vector)
    if norm == 0.0:
        raise StainEstimationDegenerate("stain direction collapsed to zero")
    return vector / norm


def estimate_stain_profile(image, od_threshold=DEFAULT_OD_THRESHOLD,
                           angle_percentile=DEFAULT_ANGLE_PERCENTILE, floor=1):
    """Estimate a two-stain profile from an H&E image (Macenko-style).

    Discards pixels whose OD norm is below od_threshold, finds the two
    dominant singular directions of the retained OD vectors, and takes
    the extreme percentile angles of the projected pixels as the stain
    directions. Concentration ceilings are the 99th percentile of the
    per-stain concentrations over the whole image.

    Raises StainEstimationDegenerate when fewer than MIN_STAIN_PIXELS
    pixels carry stain or the retained OD cloud is effectively rank one.
    """
    if od_threshold <= 0.0:
        raise ValueError("od_threshold must be positive")
    if not 0.0 < angle_percentile < 50.0:
        raise ValueError("angle_percentile must lie in (0, 50)")

    od = rgb_to_od(image, floor=floor).reshape(-1, 3)
    retained = od[np.linalg.norm(od, axis=1) >= od_threshold]
    if retained.shape[0] < MIN_STAIN_PIXELS:
        raise StainEstimationDegenerate(
            f"only {retained.shape[0]} pixels above OD threshold {od_threshold}")

    _, singular, vt = np.linalg.svd(retained, full_matrices=False)
    if singular[1] < RANK_TOLERANCE * singular[0]:
        raise StainEstimationDegenerate("retained OD vectors are effectively collinear")
    basis = vt[:2].copy()
    if basis[0] @ retained.mean(axis=0) < 0.0:
        basis[0] = -basis[0]

    coords = retained @ basis.T
    angles = np.arctan2(coords[:, 1], coords[:, 0])
    lo, hi = np.percentile(angles, [angle_percentile, 100.0 - angle_percentile])
    v_lo = _unit_stain_vector(np.array([math.cos(lo), math.sin(lo)]) @ basis)
    v_hi = _unit_stain_vector(np.array([math.cos(hi), math.sin(hi)]) @ basis)
    cos_angle = float(np.clip(v_lo @ v_hi, -1.0, 1.0))
    if math.acos(cos_angle) <= MIN_STAIN_ANGLE:
        raise StainEstimationDegenerate("extreme-angle stain directions coincide")

    if v_lo[2] >= v_hi[2]:  # hematoxylin-first ordering by blue OD component
        vectors = np.stack([v_lo, v_hi])
    else:
        vectors = np.stack([v_hi, v_lo])
    ceilings = np.percentile(stain_concentrations(od, vectors),
                             CONCENTRATION_PERCENTILE, axis=0)
    return StainProfile(vectors, ceilings)


def normalize_stains(image, source, target, floor=1):
    """Remap an image from a source stain profile onto a target profile.

    Each pixel's OD vector is decomposed into source-stain concentrations,
    rescaled by the target/source concentration ceilings, and recomposed
    with the target stain vectors.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) RGB raster")
    h, w, _ = image.shape
    od = rgb_to_od(image, floor=floor).reshape(-1, 3)
    concentrations = stain_concentrations(od, source.stain_vectors)
    scale = np.divide(target.max_concentrations, source.max_concentrations,
                      out=np.ones(2), where=source.max_concentrations > 0.0)
    od_out = (concentrations * scale) @ target.stain_vectors
    return od_to_rgb(od_out).reshape(h, w, 3)


def mean_normalize(image):
    """Subtract the per-channel mean; returns a float raster."""
    pixels = np.asarray(image, dtype=np.float64)
    if pixels.size == 0:
        raise ValueError("empty image")
    return pixels - pixels.mean(axis=(0, 1), keepdims=True)
