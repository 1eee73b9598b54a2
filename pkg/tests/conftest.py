"""Shared synthetic-data helpers for the test suite."""

import numpy as np
import pytest


def he_stain_matrix():
    """Classic H&E reference stain vectors, row-normalized to unit length."""
    stains = np.array([[0.5626, 0.7201, 0.4062],
                       [0.2159, 0.8012, 0.5581]])
    return stains / np.linalg.norm(stains, axis=1, keepdims=True)


def random_stain_pair(rng, min_angle_deg=15.0, max_angle_deg=70.0):
    """Two random nonnegative unit OD vectors with a workable separation."""
    while True:
        a = rng.uniform(0.05, 1.0, 3)
        b = rng.uniform(0.05, 1.0, 3)
        a /= np.linalg.norm(a)
        b /= np.linalg.norm(b)
        angle = np.degrees(np.arccos(np.clip(a @ b, -1.0, 1.0)))
        if min_angle_deg <= angle <= max_angle_deg:
            return np.stack([a, b])


def beer_lambert_image(stains, concentrations, shape):
    """Forward model I = 255 * exp(-c @ S), quantized to uint8."""
    od = np.asarray(concentrations, dtype=np.float64) @ np.asarray(stains)
    intensity = np.clip(np.rint(255.0 * np.exp(-od)), 0, 255).astype(np.uint8)
    return intensity.reshape(shape[0], shape[1], 3)


def two_stain_concentrations(rng, n_pixels, lo=0.3, hi=1.0, pure_fraction=0.1):
    """Random per-pixel concentrations with pure-stain pixels at both extremes."""
    conc = np.stack([rng.uniform(lo, hi, n_pixels),
                     rng.uniform(lo, hi, n_pixels)], axis=1)
    pure = rng.random(n_pixels)
    conc[pure < pure_fraction, 1] = 0.0
    conc[pure > 1.0 - pure_fraction, 0] = 0.0
    return conc


def smooth_field(rng, shape, lo, hi, coarse=9):
    """Smooth random scalar field: coarse uniform grid, bilinearly upsampled."""
    grid = rng.uniform(lo, hi, size=(coarse, coarse))
    ys = np.linspace(0.0, coarse - 1.0, shape[0])
    xs = np.linspace(0.0, coarse - 1.0, shape[1])
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, coarse - 1)
    x1 = np.minimum(x0 + 1, coarse - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    return (grid[np.ix_(y0, x0)] * (1 - fy) * (1 - fx)
            + grid[np.ix_(y0, x1)] * (1 - fy) * fx
            + grid[np.ix_(y1, x0)] * fy * (1 - fx)
            + grid[np.ix_(y1, x1)] * fy * fx)


def textured_he_image(rng, height=96, width=96, cmax=0.35):
    """Lightly stained H&E-like raster with smooth spatial texture.

    Returns (image, stains, concentrations); concentrations are capped so
    quantization noise stays below one intensity level through an
    identity stain normalization.
    """
    stains = he_stain_matrix()
    conc = np.stack([smooth_field(rng, (height, width), 0.05, cmax).ravel(),
                     smooth_field(rng, (height, width), 0.05, cmax).ravel()],
                    axis=1)
    return beer_lambert_image(stains, conc, (height, width)), stains, conc


def stain_angle_errors_deg(estimated, truth):
    """Best one-to-one angular errors (degrees) between two vector pairs."""
    cosines = np.clip(estimated @ truth.T, -1.0, 1.0)
    angles = np.degrees(np.arccos(cosines))
    return min(max(angles[0, 0], angles[1, 1]), max(angles[0, 1], angles[1, 0]))


def max_matching_bruteforce(dist, radius):
    """Exhaustive-enumeration maximum matching size on a thresholded graph."""
    n, m = dist.shape
    best = 0

    def recurse(i, used, count):
        nonlocal best
        best = max(best, count)
        if i == n or count + (n - i) <= best:
            return
        recurse(i + 1, used, count)
        for j in range(m):
            if not used & (1 << j) and dist[i, j] <= radius:
                recurse(i + 1, used | (1 << j), count + 1)

    recurse(0, 0, 0)
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
