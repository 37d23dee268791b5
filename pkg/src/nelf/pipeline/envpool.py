"""Procedural environment-map pool for dataset generation.

Every map is normalized so the brightest possible unshadowed Lambertian
response (max over normals of irradiance / pi) hits a chosen peak, which keeps
rendered images of unit-albedo surfaces inside [0, 1].
"""

from __future__ import annotations

import numpy as np

from ..envmap import EnvironmentMap, grid_directions, solid_angles


def lambert_peak(radiance: np.ndarray) -> float:
    """max over surface normals of (irradiance / pi), channel-maxed."""
    h, w = radiance.shape[:2]
    dirs = grid_directions(h, w).reshape(-1, 3)
    dw = np.repeat(solid_angles(h, w), w)
    # Probe a modest set of normals; the maximizer is smooth in the normal.
    probes = grid_directions(16, 32).reshape(-1, 3)
    cos = np.clip(probes @ dirs.T, 0.0, None) * dw
    irr = cos @ radiance.reshape(-1, 3)  # (P, 3)
    return float(irr.max() / np.pi)


def _normalized(radiance: np.ndarray, peak: float = 0.85) -> EnvironmentMap:
    p = lambert_peak(radiance)
    scale = peak / p if p > 0 else 1.0
    return EnvironmentMap(radiance * scale)


def _smooth_random(dims: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    """Low-frequency noise: random 2x4 control grid, bilinearly upsampled."""
    h, w = dims
    coarse = rng.random((2, 4, 3)) + 0.1
    rows = np.linspace(0, 1, h)[:, None]
    cols = np.linspace(0, 4, w, endpoint=False)[None, :]
    c0 = np.floor(cols).astype(int) % 4
    c1 = (c0 + 1) % 4
    fc = cols - np.floor(cols)
    top = coarse[0][c0] * (1 - fc[..., None]) + coarse[0][c1] * fc[..., None]
    bot = coarse[1][c0] * (1 - fc[..., None]) + coarse[1][c1] * fc[..., None]
    return top * (1 - rows[..., None]) + bot * rows[..., None]


def make_env_pool(
    dims: tuple[int, int] = (8, 16), seed: int = 0, peak: float = 0.85
) -> list[EnvironmentMap]:
    """At least eight procedural maps: constants, single texels, gradients,
    split hemispheres and seeded smooth noise."""
    h, w = dims
    rng = np.random.default_rng([seed, 77])
    pool: list[np.ndarray] = []
    pool.append(np.ones((h, w, 3)))
    pool.append(np.tile(np.array([1.0, 0.62, 0.38]), (h, w, 1)))
    single = np.zeros((h, w, 3))
    single[1, w // 4] = [1.0, 1.0, 0.9]
    pool.append(single)
    single2 = np.zeros((h, w, 3))
    single2[2, 3 * w // 4] = [0.6, 0.8, 1.0]
    single2[1, w // 2] = [1.0, 0.9, 0.7]
    pool.append(single2)
    vert = np.linspace(1.0, 0.05, h)[:, None, None] * np.ones((h, w, 3))
    pool.append(vert)
    horiz = (0.15 + 0.85 * (np.cos(2 * np.pi * np.arange(w) / w) * 0.5 + 0.5))[
        None, :, None
    ] * np.ones((h, w, 3))
    pool.append(horiz)
    sky = np.where(
        (np.arange(h) < h // 2)[:, None, None],
        np.array([0.5, 0.65, 1.0]),
        np.array([0.25, 0.2, 0.15]),
    ) * np.ones((h, w, 3))
    pool.append(sky)
    duo = np.ones((h, w, 3)) * 0.15
    duo[:, : w // 2] += np.array([0.9, 0.45, 0.1])
    duo[:, w // 2 :] += np.array([0.1, 0.45, 0.9])
    pool.append(duo)
    pool.append(_smooth_random(dims, rng))
    pool.append(_smooth_random(dims, rng))
    return [_normalized(p, peak) for p in pool]
