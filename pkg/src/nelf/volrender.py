"""Differentiable volumetric ray marching with visual-hull pruning.

Discretization: sample depths u_i partition [near, far) at bin left edges
(optionally jittered within bins), delta_i = u_{i+1} - u_i with the last delta
reaching far, alpha_i = 1 - exp(-sigma_i * delta_i), transmittance
T_i = prod_{j<i} (1 - alpha_j), and

    rgb   = sum_i T_i alpha_i c_i
    depth = sum_i T_i alpha_i u_i
    alpha = sum_i T_i alpha_i

:func:`composite_backward` is the exact reverse-mode gradient of this
composite; it is what the training tape records for the march step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scene import Camera, Mask, Ray, project_batch


class FieldNumericsError(RuntimeError):
    """The field produced NaN/inf; propagated, never silently clamped."""


@dataclass(frozen=True)
class MarchConfig:
    n_samples: int = 64
    stratified: bool = False
    near: float = 0.5
    far: float = 2.5
    hull_enabled: bool = True
    hull_dilation: int = 1  # pixels, used when a hull is supplied
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("need at least 2 samples per ray")
        if not self.near < self.far:
            raise ValueError("require near < far")


@dataclass(frozen=True)
class RenderOutput:
    rgb: np.ndarray  # (3,)
    depth: float
    alpha: float
    transparent: bool  # alpha <= 1e-6; depth reported as 0


@dataclass
class QueryStats:
    n_samples: int = 0
    n_queried: int = 0

    @property
    def pruned_fraction(self) -> float:
        return 0.0 if self.n_samples == 0 else 1.0 - self.n_queried / self.n_samples


def _dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0:
        return mask.astype(bool)
    out = mask.astype(bool)
    for _ in range(radius):
        grown = out.copy()
        grown[1:, :] |= out[:-1, :]
        grown[:-1, :] |= out[1:, :]
        grown[:, 1:] |= out[:, :-1]
        grown[:, :-1] |= out[:, 1:]
        out = grown
    return out


class VisualHull:
    """Silhouette intersection test over a set of posed masks.

    A point passes only if it projects in front of every camera, inside every
    frame, onto a nonzero (optionally dilated) mask pixel.
    """

    def __init__(self, masks: list[Mask], cameras: list[Camera], dilation: int = 0):
        if len(masks) != len(cameras):
            raise ValueError("masks and cameras must align by index")
        self.cameras = list(cameras)
        self.lookup = [_dilate(m.values, dilation) for m in masks]

    def contains(self, points: np.ndarray) -> np.ndarray:
        ok = np.ones(len(points), dtype=bool)
        for cam, mask in zip(self.cameras, self.lookup):
            pix, _, valid = project_batch(cam, points)
            u = np.rint(pix[:, 0]).astype(np.int64)
            v = np.rint(pix[:, 1]).astype(np.int64)
            inside = valid & (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
            hit = np.zeros(len(points), dtype=bool)
            hit[inside] = mask[v[inside], u[inside]]
            ok &= hit
            if not ok.any():
                break
        return ok


def hull_test(x, masks: list[Mask], cameras: list[Camera]) -> bool:
    """True iff the point projects onto a nonzero mask pixel in every view."""
    hull = VisualHull(masks, cameras, dilation=0)
    return bool(hull.contains(np.asarray(x, dtype=np.float64)[None])[0])


def sample_depths(
    near: float,
    far: float,
    n_samples: int,
    stratified: bool = False,
    rng: np.random.Generator | None = None,
    n_rays: int = 1,
) -> np.ndarray:
    """(n_rays, n_samples) depths at bin left edges, jittered when stratified."""
    width = (far - near) / n_samples
    base = near + width * np.arange(n_samples)
    depths = np.tile(base, (n_rays, 1))
    if stratified:
        if rng is None:
            rng = np.random.default_rng(0)
        depths = depths + width * rng.random((n_rays, n_samples))
    return depths


def composite(
    sigma: np.ndarray, radiance: np.ndarray, depths: np.ndarray, far: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict]:
    """Alpha-composite a batch of rays.

    sigma (R, S) nonnegative, radiance (R, S, 3), depths (R, S), far (R,).
    Returns rgb (R, 3), depth (R,), alpha (R,) and the saved tensors needed
    by :func:`composite_backward`.
    """
    if np.any(sigma < 0):
        raise ValueError("negative density violates the field contract")
    if not (np.all(np.isfinite(sigma)) and np.all(np.isfinite(radiance))):
        raise FieldNumericsError("field returned non-finite density or radiance")
    delta = np.empty_like(depths)
    delta[:, :-1] = depths[:, 1:] - depths[:, :-1]
    delta[:, -1] = far - depths[:, -1]
    att = np.exp(-sigma * delta)
    alpha_i = 1.0 - att
    trans = np.cumprod(np.concatenate([np.ones_like(att[:, :1]), att[:, :-1]], axis=1), axis=1)
    weights = trans * alpha_i  # (R, S)
    rgb = np.einsum("rs,rsc->rc", weights, radiance)
    depth = np.einsum("rs,rs->r", weights, depths)
    alpha = weights.sum(axis=1)
    saved = {
        "delta": delta,
        "att": att,
        "trans": trans,
        "weights": weights,
        "depths": depths,
        "radiance": radiance,
    }
    return rgb, depth, alpha, saved


def composite_backward(
    saved: dict, g_rgb: np.ndarray, g_depth: np.ndarray, g_alpha: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradients of (rgb, depth, alpha) w.r.t. (sigma, radiance).

    d w_i / d alpha_i = T_i and d T_k / d alpha_i = -T_k / (1 - alpha_i) for
    k > i; the 1/(1-alpha) cancels against d alpha_i / d sigma_i, leaving the
    numerically safe form below.
    """
    weights, trans, att = saved["weights"], saved["trans"], saved["att"]
    delta, depths, radiance = saved["delta"], saved["depths"], saved["radiance"]
    g_w = (
        np.einsum("rc,rsc->rs", g_rgb, radiance)
        + g_depth[:, None] * depths
        + g_alpha[:, None]
    )
    gw_w = g_w * weights
    suffix = np.cumsum(gw_w[:, ::-1], axis=1)[:, ::-1] - gw_w
    g_sigma = delta * (g_w * trans * att - suffix)
    g_radiance = weights[:, :, None] * g_rgb[:, None, :]
    return g_sigma, g_radiance


def march_rays(
    origins: np.ndarray,
    dirs: np.ndarray,
    nears: np.ndarray,
    fars: np.ndarray,
    field_query,
    cfg: MarchConfig,
    hull: VisualHull | None = None,
    stats: QueryStats | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Forward-only batched march.

    field_query(points (P, 3), toward_camera (P, 3)) -> (sigma (P,), rgb (P, 3)).
    Hull-pruned samples are never passed to field_query.
    """
    n_rays = len(origins)
    s = cfg.n_samples
    width = (fars - nears) / s
    depths = nears[:, None] + width[:, None] * np.arange(s)[None, :]
    if cfg.stratified:
        jitter = np.random.default_rng([cfg.seed, n_rays]).random((n_rays, s))
        depths = depths + width[:, None] * jitter
    pts = origins[:, None, :] + depths[:, :, None] * dirs[:, None, :]
    flat = pts.reshape(-1, 3)
    toward_cam = np.repeat(-dirs, s, axis=0)
    keep = (
        hull.contains(flat)
        if (hull is not None and cfg.hull_enabled)
        else np.ones(len(flat), dtype=bool)
    )
    if stats is not None:
        stats.n_samples += len(flat)
        stats.n_queried += int(keep.sum())
    sigma = np.zeros(len(flat))
    radiance = np.zeros((len(flat), 3))
    if np.any(keep):
        sg, rd = field_query(flat[keep], toward_cam[keep])
        sigma[keep] = sg
        radiance[keep] = rd
    rgb, depth, alpha, _ = composite(
        sigma.reshape(n_rays, s), radiance.reshape(n_rays, s, 3), depths, fars
    )
    return rgb, depth, alpha


def march(
    ray: Ray,
    field_query,
    cfg: MarchConfig,
    hull: VisualHull | tuple | None = None,
    stats: QueryStats | None = None,
) -> RenderOutput:
    """March a single ray; bounds come from the ray itself.

    ``hull`` may be a prebuilt :class:`VisualHull` or a (masks, cameras) pair.
    """
    if isinstance(hull, tuple):
        hull = VisualHull(list(hull[0]), list(hull[1]), dilation=cfg.hull_dilation)
    rgb, depth, alpha = march_rays(
        ray.origin[None],
        ray.direction[None],
        np.array([ray.near]),
        np.array([ray.far]),
        field_query,
        cfg,
        hull,
        stats,
    )
    a = float(alpha[0])
    transparent = a <= 1e-6
    return RenderOutput(
        rgb=rgb[0],
        depth=0.0 if transparent else float(depth[0]),
        alpha=a,
        transparent=transparent,
    )


def march_backward(
    ray: Ray,
    field_query,
    cfg: MarchConfig,
    g_rgb: np.ndarray,
    g_depth: float,
    g_alpha: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the march outputs w.r.t. every per-sample (sigma_i, c_i)."""
    s = cfg.n_samples
    depths = sample_depths(
        ray.near, ray.far, s, cfg.stratified,
        np.random.default_rng([cfg.seed, 0]) if cfg.stratified else None,
    )
    pts = ray.origin[None] + depths.reshape(-1, 1) * ray.direction[None]
    sigma, radiance = field_query(pts, np.broadcast_to(-ray.direction, pts.shape).copy())
    _, _, _, saved = composite(
        sigma.reshape(1, s), radiance.reshape(1, s, 3), depths.reshape(1, s),
        np.array([ray.far]),
    )
    g_sigma, g_radiance = composite_backward(
        saved, np.asarray(g_rgb, dtype=np.float64)[None],
        np.array([g_depth]), np.array([g_alpha]),
    )
    return g_sigma[0], g_radiance[0]
