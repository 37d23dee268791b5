"""Ground-truth light transport on analytic scenes.

Two deliberately separate code paths compute the same physics:

* :func:`bake_point_transport` / :func:`bake_transport_image` assemble
  per-point transport vectors (visibility x BRDF x cosine x solid angle per
  texel, solid angle folded in) that relight via a dot product.
* :func:`reference_render` accumulates radiance directly against a concrete
  environment map without ever building a transport vector. It is the oracle
  the baked path is checked against.

Source lighting is recovered from observed images by per-view nonnegative
least squares on the baked transport (projected gradient descent), merged
across views in the world frame with responsivity confidences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import io as nio
from .envmap import (
    ConfidenceMap,
    EnvironmentMap,
    MergeCoverage,
    RotationOp,
    TransportVector,
    grid_directions,
    merge,
    rotation_operator_matrix,
    solid_angles,
)
from .scene import AnalyticScene, Camera, Sphere, generate_rays, intersect_batch, _pixel_grid

_SHADOW_EPS = 1e-6


@dataclass(frozen=True)
class SurfaceTransportImage:
    """Per-pixel transport vectors at the first surface hit of each camera ray."""

    present: np.ndarray  # (H, W) bool
    coefficients: np.ndarray  # (H, W, eh, ew, 3)

    @property
    def image_shape(self) -> tuple[int, int]:
        return self.present.shape

    @property
    def env_dims(self) -> tuple[int, int]:
        return self.coefficients.shape[2:4]

    def vector_at(self, row: int, col: int) -> TransportVector | None:
        if not self.present[row, col]:
            return None
        return TransportVector(self.coefficients[row, col])

    def save(self, path) -> None:
        nio.write_transport(path, self.present, self.coefficients)

    @classmethod
    def load(cls, path) -> "SurfaceTransportImage":
        present, coeff = nio.read_transport(path)
        return cls(present=present, coefficients=coeff)


@dataclass(frozen=True)
class LightEstimate:
    """One view's recovered lighting, expressed in that camera's frame."""

    env: EnvironmentMap
    confidence: ConfidenceMap
    residual: float


@dataclass(frozen=True)
class LightSolve:
    global_env: EnvironmentMap
    per_view: list
    coverage: MergeCoverage


def visibility(scene: AnalyticScene, points: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """True where the open ray point + t*dir (t > eps) reaches the environment."""
    o = points + _SHADOW_EPS * dirs
    _, pid = intersect_batch(scene, o, dirs, 1e-9, np.inf)
    return pid < 0


def phong_brdf(mat: Sphere, n: np.ndarray, w_i: np.ndarray, w_o: np.ndarray) -> np.ndarray:
    """Normalized-Phong BRDF values for incoming dirs (K, 3), one (n, w_o) pair.

    Diffuse albedo/pi plus ks * (e+2)/(2*pi) * cos^e around the mirror of w_o;
    the specular lobe is colorless. Returns (K, 3).
    """
    k = len(w_i)
    out = np.tile(mat.albedo / np.pi, (k, 1))
    if mat.ks > 0:
        r = 2.0 * (n @ w_o) * n - w_o
        lobe = np.clip(w_i @ r, 0.0, None) ** mat.exponent
        out = out + mat.ks * (mat.exponent + 2.0) / (2.0 * np.pi) * lobe[:, None]
    return out


def _cosine_hemisphere(n: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Cosine-weighted directions about n (pdf = cos/pi), shape (count, 3)."""
    u1, u2 = rng.random(count), rng.random(count)
    r = np.sqrt(u1)
    phi = 2.0 * np.pi * u2
    local = np.stack(
        [r * np.cos(phi), r * np.sin(phi), np.sqrt(np.clip(1.0 - u1, 0.0, None))], axis=1
    )
    a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t = np.cross(n, a)
    t /= np.linalg.norm(t)
    b = np.cross(n, t)
    return local[:, :1] * t + local[:, 1:2] * b + local[:, 2:3] * n


def _bounce_rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng([seed, tag])


def _one_bounce_transport(
    scene: AnalyticScene,
    x: np.ndarray,
    n: np.ndarray,
    mat: Sphere,
    w_o: np.ndarray,
    dirs_flat: np.ndarray,
    dw_flat: np.ndarray,
    samples: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Monte-Carlo one-bounce transport (K, 3); pdf-cancelled cosine sampling."""
    w_s = _cosine_hemisphere(n, samples, rng)
    o = np.broadcast_to(x + _SHADOW_EPS * n, w_s.shape)
    t, pid = intersect_batch(scene, o.copy(), w_s, 1e-9, np.inf)
    acc = np.zeros((len(dirs_flat), 3))
    f_x = phong_brdf(mat, n, w_s, w_o)  # (S, 3)
    for s_i in range(samples):
        if pid[s_i] < 0:
            continue
        prim = scene.primitives[int(pid[s_i])]
        y = o[s_i] + t[s_i] * w_s[s_i]
        n_y = (y - prim.center) / np.linalg.norm(y - prim.center)
        w_yx = -w_s[s_i]
        if n_y @ w_yx <= 0:
            continue
        cos_y = np.clip(dirs_flat @ n_y, 0.0, None)
        live = cos_y > 0
        vis = np.zeros(len(dirs_flat), dtype=bool)
        if np.any(live):
            vis[live] = visibility(
                scene, np.broadcast_to(y, (int(live.sum()), 3)).copy(), dirs_flat[live]
            )
        f_y = phong_brdf(prim, n_y, dirs_flat, w_yx)
        acc += (vis * cos_y * dw_flat)[:, None] * f_y * f_x[s_i]
    return acc * (np.pi / samples)


def bake_point_transport(
    scene: AnalyticScene,
    x,
    n,
    mat: Sphere,
    w_o,
    dims: tuple[int, int] = (8, 16),
    bounces: int = 0,
    samples: int = 16,
    seed: int = 0,
) -> tuple[TransportVector, bool]:
    """Transport vector at a surface point, plus a backfacing flag.

    Direct term per texel: visibility * BRDF * max(n . d, 0) * solid angle.
    With bounces=1 a seeded Monte-Carlo single-bounce term is added.
    """
    x = np.asarray(x, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    w_o = np.asarray(w_o, dtype=np.float64)
    h, w = dims
    if n @ w_o <= 0:
        return TransportVector.zeros(dims), True
    dirs = grid_directions(h, w).reshape(-1, 3)
    dw = np.repeat(solid_angles(h, w), w)
    cos = np.clip(dirs @ n, 0.0, None)
    vis = np.zeros(len(dirs), dtype=bool)
    lit = cos > 0
    if np.any(lit):
        vis[lit] = visibility(scene, np.broadcast_to(x, (int(lit.sum()), 3)).copy(), dirs[lit])
    f = phong_brdf(mat, n, dirs, w_o)
    coeff = (vis * cos * dw)[:, None] * f
    if bounces >= 1:
        coeff = coeff + _one_bounce_transport(
            scene, x, n, mat, w_o, dirs, dw, samples, _bounce_rng(seed, 0)
        )
    return TransportVector(coeff.reshape(h, w, 3)), False


def _first_hits(scene: AnalyticScene, cam: Camera):
    pix = _pixel_grid(cam)
    o, d = generate_rays(cam, pix)
    t, pid = intersect_batch(scene, o, d, 1e-6, np.inf)
    hit = pid >= 0
    points = o[hit] + t[hit, None] * d[hit]
    centers = np.array([s.center for s in scene.primitives]) if scene.primitives else np.zeros((0, 3))
    normals = points - centers[pid[hit]]
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return hit, points, normals, pid[hit], -d[hit]


def bake_transport_image(
    scene: AnalyticScene,
    cam: Camera,
    dims: tuple[int, int] = (8, 16),
    bounces: int = 0,
    samples: int = 16,
    seed: int = 0,
) -> SurfaceTransportImage:
    """Bake transport at every first hit, outgoing direction toward the camera."""
    h, w = dims
    hit, points, normals, pids, w_os = _first_hits(scene, cam)
    coeff = np.zeros((cam.height, cam.width, h, w, 3))
    dirs = grid_directions(h, w).reshape(-1, 3)
    dw = np.repeat(solid_angles(h, w), w)
    flat_idx = np.flatnonzero(hit)
    if len(points):
        # Direct term, vectorized over hit pixels with texels innermost.
        cos = np.clip(normals @ dirs.T, 0.0, None)  # (P, K)
        p_rep = np.repeat(points, len(dirs), axis=0)
        d_rep = np.tile(dirs, (len(points), 1))
        lit = cos.reshape(-1) > 0
        v_flat = np.zeros(len(p_rep), dtype=bool)
        if np.any(lit):
            v_flat[lit] = visibility(scene, p_rep[lit] + 0.0, d_rep[lit])
        vis = v_flat.reshape(cos.shape)
        albedo = np.array([s.albedo for s in scene.primitives])[pids]  # (P, 3)
        base = (vis * cos * dw[None, :])[:, :, None]  # (P, K, 1)
        diffuse = base * (albedo[:, None, :] / np.pi)
        out = diffuse
        ks = np.array([s.ks for s in scene.primitives])[pids]
        if np.any(ks > 0):
            expo = np.array([s.exponent for s in scene.primitives])[pids]
            r = 2.0 * np.einsum("ij,ij->i", normals, w_os)[:, None] * normals - w_os
            lobe = np.clip(np.einsum("pj,kj->pk", r, dirs), 0.0, None) ** expo[:, None]
            spec = (ks * (expo + 2.0) / (2.0 * np.pi))[:, None] * lobe
            out = out + base * spec[:, :, None]
        if bounces >= 1:
            for i in range(len(points)):
                out[i] += _one_bounce_transport(
                    scene,
                    points[i],
                    normals[i],
                    scene.primitives[int(pids[i])],
                    w_os[i],
                    dirs,
                    dw,
                    samples,
                    _bounce_rng(seed, int(flat_idx[i])),
                )
        coeff.reshape(-1, h, w, 3)[flat_idx] = out.reshape(-1, h, w, 3)
    return SurfaceTransportImage(
        present=hit.reshape(cam.height, cam.width), coefficients=coeff
    )


def reference_render(
    scene: AnalyticScene,
    cam: Camera,
    env: EnvironmentMap,
    bounces: int = 0,
    samples: int = 16,
    seed: int = 0,
) -> np.ndarray:
    """Direct per-pixel radiance under a concrete map; never builds transport.

    Loops environment texels in the outer loop and accumulates
    visibility * BRDF * cosine * solid angle * radiance across all hit pixels,
    which keeps the arithmetic independent of the baking path it oracles.
    """
    hit, points, normals, pids, w_os = _first_hits(scene, cam)
    img = np.zeros((cam.height * cam.width, 3))
    if len(points) == 0:
        return img.reshape(cam.height, cam.width, 3)
    h, w = env.dims
    dw = solid_angles(h, w)
    albedo = np.array([s.albedo for s in scene.primitives])[pids]
    ks = np.array([s.ks for s in scene.primitives])[pids]
    expo = np.array([s.exponent for s in scene.primitives])[pids]
    mirror = 2.0 * np.einsum("ij,ij->i", normals, w_os)[:, None] * normals - w_os
    acc = np.zeros((len(points), 3))
    for r in range(h):
        for c in range(w):
            radiance = env.radiance[r, c]
            if not np.any(radiance > 0):
                continue
            d = grid_directions(h, w)[r, c]
            cos = np.clip(normals @ d, 0.0, None)
            lit = cos > 0
            if not np.any(lit):
                continue
            vis = np.zeros(len(points), dtype=bool)
            vis[lit] = visibility(
                scene, points[lit], np.broadcast_to(d, (int(lit.sum()), 3)).copy()
            )
            f = albedo / np.pi
            term = (vis * cos * dw[r])[:, None] * f
            if np.any(ks > 0):
                lobe = np.clip(mirror @ d, 0.0, None) ** expo
                term = term + ((vis * cos * dw[r]) * ks * (expo + 2.0) / (2.0 * np.pi) * lobe)[
                    :, None
                ]
            acc += term * radiance
    if bounces >= 1:
        dirs = grid_directions(h, w).reshape(-1, 3)
        dwf = np.repeat(dw, w)
        flat_idx = np.flatnonzero(hit)
        for i in range(len(points)):
            tb = _one_bounce_transport(
                scene,
                points[i],
                normals[i],
                scene.primitives[int(pids[i])],
                w_os[i],
                dirs,
                dwf,
                samples,
                _bounce_rng(seed, int(flat_idx[i])),
            )
            acc[i] += np.einsum("kc,kc->c", tb, env.radiance.reshape(-1, 3))
    img[hit] = acc
    return img.reshape(cam.height, cam.width, 3)


def relight_image(timg: SurfaceTransportImage, env: EnvironmentMap) -> np.ndarray:
    """Relight every present pixel of a baked transport image."""
    eh, ew = timg.env_dims
    if (eh, ew) != env.dims:
        raise ValueError("transport/envmap dimension mismatch")
    flat = timg.coefficients.reshape(*timg.image_shape, eh * ew, 3)
    img = np.einsum("xykc,kc->xyc", flat, env.radiance.reshape(-1, 3))
    img[~timg.present] = 0.0
    return img


def transport_to_camera_frame(
    timg: SurfaceTransportImage, cam_to_world: RotationOp
) -> SurfaceTransportImage:
    """Re-express world-frame transport in a camera frame.

    Uses the adjoint of the bilinear rotation operator, so for every map
    relight(T_cam, L_cam) == relight(T_world, rotate(L_cam, cam_to_world))
    up to floating point.
    """
    eh, ew = timg.env_dims
    m = rotation_operator_matrix(cam_to_world, eh, ew)
    flat = timg.coefficients.reshape(-1, eh * ew, 3)
    rotated = np.einsum("pkc,kl->plc", flat, m)
    return SurfaceTransportImage(
        present=timg.present,
        coefficients=np.clip(rotated, 0.0, None).reshape(timg.coefficients.shape),
    )


# ---------------------------------------------------------------------------
# Source-light estimation (nonnegative least squares by projected gradient)

_PGD_ITERS = 500
_POWER_ITERS = 30


def _nnls_pgd(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, float]:
    """min_{x >= 0} ||a @ x - b||^2 via fixed-iteration projected gradient.

    Step size is the inverse of a power-iteration Lipschitz estimate.
    """
    ata = a.T @ a
    atb = a.T @ b
    v = np.ones(ata.shape[0]) / np.sqrt(ata.shape[0])
    for _ in range(_POWER_ITERS):
        nv = ata @ v
        nrm = np.linalg.norm(nv)
        if nrm < 1e-30:
            break
        v = nv / nrm
    lip = float(v @ (ata @ v))
    if lip < 1e-30:
        return np.zeros(ata.shape[0]), float(b @ b)
    step = 1.0 / (lip * 1.0001)
    x = np.zeros(ata.shape[0])
    for _ in range(_PGD_ITERS):
        x = np.clip(x - step * (ata @ x - atb), 0.0, None)
    r = a @ x - b
    return x, float(r @ r)


def estimate_view_light(
    image: np.ndarray, timg: SurfaceTransportImage, dims: tuple[int, int]
) -> LightEstimate:
    """Recover one view's lighting from its image and camera-frame transport."""
    eh, ew = dims
    if timg.env_dims != dims:
        raise ValueError("transport dims do not match requested envmap dims")
    mask = timg.present
    if not np.any(mask):
        raise ValueError("view has no valid transport pixels")
    t = timg.coefficients[mask].reshape(-1, eh * ew, 3)
    obs = image[mask]
    env = np.zeros((eh * ew, 3))
    residual = 0.0
    for ch in range(3):
        env[:, ch], r2 = _nnls_pgd(t[:, :, ch], obs[:, ch])
        residual += r2
    conf = t.sum(axis=(0, 2)).reshape(eh, ew)
    return LightEstimate(
        env=EnvironmentMap(env.reshape(eh, ew, 3)),
        confidence=ConfidenceMap(conf),
        residual=residual,
    )


def estimate_light(
    views: list[tuple[np.ndarray, SurfaceTransportImage, Camera]],
    dims: tuple[int, int] = (8, 16),
) -> LightSolve:
    """Per-view camera-frame light recovery merged into a world-frame map.

    Each view's transport must already be expressed in its camera frame; the
    merge rotates estimates (and confidences) to world with the camera's
    camera-to-world rotation.
    """
    if not views:
        raise ValueError("estimate_light requires at least one view")
    per_view = []
    entries = []
    for image, timg, cam in views:
        est = estimate_view_light(image, timg, dims)
        per_view.append(est)
        entries.append((est.env, est.confidence, RotationOp(cam.rotation.T)))
    global_env, coverage = merge(entries)
    return LightSolve(global_env=global_env, per_view=per_view, coverage=coverage)


def estimate_scene_light(
    scene: AnalyticScene,
    views: list[tuple[np.ndarray, Camera]],
    dims: tuple[int, int] = (8, 16),
    bounces: int = 0,
    samples: int = 16,
    seed: int = 0,
) -> LightSolve:
    """Convenience wrapper: bake world transport per view, move it to each
    camera frame, then run :func:`estimate_light`."""
    prepared = []
    for image, cam in views:
        world = bake_transport_image(scene, cam, dims, bounces, samples, seed)
        cam_frame = transport_to_camera_frame(world, RotationOp(cam.rotation.T))
        prepared.append((image, cam_frame, cam))
    return estimate_light(prepared, dims)
