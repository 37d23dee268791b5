"""Analytic sphere scenes, pinhole cameras, rays and ground-truth geometry.

Camera convention: ``x_cam = R @ x_world + t`` with the camera looking along
+Z, image x right and image y down. Continuous pixel coordinates put the
center of pixel (i, j) at exactly (i, j); a symmetric W x H sensor therefore
has its principal point at ((W - 1) / 2, (H - 1) / 2). Projection and ray
generation are exact inverses of each other under this convention.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

_BEHIND_EPS = 1e-6
_GRAZE_EPS = 1e-12


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray  # (3,) meters
    radius: float
    albedo: np.ndarray  # (3,) in [0, 1]
    ks: float = 0.0
    exponent: float = 16.0

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64)
        a = np.asarray(self.albedo, dtype=np.float64)
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")
        if np.any(a < 0) or np.any(a > 1):
            raise ValueError("albedo components must lie in [0, 1]")
        if not 0 <= self.ks <= 1:
            raise ValueError("ks must lie in [0, 1]")
        if self.exponent < 1:
            raise ValueError("phong exponent must be >= 1")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "albedo", a)


@dataclass(frozen=True)
class AnalyticScene:
    primitives: tuple
    density_scale: float = 200.0  # m^-1, hard indicator density

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))

    def bounds(self) -> tuple[np.ndarray, float]:
        """Center and radius of a bounding sphere of all primitives."""
        if not self.primitives:
            return np.zeros(3), 0.0
        centers = np.array([s.center for s in self.primitives])
        radii = np.array([s.radius for s in self.primitives])
        mid = centers.mean(axis=0)
        return mid, float(np.max(np.linalg.norm(centers - mid, axis=1) + radii))


@dataclass(frozen=True)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray  # (3, 3) world -> camera
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9):
            raise ValueError("camera rotation must be orthonormal")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def forward(self) -> np.ndarray:
        """World-space viewing direction (+Z of the camera frame)."""
        return self.rotation[2]


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray  # unit
    near: float
    far: float

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64)
        d = np.asarray(self.direction, dtype=np.float64)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("ray direction must be unit length")
        if not 0 <= self.near < self.far:
            raise ValueError("require 0 <= near < far")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass(frozen=True)
class Mask:
    values: np.ndarray  # (H, W) in {0, 1}

    def __post_init__(self):
        v = np.asarray(self.values)
        if not np.all((v == 0) | (v == 1)):
            raise ValueError("mask values must be binary")
        object.__setattr__(self, "values", v.astype(np.uint8))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def area(self) -> int:
        return int(self.values.sum())


@dataclass(frozen=True)
class Hit:
    point: np.ndarray
    normal: np.ndarray  # outward unit
    primitive_id: int
    t: float


def look_at(eye, target, width: int, height: int, fx: float, fy: float | None = None) -> Camera:
    """Camera at ``eye`` looking at ``target``, world +Y up, y-down image."""
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z = z / np.linalg.norm(z)
    up = np.array([0.0, 1.0, 0.0])
    x = np.cross(z, up)
    nx = np.linalg.norm(x)
    if nx < 1e-9:
        raise ValueError("viewing direction parallel to the up axis")
    x = x / nx
    y = np.cross(z, x)
    r = np.stack([x, y, z])
    return Camera(
        fx=fx,
        fy=fx if fy is None else fy,
        cx=(width - 1) / 2.0,
        cy=(height - 1) / 2.0,
        width=width,
        height=height,
        rotation=r,
        translation=-r @ eye,
    )


# ---------------------------------------------------------------------------
# Projection and rays


def project(cam: Camera, x) -> tuple[np.ndarray, float] | None:
    """Pinhole projection to continuous pixel coordinates plus camera depth.

    Returns None when the point is at or behind the camera plane.
    """
    xc = cam.rotation @ np.asarray(x, dtype=np.float64) + cam.translation
    if xc[2] <= _BEHIND_EPS:
        return None
    pix = np.array([cam.fx * xc[0] / xc[2] + cam.cx, cam.fy * xc[1] / xc[2] + cam.cy])
    return pix, float(xc[2])


def project_batch(cam: Camera, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vector form of :func:`project`: (pixels (P, 2), depth (P,), valid (P,))."""
    xc = xs @ cam.rotation.T + cam.translation
    z = xc[:, 2]
    valid = z > _BEHIND_EPS
    zs = np.where(valid, z, 1.0)
    pix = np.stack(
        [cam.fx * xc[:, 0] / zs + cam.cx, cam.fy * xc[:, 1] / zs + cam.cy], axis=1
    )
    return pix, z, valid


def in_frame(cam: Camera, pix: np.ndarray) -> np.ndarray:
    """True where continuous pixel coords land inside the sensor rectangle."""
    u, v = pix[..., 0], pix[..., 1]
    return (u >= -0.5) & (u <= cam.width - 0.5) & (v >= -0.5) & (v <= cam.height - 0.5)


def generate_ray(cam: Camera, pixel, near: float = 1e-3, far: float = 1e3) -> Ray:
    """World-space ray through a continuous pixel coordinate."""
    u, v = float(pixel[0]), float(pixel[1])
    if not (-0.5 <= u <= cam.width - 0.5 and -0.5 <= v <= cam.height - 0.5):
        raise ValueError(f"pixel ({u}, {v}) outside image bounds")
    d_cam = np.array([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0])
    d = cam.rotation.T @ d_cam
    return Ray(cam.center, d / np.linalg.norm(d), near, far)


def generate_rays(cam: Camera, pixels: np.ndarray):
    """Batched ray origins/directions for (P, 2) continuous pixel coords."""
    d_cam = np.stack(
        [
            (pixels[:, 0] - cam.cx) / cam.fx,
            (pixels[:, 1] - cam.cy) / cam.fy,
            np.ones(len(pixels)),
        ],
        axis=1,
    )
    d = d_cam @ cam.rotation
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    o = np.broadcast_to(cam.center, d.shape).copy()
    return o, d


# ---------------------------------------------------------------------------
# Intersection and density


def intersect_batch(
    scene: AnalyticScene,
    origins: np.ndarray,
    dirs: np.ndarray,
    near: float | np.ndarray,
    far: float | np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-hit parameters for a ray bundle.

    Returns (t (P,), primitive id (P,)); id is -1 where nothing is hit.
    Ties at equal t go to the lowest primitive id; a tangential ray with
    discriminant below 1e-12 counts as a miss.
    """
    n = len(origins)
    best_t = np.full(n, np.inf)
    best_id = np.full(n, -1, dtype=np.int64)
    for pid, s in enumerate(scene.primitives):
        oc = origins - s.center
        b = np.einsum("ij,ij->i", oc, dirs)
        c = np.einsum("ij,ij->i", oc, oc) - s.radius**2
        disc = b * b - c
        ok = disc >= _GRAZE_EPS
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t0 = -b - sq
        t1 = -b + sq
        t = np.where(t0 > near, t0, t1)
        ok &= (t > near) & (t < far)
        better = ok & (t < best_t)
        best_t[better] = t[better]
        best_id[better] = pid
    return best_t, best_id


def intersect(scene: AnalyticScene, ray: Ray) -> Hit | None:
    t, pid = intersect_batch(
        scene, ray.origin[None], ray.direction[None], ray.near, ray.far
    )
    if pid[0] < 0:
        return None
    p = ray.at(float(t[0]))
    s = scene.primitives[int(pid[0])]
    n = (p - s.center) / np.linalg.norm(p - s.center)
    return Hit(point=p, normal=n, primitive_id=int(pid[0]), t=float(t[0]))


def density(scene: AnalyticScene, x) -> float:
    """sigma_max inside any primitive, 0 outside (hard indicator field)."""
    x = np.asarray(x, dtype=np.float64)
    for s in scene.primitives:
        d = x - s.center
        if d @ d < s.radius**2:
            return scene.density_scale
    return 0.0


def density_batch(scene: AnalyticScene, xs: np.ndarray) -> np.ndarray:
    inside = np.zeros(len(xs), dtype=bool)
    for s in scene.primitives:
        d = xs - s.center
        inside |= np.einsum("ij,ij->i", d, d) < s.radius**2
    return np.where(inside, scene.density_scale, 0.0)


def _pixel_grid(cam: Camera) -> np.ndarray:
    u, v = np.meshgrid(np.arange(cam.width), np.arange(cam.height))
    return np.stack([u.reshape(-1), v.reshape(-1)], axis=1).astype(np.float64)


def render_mask(scene: AnalyticScene, cam: Camera) -> Mask:
    """Binary silhouette: 1 where the pixel-center ray hits any primitive."""
    o, d = generate_rays(cam, _pixel_grid(cam))
    _, pid = intersect_batch(scene, o, d, 1e-6, np.inf)
    return Mask((pid >= 0).astype(np.uint8).reshape(cam.height, cam.width))


def render_depth(scene: AnalyticScene, cam: Camera) -> tuple[np.ndarray, Mask]:
    """First-hit camera-ray distance per pixel (0 where no hit) and hit mask."""
    o, d = generate_rays(cam, _pixel_grid(cam))
    t, pid = intersect_batch(scene, o, d, 1e-6, np.inf)
    hit = pid >= 0
    depth = np.where(hit, t, 0.0).reshape(cam.height, cam.width)
    return depth, Mask(hit.astype(np.uint8).reshape(cam.height, cam.width))


def ray_bounds(cam: Camera, scene: AnalyticScene, margin: float = 0.15) -> tuple[float, float]:
    """Near/far bracket around the scene's bounding sphere as seen from cam."""
    center, radius = scene.bounds()
    d = float(np.linalg.norm(cam.center - center))
    near = max(1e-3, d - radius - margin)
    return near, d + radius + margin


# ---------------------------------------------------------------------------
# Serialization


def scene_to_json_dict(scene: AnalyticScene) -> dict:
    return {
        "primitives": [
            {
                "center": s.center.tolist(),
                "radius": s.radius,
                "albedo": s.albedo.tolist(),
                "ks": s.ks,
                "exponent": s.exponent,
            }
            for s in scene.primitives
        ],
        "density_scale": scene.density_scale,
    }


def scene_from_json_dict(d: dict) -> AnalyticScene:
    prims = tuple(
        Sphere(
            center=np.asarray(p["center"], dtype=np.float64),
            radius=float(p["radius"]),
            albedo=np.asarray(p["albedo"], dtype=np.float64),
            ks=float(p.get("ks", 0.0)),
            exponent=float(p.get("exponent", 16.0)),
        )
        for p in d["primitives"]
    )
    return AnalyticScene(primitives=prims, density_scale=float(d["density_scale"]))


def camera_to_json_dict(cam: Camera) -> dict:
    return {
        "fx": cam.fx,
        "fy": cam.fy,
        "cx": cam.cx,
        "cy": cam.cy,
        "width": cam.width,
        "height": cam.height,
        "R": cam.rotation.reshape(-1).tolist(),
        "t": cam.translation.tolist(),
    }


def camera_from_json_dict(d: dict) -> Camera:
    return Camera(
        fx=float(d["fx"]),
        fy=float(d["fy"]),
        cx=float(d["cx"]),
        cy=float(d["cy"]),
        width=int(d["width"]),
        height=int(d["height"]),
        rotation=np.asarray(d["R"], dtype=np.float64).reshape(3, 3),
        translation=np.asarray(d["t"], dtype=np.float64),
    )


def save_scene_json(path, scene: AnalyticScene) -> None:
    with open(path, "w") as f:
        json.dump(scene_to_json_dict(scene), f)


def load_scene_json(path) -> AnalyticScene:
    with open(path) as f:
        return scene_from_json_dict(json.load(f))
