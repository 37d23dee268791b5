"""Equirectangular environment maps: texel geometry, resampling, rotation,
confidence-weighted merging and the relighting dot product.

Conventions, fixed package-wide:

* +Y is world up. ``theta`` is the polar angle measured from +Y,
  ``phi`` the azimuth measured from +X toward +Z.
* A map with ``height`` rows and ``width`` columns stores texel ``(r, c)``
  centered at ``theta = pi * (r + 0.5) / height``,
  ``phi = 2 * pi * (c + 0.5) / width``, row-major.
* Radiance is linear RGB, scale-free, nonnegative and finite.
* The default lighting resolution is 8 x 16.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_DIMS = (8, 16)

_ORTHO_TOL = 1e-9


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class EnvironmentMap:
    """Per-texel linear RGB radiance on the equirectangular grid."""

    radiance: np.ndarray  # (H, W, 3)

    def __post_init__(self):
        r = np.asarray(self.radiance, dtype=np.float64)
        if r.ndim != 3 or r.shape[2] != 3:
            raise ValueError(f"radiance must be (H, W, 3), got {r.shape}")
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            raise ValueError("radiance must be finite and nonnegative")
        object.__setattr__(self, "radiance", _freeze(r))

    @property
    def height(self) -> int:
        return self.radiance.shape[0]

    @property
    def width(self) -> int:
        return self.radiance.shape[1]

    @property
    def dims(self) -> tuple[int, int]:
        return self.radiance.shape[:2]

    @classmethod
    def zeros(cls, dims: tuple[int, int] = DEFAULT_DIMS) -> "EnvironmentMap":
        return cls(np.zeros((dims[0], dims[1], 3)))

    @classmethod
    def constant(cls, value, dims: tuple[int, int] = DEFAULT_DIMS) -> "EnvironmentMap":
        rgb = np.broadcast_to(np.asarray(value, dtype=np.float64), (3,))
        return cls(np.tile(rgb, (dims[0], dims[1], 1)))

    def scaled(self, s: float) -> "EnvironmentMap":
        return EnvironmentMap(self.radiance * s)

    def total_energy(self) -> float:
        """Sum of solid-angle-weighted radiance, averaged over channels."""
        w = solid_angles(self.height, self.width)
        return float(np.sum(w[:, None, None] * self.radiance) / 3.0)


@dataclass(frozen=True)
class ConfidenceMap:
    """Per-texel nonnegative merge weight, shaped like an EnvironmentMap."""

    weights: np.ndarray  # (H, W)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError(f"weights must be (H, W), got {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        object.__setattr__(self, "weights", _freeze(w))

    @property
    def dims(self) -> tuple[int, int]:
        return self.weights.shape

    @classmethod
    def uniform(cls, dims: tuple[int, int] = DEFAULT_DIMS, value: float = 1.0) -> "ConfidenceMap":
        return cls(np.full(dims, value))


@dataclass(frozen=True)
class TransportVector:
    """Light-transport coefficients at one point/outgoing direction.

    ``coefficients[r, c, ch]`` is the response to unit radiance arriving from
    texel (r, c) in channel ch; the texel solid angle is folded in, so
    relighting is a plain per-channel dot product with the map.
    """

    coefficients: np.ndarray  # (H, W, 3)

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.float64)
        if c.ndim != 3 or c.shape[2] != 3:
            raise ValueError(f"coefficients must be (H, W, 3), got {c.shape}")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise ValueError("coefficients must be finite and nonnegative")
        object.__setattr__(self, "coefficients", _freeze(c))

    @property
    def dims(self) -> tuple[int, int]:
        return self.coefficients.shape[:2]

    @classmethod
    def zeros(cls, dims: tuple[int, int] = DEFAULT_DIMS) -> "TransportVector":
        return cls(np.zeros((dims[0], dims[1], 3)))


@dataclass(frozen=True)
class RotationOp:
    """Proper rotation mapping camera-frame directions to world-frame directions."""

    matrix: np.ndarray  # (3, 3)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError("rotation matrix must be 3x3")
        if not np.allclose(m.T @ m, np.eye(3), atol=_ORTHO_TOL):
            raise ValueError("rotation matrix is not orthonormal")
        if abs(np.linalg.det(m) - 1.0) > 1e-6:
            raise ValueError("rotation matrix must have determinant +1")
        object.__setattr__(self, "matrix", _freeze(m))

    @classmethod
    def identity(cls) -> "RotationOp":
        return cls(np.eye(3))

    @classmethod
    def about_y(cls, angle: float) -> "RotationOp":
        """Rotation by ``angle`` radians about the +Y (up) axis."""
        c, s = math.cos(angle), math.sin(angle)
        return cls(np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]]))

    def compose(self, other: "RotationOp") -> "RotationOp":
        """self applied after other."""
        return RotationOp(self.matrix @ other.matrix)

    def inverse(self) -> "RotationOp":
        return RotationOp(self.matrix.T)


@dataclass(frozen=True)
class MergeCoverage:
    """Which texels of a merge had a degenerate rotated-weight denominator."""

    degenerate: np.ndarray  # (H, W) bool
    threshold: float

    @property
    def n_degenerate(self) -> int:
        return int(np.count_nonzero(self.degenerate))

    @property
    def fraction(self) -> float:
        return self.n_degenerate / self.degenerate.size


# ---------------------------------------------------------------------------
# Texel geometry


def texel_direction(row: int, col: int, height: int, width: int) -> np.ndarray:
    """Unit world direction of the center of texel (row, col)."""
    if not (0 <= row < height and 0 <= col < width):
        raise ValueError(f"texel ({row}, {col}) out of range for {height}x{width}")
    theta = math.pi * (row + 0.5) / height
    phi = 2.0 * math.pi * (col + 0.5) / width
    st = math.sin(theta)
    return np.array([st * math.cos(phi), math.cos(theta), st * math.sin(phi)])


def grid_directions(height: int, width: int) -> np.ndarray:
    """All texel-center directions as an (H, W, 3) array."""
    theta = np.pi * (np.arange(height) + 0.5) / height
    phi = 2.0 * np.pi * (np.arange(width) + 0.5) / width
    st, ct = np.sin(theta), np.cos(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    d = np.empty((height, width, 3))
    d[:, :, 0] = st[:, None] * cp[None, :]
    d[:, :, 1] = ct[:, None] * np.ones_like(cp)[None, :]
    d[:, :, 2] = st[:, None] * sp[None, :]
    return d


def texel_solid_angle(row: int, height: int, width: int) -> float:
    """Solid angle (sr) of any texel in the given row; rows partition the sphere."""
    if not 0 <= row < height:
        raise ValueError(f"row {row} out of range for height {height}")
    return (2.0 * math.pi / width) * (
        math.cos(math.pi * row / height) - math.cos(math.pi * (row + 1) / height)
    )


def solid_angles(height: int, width: int) -> np.ndarray:
    """Per-row texel solid angles, shape (H,)."""
    edges = np.cos(np.pi * np.arange(height + 1) / height)
    return (2.0 * np.pi / width) * (edges[:-1] - edges[1:])


# ---------------------------------------------------------------------------
# Sampling


def _angles_of(dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y = np.clip(dirs[..., 1], -1.0, 1.0)
    theta = np.arccos(y)
    phi = np.arctan2(dirs[..., 2], dirs[..., 0])
    return theta, np.mod(phi, 2.0 * np.pi)


def bilinear_footprint(
    dirs: np.ndarray, height: int, width: int
) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear taps for directions: flat texel indices (..., 4) and weights (..., 4).

    Azimuth wraps around the phi = 0 seam; polar rows clamp at the poles.
    """
    theta, phi = _angles_of(dirs)
    fr = theta * height / np.pi - 0.5
    fc = phi * width / (2.0 * np.pi) - 0.5
    r0 = np.floor(fr)
    c0 = np.floor(fc)
    wr = fr - r0
    wc = fc - c0
    r0i = np.clip(r0.astype(np.int64), 0, height - 1)
    r1i = np.clip(r0.astype(np.int64) + 1, 0, height - 1)
    c0i = np.mod(c0.astype(np.int64), width)
    c1i = np.mod(c0.astype(np.int64) + 1, width)
    idx = np.stack(
        [r0i * width + c0i, r0i * width + c1i, r1i * width + c0i, r1i * width + c1i],
        axis=-1,
    )
    w = np.stack(
        [(1 - wr) * (1 - wc), (1 - wr) * wc, wr * (1 - wc), wr * wc], axis=-1
    )
    return idx, w


def nearest_texel(dirs: np.ndarray, height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column of the texel containing each direction."""
    theta, phi = _angles_of(dirs)
    r = np.minimum((theta * height / np.pi).astype(np.int64), height - 1)
    c = np.mod((phi * width / (2.0 * np.pi)).astype(np.int64), width)
    return r, c


def sample_grid(grid: np.ndarray, dirs: np.ndarray, mode: str = "bilinear") -> np.ndarray:
    """Sample a (H, W, C) or (H, W) grid at unit directions (..., 3)."""
    h, w = grid.shape[0], grid.shape[1]
    if mode == "nearest":
        r, c = nearest_texel(dirs, h, w)
        return grid[r, c]
    if mode == "bilinear":
        idx, wt = bilinear_footprint(dirs, h, w)
        flat = grid.reshape(h * w, -1) if grid.ndim == 3 else grid.reshape(h * w, 1)
        out = np.einsum("...k,...kc->...c", wt, flat[idx])
        return out if grid.ndim == 3 else out[..., 0]
    raise ValueError(f"unknown sampling mode {mode!r}")


def sample(env: EnvironmentMap, direction: np.ndarray, mode: str = "bilinear") -> np.ndarray:
    """Radiance of the map in a unit direction; ``mode`` is nearest or bilinear."""
    d = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(d) - 1.0) > 1e-6:
        raise ValueError("direction must be a unit vector")
    return sample_grid(env.radiance, d, mode)


# ---------------------------------------------------------------------------
# Rotation, merging, relighting


def rotate(env: EnvironmentMap, rot: RotationOp, mode: str = "bilinear") -> EnvironmentMap:
    """Resample the map into the rotated frame.

    The output texel at world direction d holds ``sample(env, R^T d)``, i.e.
    the input map is treated as camera-frame data and ``rot`` maps camera
    directions to world directions.
    """
    h, w = env.dims
    dirs = grid_directions(h, w)
    src = dirs @ rot.matrix  # row-vector form of R^T @ d
    return EnvironmentMap(sample_grid(env.radiance, src, mode))


def rotation_operator_matrix(rot: RotationOp, height: int, width: int) -> np.ndarray:
    """Dense (H*W, H*W) matrix M with flat(rotate(env)) = M @ flat(env) per channel.

    Built from the same bilinear footprint as :func:`rotate`, so the two agree
    to the last bit; its transpose is the adjoint used to re-express transport
    vectors in a rotated frame.
    """
    n = height * width
    dirs = grid_directions(height, width).reshape(n, 3)
    src = dirs @ rot.matrix
    idx, wt = bilinear_footprint(src, height, width)
    m = np.zeros((n, n))
    rows = np.repeat(np.arange(n), 4)
    np.add.at(m, (rows, idx.reshape(-1)), wt.reshape(-1))
    return m


def merge(
    entries: list[tuple[EnvironmentMap, ConfidenceMap, RotationOp]],
    degenerate_threshold: float = 1e-8,
) -> tuple[EnvironmentMap, MergeCoverage]:
    """Confidence-weighted average of per-camera maps in the world frame.

    Each entry's map is multiplied texelwise by its confidence, rotated into
    the world frame, and the stack is divided texelwise by the rotated
    confidences. Texels whose rotated-weight denominator falls below the
    threshold are filled with the unweighted mean of the rotated maps and
    flagged in the returned coverage report.
    """
    if not entries:
        raise ValueError("merge requires at least one entry")
    dims = entries[0][0].dims
    num = np.zeros((dims[0], dims[1], 3))
    den = np.zeros(dims)
    plain = np.zeros((dims[0], dims[1], 3))
    for env, conf, rot in entries:
        if env.dims != dims or conf.dims != dims:
            raise ValueError("all merge entries must share dimensions")
        weighted = EnvironmentMap(env.radiance * conf.weights[:, :, None])
        num += rotate(weighted, rot).radiance
        h, w = dims
        dirs = grid_directions(h, w)
        den += sample_grid(conf.weights, dirs @ rot.matrix, "bilinear")
        plain += rotate(env, rot).radiance
    degenerate = den < degenerate_threshold
    safe_den = np.where(degenerate, 1.0, den)
    out = num / safe_den[:, :, None]
    out[degenerate] = plain[degenerate] / len(entries)
    return EnvironmentMap(np.maximum(out, 0.0)), MergeCoverage(degenerate, degenerate_threshold)


def relight(t: TransportVector, env: EnvironmentMap) -> np.ndarray:
    """Outgoing RGB radiance: per-channel dot product of transport and lighting."""
    if t.dims != env.dims:
        raise ValueError(f"dimension mismatch: transport {t.dims} vs env {env.dims}")
    return np.einsum("rwc,rwc->c", t.coefficients, env.radiance)


def log_l1(a: EnvironmentMap, b: EnvironmentMap) -> float:
    """Mean absolute difference of log(1 + radiance); 0 iff the maps are equal."""
    if a.dims != b.dims:
        raise ValueError("dimension mismatch")
    return float(np.mean(np.abs(np.log1p(a.radiance) - np.log1p(b.radiance))))
