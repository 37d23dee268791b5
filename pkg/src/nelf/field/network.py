"""The trainable light-transport field.

Per 3D point the field consumes hand-crafted per-view features (bilinearly
sampled pixel color, mask value, view direction and its alignment with the
target direction) plus a sinusoidal encoding of the position. A shared
geometry MLP aggregates views PointNet-style with per-element mean/variance
statistics; a density head reads the confidence-weighted aggregate; a per-view
transport head regresses softplus scales that are modulated by the observed
pixel color (or used directly, the ablation mode); a blending head softmaxes
per-view transports into the final transport vector, whose dot product with
the target environment map is the radiance fed to the volume renderer.

All math runs through the reverse-mode tape in :mod:`.autodiff`, so the same
code serves frozen-parameter inference and training.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from ..envmap import EnvironmentMap, TransportVector
from ..scene import Camera, in_frame, project_batch
from . import autodiff as ad
from .autodiff import Tape, Var

MODES = ("modulated", "direct")


@dataclass(frozen=True)
class PosEnc:
    """Sinusoidal coordinate lifting with frequencies pi * 2^b."""

    bands: int = 6
    include_input: bool = True

    def out_dim(self, dim: int) -> int:
        return dim * ((1 if self.include_input else 0) + 2 * self.bands)

    def encode(self, x: np.ndarray) -> np.ndarray:
        parts = [x] if self.include_input else []
        for b in range(self.bands):
            arg = x * (np.pi * (2.0**b))
            parts.append(np.sin(arg))
            parts.append(np.cos(arg))
        return np.concatenate(parts, axis=-1)


FEATURE_DIM = 8  # rgb(3) + mask(1) + omega_k(3) + alignment(1)


@dataclass(frozen=True)
class ArchConfig:
    hidden: int = 64
    posenc: PosEnc = field(default_factory=PosEnc)
    env_dims: tuple[int, int] = (8, 16)
    transport_mode: str = "modulated"
    blend_per_texel: bool = False
    density_gain: float = 1.0
    transport_bias: float = -4.0  # initial bias of the transport-scale head
    density_bias: float = 0.0

    def __post_init__(self):
        if self.transport_mode not in MODES:
            raise ValueError(f"transport_mode must be one of {MODES}")

    @property
    def n_texels(self) -> int:
        return self.env_dims[0] * self.env_dims[1]

    @property
    def fg_in(self) -> int:
        return self.posenc.out_dim(3) + 3 * FEATURE_DIM + 1

    @property
    def fl_in(self) -> int:
        return 3 + self.hidden + FEATURE_DIM

    @property
    def fb_in(self) -> int:
        return 6 + self.hidden

    @property
    def fb_out(self) -> int:
        return 3 * self.n_texels if self.blend_per_texel else 1

    def to_dict(self) -> dict:
        return {
            "hidden": self.hidden,
            "posenc_bands": self.posenc.bands,
            "posenc_include_input": self.posenc.include_input,
            "env_dims": list(self.env_dims),
            "transport_mode": self.transport_mode,
            "blend_per_texel": self.blend_per_texel,
            "density_gain": self.density_gain,
            "transport_bias": self.transport_bias,
            "density_bias": self.density_bias,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        return cls(
            hidden=int(d["hidden"]),
            posenc=PosEnc(int(d["posenc_bands"]), bool(d["posenc_include_input"])),
            env_dims=tuple(d["env_dims"]),
            transport_mode=d["transport_mode"],
            blend_per_texel=bool(d["blend_per_texel"]),
            density_gain=float(d["density_gain"]),
            transport_bias=float(d["transport_bias"]),
            density_bias=float(d["density_bias"]),
        )


def _layer_specs(arch: ArchConfig) -> list[tuple[str, int, int]]:
    h = arch.hidden
    return [
        ("fg.w1", arch.fg_in, h),
        ("fg.w2", h, h),
        ("fg.wg", h, h),
        ("fg.ww", h, 1),
        ("dn.w1", 2 * h, h),
        ("dn.w2", h, h),
        ("dn.w3", h, 1),
        ("fl.w1", arch.fl_in, h),
        ("fl.w2", h, h),
        ("fl.w3", h, 3 * arch.n_texels),
        ("fb.w1", arch.fb_in, h),
        ("fb.w2", h, h),
        ("fb.w3", h, arch.fb_out),
    ]


@dataclass
class NelfParams:
    """All trainable tensors plus the architecture that shapes them."""

    arch: ArchConfig
    arrays: dict  # name -> np.ndarray, insertion order fixed

    def param_count(self) -> int:
        return sum(int(a.size) for a in self.arrays.values())

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.arch.to_dict(), sort_keys=True).encode())
        for name in self.arrays:
            a = self.arrays[name]
            h.update(name.encode())
            h.update(str(a.shape).encode())
            h.update(str(a.dtype).encode())
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    def copy(self) -> "NelfParams":
        return NelfParams(self.arch, {k: v.copy() for k, v in self.arrays.items()})

    def astype(self, dtype) -> "NelfParams":
        return NelfParams(self.arch, {k: v.astype(dtype) for k, v in self.arrays.items()})

    @property
    def dtype(self):
        return next(iter(self.arrays.values())).dtype


def init_params(arch: ArchConfig, seed: int = 0, dtype=np.float32) -> NelfParams:
    """Glorot-uniform weights, zero biases except the calibrated head biases."""
    rng = np.random.default_rng(seed)
    arrays: dict = {}
    for name, fan_in, fan_out in _layer_specs(arch):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        arrays[name] = rng.uniform(-a, a, size=(fan_in, fan_out)).astype(dtype)
        bias = np.zeros(fan_out, dtype=dtype)
        if name == "fl.w3":
            bias[:] = arch.transport_bias
        elif name == "dn.w3":
            bias[:] = arch.density_bias
        arrays[name.replace(".w", ".b")] = bias
    return NelfParams(arch=arch, arrays=arrays)


# ---------------------------------------------------------------------------
# Per-view inputs


@dataclass(frozen=True)
class SourceView:
    view_id: int
    image: np.ndarray  # (H, W, 3) linear RGB
    camera: Camera
    mask: np.ndarray  # (H, W) in {0, 1}


@dataclass(frozen=True)
class PerViewFeature:
    rgb: np.ndarray  # (3,)
    mask_value: float
    omega_k: np.ndarray  # unit, point -> camera
    alignment: float

    def vector(self) -> np.ndarray:
        return np.concatenate([self.rgb, [self.mask_value], self.omega_k, [self.alignment]])


def sample_image_bilinear(img: np.ndarray, pix: np.ndarray) -> np.ndarray:
    """Bilinear lookup at continuous pixel coords (P, 2), clamped at edges."""
    h, w = img.shape[:2]
    u = np.clip(pix[:, 0], 0.0, w - 1.0)
    v = np.clip(pix[:, 1], 0.0, h - 1.0)
    x0 = np.floor(u).astype(np.int64)
    y0 = np.floor(v).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fu = (u - x0)[:, None] if img.ndim == 3 else u - x0
    fv = (v - y0)[:, None] if img.ndim == 3 else v - y0
    top = img[y0, x0] * (1 - fu) + img[y0, x1] * fu
    bot = img[y1, x0] * (1 - fu) + img[y1, x1] * fu
    return top * (1 - fv) + bot * fv


@dataclass
class FieldInputs:
    """Constant tensors for one batch of points, views sorted by id."""

    penc: np.ndarray  # (P, Dp)
    feats: np.ndarray  # (N, P, 8)
    mod_rgb: np.ndarray  # (N, P, 3)
    omega_k: np.ndarray  # (N, P, 3)
    omega_t: np.ndarray  # (P, 3)
    valid: np.ndarray  # (N, P, 1)
    mean: np.ndarray  # (P, 8)
    var: np.ndarray  # (P, 8)
    any_valid: np.ndarray  # (P, 1)
    view_ids: tuple

    @property
    def n_views(self) -> int:
        return self.feats.shape[0]

    @property
    def n_points(self) -> int:
        return self.feats.shape[1]


def prepare_inputs(
    x: np.ndarray,
    omega_t: np.ndarray,
    views: list[SourceView],
    arch: ArchConfig,
    dtype=np.float64,
) -> FieldInputs:
    """Project points into every source view and assemble the constant inputs."""
    order = sorted(range(len(views)), key=lambda i: views[i].view_id)
    views = [views[i] for i in order]
    p = len(x)
    n = len(views)
    feats = np.zeros((n, p, FEATURE_DIM))
    mod_rgb = np.zeros((n, p, 3))
    omega_k = np.zeros((n, p, 3))
    valid = np.zeros((n, p, 1))
    for k, view in enumerate(views):
        pix, _, front = project_batch(view.camera, x)
        inside = front & in_frame(view.camera, pix)
        rgb = np.zeros((p, 3))
        mval = np.zeros(p)
        if np.any(inside):
            rgb[inside] = sample_image_bilinear(view.image, pix[inside])
            mval[inside] = sample_image_bilinear(
                view.mask.astype(np.float64), pix[inside]
            )
        to_cam = view.camera.center[None, :] - x
        to_cam /= np.linalg.norm(to_cam, axis=1, keepdims=True)
        align = np.einsum("ij,ij->i", to_cam, omega_t)
        feats[k] = np.concatenate(
            [rgb, mval[:, None], to_cam, align[:, None]], axis=1
        )
        mod_rgb[k] = rgb
        omega_k[k] = to_cam
        valid[k, :, 0] = front.astype(np.float64)
    denom = np.maximum(valid.sum(axis=0), 1.0)  # (P, 1)
    mean = (feats * valid).sum(axis=0) / denom
    var = (valid * (feats - mean) ** 2).sum(axis=0) / denom
    any_valid = (valid.sum(axis=0) > 0).astype(np.float64)
    return FieldInputs(
        penc=arch.posenc.encode(x).astype(dtype),
        feats=feats.astype(dtype),
        mod_rgb=mod_rgb.astype(dtype),
        omega_k=omega_k.astype(dtype),
        omega_t=np.asarray(omega_t).astype(dtype),
        valid=valid.astype(dtype),
        mean=mean.astype(dtype),
        var=var.astype(dtype),
        any_valid=any_valid.astype(dtype),
        view_ids=tuple(views[i].view_id for i in range(n)),
    )


# ---------------------------------------------------------------------------
# MLP cores (shared by the public single-point ops and the batched forward)


def _mlp2(tape: Tape, p: dict, prefix: str, x: Var) -> Var:
    h1 = ad.relu(ad.affine(x, p[f"{prefix}.w1"], p[f"{prefix}.b1"]))
    return ad.relu(ad.affine(h1, p[f"{prefix}.w2"], p[f"{prefix}.b2"]))


def _fg_heads(tape: Tape, p: dict, trunk: Var) -> tuple[Var, Var]:
    g = ad.affine(trunk, p["fg.wg"], p["fg.bg"])
    w = ad.sigmoid(ad.affine(trunk, p["fg.ww"], p["fg.bw"]))
    return g, w


def _relight_rows(tape: Tape, scales: Var, env_flat: np.ndarray) -> Var:
    """Per-row transport/lighting contraction: out[r, c] = sum_t s[r, t, c] E[t, c].

    A dedicated op so the (rows, texels, 3) tensor never materializes on the
    training path; its backward is the plain outer product with the map.
    """
    k = env_flat.shape[0]
    val = np.einsum(
        "rtc,tc->rc", scales.value.reshape(-1, k, 3), env_flat, optimize=True
    )

    def vjp(g):
        grad = (g[:, None, :] * env_flat[None, :, :]).reshape(scales.value.shape)
        return (grad.astype(scales.value.dtype, copy=False),)

    return tape.custom(val.astype(scales.value.dtype, copy=False), (scales,), vjp)


def batch_forward(
    tape: Tape,
    p: dict,
    arch: ArchConfig,
    inputs: FieldInputs,
    env_flat: np.ndarray,
    mode: str | None = None,
    need_aux: bool = False,
) -> tuple[Var, Var, dict]:
    """Full field evaluation for a batch of points.

    Returns (sigma (P,), radiance (P, 3)) as tape variables plus, when
    ``need_aux`` is set, the intermediate transport. ``env_flat`` is
    (n_texels, 3).
    """
    mode = mode or arch.transport_mode
    if mode not in MODES:
        raise ValueError(f"unknown transport mode {mode!r}")
    n, pts = inputs.n_views, inputs.n_points
    h = arch.hidden
    k = arch.n_texels
    dt = inputs.feats.dtype

    # Geometry trunk on all (view, point) rows at once; weights are shared.
    fg_in = np.concatenate(
        [
            np.broadcast_to(inputs.penc, (n, pts, inputs.penc.shape[1])),
            inputs.feats,
            np.broadcast_to(inputs.mean, (n, pts, FEATURE_DIM)),
            np.broadcast_to(inputs.var, (n, pts, FEATURE_DIM)),
            inputs.feats[:, :, -1:],  # alignment, repeated per the input contract
        ],
        axis=2,
    ).reshape(n * pts, arch.fg_in)
    trunk = _mlp2(tape, p, "fg", tape.constant(fg_in))
    g_flat, w_flat = _fg_heads(tape, p, trunk)
    g = ad.reshape(g_flat, (n, pts, h))
    w_masked = ad.mul(ad.reshape(w_flat, (n, pts, 1)), inputs.valid)

    # Normalized view weights. Fully-invalid points get a harmless
    # denominator and are zeroed at the end; the tiny floor only matters when
    # every sigmoid weight saturates to exactly zero (it is below one ulp of
    # any healthy sum, so gradients are unaffected).
    guard = (1.0 - inputs.any_valid + np.finfo(dt).tiny).astype(dt)
    w_sum = ad.add(ad.vsum(w_masked, axis=0), guard)
    w_hat = ad.div(w_masked, w_sum)

    g_agg = ad.vsum(ad.mul(w_hat, g), axis=0)  # (P, h)
    dev = ad.sub(g, g_agg)
    wvar = ad.vsum(ad.mul(w_hat, ad.mul(dev, dev)), axis=0)
    dn_in = ad.concat([g_agg, wvar], axis=1)
    sigma = ad.softplus(
        ad.affine(_mlp2(tape, p, "dn", dn_in), p["dn.w3"], p["dn.b3"])
    )
    if arch.density_gain != 1.0:
        sigma = ad.mul(sigma, dt.type(arch.density_gain))
    sigma = ad.reshape(ad.mul(sigma, inputs.any_valid), (pts,))

    # Per-view transport scales.
    fl_in = ad.concat(
        [
            tape.constant(inputs.omega_k.reshape(n * pts, 3)),
            ad.reshape(g, (n * pts, h)),
            tape.constant(inputs.feats.reshape(n * pts, FEATURE_DIM)),
        ],
        axis=1,
    )
    scales = ad.softplus(
        ad.affine(_mlp2(tape, p, "fl", fl_in), p["fl.w3"], p["fl.b3"])
    )

    # Blending weights across views.
    fb_in = ad.concat(
        [
            tape.constant(inputs.omega_k.reshape(n * pts, 3)),
            tape.constant(np.tile(inputs.omega_t, (n, 1))),
            ad.reshape(g, (n * pts, h)),
        ],
        axis=1,
    )
    logits = ad.affine(_mlp2(tape, p, "fb", fb_in), p["fb.w3"], p["fb.b3"])
    penalty = ((inputs.valid - 1.0) * 1e30).astype(dt)
    env_c = env_flat.astype(dt)
    aux: dict = {}

    if arch.blend_per_texel or need_aux:
        # General path: materialize per-view and blended transports.
        t_k = ad.reshape(scales, (n, pts, k, 3))
        if mode == "modulated":
            t_k = ad.mul(t_k, inputs.mod_rgb[:, :, None, :])
        if arch.blend_per_texel:
            lg = ad.add(ad.reshape(logits, (n, pts, k, 3)), penalty[:, :, :, None])
        else:
            lg = ad.add(ad.reshape(logits, (n, pts, 1, 1)), penalty[:, :, :, None])
        blend = ad.softmax(lg, axis=0)
        t = ad.vsum(ad.mul(blend, t_k), axis=0)  # (P, k, 3)
        radiance = ad.vsum(ad.mul(t, env_c), axis=1)
        aux = {"transport": t, "blend": blend, "t_k": t_k, "g": g, "w_hat": w_hat}
    else:
        # Scalar blending: contract scales with the (constant) map per view
        # before blending, so no (N, P, texels, 3) tensor is ever built.
        pv_rgb = _relight_rows(tape, scales, env_c)  # (n*pts, 3)
        if mode == "modulated":
            pv_rgb = ad.mul(pv_rgb, inputs.mod_rgb.reshape(n * pts, 3))
        lg = ad.add(ad.reshape(logits, (n, pts, 1)), penalty)
        blend = ad.softmax(lg, axis=0)
        radiance = ad.vsum(ad.mul(ad.reshape(pv_rgb, (n, pts, 3)), blend), axis=0)

    radiance = ad.mul(radiance, inputs.any_valid)
    return sigma, radiance, aux


def param_leaves(tape: Tape, params: NelfParams, trainable: bool = True) -> dict:
    return {k: tape.leaf(v, requires_grad=trainable) for k, v in params.arrays.items()}


# ---------------------------------------------------------------------------
# Public single-point operations


def build_feature(view: SourceView, x: np.ndarray, omega_t: np.ndarray) -> PerViewFeature | None:
    """Per-view feature at a point; None when the point is behind the camera."""
    res = project_batch(view.camera, np.asarray(x, dtype=np.float64)[None])
    pix, _, front = res
    if not front[0]:
        return None
    inside = in_frame(view.camera, pix)[0]
    if inside:
        rgb = sample_image_bilinear(view.image, pix)[0]
        mval = float(sample_image_bilinear(view.mask.astype(np.float64), pix)[0])
    else:
        rgb = np.zeros(3)
        mval = 0.0
    to_cam = view.camera.center - np.asarray(x, dtype=np.float64)
    to_cam = to_cam / np.linalg.norm(to_cam)
    return PerViewFeature(
        rgb=rgb,
        mask_value=mval,
        omega_k=to_cam,
        alignment=float(to_cam @ np.asarray(omega_t)),
    )


def _inputs_from_features(
    x, omega_t, features: list[PerViewFeature], arch: ArchConfig
) -> FieldInputs:
    n = len(features)
    f = np.stack([ft.vector() for ft in features])[:, None, :]  # (N, 1, 8)
    valid = np.ones((n, 1, 1))
    # Statistics over a canonically ordered copy: bit-identical under any
    # permutation of the caller's view order.
    canon = f[np.lexsort(f[:, 0, :].T)]
    mean = canon.mean(axis=0)
    var = canon.var(axis=0) if n >= 2 else np.zeros_like(mean)
    return FieldInputs(
        penc=arch.posenc.encode(np.asarray(x, dtype=np.float64)[None]),
        feats=f,
        mod_rgb=np.stack([ft.rgb for ft in features])[:, None, :],
        omega_k=np.stack([ft.omega_k for ft in features])[:, None, :],
        omega_t=np.asarray(omega_t, dtype=np.float64)[None],
        valid=valid,
        mean=mean,
        var=var,
        any_valid=np.ones((1, 1)),
        view_ids=tuple(range(n)),
    )


def aggregate_geometry(
    x, features: list[PerViewFeature], omega_t, params: NelfParams
) -> tuple[np.ndarray, np.ndarray, bool]:
    """Per-view geometry features and sigmoid weights for one point.

    Returns (G (N, hidden), W (N,), degenerate) where degenerate marks the
    single-view case whose variance input is forced to zero.
    """
    arch = params.arch
    inputs = _inputs_from_features(x, omega_t, features, arch)
    degenerate = len(features) < 2
    tape = Tape()
    p = param_leaves(tape, params, trainable=False)
    n, pts = inputs.n_views, 1
    fg_in = np.concatenate(
        [
            np.broadcast_to(inputs.penc, (n, pts, inputs.penc.shape[1])),
            inputs.feats,
            np.broadcast_to(inputs.mean, (n, pts, FEATURE_DIM)),
            np.broadcast_to(inputs.var, (n, pts, FEATURE_DIM)),
            inputs.feats[:, :, -1:],
        ],
        axis=2,
    ).reshape(n, arch.fg_in)
    trunk = _mlp2(tape, p, "fg", tape.constant(fg_in))
    g, w = _fg_heads(tape, p, trunk)
    return g.value, w.value[:, 0], degenerate


def predict_density(g: np.ndarray, w: np.ndarray, params: NelfParams) -> float:
    """Density from aggregated multi-view statistics; softplus keeps it >= 0."""
    arch = params.arch
    w_hat = w / (w.sum() + np.finfo(np.float64).tiny)
    g_agg = (w_hat[:, None] * g).sum(axis=0)
    wvar = (w_hat[:, None] * (g - g_agg) ** 2).sum(axis=0)
    tape = Tape()
    p = param_leaves(tape, params, trainable=False)
    dn_in = tape.constant(np.concatenate([g_agg, wvar])[None])
    sigma = ad.softplus(ad.affine(_mlp2(tape, p, "dn", dn_in), p["dn.w3"], p["dn.b3"]))
    return float(sigma.value[0, 0]) * arch.density_gain


def predict_transport_perview(
    omega_k,
    g: np.ndarray,
    feature: PerViewFeature,
    pixel_rgb,
    params: NelfParams,
    mode: str | None = None,
) -> TransportVector:
    """One view's transport vector; modulated mode multiplies by pixel color."""
    arch = params.arch
    mode = mode or arch.transport_mode
    if mode not in MODES:
        raise ValueError(f"unknown transport mode {mode!r}")
    tape = Tape()
    p = param_leaves(tape, params, trainable=False)
    fl_in = tape.constant(
        np.concatenate([np.asarray(omega_k, dtype=np.float64), g, feature.vector()])[None]
    )
    scales = ad.softplus(ad.affine(_mlp2(tape, p, "fl", fl_in), p["fl.w3"], p["fl.b3"]))
    coeff = scales.value.reshape(*arch.env_dims, 3)
    if mode == "modulated":
        coeff = coeff * np.asarray(pixel_rgb, dtype=np.float64)
    return TransportVector(coeff)


def blend_transport(
    transports: list[TransportVector],
    omega_ks: list,
    omega_t,
    gs: np.ndarray,
    params: NelfParams,
) -> TransportVector:
    """Softmax-weighted combination of per-view transports."""
    arch = params.arch
    tape = Tape()
    p = param_leaves(tape, params, trainable=False)
    n = len(transports)
    fb_in = tape.constant(
        np.concatenate(
            [
                np.asarray(omega_ks, dtype=np.float64).reshape(n, 3),
                np.tile(np.asarray(omega_t, dtype=np.float64), (n, 1)),
                gs,
            ],
            axis=1,
        )
    )
    logits = ad.affine(_mlp2(tape, p, "fb", fb_in), p["fb.w3"], p["fb.b3"]).value
    stack = np.stack([t.coefficients for t in transports])  # (N, eh, ew, 3)
    if arch.blend_per_texel:
        lg = logits.reshape(n, *arch.env_dims, 3)
    else:
        lg = logits.reshape(n, 1, 1, 1)
    lg = lg - lg.max(axis=0, keepdims=True)
    wts = np.exp(lg)
    wts /= wts.sum(axis=0, keepdims=True)
    return TransportVector((wts * stack).sum(axis=0))


@dataclass(frozen=True)
class FieldSample:
    sigma: float
    radiance: np.ndarray  # (3,)
    excluded_views: tuple
    all_excluded: bool


def field_query(
    x,
    omega_t,
    views: list[SourceView],
    env: EnvironmentMap,
    params: NelfParams,
    mode: str | None = None,
) -> FieldSample:
    """Density and relit radiance at one point, composing all heads."""
    arch = params.arch
    inputs = prepare_inputs(
        np.asarray(x, dtype=np.float64)[None],
        np.asarray(omega_t, dtype=np.float64)[None],
        views,
        arch,
        dtype=np.float64,
    )
    excluded = tuple(
        vid for k, vid in enumerate(inputs.view_ids) if inputs.valid[k, 0, 0] == 0
    )
    tape = Tape()
    p = param_leaves(tape, params, trainable=False)
    sigma, radiance, _ = batch_forward(
        tape, p, arch, inputs, env.radiance.reshape(-1, 3), mode
    )
    return FieldSample(
        sigma=float(sigma.value[0]),
        radiance=radiance.value[0],
        excluded_views=excluded,
        all_excluded=bool(inputs.any_valid[0, 0] == 0),
    )


def make_batch_field(
    views: list[SourceView],
    env: EnvironmentMap,
    params: NelfParams,
    mode: str | None = None,
):
    """A (points, toward_camera) -> (sigma, rgb) callable for the volume marcher."""
    arch = params.arch
    env_flat = env.radiance.reshape(-1, 3)

    def query(points: np.ndarray, toward_cam: np.ndarray):
        inputs = prepare_inputs(points, toward_cam, views, arch, dtype=params.dtype)
        tape = Tape()
        p = param_leaves(tape, params, trainable=False)
        sigma, radiance, _ = batch_forward(tape, p, arch, inputs, env_flat, mode)
        return sigma.value.astype(np.float64), radiance.value.astype(np.float64)

    return query
