"""Two-mode training of the light-transport field.

Each step draws a triplet and a mode. Novel-light steps supervise the
novel-light target with its ground-truth map as the input lighting;
self-rotation steps rotate the *estimated* source light by the triplet's
recorded azimuth and supervise the rotated-light target. The source light is
estimated once per scene (it is a deterministic function of the fixed inputs)
and cached. All per-step randomness derives from (seed, step), so runs are
reproducible and resumable bit-for-bit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .. import volrender as vr
from ..envmap import EnvironmentMap, RotationOp, rotate
from ..field import autodiff as ad
from ..field.autodiff import Tape, Var
from ..field.network import ArchConfig, NelfParams, batch_forward, init_params, prepare_inputs
from ..field.optim import AdamState, adam_step
from ..scene import generate_rays, ray_bounds
from ..transport import estimate_scene_light
from .dataset import Dataset, SceneData
from .losses import HEAD_SIZE_M, LossBreakdown, loss_light

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Total loss became non-finite; the last good parameters are attached."""

    def __init__(self, step: int, params: NelfParams):
        super().__init__(f"training diverged at step {step}")
        self.step = step
        self.params = params


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 20000
    rays_per_batch: int = 128
    lr: float = 1e-4
    mode_split: float = 0.7  # probability of a novel-light step
    seed: int = 0
    n_samples: int = 64
    hull: bool = True
    hull_dilation: int = 1
    fg_fraction: float = 0.5  # fraction of rays drawn from foreground pixels
    snapshot_every: int = 500  # last-good cadence for divergence recovery
    log_every: int = 0
    mode: str | None = None  # override of the arch transport mode

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)


@dataclass
class SceneCache:
    hull: vr.VisualHull
    est_env: EnvironmentMap
    l_t: float
    bounds: dict  # camera id -> (near, far) not needed; per-target computed


@dataclass
class TrainState:
    params: NelfParams
    adam: AdamState
    step: int = 0

    def snapshot_extras(self) -> dict:
        extras = {"step": self.step, "adam_t": self.adam.t, "adam_skipped": self.adam.skipped}
        for k in self.params.arrays:
            extras[f"adam_m/{k}"] = self.adam.m[k]
            extras[f"adam_v/{k}"] = self.adam.v[k]
        return extras

    @classmethod
    def from_extras(cls, params: NelfParams, extras: dict) -> "TrainState":
        adam = AdamState.for_params(params.arrays)
        adam.t = int(extras.get("adam_t", 0))
        adam.skipped = int(extras.get("adam_skipped", 0))
        for k in params.arrays:
            if f"adam_m/{k}" in extras:
                adam.m[k] = extras[f"adam_m/{k}"].astype(params.dtype)
                adam.v[k] = extras[f"adam_v/{k}"].astype(params.dtype)
        return cls(params=params, adam=adam, step=int(extras.get("step", 0)))


def composite_op(
    tape: Tape, sigma: Var, radiance: Var, depths: np.ndarray, fars: np.ndarray
) -> tuple[Var, Var, Var]:
    """The volume-rendering compositor as a single recorded tape operation."""
    dt = sigma.value.dtype
    depths = depths.astype(dt, copy=False)
    fars = fars.astype(dt, copy=False)
    rgb, depth, alpha, saved = vr.composite(sigma.value, radiance.value, depths, fars)
    packed = np.concatenate([rgb, depth[:, None], alpha[:, None]], axis=1)

    def vjp(g):
        g_sigma, g_rad = vr.composite_backward(
            saved, np.ascontiguousarray(g[:, :3]), g[:, 3], g[:, 4]
        )
        return g_sigma.astype(sigma.value.dtype), g_rad.astype(radiance.value.dtype)

    out = tape.custom(packed.astype(sigma.value.dtype), (sigma, radiance), vjp)
    return out[:, :3], out[:, 3], out[:, 4]


def render_rays_tape(
    tape: Tape,
    pvars: dict,
    arch: ArchConfig,
    views,
    env: EnvironmentMap,
    origins: np.ndarray,
    dirs: np.ndarray,
    nears: np.ndarray,
    fars: np.ndarray,
    cfg: TrainConfig,
    hull: vr.VisualHull | None,
    stats: vr.QueryStats | None = None,
    dtype=np.float32,
) -> tuple[Var, Var, Var]:
    """Differentiable batched march; hull-pruned samples never touch the MLPs."""
    n_rays, s = len(origins), cfg.n_samples
    width = (fars - nears) / s
    depths = nears[:, None] + width[:, None] * np.arange(s)[None, :]
    pts = (origins[:, None, :] + depths[:, :, None] * dirs[:, None, :]).reshape(-1, 3)
    toward_cam = np.repeat(-dirs, s, axis=0)
    keep = (
        hull.contains(pts) if (hull is not None and cfg.hull) else np.ones(len(pts), bool)
    )
    if stats is not None:
        stats.n_samples += len(pts)
        stats.n_queried += int(keep.sum())
    idx = np.flatnonzero(keep)
    if len(idx):
        inputs = prepare_inputs(pts[idx], toward_cam[idx], views, arch, dtype=dtype)
        sg_a, rad_a, _ = batch_forward(
            tape, pvars, arch, inputs, env.radiance.reshape(-1, 3), cfg.mode
        )
        sigma = ad.scatter_rows(sg_a, idx, len(pts))
        radiance = ad.scatter_rows(rad_a, idx, len(pts))
    else:
        sigma = tape.constant(np.zeros(len(pts), dtype=dtype))
        radiance = tape.constant(np.zeros((len(pts), 3), dtype=dtype))
    sigma = ad.reshape(sigma, (n_rays, s))
    radiance = ad.reshape(radiance, (n_rays, s, 3))
    return composite_op(tape, sigma, radiance, depths, fars)


def _masked_mean_abs(diff: Var, mask: np.ndarray, scale: float) -> Var:
    n = max(1.0, float(mask.sum()))
    return ad.mul(ad.vsum(ad.mul(ad.absolute(diff), mask)), scale / n)


def sample_mode(rng: np.random.Generator, mode_split: float) -> str:
    return "novel" if rng.random() < mode_split else "rotated"


def sample_pixels(
    rng: np.random.Generator, alpha: np.ndarray, count: int, fg_fraction: float
) -> np.ndarray:
    """(count, 2) pixel coords, foreground-biased; columns are (u, v)."""
    h, w = alpha.shape
    fg = np.argwhere(alpha > 0.5)
    n_fg = int(round(count * fg_fraction)) if len(fg) else 0  # with replacement
    picks = []
    if n_fg:
        sel = rng.integers(len(fg), size=n_fg)
        picks.append(fg[sel][:, ::-1])  # argwhere gives (row, col); we emit (u, v)
    n_any = count - n_fg
    u = rng.integers(w, size=n_any)
    v = rng.integers(h, size=n_any)
    picks.append(np.stack([u, v], axis=1))
    return np.concatenate(picks, axis=0).astype(np.float64)


def prepare_scene_cache(
    sd: SceneData, cfg: TrainConfig, env_dims: tuple[int, int]
) -> SceneCache:
    from ..scene import Mask

    hull = vr.VisualHull(
        [Mask(sv.mask) for sv in sd.sources],
        [sv.camera for sv in sd.sources],
        dilation=cfg.hull_dilation,
    )
    solve = estimate_scene_light(
        sd.scene, [(sv.image, sv.camera) for sv in sd.sources], env_dims
    )
    return SceneCache(
        hull=hull,
        est_env=solve.global_env,
        l_t=loss_light(solve.global_env, sd.source_env),
        bounds={},
    )


def training_step(
    state: TrainState,
    dataset: Dataset,
    caches: dict,
    cfg: TrainConfig,
) -> LossBreakdown:
    """One optimizer step; randomness is a pure function of (seed, step)."""
    rng = np.random.default_rng([cfg.seed, 1_000_003 + state.step])
    sd = dataset.scenes[int(rng.integers(len(dataset.scenes)))]
    cache = caches[sd.index]
    triplet = sd.triplets[int(rng.integers(len(sd.triplets)))]
    mode = sample_mode(rng, cfg.mode_split)
    if mode == "novel":
        target = triplet.target_b
        env_in = target.env
    else:
        target = triplet.target_a
        env_in = rotate(
            cache.est_env, RotationOp.about_y(math.radians(target.rotation_deg))
        )
    pix = sample_pixels(rng, target.alpha, cfg.rays_per_batch, cfg.fg_fraction)
    origins, dirs = generate_rays(target.camera, pix)
    near, far = ray_bounds(target.camera, sd.scene)
    nears = np.full(len(pix), near)
    fars = np.full(len(pix), far)
    ui, vi = pix[:, 0].astype(int), pix[:, 1].astype(int)
    gt_rgb = target.rgb[vi, ui].astype(state.params.dtype)
    gt_depth = target.depth[vi, ui].astype(state.params.dtype)
    gt_alpha = target.alpha[vi, ui].astype(state.params.dtype)

    tape = Tape()
    pvars = {k: tape.leaf(v, requires_grad=True) for k, v in state.params.arrays.items()}
    try:
        rgb, depth, alpha = render_rays_tape(
            tape, pvars, state.params.arch, sd.sources, env_in,
            origins, dirs, nears, fars, cfg, cache.hull, dtype=state.params.dtype,
        )
    except vr.FieldNumericsError as exc:
        raise TrainingDiverged(state.step, state.params) from exc
    l_c = ad.vmean(ad.absolute(ad.sub(rgb, gt_rgb)))
    l_a = ad.vmean(ad.absolute(ad.sub(alpha, gt_alpha)))
    depth_mask = (gt_alpha > 0.5).astype(state.params.dtype)
    l_d = _masked_mean_abs(ad.sub(depth, gt_depth), depth_mask, 1.0 / HEAD_SIZE_M)
    total = ad.add(ad.add(l_c, l_d), l_a)
    breakdown = LossBreakdown(
        l_c=float(l_c.value), l_d=float(l_d.value), l_a=float(l_a.value), l_t=cache.l_t
    )
    if not np.isfinite(breakdown.total):
        raise TrainingDiverged(state.step, state.params)
    tape.backward(total)
    grads = {k: pvars[k].grad for k in pvars}
    adam_step(state.params.arrays, grads, state.adam, lr=cfg.lr)
    state.step += 1
    return breakdown


@dataclass
class TrainResult:
    params: NelfParams
    state: TrainState
    curves: list
    estimated_envs: dict  # scene index -> EnvironmentMap
    diverged: bool = False


def train(
    dataset: Dataset,
    params: NelfParams | None = None,
    cfg: TrainConfig | None = None,
    arch: ArchConfig | None = None,
    state: TrainState | None = None,
) -> TrainResult:
    cfg = cfg or TrainConfig()
    if params is None:
        params = init_params(arch or ArchConfig(), seed=cfg.seed)
    if state is None:
        state = TrainState(params=params, adam=AdamState.for_params(params.arrays))
    caches = {
        sd.index: prepare_scene_cache(sd, cfg, dataset.cfg.env_dims)
        for sd in dataset.scenes
    }
    curves: list[LossBreakdown] = []
    last_good = state.params.copy()
    try:
        while state.step < cfg.steps:
            breakdown = training_step(state, dataset, caches, cfg)
            curves.append(breakdown)
            if cfg.snapshot_every and state.step % cfg.snapshot_every == 0:
                last_good = state.params.copy()
            if cfg.log_every and state.step % cfg.log_every == 0:
                log.info("step %d total %.5f (%s)", state.step, breakdown.total, breakdown.as_dict())
    except TrainingDiverged as exc:
        log.error("diverged at step %d; returning last good snapshot", exc.step)
        return TrainResult(
            params=last_good,
            state=state,
            curves=curves,
            estimated_envs={i: c.est_env for i, c in caches.items()},
            diverged=True,
        )
    return TrainResult(
        params=state.params,
        state=state,
        curves=curves,
        estimated_envs={i: c.est_env for i, c in caches.items()},
        diverged=False,
    )
