"""Image rendering from a fitted field, view-count studies and the
modulated-vs-direct ablation harness."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .. import volrender as vr
from ..envmap import EnvironmentMap
from ..field.network import NelfParams, SourceView, make_batch_field
from ..scene import AnalyticScene, Camera, Mask, generate_rays, ray_bounds
from .dataset import Dataset, SceneData, TargetView
from .metrics import psnr, ssim
from .train import TrainConfig, TrainState, train

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RenderSettings:
    n_samples: int = 64
    hull: bool = True
    hull_dilation: int = 1
    chunk: int = 2048
    mode: str | None = None


def render_image(
    params: NelfParams,
    views: list[SourceView],
    env: EnvironmentMap,
    camera: Camera,
    scene: AnalyticScene,
    settings: RenderSettings = RenderSettings(),
    stats: vr.QueryStats | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Render rgb/depth/alpha for a full camera frame from k source views."""
    hull = (
        vr.VisualHull(
            [Mask(v.mask) for v in views],
            [v.camera for v in views],
            dilation=settings.hull_dilation,
        )
        if settings.hull
        else None
    )
    near, far = ray_bounds(camera, scene)
    field = make_batch_field(views, env, params, settings.mode)
    cfg = vr.MarchConfig(
        n_samples=settings.n_samples, near=near, far=far, hull_enabled=settings.hull
    )
    h, w = camera.height, camera.width
    u, v = np.meshgrid(np.arange(w), np.arange(h))
    pix = np.stack([u.reshape(-1), v.reshape(-1)], axis=1).astype(np.float64)
    rgb = np.zeros((h * w, 3))
    depth = np.zeros(h * w)
    alpha = np.zeros(h * w)
    for lo in range(0, h * w, settings.chunk):
        sl = slice(lo, min(lo + settings.chunk, h * w))
        o, d = generate_rays(camera, pix[sl])
        r, dep, al = vr.march_rays(
            o, d, np.full(sl.stop - sl.start, near), np.full(sl.stop - sl.start, far),
            field, cfg, hull, stats,
        )
        rgb[sl], depth[sl], alpha[sl] = r, dep, al
    return rgb.reshape(h, w, 3), depth.reshape(h, w), alpha.reshape(h, w)


@dataclass(frozen=True)
class EvalRow:
    view_count: int
    psnr: float
    ssim: float
    n_images: int


def evaluate(
    params: NelfParams,
    eval_set: Dataset,
    view_counts: tuple[int, ...] = (5, 4, 3, 2),
    settings: RenderSettings = RenderSettings(),
) -> list[EvalRow]:
    """Mean PSNR/SSIM over every eval target, rendered from the first k views."""
    for k in view_counts:
        if not 2 <= k <= 5:
            raise ValueError("view counts must lie in {2, 3, 4, 5}")
    rows = []
    for k in sorted(view_counts, reverse=True):
        scores_p, scores_s = [], []
        for sd in eval_set.scenes:
            views = sd.sources[:k]
            for target in sd.eval_targets:
                rgb, _, _ = render_image(
                    params, views, target.env, target.camera, sd.scene, settings
                )
                scores_p.append(psnr(np.clip(rgb, 0, 1), np.clip(target.rgb, 0, 1)))
                scores_s.append(ssim(np.clip(rgb, 0, 1), np.clip(target.rgb, 0, 1)))
        rows.append(
            EvalRow(
                view_count=k,
                psnr=float(np.mean(scores_p)),
                ssim=float(np.mean(scores_s)),
                n_images=len(scores_p),
            )
        )
        log.info("views=%d psnr=%.2f ssim=%.4f (%d images)", k, rows[-1].psnr, rows[-1].ssim, rows[-1].n_images)
    return rows


def eval_table_text(rows: list[EvalRow]) -> str:
    lines = [f"{'views':>5}  {'PSNR':>7}  {'SSIM':>7}  {'images':>6}"]
    for r in rows:
        lines.append(f"{r.view_count:>5}  {r.psnr:>7.2f}  {r.ssim:>7.4f}  {r.n_images:>6}")
    return "\n".join(lines)


def ablate(dataset: Dataset, cfg: TrainConfig, eval_set: Dataset | None = None) -> dict:
    """Train modulated and direct transport modes under identical budgets.

    Returns a report with one row per mode; no ordering is asserted anywhere,
    this is a harness for side-by-side numbers.
    """
    from dataclasses import replace

    from ..field.network import ArchConfig, init_params

    eval_set = eval_set or dataset
    report = {"seed": cfg.seed, "steps": cfg.steps, "rays_per_batch": cfg.rays_per_batch, "modes": {}}
    for mode in ("modulated", "direct"):
        arch = ArchConfig(transport_mode=mode)
        params = init_params(arch, seed=cfg.seed)
        result = train(dataset, params=params, cfg=replace(cfg, mode=mode))
        rows = evaluate(result.params, eval_set, view_counts=(5,), settings=RenderSettings(mode=mode))
        report["modes"][mode] = {
            "psnr": rows[0].psnr,
            "ssim": rows[0].ssim,
            "final_loss": result.curves[-1].total if result.curves else None,
            "diverged": result.diverged,
        }
    return report


def ablate_table_text(report: dict) -> str:
    lines = [
        f"transport ablation (seed={report['seed']}, steps={report['steps']}, "
        f"rays/batch={report['rays_per_batch']})",
        f"{'mode':>10}  {'PSNR':>7}  {'SSIM':>7}",
    ]
    for mode, row in report["modes"].items():
        lines.append(f"{mode:>10}  {row['psnr']:>7.2f}  {row['ssim']:>7.4f}")
    return "\n".join(lines)
