"""Procedural dataset generation and the on-disk layout.

Each scene holds a handful of random spheres, five posed source views (the
first frontal), several training triplets sharing those sources, and held-out
evaluation targets. A triplet pairs (a) a novel view under the source light
rotated by a recorded azimuth with (b) a novel view under a freshly drawn
environment map. Everything is a pure function of (seed, config).

Disk layout, one directory per scene::

    scene_000/
      scene.json  cameras.json  env_source.pfm  env_source.json
      source_0.pfm  source_0.png  source_0_mask.png  ...
      triplet_0_a.pfm/.png  triplet_0_a_depth.pfm  triplet_0_a_mask.png
      triplet_0_a_env.pfm/.json   (likewise *_b_*)
      eval_0.pfm/.png  eval_0_depth.pfm  eval_0_mask.png  eval_0_env.pfm/.json
    manifest.json
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import io as nio
from ..envmap import EnvironmentMap, RotationOp, rotate
from ..field.network import SourceView
from ..scene import (
    AnalyticScene,
    Camera,
    Sphere,
    camera_from_json_dict,
    camera_to_json_dict,
    load_scene_json,
    render_depth,
    render_mask,
    save_scene_json,
    look_at,
)
from ..transport import reference_render
from .envpool import make_env_pool


@dataclass(frozen=True)
class DatasetConfig:
    n_scenes: int = 1
    seed: int = 0
    image_size: int = 64
    n_sources: int = 5
    triplets_per_scene: int = 6
    eval_targets_per_scene: int = 2
    env_dims: tuple[int, int] = (8, 16)
    min_spheres: int = 1
    max_spheres: int = 3
    radius_range: tuple[float, float] = (0.05, 0.15)
    distance_range: tuple[float, float] = (1.0, 2.0)
    cone_deg: float = 30.0
    fill_range: tuple[float, float] = (0.6, 0.75)
    rotation_deg: float = 45.0
    bounces: int = 0
    density_scale: float = 200.0
    specular_prob: float = 0.0  # generated spheres are diffuse by default

    def to_dict(self) -> dict:
        d = asdict(self)
        d["env_dims"] = list(self.env_dims)
        for k in ("radius_range", "distance_range", "fill_range"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        d = dict(d)
        d["env_dims"] = tuple(d["env_dims"])
        for k in ("radius_range", "distance_range", "fill_range"):
            d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class TargetView:
    camera: Camera
    rgb: np.ndarray  # (H, W, 3) linear
    depth: np.ndarray  # (H, W), 0 where no hit
    alpha: np.ndarray  # (H, W) binary
    env: EnvironmentMap  # world-frame lighting of this render
    rotation_deg: float | None  # set for rotated-light targets
    kind: str  # "rotated" | "novel"


@dataclass
class Triplet:
    target_a: TargetView  # same light, rotated by target_a.rotation_deg
    target_b: TargetView  # novel light


@dataclass
class SceneData:
    index: int
    scene: AnalyticScene
    sources: list[SourceView]
    source_env: EnvironmentMap
    triplets: list[Triplet]
    eval_targets: list[TargetView]


@dataclass
class Dataset:
    cfg: DatasetConfig
    scenes: list[SceneData]


def _mask_span(mask: np.ndarray) -> float:
    cols = np.flatnonzero(mask.any(axis=0))
    rows = np.flatnonzero(mask.any(axis=1))
    if len(cols) == 0:
        return 0.0
    return max(cols[-1] - cols[0] + 1, rows[-1] - rows[0] + 1) / mask.shape[0]


def _cone_camera(
    rng: np.random.Generator,
    scene: AnalyticScene,
    cfg: DatasetConfig,
    frontal: bool,
) -> Camera:
    center, bound_radius = scene.bounds()
    half = math.radians(cfg.cone_deg)
    az = 0.0 if frontal else rng.uniform(-half, half)
    el = 0.0 if frontal else rng.uniform(-half, half)
    dist = rng.uniform(*cfg.distance_range)
    eye = center + dist * np.array(
        [math.sin(az) * math.cos(el), math.sin(el), math.cos(az) * math.cos(el)]
    )
    fill = rng.uniform(*cfg.fill_range)
    theta_obj = math.asin(min(0.999, bound_radius / dist))
    fx = fill * cfg.image_size / (2.0 * math.tan(theta_obj))
    cam = look_at(eye, center, cfg.image_size, cfg.image_size, fx)
    # The bounding sphere overestimates sparse geometry; one measure-and-
    # correct pass widens the focal length until the silhouette itself spans
    # the requested frame fraction (capped so the object stays in frame).
    span = _mask_span(render_mask(scene, cam).values)
    if 0.0 < span < fill:
        fx = min(fx * fill / span, fill * cfg.image_size / (2.0 * math.tan(theta_obj)) * 1.6)
        cam = look_at(eye, center, cfg.image_size, cfg.image_size, fx)
    return cam


def _sample_scene(rng: np.random.Generator, cfg: DatasetConfig) -> AnalyticScene:
    n = int(rng.integers(cfg.min_spheres, cfg.max_spheres + 1))
    spheres = []
    for _ in range(n):
        radius = rng.uniform(*cfg.radius_range)
        center = rng.uniform(-0.12, 0.12, size=3)
        albedo = rng.uniform(0.25, 0.95, size=3)
        if rng.random() < cfg.specular_prob:
            spheres.append(
                Sphere(center=center, radius=radius, albedo=albedo,
                       ks=rng.uniform(0.2, 0.6), exponent=rng.uniform(16, 96))
            )
        else:
            spheres.append(Sphere(center=center, radius=radius, albedo=albedo))
    return AnalyticScene(tuple(spheres), density_scale=cfg.density_scale)


def _render_target(
    scene: AnalyticScene,
    cam: Camera,
    env: EnvironmentMap,
    cfg: DatasetConfig,
    kind: str,
    rotation_deg: float | None,
    seed: int,
) -> TargetView:
    rgb = reference_render(scene, cam, env, bounces=cfg.bounces, seed=seed)
    depth, mask = render_depth(scene, cam)
    return TargetView(
        camera=cam,
        rgb=rgb,
        depth=depth,
        alpha=mask.values.astype(np.float64),
        env=env,
        rotation_deg=rotation_deg,
        kind=kind,
    )


def generate_scene(index: int, cfg: DatasetConfig) -> SceneData:
    """Build one scene and all of its renders, deterministic in (seed, index)."""
    for attempt in range(20):
        rng = np.random.default_rng([cfg.seed, index, attempt])
        scene = _sample_scene(rng, cfg)

        pool = make_env_pool(cfg.env_dims, seed=cfg.seed * 1009 + index)
        env_idx = int(rng.integers(len(pool)))
        source_env = pool[env_idx]
        cams = [
            _cone_camera(rng, scene, cfg, frontal=(k == 0))
            for k in range(cfg.n_sources)
        ]
        masks = [render_mask(scene, c) for c in cams]
        if any(m.area() == 0 for m in masks):
            continue  # object missed a frustum; regenerate
        sources = []
        for k, (cam, mask) in enumerate(zip(cams, masks)):
            rgb = reference_render(scene, cam, source_env, bounces=cfg.bounces, seed=cfg.seed)
            sources.append(
                SourceView(view_id=k, image=rgb, camera=cam, mask=mask.values)
            )
        triplets = []
        for t in range(cfg.triplets_per_scene):
            angle = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg)
            env_a = rotate(source_env, RotationOp.about_y(math.radians(angle)))
            cam_a = _cone_camera(rng, scene, cfg, frontal=False)
            target_a = _render_target(scene, cam_a, env_a, cfg, "rotated", angle, cfg.seed)
            env_b = pool[int(rng.integers(len(pool)))]
            cam_b = _cone_camera(rng, scene, cfg, frontal=False)
            target_b = _render_target(scene, cam_b, env_b, cfg, "novel", None, cfg.seed)
            triplets.append(Triplet(target_a=target_a, target_b=target_b))
        evals = []
        for _ in range(cfg.eval_targets_per_scene):
            env_e = pool[int(rng.integers(len(pool)))]
            cam_e = _cone_camera(rng, scene, cfg, frontal=False)
            evals.append(_render_target(scene, cam_e, env_e, cfg, "novel", None, cfg.seed))
        return SceneData(
            index=index,
            scene=scene,
            sources=sources,
            source_env=source_env,
            triplets=triplets,
            eval_targets=evals,
        )
    raise RuntimeError(f"scene {index}: no valid configuration after bounded retries")


def generate_dataset(
    n_scenes: int, seed: int, cfg: DatasetConfig | None = None, threads: int = 1
) -> Dataset:
    from dataclasses import replace

    cfg = replace(cfg or DatasetConfig(), n_scenes=n_scenes, seed=seed)
    if n_scenes < 1:
        raise ValueError("need at least one scene")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scenes = list(pool.map(lambda i: generate_scene(i, cfg), range(n_scenes)))
    else:
        scenes = [generate_scene(i, cfg) for i in range(n_scenes)]
    return Dataset(cfg=cfg, scenes=scenes)


# ---------------------------------------------------------------------------
# Disk round trip


def _save_target(d: Path, stem: str, t: TargetView) -> dict:
    nio.write_pfm(d / f"{stem}.pfm", t.rgb)
    nio.write_png_srgb(d / f"{stem}.png", t.rgb)
    nio.write_pfm(d / f"{stem}_depth.pfm", t.depth)
    nio.write_mask_png(d / f"{stem}_mask.png", t.alpha)
    nio.write_env_pfm(d / f"{stem}_env.pfm", t.env)
    nio.write_env_json(d / f"{stem}_env.json", t.env)
    return {
        "stem": stem,
        "kind": t.kind,
        "rotation_deg": t.rotation_deg,
        "camera": camera_to_json_dict(t.camera),
    }


def _load_target(d: Path, meta: dict) -> TargetView:
    stem = meta["stem"]
    return TargetView(
        camera=camera_from_json_dict(meta["camera"]),
        rgb=nio.read_pfm(d / f"{stem}.pfm").astype(np.float64),
        depth=nio.read_pfm(d / f"{stem}_depth.pfm").astype(np.float64),
        alpha=nio.read_mask_png(d / f"{stem}_mask.png").astype(np.float64),
        env=nio.read_env_json(d / f"{stem}_env.json"),
        rotation_deg=meta["rotation_deg"],
        kind=meta["kind"],
    )


def save_dataset(dataset: Dataset, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"config": dataset.cfg.to_dict(), "scenes": []}
    for sd in dataset.scenes:
        d = out / f"scene_{sd.index:03d}"
        d.mkdir(exist_ok=True)
        save_scene_json(d / "scene.json", sd.scene)
        nio.write_env_pfm(d / "env_source.pfm", sd.source_env)
        nio.write_env_json(d / "env_source.json", sd.source_env)
        cameras = {}
        entry = {"dir": d.name, "sources": [], "triplets": [], "evals": []}
        for sv in sd.sources:
            stem = f"source_{sv.view_id}"
            nio.write_pfm(d / f"{stem}.pfm", sv.image)
            nio.write_png_srgb(d / f"{stem}.png", sv.image)
            nio.write_mask_png(d / f"{stem}_mask.png", sv.mask)
            cameras[stem] = camera_to_json_dict(sv.camera)
            entry["sources"].append({"stem": stem, "view_id": sv.view_id})
        for i, tr in enumerate(sd.triplets):
            meta_a = _save_target(d, f"triplet_{i}_a", tr.target_a)
            meta_b = _save_target(d, f"triplet_{i}_b", tr.target_b)
            entry["triplets"].append({"a": meta_a, "b": meta_b})
        for i, ev in enumerate(sd.eval_targets):
            entry["evals"].append(_save_target(d, f"eval_{i}", ev))
        (d / "cameras.json").write_text(json.dumps(cameras, sort_keys=True))
        manifest["scenes"].append(entry)
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True))


def load_dataset(in_dir) -> Dataset:
    root = Path(in_dir)
    manifest = json.loads((root / "manifest.json").read_text())
    cfg = DatasetConfig.from_dict(manifest["config"])
    scenes = []
    for idx, entry in enumerate(manifest["scenes"]):
        d = root / entry["dir"]
        scene = load_scene_json(d / "scene.json")
        cameras = json.loads((d / "cameras.json").read_text())
        sources = []
        for sv in entry["sources"]:
            stem = sv["stem"]
            sources.append(
                SourceView(
                    view_id=int(sv["view_id"]),
                    image=nio.read_pfm(d / f"{stem}.pfm").astype(np.float64),
                    camera=camera_from_json_dict(cameras[stem]),
                    mask=nio.read_mask_png(d / f"{stem}_mask.png"),
                )
            )
        triplets = [
            Triplet(target_a=_load_target(d, tr["a"]), target_b=_load_target(d, tr["b"]))
            for tr in entry["triplets"]
        ]
        evals = [_load_target(d, meta) for meta in entry["evals"]]
        scenes.append(
            SceneData(
                index=idx,
                scene=scene,
                sources=sources,
                source_env=nio.read_env_json(d / "env_source.json"),
                triplets=triplets,
                eval_targets=evals,
            )
        )
    return Dataset(cfg=cfg, scenes=scenes)
