"""Command-line surface.

Every artifact-producing command takes a JSON config plus flag overrides
(flags win), writes its artifacts under --out together with a manifest
(config echo, seeds, build id, input hashes) and a machine-readable
summary.json. Progress and errors go to stderr.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as nio
from .envmap import EnvironmentMap
from .volrender import FieldNumericsError
from .field.checkpoint import load_params, save_params
from .field.network import ArchConfig, PosEnc, init_params
from .pipeline.dataset import DatasetConfig, generate_dataset, load_dataset, save_dataset
from .pipeline.evaluate import (
    RenderSettings,
    ablate,
    ablate_table_text,
    eval_table_text,
    evaluate,
    render_image,
)
from .pipeline.train import TrainConfig, train
from .scene import camera_from_json_dict
from .transport import (
    bake_transport_image,
    estimate_scene_light,
    reference_render,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class ConfigError(Exception):
    pass


class CliIOError(Exception):
    pass


def build_id() -> str:
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, cwd=Path(__file__).parent, timeout=5,
        )
        if desc.returncode == 0:
            return f"nelf-{__version__}+{desc.stdout.strip()}"
    except Exception:
        pass
    return f"nelf-{__version__}"


def log(msg: str) -> None:
    print(msg, file=sys.stderr)


def load_config(args, allowed: dict) -> dict:
    """Defaults <- config file <- explicit flags; unknown file keys reject."""
    cfg = dict(allowed)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise CliIOError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        unknown = set(data) - set(allowed)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(data)
    for key in allowed:
        flag = getattr(args, key.replace("-", "_"), None)
        if flag is not None:
            cfg[key] = flag
    return cfg


def write_outputs(out_dir: Path, command: str, cfg: dict, inputs: list, summary: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "build": build_id(),
        "config": cfg,
        "inputs": {str(p): nio.sha256_file(p) for p in inputs if Path(p).is_file()},
    }
    # run_manifest, not manifest.json: gen-data's output directory already
    # carries the dataset's own manifest.json
    (out_dir / "run_manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    (out_dir / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1))


def _require_out(args) -> Path:
    if not getattr(args, "out", None):
        raise ConfigError("--out is required for this command")
    return Path(args.out)


def _load_env_file(path: str) -> EnvironmentMap:
    p = Path(path)
    if not p.exists():
        raise CliIOError(f"environment map not found: {p}")
    return nio.read_env_json(p) if p.suffix == ".json" else nio.read_env_pfm(p)


def _load_dataset_arg(cfg: dict):
    path = cfg.get("dataset")
    if not path or not Path(path).exists():
        raise CliIOError(f"dataset directory not found: {path}")
    return load_dataset(path)


def _scene_of(ds, cfg: dict):
    idx = int(cfg.get("scene", 0))
    if not 0 <= idx < len(ds.scenes):
        raise ConfigError(f"scene index {idx} out of range (dataset has {len(ds.scenes)})")
    return ds.scenes[idx]


def _resolve_camera(sd, spec: str):
    if spec.startswith("source:"):
        return sd.sources[int(spec.split(":")[1])].camera
    if spec.startswith("eval:"):
        return sd.eval_targets[int(spec.split(":")[1])].camera
    p = Path(spec)
    if not p.exists():
        raise CliIOError(f"camera spec not found: {spec}")
    return camera_from_json_dict(json.loads(p.read_text()))


def _arch_from_cfg(cfg: dict) -> ArchConfig:
    return ArchConfig(
        hidden=int(cfg["hidden"]),
        posenc=PosEnc(bands=int(cfg["posenc_bands"])),
        transport_mode=cfg["mode"],
        blend_per_texel=bool(cfg["blend_per_texel"]),
        density_gain=float(cfg["density_gain"]),
    )


def _train_cfg(cfg: dict) -> TrainConfig:
    return TrainConfig(
        steps=int(cfg["steps"]),
        rays_per_batch=int(cfg["rays_per_batch"]),
        lr=float(cfg["lr"]),
        mode_split=float(cfg["mode_split"]),
        seed=int(cfg["seed"]),
        n_samples=int(cfg["n_samples"]),
        hull=cfg["hull"] == "on",
        hull_dilation=int(cfg["hull_dilation"]),
        mode=cfg["mode"],
    )


# ---------------------------------------------------------------------------
# Commands


def cmd_gen_data(args) -> int:
    allowed = {
        "n_scenes": 1, "seed": 0, "image_size": 64, "triplets_per_scene": 6,
        "eval_targets_per_scene": 2, "min_spheres": 1, "max_spheres": 3,
        "bounces": 0, "specular_prob": 0.0, "threads": 1,
    }
    cfg = load_config(args, allowed)
    out = _require_out(args)
    dc = DatasetConfig(
        n_scenes=int(cfg["n_scenes"]), seed=int(cfg["seed"]),
        image_size=int(cfg["image_size"]),
        triplets_per_scene=int(cfg["triplets_per_scene"]),
        eval_targets_per_scene=int(cfg["eval_targets_per_scene"]),
        min_spheres=int(cfg["min_spheres"]), max_spheres=int(cfg["max_spheres"]),
        bounces=int(cfg["bounces"]), specular_prob=float(cfg["specular_prob"]),
    )
    log(f"generating {dc.n_scenes} scene(s), seed {dc.seed}")
    ds = generate_dataset(dc.n_scenes, dc.seed, dc, threads=int(cfg["threads"]))
    save_dataset(ds, out)
    write_outputs(out, "gen-data", cfg, [], {
        "scenes": len(ds.scenes),
        "triplets": sum(len(s.triplets) for s in ds.scenes),
        "eval_targets": sum(len(s.eval_targets) for s in ds.scenes),
    })
    return EXIT_OK


def cmd_bake(args) -> int:
    allowed = {"dataset": None, "scene": 0, "view": 0, "bounces": 0, "samples": 16, "seed": 0}
    cfg = load_config(args, allowed)
    out = _require_out(args)
    ds = _load_dataset_arg(cfg)
    sd = _scene_of(ds, cfg)
    view = int(cfg["view"])
    cam = sd.sources[view].camera
    log(f"baking transport for scene {sd.index} view {view}")
    timg = bake_transport_image(
        sd.scene, cam, ds.cfg.env_dims, int(cfg["bounces"]), int(cfg["samples"]), int(cfg["seed"])
    )
    out.mkdir(parents=True, exist_ok=True)
    timg.save(out / f"transport_s{sd.index}_v{view}.nelft")
    write_outputs(out, "bake", cfg, [Path(cfg["dataset"]) / "manifest.json"], {
        "present_pixels": int(timg.present.sum()),
        "file": f"transport_s{sd.index}_v{view}.nelft",
    })
    return EXIT_OK


def cmd_render_ref(args) -> int:
    allowed = {"dataset": None, "scene": 0, "camera": "source:0", "env": "source",
               "bounces": 0, "samples": 16, "seed": 0}
    cfg = load_config(args, allowed)
    out = _require_out(args)
    ds = _load_dataset_arg(cfg)
    sd = _scene_of(ds, cfg)
    cam = _resolve_camera(sd, cfg["camera"])
    env = sd.source_env if cfg["env"] == "source" else _load_env_file(cfg["env"])
    img = reference_render(sd.scene, cam, env, int(cfg["bounces"]), int(cfg["samples"]), int(cfg["seed"]))
    out.mkdir(parents=True, exist_ok=True)
    nio.write_pfm(out / "reference.pfm", img)
    nio.write_png_srgb(out / "reference.png", img)
    write_outputs(out, "render-ref", cfg, [Path(cfg["dataset"]) / "manifest.json"], {
        "max_value": float(img.max()), "files": ["reference.pfm", "reference.png"],
    })
    return EXIT_OK


def cmd_estimate_light(args) -> int:
    allowed = {"dataset": None, "scene": 0, "bounces": 0, "samples": 16, "seed": 0}
    cfg = load_config(args, allowed)
    out = _require_out(args)
    ds = _load_dataset_arg(cfg)
    sd = _scene_of(ds, cfg)
    log(f"estimating source light for scene {sd.index} from {len(sd.sources)} views")
    solve = estimate_scene_light(
        sd.scene, [(sv.image, sv.camera) for sv in sd.sources], ds.cfg.env_dims,
        int(cfg["bounces"]), int(cfg["samples"]), int(cfg["seed"]),
    )
    out.mkdir(parents=True, exist_ok=True)
    nio.write_env_json(out / "estimated_env.json", solve.global_env)
    nio.write_env_pfm(out / "estimated_env.pfm", solve.global_env)
    from .pipeline.losses import loss_light

    write_outputs(out, "estimate-light", cfg, [Path(cfg["dataset"]) / "manifest.json"], {
        "residuals": [v.residual for v in solve.per_view],
        "degenerate_texels": solve.coverage.n_degenerate,
        "log_l1_vs_truth": loss_light(solve.global_env, sd.source_env),
    })
    return EXIT_OK


FIT_ALLOWED = {
    "dataset": None, "steps": 20000, "rays_per_batch": 64, "lr": 1e-4,
    "mode_split": 0.7, "seed": 0, "n_samples": 48, "hull": "on",
    "hull_dilation": 1, "mode": "modulated", "hidden": 64, "posenc_bands": 8,
    "density_gain": 25.0, "blend_per_texel": False,
}


def cmd_fit(args) -> int:
    cfg = load_config(args, FIT_ALLOWED)
    out = _require_out(args)
    ds = _load_dataset_arg(cfg)
    arch = _arch_from_cfg(cfg)
    tc = _train_cfg(cfg)
    params = init_params(arch, seed=tc.seed)
    log(f"fitting {tc.steps} steps on {len(ds.scenes)} scene(s)")
    result = train(ds, params=params, cfg=tc)
    out.mkdir(parents=True, exist_ok=True)
    save_params(out / "checkpoint.nelf", result.params, extras=result.state.snapshot_extras())
    for idx, env in result.estimated_envs.items():
        nio.write_env_json(out / f"estimated_env_scene_{idx}.json", env)
    curve = [b.as_dict() for b in result.curves]
    (out / "loss_curve.json").write_text(json.dumps(curve))
    write_outputs(out, "fit", cfg, [Path(cfg["dataset"]) / "manifest.json"], {
        "diverged": result.diverged,
        "steps_run": result.state.step,
        "final_loss": curve[-1]["total"] if curve else None,
        "param_hash": result.params.content_hash(),
    })
    if result.diverged:
        log("training diverged; wrote last good checkpoint")
        return EXIT_NUMERIC
    return EXIT_OK


def _render_cmd_common(args, use_env: str) -> int:
    allowed = {
        "dataset": None, "scene": 0, "checkpoint": None, "camera": "eval:0",
        "env": None, "views": 5, "n_samples": 64, "hull": "on", "hull_dilation": 1,
    }
    cfg = load_config(args, allowed)
    out = _require_out(args)
    ds = _load_dataset_arg(cfg)
    sd = _scene_of(ds, cfg)
    ck = cfg.get("checkpoint")
    if not ck or not Path(ck).exists():
        raise CliIOError(f"checkpoint not found: {ck}")
    params, extras = load_params(ck)
    cam = _resolve_camera(sd, cfg["camera"])
    if use_env == "explicit":
        if not cfg.get("env"):
            raise ConfigError("relight requires an 'env' map path")
        env = _load_env_file(cfg["env"])
    else:
        est = Path(ck).parent / f"estimated_env_scene_{sd.index}.json"
        if est.exists():
            env = nio.read_env_json(est)
        else:
            log("no stored light estimate next to checkpoint; re-estimating")
            env = estimate_scene_light(
                sd.scene, [(sv.image, sv.camera) for sv in sd.sources], ds.cfg.env_dims
            ).global_env
    k = int(cfg["views"])
    settings = RenderSettings(
        n_samples=int(cfg["n_samples"]), hull=cfg["hull"] == "on",
        hull_dilation=int(cfg["hull_dilation"]),
    )
    rgb, depth, alpha = render_image(params, sd.sources[:k], env, cam, sd.scene, settings)
    out.mkdir(parents=True, exist_ok=True)
    nio.write_pfm(out / "render.pfm", rgb)
    nio.write_png_srgb(out / "render.png", rgb)
    nio.write_pfm(out / "depth.pfm", depth)
    nio.write_png_srgb(out / "alpha.png", np.repeat(alpha[:, :, None], 3, axis=2))
    command = "relight" if use_env == "explicit" else "view-synth"
    write_outputs(out, command, cfg, [Path(ck)], {
        "max_value": float(rgb.max()),
        "mean_alpha": float(alpha.mean()),
        "files": ["render.pfm", "render.png", "depth.pfm", "alpha.png"],
    })
    return EXIT_OK


def cmd_relight(args) -> int:
    return _render_cmd_common(args, "explicit")


def cmd_view_synth(args) -> int:
    return _render_cmd_common(args, "estimated")


def cmd_evaluate(args) -> int:
    allowed = {
        "dataset": None, "checkpoint": None, "views": None,
        "n_samples": 64, "hull": "on", "hull_dilation": 1,
    }
    cfg = load_config(args, allowed)
    out = _require_out(args)
    ds = _load_dataset_arg(cfg)
    ck = cfg.get("checkpoint")
    if not ck or not Path(ck).exists():
        raise CliIOError(f"checkpoint not found: {ck}")
    params, _ = load_params(ck)
    counts = (5, 4, 3, 2) if cfg["views"] is None else tuple(
        int(v) for v in str(cfg["views"]).split(",")
    )
    settings = RenderSettings(
        n_samples=int(cfg["n_samples"]), hull=cfg["hull"] == "on",
        hull_dilation=int(cfg["hull_dilation"]),
    )
    rows = evaluate(params, ds, counts, settings)
    out.mkdir(parents=True, exist_ok=True)
    table = eval_table_text(rows)
    (out / "evaluation.txt").write_text(table + "\n")
    log(table)
    write_outputs(out, "evaluate", cfg, [Path(ck)], {
        "rows": [
            {"views": r.view_count, "psnr": r.psnr, "ssim": r.ssim, "images": r.n_images}
            for r in rows
        ],
    })
    return EXIT_OK


def cmd_ablate(args) -> int:
    allowed = {k: v for k, v in FIT_ALLOWED.items() if k != "mode"}
    cfg = load_config(args, allowed)
    out = _require_out(args)
    ds = _load_dataset_arg(cfg)
    tc = _train_cfg({**cfg, "mode": None})
    log(f"ablation: training modulated and direct for {tc.steps} steps each")
    report = ablate(ds, tc)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.json").write_text(json.dumps(report, sort_keys=True, indent=1))
    table = ablate_table_text(report)
    (out / "ablation.txt").write_text(table + "\n")
    log(table)
    write_outputs(out, "ablate", cfg, [Path(cfg["dataset"]) / "manifest.json"], report)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    results = run_selftest()
    failed = [k for k, v in results.items() if v != "pass"]
    if getattr(args, "out", None):
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(json.dumps(results, sort_keys=True, indent=1))
    log(f"selftest: {len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_NUMERIC


COMMANDS = {
    "gen-data": cmd_gen_data,
    "bake": cmd_bake,
    "render-ref": cmd_render_ref,
    "estimate-light": cmd_estimate_light,
    "fit": cmd_fit,
    "relight": cmd_relight,
    "view-synth": cmd_view_synth,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "selftest": cmd_selftest,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nelf",
        description="Light-transport fields on analytic scenes: bake, fit, relight.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--views", type=str, default=None)
        p.add_argument("--mode", choices=["modulated", "direct"], default=None)
        p.add_argument("--hull", choices=["on", "off"], default=None)
        p.add_argument("--bounces", type=int, choices=[0, 1], default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--dataset", type=str, default=None)
        p.add_argument("--checkpoint", type=str, default=None)
        p.add_argument("--scene", type=int, default=None)
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--env", type=str, default=None)
        p.add_argument("--camera", type=str, default=None)
        p.add_argument("--n-scenes", dest="n_scenes", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        log(f"config error: {exc}")
        return EXIT_CONFIG
    except CliIOError as exc:
        log(f"io error: {exc}")
        return EXIT_IO
    except OSError as exc:
        log(f"io error: {exc}")
        return EXIT_IO
    except (FloatingPointError, FieldNumericsError, ValueError) as exc:
        log(f"numerical failure: {exc}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
