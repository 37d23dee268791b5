import json
from pathlib import Path

import numpy as np
import pytest

from nelf import io as nio
from nelf.cli import main


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "data"
    cfg = tmp_path_factory.mktemp("cfg") / "gen.json"
    cfg.write_text(json.dumps({
        "n_scenes": 1, "seed": 17, "image_size": 32,
        "triplets_per_scene": 1, "eval_targets_per_scene": 1, "max_spheres": 1,
    }))
    assert main(["gen-data", "--config", str(cfg), "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def fit_dir(data_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "fit"
    cfg = tmp_path_factory.mktemp("cfg") / "fit.json"
    cfg.write_text(json.dumps({
        "dataset": str(data_dir), "steps": 30, "rays_per_batch": 16,
        "n_samples": 16, "posenc_bands": 4,
    }))
    assert main(["fit", "--config", str(cfg), "--out", str(out)]) == 0
    return out


def test_gen_data_writes_layout_and_manifest(data_dir):
    assert (data_dir / "manifest.json").exists()
    assert (data_dir / "summary.json").exists()
    scene_dir = data_dir / "scene_000"
    for name in ("scene.json", "cameras.json", "env_source.json", "env_source.pfm",
                 "source_0.pfm", "source_0.png", "source_0_mask.png",
                 "triplet_0_a.pfm", "triplet_0_b.pfm", "eval_0.pfm"):
        assert (scene_dir / name).exists(), name
    manifest = json.loads((data_dir / "run_manifest.json").read_text())
    assert manifest["command"] == "gen-data"
    assert manifest["config"]["seed"] == 17
    assert "build" in manifest


def test_gen_data_deterministic_bytes(data_dir, tmp_path):
    out2 = tmp_path / "data2"
    cfg = tmp_path / "gen.json"
    cfg.write_text(json.dumps({
        "n_scenes": 1, "seed": 17, "image_size": 32,
        "triplets_per_scene": 1, "eval_targets_per_scene": 1, "max_spheres": 1,
    }))
    assert main(["gen-data", "--config", str(cfg), "--out", str(out2)]) == 0
    for rel in ("scene_000/source_0.pfm", "scene_000/triplet_0_a.pfm",
                "scene_000/eval_0_env.json", "manifest.json"):
        assert (data_dir / rel).read_bytes() == (out2 / rel).read_bytes(), rel


def test_unknown_config_key_exit_2(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"n_scenes": 1, "bogus_key": 3}))
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_invalid_json_exit_2(tmp_path):
    cfg = tmp_path / "broken.json"
    cfg.write_text("{not json")
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_missing_dataset_exit_4(tmp_path):
    assert main(["bake", "--dataset", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 4


def test_missing_out_exit_2(data_dir):
    assert main(["bake", "--dataset", str(data_dir)]) == 2


def test_bake_writes_container(data_dir, tmp_path):
    out = tmp_path / "bake"
    assert main(["bake", "--dataset", str(data_dir), "--out", str(out)]) == 0
    files = list(out.glob("*.nelft"))
    assert len(files) == 1
    present, coeff = nio.read_transport(files[0])
    assert present.any()
    assert coeff.shape[2:] == (8, 16, 3)


def test_render_ref_matches_dataset_source(data_dir, tmp_path):
    out = tmp_path / "ref"
    assert main([
        "render-ref", "--dataset", str(data_dir), "--out", str(out),
        "--camera", "source:0",
    ]) == 0
    img = nio.read_pfm(out / "reference.pfm")
    stored = nio.read_pfm(data_dir / "scene_000" / "source_0.pfm")
    assert np.array_equal(img, stored)


def test_estimate_light_outputs(data_dir, tmp_path):
    out = tmp_path / "light"
    assert main(["estimate-light", "--dataset", str(data_dir), "--out", str(out)]) == 0
    env = nio.read_env_json(out / "estimated_env.json")
    assert env.dims == (8, 16)
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["residuals"]) == 5
    assert summary["log_l1_vs_truth"] >= 0.0


def test_fit_outputs(fit_dir):
    assert (fit_dir / "checkpoint.nelf").exists()
    assert (fit_dir / "estimated_env_scene_0.json").exists()
    curve = json.loads((fit_dir / "loss_curve.json").read_text())
    assert len(curve) == 30
    summary = json.loads((fit_dir / "summary.json").read_text())
    assert summary["diverged"] is False
    assert summary["steps_run"] == 30


def test_relight_and_view_synth(data_dir, fit_dir, tmp_path):
    env_path = data_dir / "scene_000" / "eval_0_env.json"
    out = tmp_path / "relight"
    assert main([
        "relight", "--dataset", str(data_dir), "--out", str(out),
        "--checkpoint", str(fit_dir / "checkpoint.nelf"),
        "--env", str(env_path), "--camera", "eval:0",
    ]) == 0
    assert (out / "render.pfm").exists()
    out2 = tmp_path / "synth"
    assert main([
        "view-synth", "--dataset", str(data_dir), "--out", str(out2),
        "--checkpoint", str(fit_dir / "checkpoint.nelf"), "--camera", "source:1",
    ]) == 0
    assert (out2 / "render.png").exists()
    manifest = json.loads((out2 / "run_manifest.json").read_text())
    assert str(fit_dir / "checkpoint.nelf") in manifest["inputs"]


def test_relight_requires_env(data_dir, fit_dir, tmp_path):
    assert main([
        "relight", "--dataset", str(data_dir), "--out", str(tmp_path / "x"),
        "--checkpoint", str(fit_dir / "checkpoint.nelf"),
    ]) == 2


def test_evaluate_command(data_dir, fit_dir, tmp_path):
    out = tmp_path / "eval"
    cfg = tmp_path / "eval.json"
    cfg.write_text(json.dumps({"n_samples": 8}))
    assert main([
        "evaluate", "--config", str(cfg), "--dataset", str(data_dir),
        "--out", str(out),
        "--checkpoint", str(fit_dir / "checkpoint.nelf"), "--views", "5,2",
    ]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert [r["views"] for r in summary["rows"]] == [5, 2]
    assert (out / "evaluation.txt").exists()


def test_selftest_command_exit_zero(tmp_path):
    assert main(["selftest", "--out", str(tmp_path / "st")]) == 0
    results = json.loads((tmp_path / "st" / "summary.json").read_text())
    assert all(v == "pass" for v in results.values())
