import numpy as np
import pytest

from nelf import volrender as vr
from nelf.field.network import ArchConfig, PosEnc, init_params
from nelf.pipeline.dataset import DatasetConfig, generate_dataset
from nelf.pipeline.evaluate import (
    RenderSettings,
    ablate_table_text,
    eval_table_text,
    evaluate,
    render_image,
)
from nelf.pipeline.metrics import psnr


@pytest.fixture(scope="module")
def ds():
    return generate_dataset(
        1,
        seed=41,
        cfg=DatasetConfig(
            image_size=32, triplets_per_scene=1, eval_targets_per_scene=2, max_spheres=1
        ),
    )


def _params():
    return init_params(ArchConfig(posenc=PosEnc(bands=4)), seed=1)


def test_render_image_shapes_and_background(ds):
    sd = ds.scenes[0]
    ev = sd.eval_targets[0]
    stats = vr.QueryStats()
    rgb, depth, alpha = render_image(
        _params(), sd.sources, ev.env, ev.camera, sd.scene,
        RenderSettings(n_samples=16), stats=stats,
    )
    assert rgb.shape == (32, 32, 3)
    assert depth.shape == (32, 32)
    assert alpha.shape == (32, 32)
    # hull pruning keeps the silhouette exterior exactly empty
    outside = ev.alpha < 0.5
    border = np.zeros_like(outside)
    border[:2] = border[-2:] = True
    assert np.all(alpha[border & outside] == 0.0)
    assert stats.n_queried < stats.n_samples


def test_render_image_hull_off_queries_everything(ds):
    sd = ds.scenes[0]
    ev = sd.eval_targets[0]
    stats = vr.QueryStats()
    render_image(
        _params(), sd.sources, ev.env, ev.camera, sd.scene,
        RenderSettings(n_samples=8, hull=False), stats=stats,
    )
    assert stats.n_queried == stats.n_samples


def test_evaluate_rows_and_table(ds):
    rows = evaluate(_params(), ds, view_counts=(5, 2), settings=RenderSettings(n_samples=8))
    assert [r.view_count for r in rows] == [5, 2]
    assert all(r.n_images == 2 for r in rows)
    assert all(0 <= r.psnr <= 99 for r in rows)
    assert all(-1 <= r.ssim <= 1 for r in rows)
    text = eval_table_text(rows)
    assert "PSNR" in text and "5" in text


def test_evaluate_rejects_bad_view_count(ds):
    with pytest.raises(ValueError):
        evaluate(_params(), ds, view_counts=(7,))


def test_ablate_table_format():
    report = {
        "seed": 0, "steps": 10, "rays_per_batch": 8,
        "modes": {
            "modulated": {"psnr": 20.0, "ssim": 0.8},
            "direct": {"psnr": 19.0, "ssim": 0.75},
        },
    }
    text = ablate_table_text(report)
    assert "modulated" in text and "direct" in text


def test_identical_render_is_capped_psnr(ds):
    img = ds.scenes[0].eval_targets[0].rgb
    assert psnr(img, img) == 99.0
