"""Built-in invariant suite behind the ``selftest`` CLI command.

Each check is small, deterministic and self-contained; the runner prints one
line per check and reports failure through a nonzero exit code in the CLI.
"""

from __future__ import annotations

import math
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import envmap as em
from . import io as nio
from . import scene as sc
from . import transport as tp
from . import volrender as vr
from .field import autodiff as ad
from .field.checkpoint import load_params, save_params
from .field.network import ArchConfig, PosEnc, init_params
from .field.optim import AdamState, adam_step


def _check_solid_angles():
    for h, w in [(1, 1), (3, 5), (8, 16), (17, 9)]:
        total = em.solid_angles(h, w).sum() * w
        assert abs(total - 4 * math.pi) < 1e-9, (h, w, total)


def _check_texel_direction():
    d = em.texel_direction(0, 0, 2, 4)
    assert np.allclose(d, [0.5, math.sqrt(0.5), 0.5], atol=1e-9)
    dirs = em.grid_directions(8, 16).reshape(-1, 3)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-12)


def _check_env_roundtrip():
    env = em.EnvironmentMap(np.random.default_rng(0).random((8, 16, 3)))
    with tempfile.TemporaryDirectory() as d:
        nio.write_env_json(Path(d) / "e.json", env)
        back = nio.read_env_json(Path(d) / "e.json")
        assert np.array_equal(back.radiance, env.radiance)
        nio.write_env_pfm(Path(d) / "e.pfm", env)
        back32 = nio.read_env_pfm(Path(d) / "e.pfm")
        assert np.array_equal(back32.radiance, env.radiance.astype(np.float32))


def _check_relight_linearity():
    rng = np.random.default_rng(1)
    t = em.TransportVector(rng.random((8, 16, 3)))
    e1 = em.EnvironmentMap(rng.random((8, 16, 3)))
    e2 = em.EnvironmentMap(rng.random((8, 16, 3)))
    a, b = 0.37, 1.21
    combo = em.relight(t, em.EnvironmentMap(a * e1.radiance + b * e2.radiance))
    split = a * em.relight(t, e1) + b * em.relight(t, e2)
    assert np.max(np.abs(combo - split)) < 1e-12


def _check_rotate_identity():
    env = em.EnvironmentMap(np.random.default_rng(2).random((8, 16, 3)))
    out = em.rotate(env, em.RotationOp.identity(), mode="nearest")
    assert np.array_equal(out.radiance, env.radiance)


def _check_merge_example():
    a = em.EnvironmentMap.constant(2.0)
    b = em.EnvironmentMap.constant(6.0)
    ca = em.ConfidenceMap.uniform(value=3.0)
    cb = em.ConfidenceMap.uniform(value=1.0)
    rid = em.RotationOp.identity()
    merged, cov = em.merge([(a, ca, rid), (b, cb, rid)])
    assert np.allclose(merged.radiance, 3.0, atol=1e-12)
    assert cov.n_degenerate == 0


def _check_projection_roundtrip():
    cam = sc.look_at((0.2, 0.3, 1.5), (0, 0, 0), 64, 64, 120.0)
    for pix in [(0.0, 0.0), (31.5, 40.25), (63.0, 63.0)]:
        ray = sc.generate_ray(cam, pix, 0.5, 3.0)
        res = sc.project(cam, ray.at(1.2))
        assert res is not None
        assert np.max(np.abs(res[0] - np.asarray(pix))) < 1e-4


def _check_intersect():
    scene = sc.AnalyticScene((sc.Sphere(center=(0, 0, 0), radius=1.0, albedo=(1, 1, 1)),))
    hit = sc.intersect(scene, sc.Ray((0, 0, 5), (0, 0, -1), 0.1, 100.0))
    assert hit is not None and abs(hit.t - 4.0) < 1e-12
    assert np.allclose(hit.normal, (0, 0, 1))


def _check_dual_path():
    scene = sc.AnalyticScene(
        (
            sc.Sphere(center=(0, 0, 0), radius=0.1, albedo=(0.6, 0.5, 0.4)),
            sc.Sphere(center=(0.12, 0.05, 0.05), radius=0.05, albedo=(0.3, 0.6, 0.7)),
        )
    )
    cam = sc.look_at((0.1, 0.1, 1.2), (0, 0, 0), 20, 20, 90.0)
    env = em.EnvironmentMap(np.random.default_rng(3).random((8, 16, 3)))
    baked = tp.relight_image(tp.bake_transport_image(scene, cam), env)
    ref = tp.reference_render(scene, cam, env)
    assert np.max(np.abs(baked - ref)) <= 1e-6


def _check_estimate_decoupled():
    coeff = np.zeros((4, 4, 8, 16, 3))
    present = np.zeros((4, 4), dtype=bool)
    img = np.zeros((4, 4, 3))
    rng = np.random.default_rng(4)
    for i in range(4):
        for j in range(4):
            r, c = i * 2, j * 4
            coeff[i, j, r, c, :] = 1.0
            present[i, j] = True
            img[i, j] = rng.random(3)
    timg = tp.SurfaceTransportImage(present=present, coefficients=coeff)
    est = tp.estimate_view_light(img, timg, (8, 16))
    for i in range(4):
        for j in range(4):
            got = est.env.radiance[i * 2, j * 4]
            assert np.max(np.abs(got - img[i, j])) < 1e-9


def _check_slab():
    for sig in (1.0, 80.0, 500.0):
        def fq(pts, tc, s=sig):
            return np.full(len(pts), s), np.full((len(pts), 3), 0.5)

        out = vr.march(
            sc.Ray((0, 0, 0), (0, 0, 1), 0.0, 1.0),
            fq,
            vr.MarchConfig(n_samples=256, near=0.0, far=1.0, hull_enabled=False),
        )
        assert abs(out.alpha - (1 - math.exp(-sig))) <= 1e-4


def _check_march_gradients():
    rng = np.random.default_rng(5)
    sigma = rng.random((1, 8)) * 3
    rad = rng.random((1, 8, 3))
    depths = np.sort(rng.random((1, 8)), axis=1)
    far = depths[:, -1:] + 0.2
    _, _, _, saved = vr.composite(sigma, rad, depths, far[:, 0])
    g = vr.composite_backward(saved, np.ones((1, 3)), np.ones(1), np.ones(1))
    h = 1e-6

    def f(s):
        r, d, a, _ = vr.composite(s, rad, depths, far[:, 0])
        return r.sum() + d.sum() + a.sum()

    for j in (0, 3, 7):
        sp, sm = sigma.copy(), sigma.copy()
        sp[0, j] += h
        sm[0, j] -= h
        fd = (f(sp) - f(sm)) / (2 * h)
        assert abs(fd - g[0][0, j]) / max(abs(fd), 1e-9) < 1e-5


def _check_autodiff_small():
    rng = np.random.default_rng(6)
    params = {"w": rng.standard_normal((4, 3)), "b": rng.standard_normal(3)}
    x = rng.standard_normal((5, 4))

    def fn(tape, p):
        h = ad.relu(ad.affine(tape.constant(x), p["w"], p["b"]))
        return ad.vsum(ad.softplus(h))

    _, grads = ad.grad_dict(fn, params)
    fd = ad.finite_difference(fn, params, "w", (1, 2))
    assert abs(fd - grads["w"][1, 2]) / max(abs(fd), 1e-9) < 1e-6


def _check_adam():
    arrays = {"w": np.array([1.0, -2.0])}
    st = AdamState.for_params(arrays)
    adam_step(arrays, {"w": np.zeros(2)}, st, lr=0.1)
    assert np.allclose(arrays["w"], [1.0, -2.0])
    adam_step(arrays, {"w": np.array([np.nan, 0.0])}, st, lr=0.1)
    assert st.skipped == 1 and np.allclose(arrays["w"], [1.0, -2.0])


def _check_checkpoint_roundtrip():
    params = init_params(ArchConfig(posenc=PosEnc(bands=3)), seed=9)
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "ck.nelf"
        save_params(p, params, extras={"step": 12})
        loaded, extras = load_params(p)
        assert extras["step"] == 12
        for k in params.arrays:
            assert np.array_equal(loaded.arrays[k], params.arrays[k])
        save_params(Path(d) / "ck2.nelf", loaded, extras={"step": 12})
        assert (Path(d) / "ck.nelf").read_bytes() == (Path(d) / "ck2.nelf").read_bytes()


def _check_transport_container():
    rng = np.random.default_rng(7)
    present = rng.random((5, 6)) > 0.4
    coeff = rng.random((5, 6, 8, 16, 3)) * present[:, :, None, None, None]
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "t.nelft"
        nio.write_transport(p, present, coeff)
        p2, c2 = nio.read_transport(p)
        assert np.array_equal(p2, present)
        assert np.array_equal(c2.astype(np.float32), coeff.astype(np.float32))


def _check_hull():
    scene = sc.AnalyticScene((sc.Sphere(center=(0, 0, 0), radius=0.1, albedo=(1, 1, 1)),))
    cams = [
        sc.look_at(eye, (0, 0, 0), 32, 32, 100.0)
        for eye in [(0, 0, 1.2), (0.8, 0.1, 0.9), (-0.7, 0.2, 1.0)]
    ]
    masks = [sc.render_mask(scene, c) for c in cams]
    assert vr.hull_test((0, 0, 0), masks, cams)
    assert not vr.hull_test((0.5, 0.5, 0.5), masks, cams)


def _check_mode_ratio():
    from .pipeline.train import sample_mode

    rng = np.random.default_rng(8)
    n = 10_000
    hits = sum(sample_mode(rng, 0.7) == "novel" for _ in range(n))
    assert abs(hits / n - 0.7) <= 0.02


CHECKS = [
    ("solid-angle-conservation", _check_solid_angles),
    ("texel-directions", _check_texel_direction),
    ("envmap-roundtrip", _check_env_roundtrip),
    ("relight-linearity", _check_relight_linearity),
    ("rotate-identity", _check_rotate_identity),
    ("merge-weighted-average", _check_merge_example),
    ("projection-roundtrip", _check_projection_roundtrip),
    ("sphere-intersection", _check_intersect),
    ("dual-path-oracle", _check_dual_path),
    ("light-estimate-decoupled", _check_estimate_decoupled),
    ("slab-transmittance", _check_slab),
    ("march-gradients", _check_march_gradients),
    ("autodiff-finite-difference", _check_autodiff_small),
    ("adam-contract", _check_adam),
    ("checkpoint-roundtrip", _check_checkpoint_roundtrip),
    ("transport-container", _check_transport_container),
    ("visual-hull", _check_hull),
    ("training-mode-ratio", _check_mode_ratio),
]


def run_selftest(stream=sys.stderr) -> dict:
    results = {}
    for name, fn in CHECKS:
        try:
            fn()
            results[name] = "pass"
            print(f"[selftest] {name}: pass", file=stream)
        except Exception as exc:  # noqa: BLE001 - report every failure kind
            results[name] = f"fail: {exc}"
            print(f"[selftest] {name}: FAIL ({exc})", file=stream)
    return results
