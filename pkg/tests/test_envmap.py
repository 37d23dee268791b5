import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nelf import envmap as em


def test_texel_direction_analytic_case():
    d = em.texel_direction(0, 0, 2, 4)
    assert np.allclose(d, [0.5, math.sqrt(0.5), 0.5], atol=1e-12)


def test_texel_direction_polar_symmetry():
    h, w = 8, 16
    for r in range(h):
        for c in range(w):
            up = em.texel_direction(r, c, h, w)
            down = em.texel_direction(h - 1 - r, c, h, w)
            assert up[1] == pytest.approx(-down[1], abs=1e-12)


def test_all_default_directions_unit_and_distinct():
    dirs = em.grid_directions(8, 16).reshape(-1, 3)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-12)
    gram = dirs @ dirs.T
    np.fill_diagonal(gram, -1.0)
    assert gram.max() < 1.0 - 1e-9  # no duplicated directions


def test_texel_direction_bounds():
    with pytest.raises(ValueError):
        em.texel_direction(8, 0, 8, 16)
    with pytest.raises(ValueError):
        em.texel_direction(0, -1, 8, 16)


@given(h=st.integers(1, 32), w=st.integers(1, 64))
@settings(max_examples=60, deadline=None)
def test_solid_angles_sum_to_sphere(h, w):
    total = em.solid_angles(h, w).sum() * w
    assert total == pytest.approx(4 * math.pi, abs=1e-9)


def test_solid_angle_closed_form_row0():
    # (2*pi/16) * (1 - cos(pi/8)), frozen from the closed form
    expected = (2 * math.pi / 16) * (1 - math.cos(math.pi / 8))
    assert em.texel_solid_angle(0, 8, 16) == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(0.0298924376812952, abs=1e-12)


def test_solid_angle_equatorial_rows_equal():
    assert em.texel_solid_angle(3, 8, 16) == pytest.approx(
        em.texel_solid_angle(4, 8, 16), abs=1e-15
    )


def test_sample_nearest_round_trip():
    rng = np.random.default_rng(0)
    env = em.EnvironmentMap(rng.random((8, 16, 3)))
    for r, c in [(0, 0), (3, 7), (7, 15), (4, 0)]:
        d = em.texel_direction(r, c, 8, 16)
        assert np.array_equal(em.sample(env, d, "nearest"), env.radiance[r, c])


def test_sample_bilinear_constant_map():
    env = em.EnvironmentMap.constant((0.3, 0.5, 0.7))
    rng = np.random.default_rng(1)
    for _ in range(20):
        d = rng.standard_normal(3)
        d /= np.linalg.norm(d)
        assert np.allclose(em.sample(env, d, "bilinear"), [0.3, 0.5, 0.7], atol=1e-12)


def test_sample_bilinear_seam_blend():
    # A direction exactly on the phi=0 seam at a row center blends columns
    # W-1 and 0 with equal weight; rows are hit exactly.
    h, w = 8, 16
    env_arr = np.zeros((h, w, 3))
    env_arr[2, 0] = [1.0, 0.0, 0.0]
    env_arr[2, w - 1] = [0.0, 1.0, 0.0]
    env = em.EnvironmentMap(env_arr)
    theta = math.pi * 2.5 / h
    d = np.array([math.sin(theta), math.cos(theta), 0.0])  # phi = 0
    got = em.sample(env, d, "bilinear")
    assert got == pytest.approx([0.5, 0.5, 0.0], abs=1e-9)


def test_sample_rejects_non_unit():
    env = em.EnvironmentMap.zeros()
    with pytest.raises(ValueError):
        em.sample(env, np.array([0.0, 2.0, 0.0]))


def test_rotate_identity_nearest_exact():
    env = em.EnvironmentMap(np.random.default_rng(2).random((8, 16, 3)))
    out = em.rotate(env, em.RotationOp.identity(), mode="nearest")
    assert np.array_equal(out.radiance, env.radiance)


def _smooth_env(h=8, w=16):
    dirs = em.grid_directions(h, w)
    val = 0.6 + 0.4 * dirs[:, :, 1:2] + 0.2 * dirs[:, :, 0:1]
    return em.EnvironmentMap(np.repeat(val, 3, axis=2))


def test_rotate_composition_on_smooth_map():
    env = _smooth_env()
    r1 = em.RotationOp.about_y(0.4)
    r2 = em.RotationOp.about_y(-0.9)
    two_step = em.rotate(em.rotate(env, r1), r2)
    one_step = em.rotate(env, r2.compose(r1))
    tol = 0.05 * env.radiance.max()
    assert np.max(np.abs(two_step.radiance - one_step.radiance)) <= tol


def test_rotate_preserves_energy_on_smooth_map():
    env = _smooth_env()
    rot = em.RotationOp.about_y(1.1)
    before = env.total_energy()
    after = em.rotate(env, rot).total_energy()
    assert abs(after - before) <= 0.02 * before


def test_rotate_90_degrees_is_column_roll():
    env = em.EnvironmentMap(np.random.default_rng(3).random((8, 16, 3)))
    rot = em.RotationOp.about_y(math.pi / 2)
    out = em.rotate(env, rot)
    # rotating about +Y by 90 deg with W divisible by 4 permutes columns
    rolled_cols = [np.argmax(np.isclose(out.radiance[4, :, 0], env.radiance[4, c, 0], atol=1e-6).astype(int)) for c in range(3)]
    diffs = {(rc - c) % 16 for c, rc in enumerate(rolled_cols)}
    assert len(diffs) == 1
    np.testing.assert_allclose(
        out.radiance, np.roll(env.radiance, diffs.pop(), axis=1), atol=1e-6
    )


def test_rotation_op_validation():
    with pytest.raises(ValueError):
        em.RotationOp(np.eye(3) * 2.0)
    refl = np.diag([1.0, 1.0, -1.0])
    with pytest.raises(ValueError):
        em.RotationOp(refl)


def test_rotation_operator_matrix_matches_rotate():
    env = em.EnvironmentMap(np.random.default_rng(4).random((8, 16, 3)))
    rot = em.RotationOp.about_y(0.77).compose(em.RotationOp(np.array(
        [[1, 0, 0], [0, 0, -1], [0, 1, 0]], dtype=float)))
    m = em.rotation_operator_matrix(rot, 8, 16)
    direct = em.rotate(env, rot).radiance
    via_matrix = (m @ env.radiance.reshape(128, 3)).reshape(8, 16, 3)
    assert np.max(np.abs(direct - via_matrix)) < 1e-12


def test_merge_single_entry_identity():
    env = em.EnvironmentMap(np.random.default_rng(5).random((8, 16, 3)))
    merged, cov = em.merge([(env, em.ConfidenceMap.uniform(), em.RotationOp.identity())])
    assert np.allclose(merged.radiance, env.radiance, atol=1e-12)
    assert cov.n_degenerate == 0


def test_merge_identical_maps_any_confidence():
    env = em.EnvironmentMap(np.random.default_rng(6).random((8, 16, 3)))
    rng = np.random.default_rng(7)
    entries = [
        (env, em.ConfidenceMap(rng.random((8, 16)) + 0.1), em.RotationOp.identity())
        for _ in range(3)
    ]
    merged, _ = em.merge(entries)
    assert np.allclose(merged.radiance, env.radiance, atol=1e-12)


def test_merge_weighted_average_example():
    a = em.EnvironmentMap.constant(2.0)
    b = em.EnvironmentMap.constant(6.0)
    merged, _ = em.merge(
        [
            (a, em.ConfidenceMap.uniform(value=3.0), em.RotationOp.identity()),
            (b, em.ConfidenceMap.uniform(value=1.0), em.RotationOp.identity()),
        ]
    )
    assert np.allclose(merged.radiance, 3.0, atol=1e-12)


def test_merge_degenerate_texels_mean_filled_and_flagged():
    h, w = 8, 16
    conf = np.zeros((h, w))
    conf[0, 0] = 1.0  # every other texel has zero confidence
    a = em.EnvironmentMap.constant(2.0)
    b = em.EnvironmentMap.constant(4.0)
    merged, cov = em.merge(
        [
            (a, em.ConfidenceMap(conf), em.RotationOp.identity()),
            (b, em.ConfidenceMap(conf), em.RotationOp.identity()),
        ]
    )
    assert cov.n_degenerate == h * w - 1
    assert cov.degenerate[0, 1]
    assert merged.radiance[0, 1, 0] == pytest.approx(3.0)  # unweighted mean fill
    assert merged.radiance[0, 0, 0] == pytest.approx(3.0)  # equal confidences


def test_merge_output_within_input_envelope_permutation_rotations():
    # With 90-degree multiples about +Y the resampling is an exact texel
    # permutation, so the merged value must lie inside the rotated inputs'
    # texelwise envelope.
    rng = np.random.default_rng(8)
    entries = []
    for k in range(3):
        env = em.EnvironmentMap(rng.random((8, 16, 3)))
        conf = em.ConfidenceMap(rng.random((8, 16)) + 0.05)
        rot = em.RotationOp.about_y(k * math.pi / 2)
        entries.append((env, conf, rot))
    merged, cov = em.merge(entries)
    rotated = np.stack([em.rotate(e, r).radiance for e, _, r in entries])
    lo, hi = rotated.min(axis=0), rotated.max(axis=0)
    ok = ~cov.degenerate
    assert np.all(merged.radiance[ok] >= lo[ok] - 1e-9)
    assert np.all(merged.radiance[ok] <= hi[ok] + 1e-9)


def test_relight_zero_transport():
    t = em.TransportVector.zeros()
    env = em.EnvironmentMap(np.random.default_rng(9).random((8, 16, 3)))
    assert np.array_equal(em.relight(t, env), np.zeros(3))


@given(
    a=st.floats(-2, 2, allow_nan=False),
    b=st.floats(-2, 2, allow_nan=False),
    seed=st.integers(0, 2**16),
)
@settings(max_examples=50, deadline=None)
def test_relight_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    t = em.TransportVector(rng.random((8, 16, 3)))
    e1, e2 = rng.random((8, 16, 3)), rng.random((8, 16, 3))
    combo = a * e1 + b * e2
    if np.any(combo < 0):
        combo = np.abs(combo)
        split = em.relight(t, em.EnvironmentMap(np.abs(a * e1 + b * e2)))
        assert np.max(np.abs(em.relight(t, em.EnvironmentMap(combo)) - split)) < 1e-12
        return
    lhs = em.relight(t, em.EnvironmentMap(combo))
    rhs = a * em.relight(t, em.EnvironmentMap(e1)) + b * em.relight(t, em.EnvironmentMap(e2))
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_relight_dimension_mismatch():
    t = em.TransportVector.zeros((8, 16))
    env = em.EnvironmentMap.zeros((4, 8))
    with pytest.raises(ValueError):
        em.relight(t, env)


def test_log_l1_zero_iff_equal():
    rng = np.random.default_rng(10)
    a = em.EnvironmentMap(rng.random((8, 16, 3)))
    assert em.log_l1(a, a) == 0.0
    b = em.EnvironmentMap(a.radiance + 1e-3)
    assert em.log_l1(a, b) > 0.0


def test_environment_map_invariants():
    with pytest.raises(ValueError):
        em.EnvironmentMap(-np.ones((8, 16, 3)))
    with pytest.raises(ValueError):
        em.EnvironmentMap(np.full((8, 16, 3), np.nan))
    assert em.EnvironmentMap.zeros().dims == (8, 16)
    assert em.DEFAULT_DIMS == (8, 16)
