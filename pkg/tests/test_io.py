import numpy as np
import pytest

from nelf import io as nio
from nelf.envmap import EnvironmentMap


def test_pfm_color_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.random((8, 16, 3)).astype(np.float32)
    nio.write_pfm(tmp_path / "x.pfm", img)
    assert np.array_equal(nio.read_pfm(tmp_path / "x.pfm"), img)


def test_pfm_gray_roundtrip(tmp_path):
    depth = np.random.default_rng(1).random((5, 7)).astype(np.float32)
    nio.write_pfm(tmp_path / "d.pfm", depth)
    assert np.array_equal(nio.read_pfm(tmp_path / "d.pfm"), depth)


def test_pfm_header_dimensions(tmp_path):
    env = EnvironmentMap(np.random.default_rng(2).random((8, 16, 3)))
    nio.write_env_pfm(tmp_path / "e.pfm", env)
    header = (tmp_path / "e.pfm").read_bytes()[:16]
    assert header.startswith(b"PF\n16 8\n")


def test_env_json_bit_exact(tmp_path):
    env = EnvironmentMap(np.random.default_rng(3).random((8, 16, 3)))
    nio.write_env_json(tmp_path / "e.json", env)
    back = nio.read_env_json(tmp_path / "e.json")
    assert np.array_equal(back.radiance, env.radiance)


def test_mask_png_roundtrip(tmp_path):
    mask = (np.random.default_rng(4).random((32, 32)) > 0.5).astype(np.uint8)
    nio.write_mask_png(tmp_path / "m.png", mask)
    assert np.array_equal(nio.read_mask_png(tmp_path / "m.png"), mask)


def test_png_srgb_roundtrip_tolerance(tmp_path):
    img = np.random.default_rng(5).random((16, 16, 3))
    nio.write_png_srgb(tmp_path / "i.png", img)
    back = nio.read_png_srgb(tmp_path / "i.png")
    # 8-bit quantization in gamma space
    assert np.max(np.abs(back - img)) < 0.02


def test_transport_container_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    present = rng.random((6, 5)) > 0.5
    coeff = rng.random((6, 5, 8, 16, 3)) * present[:, :, None, None, None]
    nio.write_transport(tmp_path / "t.nelft", present, coeff)
    p2, c2 = nio.read_transport(tmp_path / "t.nelft")
    assert np.array_equal(p2, present)
    assert np.array_equal(c2.astype(np.float32), coeff.astype(np.float32))


def test_transport_container_magic(tmp_path):
    (tmp_path / "bad.nelft").write_bytes(b"NOT-A-CONTAINER")
    with pytest.raises(ValueError, match="magic"):
        nio.read_transport(tmp_path / "bad.nelft")


def test_transport_container_absent_pixels_zeroed(tmp_path):
    present = np.zeros((2, 2), dtype=bool)
    present[0, 0] = True
    coeff = np.ones((2, 2, 8, 16, 3))
    nio.write_transport(tmp_path / "t.nelft", present, coeff)
    _, c2 = nio.read_transport(tmp_path / "t.nelft")
    assert np.all(c2[0, 0] == 1.0)
    assert np.all(c2[1, 1] == 0.0)
