"""On-disk formats: PFM images, JSON environment maps, PNG images/masks and
the binary transport-image container.

All multi-byte binary data is little-endian. JSON float round trips are exact
(Python emits shortest-round-trip decimal for doubles).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .envmap import EnvironmentMap

TRANSPORT_MAGIC = b"NELF-T1\x00"


# ---------------------------------------------------------------------------
# PFM (portable float map), rows stored bottom-to-top, scale -1 = little-endian


def write_pfm(path, data: np.ndarray) -> None:
    """Write a (H, W, 3) color or (H, W) grayscale float32 PFM."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 3 and data.shape[2] == 3:
        header = b"PF\n"
    elif data.ndim == 2:
        header = b"Pf\n"
    else:
        raise ValueError(f"PFM data must be (H, W, 3) or (H, W), got {data.shape}")
    h, w = data.shape[:2]
    with open(path, "wb") as f:
        f.write(header)
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.ascontiguousarray(data[::-1]).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        kind = f.readline().strip()
        if kind not in (b"PF", b"Pf"):
            raise ValueError(f"not a PFM file: {path}")
        w, h = (int(v) for v in f.readline().split())
        scale = float(f.readline())
        count = w * h * (3 if kind == b"PF" else 1)
        raw = f.read(count * 4)
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(raw, dtype=dtype).astype(np.float32)
    shape = (h, w, 3) if kind == b"PF" else (h, w)
    return data.reshape(shape)[::-1].copy()


# ---------------------------------------------------------------------------
# Environment maps


def env_to_json_dict(env: EnvironmentMap) -> dict:
    return {
        "height": env.height,
        "width": env.width,
        "rgb": env.radiance.reshape(-1).tolist(),
    }


def env_from_json_dict(d: dict) -> EnvironmentMap:
    h, w = int(d["height"]), int(d["width"])
    rgb = np.asarray(d["rgb"], dtype=np.float64).reshape(h, w, 3)
    return EnvironmentMap(rgb)


def write_env_json(path, env: EnvironmentMap) -> None:
    Path(path).write_text(json.dumps(env_to_json_dict(env)))


def read_env_json(path) -> EnvironmentMap:
    return env_from_json_dict(json.loads(Path(path).read_text()))


def write_env_pfm(path, env: EnvironmentMap) -> None:
    write_pfm(path, env.radiance)


def read_env_pfm(path) -> EnvironmentMap:
    return EnvironmentMap(read_pfm(path).astype(np.float64))


# ---------------------------------------------------------------------------
# PNG images and masks


def write_png_srgb(path, linear_rgb: np.ndarray, gamma: float = 2.2) -> None:
    """8-bit PNG from linear RGB, gamma-encoded for display."""
    enc = np.clip(linear_rgb, 0.0, 1.0) ** (1.0 / gamma)
    Image.fromarray((enc * 255.0 + 0.5).astype(np.uint8), mode="RGB").save(path)


def read_png_srgb(path, gamma: float = 2.2) -> np.ndarray:
    img = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
    return img**gamma


def write_mask_png(path, values: np.ndarray) -> None:
    Image.fromarray((np.asarray(values) > 0).astype(np.uint8) * 255, mode="L").save(path)


def read_mask_png(path) -> np.ndarray:
    return (np.asarray(Image.open(path).convert("L")) > 127).astype(np.uint8)


# ---------------------------------------------------------------------------
# Transport-image container
#
# Layout: magic "NELF-T1\0", then 4 little-endian uint32 (image width, image
# height, envmap rows H, envmap cols W), then per pixel in row-major order a
# presence byte (0 or 1) followed by H*W*3 little-endian float32 coefficients
# (zeros when absent).


def write_transport(path, present: np.ndarray, coefficients: np.ndarray) -> None:
    ih, iw = present.shape
    eh, ew = coefficients.shape[2], coefficients.shape[3]
    per_pixel = eh * ew * 3
    coeff = np.where(
        present[:, :, None, None, None], coefficients, 0.0
    ).astype("<f4")
    with open(path, "wb") as f:
        f.write(TRANSPORT_MAGIC)
        f.write(struct.pack("<4I", iw, ih, eh, ew))
        body = np.empty((ih * iw, 1 + per_pixel * 4), dtype=np.uint8)
        body[:, 0] = present.reshape(-1).astype(np.uint8)
        body[:, 1:] = coeff.reshape(ih * iw, per_pixel).view(np.uint8)
        f.write(body.tobytes())


def read_transport(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as f:
        magic = f.read(len(TRANSPORT_MAGIC))
        if magic != TRANSPORT_MAGIC:
            raise ValueError(f"bad transport container magic in {path}")
        iw, ih, eh, ew = struct.unpack("<4I", f.read(16))
        per_pixel = eh * ew * 3
        raw = np.frombuffer(f.read(ih * iw * (1 + per_pixel * 4)), dtype=np.uint8)
    body = raw.reshape(ih * iw, 1 + per_pixel * 4)
    present = body[:, 0].astype(bool).reshape(ih, iw)
    coeff = (
        body[:, 1:]
        .copy()
        .view("<f4")
        .astype(np.float64)
        .reshape(ih, iw, eh, ew, 3)
    )
    return present, coeff


def sha256_file(path) -> str:
    import hashlib

    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
