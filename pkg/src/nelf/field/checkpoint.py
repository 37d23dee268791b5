"""Parameter checkpoints.

Layout: magic "NELF-P1\\0", uint32 descriptor length, JSON descriptor
(architecture, tensor table, extras such as the optimizer step), then the
tensor blobs as little-endian float32 in table order, then the 64-byte hex
sha256 of everything before it. Save/load round trips are bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .network import ArchConfig, NelfParams

PARAMS_MAGIC = b"NELF-P1\x00"


def save_params(path, params: NelfParams, extras: dict | None = None) -> None:
    """Write a checkpoint; ``extras`` may hold scalars and float arrays
    (optimizer moments, step counters) that ride along as extra tensors."""
    extras = extras or {}
    tensor_items = [(f"param/{k}", v) for k, v in params.arrays.items()]
    meta_scalars = {}
    for k, v in extras.items():
        if isinstance(v, np.ndarray):
            tensor_items.append((f"extra/{k}", v))
        else:
            meta_scalars[k] = v
    descriptor = {
        "format": "NELF-P1",
        "arch": params.arch.to_dict(),
        "tensors": [
            {"name": name, "shape": list(a.shape)} for name, a in tensor_items
        ],
        "extras": meta_scalars,
    }
    desc = json.dumps(descriptor, sort_keys=True).encode()
    payload = bytearray()
    payload += PARAMS_MAGIC
    payload += struct.pack("<I", len(desc))
    payload += desc
    for _, a in tensor_items:
        payload += np.ascontiguousarray(a, dtype="<f4").tobytes()
    digest = hashlib.sha256(bytes(payload)).hexdigest().encode("ascii")
    with open(path, "wb") as f:
        f.write(bytes(payload))
        f.write(digest)


def load_params(path) -> tuple[NelfParams, dict]:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[: len(PARAMS_MAGIC)] != PARAMS_MAGIC:
        raise ValueError(f"bad checkpoint magic in {path}")
    digest = blob[-64:]
    body = blob[:-64]
    if hashlib.sha256(body).hexdigest().encode("ascii") != digest:
        raise ValueError(f"checkpoint content hash mismatch in {path}")
    off = len(PARAMS_MAGIC)
    (dlen,) = struct.unpack_from("<I", body, off)
    off += 4
    descriptor = json.loads(body[off : off + dlen].decode())
    off += dlen
    arch = ArchConfig.from_dict(descriptor["arch"])
    arrays: dict = {}
    extras: dict = dict(descriptor.get("extras", {}))
    for entry in descriptor["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        a = np.frombuffer(body, dtype="<f4", count=count, offset=off).reshape(shape)
        off += count * 4
        name = entry["name"]
        if name.startswith("param/"):
            arrays[name[len("param/") :]] = a.astype(np.float32)
        else:
            extras[name[len("extra/") :]] = a.astype(np.float32)
    return NelfParams(arch=arch, arrays=arrays), extras
