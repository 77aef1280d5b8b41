"""Model checkpoint files.

Layout (little-endian)::

    magic "TPCK" | version u32 | header_len u32 | header (UTF-8 JSON)
    | parameter blob (float32, tensors back to back) | crc32 u32 over every preceding byte

The header holds the architecture tag, the full config echo, free-form
metadata and a tensor index ``[{name, shape, offset, count}]``.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np
import torch

from ..core import ConfigurationError
from .models import SurrogateConfig, SurrogateModel

MAGIC = b"TPCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_checkpoint(model: SurrogateModel, meta: dict | None = None) -> bytes:
    index, blobs, offset = [], [], 0
    for name, t in model.state_dict().items():
        a = t.detach().cpu().numpy().astype("<f4")
        index.append({"name": name, "shape": list(a.shape), "offset": offset, "count": int(a.size)})
        blobs.append(a.tobytes())
        offset += a.size * 4
    header = {"arch": model.cfg.arch, "config": model.cfg.as_dict(), "meta": meta or {}, "tensors": index}
    hb = json.dumps(header, sort_keys=True).encode()
    body = MAGIC + struct.pack("<II", VERSION, len(hb)) + hb + b"".join(blobs)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_checkpoint(buf: bytes, expected: SurrogateConfig | None = None):
    """Returns ``(model, meta)``; rejects corrupted files and config mismatches."""
    if len(buf) < 16 or buf[:4] != MAGIC:
        raise CheckpointError("bad magic; not a checkpoint file")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checksum mismatch (corrupted or truncated file)")
    version, hlen = struct.unpack_from("<II", body, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(body[12:12 + hlen].decode())
    blob = body[12 + hlen:]
    try:
        cfg = SurrogateConfig.from_dict(header["config"])
    except (ConfigurationError, TypeError) as err:
        raise CheckpointError(f"invalid config in checkpoint: {err}") from err
    if cfg.arch != header["arch"]:
        raise CheckpointError("architecture tag does not match config")
    if expected is not None and expected != cfg:
        diff = {k: (v, getattr(cfg, k)) for k, v in expected.as_dict().items() if cfg.as_dict()[k] != v}
        raise CheckpointError(f"checkpoint config differs from expected: {diff}")
    model = SurrogateModel(cfg)
    own = model.state_dict()
    names = [t["name"] for t in header["tensors"]]
    if names != list(own):
        raise CheckpointError("tensor names do not match the architecture")
    state = {}
    for t in header["tensors"]:
        if list(own[t["name"]].shape) != t["shape"]:
            raise CheckpointError(f"shape mismatch for {t['name']}")
        a = np.frombuffer(blob, "<f4", t["count"], t["offset"]).reshape(t["shape"])
        state[t["name"]] = torch.from_numpy(a.astype(np.float32))
    if sum(t["count"] for t in header["tensors"]) * 4 != len(blob):
        raise CheckpointError("parameter blob size mismatch")
    model.load_state_dict(state)
    return model, header["meta"]


def save_checkpoint(model: SurrogateModel, path, meta: dict | None = None) -> Path:
    path = Path(path)
    path.write_bytes(encode_checkpoint(model, meta))
    return path


def load_checkpoint(path, expected: SurrogateConfig | None = None):
    return decode_checkpoint(Path(path).read_bytes(), expected)
