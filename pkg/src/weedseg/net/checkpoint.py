"""Versioned binary parameter checkpoints.

Layout::

    b"WSEGCKPT"                 8-byte magic
    uint32 LE                   format version (1)
    uint32 LE                   header length in bytes
    header                      UTF-8 JSON: net_cfg, layers [{name, shape, offset, count}]
    payload                     little-endian float32 values, layers in header order

Loading checks every layer's name and shape against the shapes implied by
the stored network config.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from ..errors import CheckpointError, MissingFileError
from .model import NetworkConfig

MAGIC = b"WSEGCKPT"
VERSION = 1


def save_checkpoint(path: str | os.PathLike, params: dict, cfg: NetworkConfig, extra: dict | None = None) -> None:
    layers = []
    offset = 0
    for name, shape in cfg.layer_shapes():
        if params[name].shape != shape:
            raise CheckpointError(f"parameter {name} has shape {params[name].shape}, config implies {shape}")
        count = int(np.prod(shape))
        layers.append({"name": name, "shape": list(shape), "offset": offset, "count": count})
        offset += count
    header = {"net_cfg": cfg.to_json(), "layers": layers, "dtype": "<f4"}
    if extra:
        header["extra"] = extra
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(hbytes)))
        fh.write(hbytes)
        for name, _ in cfg.layer_shapes():
            fh.write(np.ascontiguousarray(params[name], dtype="<f4").tobytes())


def load_checkpoint(path: str | os.PathLike) -> tuple[dict, NetworkConfig, dict]:
    """Return ``(params, net_cfg, extra)``; params are float32 arrays."""
    if not os.path.isfile(path):
        raise MissingFileError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        buf = fh.read()
    if not buf.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a weedseg checkpoint")
    if len(buf) < len(MAGIC) + 8:
        raise CheckpointError(f"{path}: truncated header")
    version, hlen = struct.unpack_from("<II", buf, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    start = len(MAGIC) + 8
    try:
        header = json.loads(buf[start : start + hlen].decode("utf-8"))
        cfg = NetworkConfig.from_json(header["net_cfg"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: bad header ({exc})") from None
    payload = np.frombuffer(buf, dtype="<f4", offset=start + hlen)
    expected = cfg.layer_shapes()
    stored = header.get("layers", [])
    if [(layer["name"], tuple(layer["shape"])) for layer in stored] != expected:
        raise CheckpointError(f"{path}: layer shapes do not match the stored network config")
    params = {}
    for layer in stored:
        lo, n = layer["offset"], layer["count"]
        if lo + n > payload.size:
            raise CheckpointError(f"{path}: truncated payload in layer {layer['name']}")
        params[layer["name"]] = payload[lo : lo + n].reshape(layer["shape"]).astype(np.float32)
    if sum(layer["count"] for layer in stored) != payload.size:
        raise CheckpointError(f"{path}: payload size mismatch")
    return params, cfg, header.get("extra", {})
