"""Checkpoint container: JSON header plus named float32 tensors, one file.

Layout: magic b"NCFC", version u32 LE, header length u64 LE, UTF-8 JSON
header, then raw little-endian tensor bytes in header order.  Writes are
atomic (temp file + rename).
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
import torch

from ..errors import DatasetFormatError, DependencyError

MAGIC = b"NCFC"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


def save_checkpoint(path, kind: str, config: dict, state: dict, extra: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors = {}
    blobs = []
    offset = 0
    for name, value in state.items():
        arr = value.detach().cpu().numpy() if isinstance(value, torch.Tensor) else np.asarray(value)
        arr = np.ascontiguousarray(arr)
        raw = arr.astype(arr.dtype.newbyteorder("<")).tobytes()
        tensors[name] = {
            "dtype": arr.dtype.str.lstrip("<>=|"),
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(raw),
        }
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"kind": kind, "version": VERSION, "config": config, "tensors": tensors,
         "extra": extra or {}},
        sort_keys=True,
    ).encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(_PREFIX.pack(MAGIC, VERSION, len(header)))
            f.write(header)
            for raw in blobs:
                f.write(raw)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> tuple[str, dict, dict, dict]:
    """Returns (kind, config, state arrays, extra)."""
    path = Path(path)
    if not path.exists():
        raise DependencyError(f"missing checkpoint: {path}")
    raw = path.read_bytes()
    if len(raw) < _PREFIX.size:
        raise DatasetFormatError(f"{path}: not a checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad checkpoint magic {magic!r}")
    if version != VERSION:
        raise DatasetFormatError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[_PREFIX.size : _PREFIX.size + hlen].decode())
    base = _PREFIX.size + hlen
    state = {}
    for name, meta in header["tensors"].items():
        dt = np.dtype(meta["dtype"]).newbyteorder("<")
        count = int(np.prod(meta["shape"])) if meta["shape"] else 1
        start = base + meta["offset"]
        if start + meta["nbytes"] > len(raw):
            raise DatasetFormatError(f"{path}: truncated tensor '{name}'")
        arr = np.frombuffer(raw, dt, count=count, offset=start).reshape(meta["shape"])
        state[name] = arr.astype(np.dtype(meta["dtype"]))
    return header["kind"], header["config"], state, header.get("extra", {})


def state_to_module(module: torch.nn.Module, state: dict) -> None:
    tensors = {k: torch.as_tensor(v) for k, v in state.items()}
    module.load_state_dict(tensors)
