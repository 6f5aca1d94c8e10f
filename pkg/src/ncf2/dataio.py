"""On-disk dataset format.

A dataset is a directory holding ``manifest.json`` plus one binary blob per
episode.  Each blob is:

    magic   4 bytes   b"NCF2"
    version u32 LE    1
    L       u32 LE    episode length
    n       u32 LE    query point count
    H       u32 LE    tactile image height
    W       u32 LE    tactile image width
    poses        float32 row-major (L, 7)   position xyz + quaternion wxyz
    tactile      float32 row-major (L, H, W, 3)
    query_points float32 row-major (n, 3)
    labels       uint8   row-major (L, n)

Everything is little-endian.  Reads are strict: a bad magic or version raises
:class:`DatasetFormatError`; a size mismatch raises
:class:`DatasetCorruptionError` and never yields a partial episode.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .contact import QueryPointSet
from .episodes import Episode
from .errors import DatasetCorruptionError, DatasetFormatError
from .transforms import Pose

MAGIC = b"NCF2"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIII")


def episode_filename(index: int) -> str:
    return f"episode_{index:05d}.bin"


def write_episode(episode: Episode, path: Path) -> None:
    L = len(episode)
    n = len(episode.query_points)
    H, W = episode.tactile.shape[1:3]
    poses = np.stack([p.as_array() for p in episode.poses]).astype("<f4")
    buf = bytearray()
    buf += _HEADER.pack(MAGIC, FORMAT_VERSION, L, n, H, W)
    buf += poses.tobytes()
    buf += episode.tactile.astype("<f4").tobytes()
    buf += episode.query_points.points.astype("<f4").tobytes()
    buf += episode.labels.astype(np.uint8).tobytes()
    Path(path).write_bytes(bytes(buf))


def read_episode(path: Path, scene_meta: dict | None = None) -> Episode:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DatasetCorruptionError(f"{path}: file shorter than header")
    magic, version, L, n, H, W = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    sizes = [L * 7 * 4, L * H * W * 3 * 4, n * 3 * 4, L * n]
    expected = _HEADER.size + sum(sizes)
    if len(raw) != expected:
        raise DatasetCorruptionError(
            f"{path}: expected {expected} bytes, found {len(raw)}"
        )
    off = _HEADER.size
    poses_arr = np.frombuffer(raw, "<f4", count=L * 7, offset=off).reshape(L, 7)
    off += sizes[0]
    tactile = np.frombuffer(raw, "<f4", count=L * H * W * 3, offset=off).reshape(L, H, W, 3).copy()
    off += sizes[1]
    qpts = np.frombuffer(raw, "<f4", count=n * 3, offset=off).reshape(n, 3).copy()
    off += sizes[2]
    labels = np.frombuffer(raw, np.uint8, count=L * n, offset=off).reshape(L, n).copy()
    poses = [Pose.from_array(row.astype(np.float64)) for row in poses_arr]
    return Episode(poses, tactile, QueryPointSet(qpts.astype(np.float64)), labels,
                   dict(scene_meta or {}))


def write_dataset(episodes: list[Episode], path, extra_meta: dict | None = None) -> dict:
    """Write episodes plus a manifest; returns the manifest dict."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    records = []
    for i, ep in enumerate(episodes):
        name = episode_filename(i)
        write_episode(ep, path / name)
        rec = {"file": name, "length": len(ep), **ep.scene_meta}
        records.append(rec)
    first = episodes[0]
    manifest = {
        "format_version": FORMAT_VERSION,
        "magic": MAGIC.decode(),
        "count": len(episodes),
        "n": len(first.query_points),
        "T": 5,
        "height": int(first.tactile.shape[1]),
        "width": int(first.tactile.shape[2]),
        "episodes": records,
    }
    if extra_meta:
        manifest.update(extra_meta)
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return manifest


def read_manifest(path) -> dict:
    path = Path(path)
    mpath = path / "manifest.json"
    if not mpath.exists():
        raise DatasetFormatError(f"{path}: no manifest.json")
    manifest = json.loads(mpath.read_text())
    if manifest.get("magic") != MAGIC.decode() or manifest.get("format_version") != FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: manifest magic/version mismatch")
    return manifest


def read_dataset(path) -> list[Episode]:
    """Load every episode of a dataset directory, in manifest order."""
    path = Path(path)
    manifest = read_manifest(path)
    episodes = []
    for rec in manifest["episodes"]:
        meta = {k: v for k, v in rec.items() if k not in ("file", "length")}
        ep = read_episode(path / rec["file"], meta)
        if len(ep) != rec["length"]:
            raise DatasetCorruptionError(f"{rec['file']}: length mismatch with manifest")
        episodes.append(ep)
    return episodes
