"""Checkpoint container: a JSON manifest followed by a float32 blob.

Layout (byte exact)::

    b"ACORL-CKPT 1\\n"
    b"<manifest length in bytes, ASCII decimal>\\n"
    <manifest: UTF-8 JSON, sort_keys=True, indent=1, trailing "\\n">
    <blob: little-endian float32 arrays, concatenated in manifest order>

The manifest always carries ``format``, ``version``, ``kind``, ``params``
(a list of ``{name, shape, offset, count}`` with ``offset`` in bytes from the
start of the blob), ``blob_bytes`` and ``blob_sha256``. Model checkpoints add
``spec``; fusion bundles add their own keys (see :mod:`acorl.fusion`).
docs/checkpoint_format.md has the full schema.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .errors import IntegrityError
from .nn import Model, ModelSpec

MAGIC = b"ACORL-CKPT 1\n"
FORMAT = "acorl-checkpoint"
VERSION = 1


def encode_container(manifest: dict, arrays: dict[str, np.ndarray]) -> bytes:
    index, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        index.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "count": int(np.size(arr))})
        chunks.append(data)
        offset += len(data)
    blob = b"".join(chunks)
    full = {
        **manifest,
        "format": FORMAT,
        "version": VERSION,
        "params": index,
        "blob_bytes": len(blob),
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
    }
    text = (json.dumps(full, sort_keys=True, indent=1) + "\n").encode("utf-8")
    return MAGIC + f"{len(text)}\n".encode("ascii") + text + blob


def decode_container(raw: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if not raw.startswith(MAGIC):
        raise IntegrityError("bad magic at byte offset 0: not an ACoRL checkpoint")
    pos = len(MAGIC)
    nl = raw.find(b"\n", pos)
    if nl < 0 or not raw[pos:nl].isdigit():
        raise IntegrityError(f"malformed manifest length at byte offset {pos}")
    size = int(raw[pos:nl])
    start = nl + 1
    if len(raw) < start + size:
        raise IntegrityError(
            f"truncated manifest at byte offset {len(raw)}: expected {size} bytes from offset {start}"
        )
    try:
        manifest = json.loads(raw[start:start + size].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"unreadable manifest at byte offset {start}: {exc}") from None
    if manifest.get("format") != FORMAT or manifest.get("version") != VERSION:
        raise IntegrityError(f"unsupported checkpoint format at byte offset {start}")
    blob_start = start + size
    blob = raw[blob_start:]
    expected = manifest["blob_bytes"]
    if len(blob) < expected:
        raise IntegrityError(
            f"truncated blob at byte offset {len(raw)}: expected {expected} blob bytes from offset {blob_start}"
        )
    if len(blob) > expected:
        raise IntegrityError(f"trailing data at byte offset {blob_start + expected}")
    if hashlib.sha256(blob).hexdigest() != manifest["blob_sha256"]:
        raise IntegrityError(f"blob checksum mismatch for bytes {blob_start}..{len(raw)}")
    arrays, cursor = {}, 0
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = entry["count"]
        if entry["offset"] != cursor or int(np.prod(shape, dtype=np.int64)) != count:
            raise IntegrityError(
                f"parameter index inconsistent for {entry['name']!r} at blob offset {entry['offset']}"
            )
        end = cursor + 4 * count
        if end > len(blob):
            raise IntegrityError(f"spec/blob length mismatch: {entry['name']!r} runs past byte {blob_start + len(blob)}")
        arrays[entry["name"]] = np.frombuffer(blob[cursor:end], dtype="<f4").astype(np.float64).reshape(shape)
        cursor = end
    if cursor != len(blob):
        raise IntegrityError(f"spec/blob length mismatch: {len(blob) - cursor} unindexed bytes at offset {blob_start + cursor}")
    return manifest, arrays


def _atomic_write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def write_container(path, manifest: dict, arrays: dict[str, np.ndarray]):
    _atomic_write(Path(path), encode_container(manifest, arrays))


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    return decode_container(Path(path).read_bytes())


def save_checkpoint(path, model: Model):
    write_container(path, {"kind": "model", "spec": model.spec.to_dict()}, model.params)


def load_checkpoint(path) -> Model:
    manifest, arrays = read_container(path)
    if manifest.get("kind") != "model":
        raise IntegrityError(f"{path}: expected a model checkpoint, found kind={manifest.get('kind')!r}")
    spec = ModelSpec.from_dict(manifest["spec"])
    expected = spec.param_shapes()
    got = {k: v.shape for k, v in arrays.items()}
    if list(expected) != list(got) or any(tuple(expected[k]) != got[k] for k in expected):
        raise IntegrityError(f"{path}: spec/blob length mismatch between spec and parameter index")
    return Model(spec, arrays)


def round_f32(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """What a parameter set looks like after a save/load round trip."""
    return {k: v.astype(np.float32).astype(np.float64) for k, v in params.items()}


def params_hash(params: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(params[name], dtype="<f8").tobytes())
    return h.hexdigest()


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
